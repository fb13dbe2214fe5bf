"""Plain-text run configuration.

Files are flat ``key = value`` lines with ``#`` comments. Unknown keys are
rejected; missing keys fall back to the documented defaults (the large-
network profile: embed 64, ffn 1024, 4 heads, 1 layer, mask ratio 0.2,
subgraph 50, lr 1e-4 with a milestone-55 0.1x decay, patience 10).
Command-line flags override file values.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .train import TrainConfig


def _parse_int(raw):
    return int(raw)


def _parse_float(raw):
    return float(raw)


def _parse_int_list(raw):
    raw = raw.strip()
    if not raw or raw.lower() == "none":
        return ()
    return tuple(int(v) for v in raw.split(","))


def _parse_float_triple(raw):
    parts = tuple(float(v) for v in raw.split(","))
    if len(parts) != 3:
        raise ValueError("expected three comma-separated fractions")
    return parts


def _parse_str(raw):
    return raw


# key -> (parser, default); None default means "no value unless given"
SCHEMA = {
    "dataset": (_parse_str, None),
    "t_in": (_parse_int, 24),
    "horizon": (_parse_int, 24),
    "embed_dim": (_parse_int, 64),
    "ffn_dim": (_parse_int, 1024),
    "heads": (_parse_int, 4),
    "layers": (_parse_int, 1),
    "batch_size": (_parse_int, 16),
    "lr": (_parse_float, 1e-4),
    "milestones": (_parse_int_list, (55,)),
    "decay": (_parse_float, 0.1),
    "patience": (_parse_int, 10),
    "huber_delta": (_parse_float, 1.0),
    "mask_ratio": (_parse_float, 0.2),
    "subgraph_size": (_parse_int, 50),
    "mask_strategy": (_parse_str, "node_level"),
    "folding": (_parse_str, "TFG"),
    "seed": (_parse_int, 0),
    "max_epochs": (_parse_int, 100),
    "split": (_parse_float_triple, (0.6, 0.2, 0.2)),
}

_TRAIN_FIELDS = set(TrainConfig.__dataclass_fields__)


@dataclass
class RunConfig:
    train: TrainConfig
    dataset: str | None


def parse_config_file(path):
    """Read ``key = value`` pairs; values stay raw strings here."""
    values = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = raw
    return values


def resolve(file_values=None, overrides=None):
    """Merge file values and overrides onto the defaults.

    ``overrides`` maps key -> raw string (CLI wins over file). Returns a
    RunConfig with a validated TrainConfig.
    """
    merged = {}
    for source in (file_values or {}), (overrides or {}):
        for key, raw in source.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is not None:
                merged[key] = str(raw)
    resolved = {}
    for key, (parser, default) in SCHEMA.items():
        if key in merged:
            try:
                resolved[key] = parser(merged[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {merged[key]!r} ({exc})") from exc
        else:
            resolved[key] = default
    dataset = resolved.pop("dataset")
    cfg = TrainConfig(**{k: v for k, v in resolved.items() if k in _TRAIN_FIELDS})
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(train=cfg, dataset=dataset)


def snapshot(run_config):
    """Canonical resolved-config text; with the seed it reproduces the run."""
    cfg = run_config.train
    lines = []
    for key in SCHEMA:
        if key == "dataset":
            value = run_config.dataset if run_config.dataset is not None else ""
        else:
            value = getattr(cfg, key)
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
