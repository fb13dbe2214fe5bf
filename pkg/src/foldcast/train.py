"""Training engine: Huber-loss optimization with Adam, milestone learning
rate decay, early stopping, and de-normalized evaluation.

Visibility (masking + subgraph sampling) applies during training only;
evaluation always runs the full graph in one pass. Batches are processed
sequentially so the optimizer trajectory is deterministic for a given
config and seed.

The per-epoch ``epoch_seconds`` column in the training log is an analytic
cost estimate (counted FLOPs over a fixed nominal rate), not a stopwatch:
the log must reproduce byte-for-byte across same-seed runs, which wall
time cannot. Measured wall time is reported by the bench harness.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as M
from . import tensor as T
from . import visibility as V
from .data import apply_zscore, fit_normalizer, invert_zscore, make_windows
from .errors import DivergenceError
from .metrics import MetricAccumulator
from .tokenize import fuse_embeddings_batch, fuse_embeddings_sf_batch

NOMINAL_FLOPS_PER_SECOND = 2.0e9  # fixed rate backing the analytic estimate

TRAIN_LOG_COLUMNS = (
    "epoch,lr,train_loss,val_rmse,val_mae,val_mape,epoch_seconds,tokens_processed"
)
BENCH_COLUMNS = "config_id,r,s,tokens,params,act_floats,epoch_seconds"


@dataclass
class TrainConfig:
    """Resolved run settings; defaults mirror the PEMS04-style profile."""

    t_in: int = 24
    horizon: int = 24
    embed_dim: int = 64
    ffn_dim: int = 1024
    heads: int = 4
    layers: int = 1
    batch_size: int = 16
    lr: float = 1e-4
    milestones: tuple = (55,)
    decay: float = 0.1
    patience: int = 10
    huber_delta: float = 1.0
    mask_ratio: float = 0.2
    subgraph_size: int = 50
    seed: int = 0
    max_epochs: int = 100
    folding: str = M.TFG
    mask_strategy: str = "node_level"
    split: tuple = (0.6, 0.2, 0.2)

    def validate(self):
        if self.t_in < 1 or self.horizon < 1:
            raise ValueError("t_in and horizon must be >= 1")
        if not 0 <= self.mask_ratio < 1:
            raise ValueError(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if self.subgraph_size < 1:
            raise ValueError("subgraph_size must be >= 1")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if list(self.milestones) != sorted(self.milestones):
            raise ValueError("milestones must be ascending")
        if self.folding not in (M.TFG, M.SF):
            raise ValueError(f"folding must be TFG or SF, got {self.folding!r}")
        if self.mask_strategy not in V.STRATEGIES:
            raise ValueError(f"unknown mask_strategy {self.mask_strategy!r}")
        if self.max_epochs < 0 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs >= 0, patience >= 1, batch_size >= 1 required")
        width = (4 if self.folding == M.TFG else 3) * self.embed_dim
        if width % self.heads != 0:
            raise ValueError(
                f"heads ({self.heads}) must divide the token width ({width})"
            )


def lr_at_epoch(config, epoch):
    """Learning rate used during 1-indexed ``epoch``: the base rate decayed
    once per milestone already reached."""
    hits = sum(1 for m in config.milestones if m <= epoch)
    return config.lr * config.decay**hits


class Forecaster:
    """Model parameters plus the forward paths for both folding modes."""

    def __init__(self, dims, params):
        self.dims = dims
        self.params = params

    @classmethod
    def build(cls, config, n_nodes, frequency, rng):
        dims = M.ModelDims(
            t_in=config.t_in,
            horizon=config.horizon,
            embed_dim=config.embed_dim,
            ffn_dim=config.ffn_dim,
            heads=config.heads,
            layers=config.layers,
            n_nodes=n_nodes,
            frequency=frequency,
            folding=config.folding,
        )
        dims.head_dim  # validates heads | width
        return cls(dims, M.build_params(dims, rng))

    def fuse(self, inputs, tod, dow):
        """(B, N, T) inputs -> fused token tensor (two layouts by folding)."""
        tables = self.params.tables()
        if self.dims.folding == M.TFG:
            return fuse_embeddings_batch(inputs, tables, tod, dow)
        return fuse_embeddings_sf_batch(inputs.transpose(0, 2, 1), tables, tod, dow)

    def encode_and_predict(self, z0):
        z = M.encoder_forward(z0, self.params, self.dims.layers, self.dims.heads)
        return M.predict(z, self.params)

    def forward_inference(self, inputs, tod, dow):
        """Full-graph forward; (B, N, T) -> (B, N, T') tensor."""
        fused = self.fuse(inputs, tod, dow)
        preds = self.encode_and_predict(fused)
        if self.dims.folding == M.TFG:
            return preds
        # SF: (B, T, N) per-token forecasts -> time-axis map onto horizon
        node_major = T.transpose(preds, (0, 2, 1))
        return T.add(T.matmul(node_major, self.params["sf.time"]), self.params["sf.time_b"])


def effective_subgraph_size(n_nodes, mask_ratio, subgraph_size):
    """Clamp the configured s so one subgraph never outgrows the survivors
    (a profile tuned for a large network stays usable on a small one)."""
    n_rem = n_nodes - int(np.floor(mask_ratio * n_nodes))
    return max(1, min(subgraph_size, n_rem))


def training_forward(forecaster, config, inputs, targets, tod, dow, plan_rng):
    """One training-mode forward: fuse, apply visibility, encode, predict.

    Returns (loss tensor, visible token count). SF mode and the
    perturbation-style masking strategies run full-graph (every node stays
    visible and incurs loss).
    """
    b, n, _ = inputs.shape
    if forecaster.dims.folding == M.SF:
        preds = forecaster.forward_inference(inputs, tod, dow)
        loss = T.huber_loss(preds, targets, config.huber_delta)
        return loss, b * config.t_in
    fused = forecaster.fuse(inputs, tod, dow)
    if config.mask_strategy == "node_level":
        s_eff = effective_subgraph_size(n, config.mask_ratio, config.subgraph_size)
        plans = [
            V.plan_visibility(n, config.mask_ratio, s_eff, plan_rng) for _ in range(b)
        ]
        z0 = V.apply_visibility_batch(fused, plans)
        slot_targets, include = V.gather_targets(targets, plans)
        preds = forecaster.encode_and_predict(z0)
        loss = T.huber_loss(
            preds, slot_targets, config.huber_delta, include[..., None]
        )
        return loss, z0.shape[0] * z0.shape[1]
    # perturbation strategies: all N rows stay visible, one group per sample
    plans = [
        V.plan_visibility(n, config.mask_ratio, n, plan_rng) for _ in range(b)
    ]
    z0 = V.perturb_masked_batch(
        fused, plans, config.mask_strategy, config.embed_dim, plan_rng
    )
    preds = forecaster.encode_and_predict(z0)
    loss = T.huber_loss(preds, targets, config.huber_delta)
    return loss, b * n


def evaluate(forecaster, windows, stats, batch_size=64, accumulator=None, per_horizon=None):
    """Inference-mode metrics over ``windows``, de-normalized via ``stats``.

    Ignores mask ratio and subgraph size entirely: a single full-graph
    pass per sample. Optionally fills ``per_horizon`` accumulators
    (one per forecast step).
    """
    if not windows:
        raise ValueError("evaluate needs a non-empty window set")
    acc = accumulator if accumulator is not None else MetricAccumulator()
    for lo in range(0, len(windows), batch_size):
        batch = windows[lo : lo + batch_size]
        inputs = np.stack([w.input for w in batch])
        targets = np.stack([w.target for w in batch])
        tod = np.array([w.tod_index for w in batch])
        dow = np.array([w.dow_index for w in batch])
        preds = forecaster.forward_inference(inputs, tod, dow).data
        pred_units = invert_zscore(preds, stats)
        truth_units = invert_zscore(targets, stats)
        acc.update(pred_units, truth_units)
        if per_horizon is not None:
            for j, step_acc in enumerate(per_horizon):
                step_acc.update(pred_units[..., j], truth_units[..., j])
    return acc.result()


@dataclass
class TrainResult:
    config: TrainConfig
    forecaster: Forecaster
    stats: object
    windows: tuple
    log_rows: list
    best_epoch: int
    best_val_mae: float
    epochs_run: int
    wall_seconds: list = field(default_factory=list)


def _rng_streams(seed):
    ss = np.random.SeedSequence(seed)
    init_ss, shuffle_ss, plan_ss = ss.spawn(3)
    return (
        np.random.default_rng(init_ss),
        np.random.default_rng(shuffle_ss),
        np.random.default_rng(plan_ss),
    )


def train(config, series, progress=None):
    """Full optimization loop over a raw series.

    Normalizes with train-slice statistics, windows chronologically,
    then per epoch: shuffle, batch, tokenize, draw fresh visibility plans,
    forward, Huber backward over visible nodes, Adam step. The learning
    rate decays at each milestone epoch; training stops early after
    ``patience`` epochs without validation-MAE improvement and the
    best-validation parameters are restored.
    """
    config.validate()
    stats = fit_normalizer(series, config.split[0])
    normed = apply_zscore(series, stats)
    train_w, val_w, test_w = make_windows(
        normed, config.t_in, config.horizon, config.split
    )
    if not train_w:
        raise DivergenceError("no training windows; series too short for the split")
    init_rng, shuffle_rng, plan_rng = _rng_streams(config.seed)
    forecaster = Forecaster.build(
        config, series.node_count, series.frequency, init_rng
    )
    params = forecaster.params
    state = T.AdamState()

    best_blobs = params.clone_data()
    best_val_mae = np.inf
    best_epoch = 0
    stale = 0
    log_rows = []
    wall_seconds = []
    epochs_run = 0

    for epoch in range(1, config.max_epochs + 1):
        lr = lr_at_epoch(config, epoch)
        tick = time.perf_counter()
        order = shuffle_rng.permutation(len(train_w))
        loss_sum = 0.0
        loss_batches = 0
        tokens_processed = 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            batch = [train_w[i] for i in idx]
            inputs = np.stack([w.input for w in batch])
            targets = np.stack([w.target for w in batch])
            tod = np.array([w.tod_index for w in batch])
            dow = np.array([w.dow_index for w in batch])
            loss, tokens = training_forward(
                forecaster, config, inputs, targets, tod, dow, plan_rng
            )
            if not np.isfinite(loss.data):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}"
                )
            params.zero_grads()
            loss.backward()
            T.adam_step(params.tensors, params.grads(), state, lr)
            loss_sum += loss.item()
            loss_batches += 1
            tokens_processed += tokens
        # wall time covers the training section only; validation cost is
        # independent of the visibility settings being benchmarked
        wall_seconds.append(time.perf_counter() - tick)
        train_loss = loss_sum / loss_batches
        val = evaluate(forecaster, val_w or train_w, stats)
        est_seconds = estimate_epoch_seconds(
            forecaster.dims, config, len(train_w), len(val_w or train_w)
        )
        log_rows.append(
            [epoch, lr, train_loss, val.rmse, val.mae, val.mape, est_seconds, tokens_processed]
        )
        epochs_run = epoch
        if progress is not None:
            progress(epoch, train_loss, val)
        if val.mae < best_val_mae:
            best_val_mae = val.mae
            best_epoch = epoch
            best_blobs = params.clone_data()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    params.load_data(best_blobs)
    return TrainResult(
        config=config,
        forecaster=forecaster,
        stats=stats,
        windows=(train_w, val_w, test_w),
        log_rows=log_rows,
        best_epoch=best_epoch,
        best_val_mae=float(best_val_mae) if np.isfinite(best_val_mae) else float("nan"),
        epochs_run=epochs_run,
        wall_seconds=wall_seconds,
    )


def format_log_rows(rows):
    """Training-log CSV text; repr() keeps floats shortest-round-trip so
    identical runs serialize identically."""
    lines = [TRAIN_LOG_COLUMNS]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


# --- resource accounting -------------------------------------------------

def tfg_token_count(n_nodes):
    """Tokens per sample under temporal folding: one per node."""
    return n_nodes


def snapshot_token_count(n_nodes, t_in):
    """Tokens per sample under conventional snapshot stacking."""
    return n_nodes * t_in


def visible_token_count(n_nodes, mask_ratio, subgraph_size):
    """Processed slots per sample after masking and padding: (1-r)N + p."""
    m = int(np.floor(mask_ratio * n_nodes))
    n_rem = n_nodes - m
    p = (subgraph_size - (n_rem % subgraph_size)) % subgraph_size
    return n_rem + p


def attention_pair_count(n_nodes, mask_ratio, subgraph_size):
    """Token pairs scored per sample: K * s^2 = ((1-r)N + p) * s."""
    tokens = visible_token_count(n_nodes, mask_ratio, subgraph_size)
    k = tokens // subgraph_size
    return k * subgraph_size * subgraph_size


def forward_flops_per_sample(dims, tokens, groups, group_size):
    """Multiply-add count of one forward pass over ``tokens`` slots."""
    w = dims.width
    f = dims.ffn_dim
    fuse_in = dims.t_in if dims.folding == M.TFG else dims.n_nodes
    fuse_tokens = dims.n_nodes if dims.folding == M.TFG else dims.t_in
    flops = fuse_tokens * fuse_in * dims.embed_dim * 2
    per_layer = (
        tokens * w * 3 * w * 2  # qkv
        + groups * dims.heads * group_size * group_size * (w // dims.heads) * 2 * 2
        + tokens * w * w * 2  # output projection
        + tokens * (w * f + f * w) * 2  # ffn
    )
    head_out = dims.horizon if dims.folding == M.TFG else dims.n_nodes
    head = tokens * (w * f + f * head_out) * 2
    return flops + dims.layers * per_layer + head


def estimate_epoch_seconds(dims, config, n_train, n_val):
    """Deterministic per-epoch cost estimate: forward+backward over the
    training windows plus a forward over the validation windows, at a
    fixed nominal FLOP rate."""
    n = dims.n_nodes
    if dims.folding == M.TFG and config.mask_strategy == "node_level":
        s_eff = effective_subgraph_size(n, config.mask_ratio, config.subgraph_size)
        tokens = visible_token_count(n, config.mask_ratio, s_eff)
        groups = tokens // s_eff
        train_fwd = forward_flops_per_sample(dims, tokens, groups, s_eff)
    elif dims.folding == M.TFG:
        train_fwd = forward_flops_per_sample(dims, n, 1, n)
    else:
        train_fwd = forward_flops_per_sample(dims, dims.t_in, 1, dims.t_in)
    if dims.folding == M.TFG:
        infer_fwd = forward_flops_per_sample(dims, n, 1, n)
    else:
        infer_fwd = forward_flops_per_sample(dims, dims.t_in, 1, dims.t_in)
    total = 3 * train_fwd * n_train + infer_fwd * n_val
    return total / NOMINAL_FLOPS_PER_SECOND


def activation_float_count(dims, config, batch_size):
    """Forward-tape float count for one training batch (the backward pass
    roughly doubles it); an analytic stand-in for allocator peaks."""
    n = dims.n_nodes
    w = dims.width
    f = dims.ffn_dim
    if dims.folding == M.TFG and config.mask_strategy == "node_level":
        s = effective_subgraph_size(n, config.mask_ratio, config.subgraph_size)
        tokens_per = visible_token_count(n, config.mask_ratio, s)
        groups_per = tokens_per // s
    else:
        s = n if dims.folding == M.TFG else dims.t_in
        tokens_per = s
        groups_per = 1
    tokens = batch_size * tokens_per
    groups = batch_size * groups_per
    fused = batch_size * n * w if dims.folding == M.TFG else batch_size * dims.t_in * w
    per_layer = (
        2 * tokens * w  # ln out + residual
        + tokens * 3 * w  # qkv
        + 2 * groups * dims.heads * s * s  # scores + softmax
        + 3 * tokens * w  # context, wo out, residual
        + 2 * tokens * f  # ffn mid + gelu
        + tokens * w
    )
    head_out = dims.horizon if dims.folding == M.TFG else dims.n_nodes
    head = 2 * tokens * f + tokens * head_out
    return fused + tokens * w + dims.layers * per_layer + head


def bench(config, series, grid, epochs=3):
    """Resource report over a (mask_ratio, subgraph_size) grid.

    Each grid point trains ``epochs`` epochs on the series and reports the
    per-sample token count, parameter count, analytic activation floats,
    and the minimum measured epoch wall time.
    """
    rows = []
    for r, s in grid:
        cfg = replace(
            config,
            mask_ratio=r,
            subgraph_size=s,
            max_epochs=epochs,
            patience=max(config.patience, epochs + 1),
        )
        result = train(cfg, series)
        dims = result.forecaster.dims
        s_eff = effective_subgraph_size(dims.n_nodes, r, s)
        rows.append(
            [
                f"r{r}_s{s}",
                r,
                s,
                visible_token_count(dims.n_nodes, r, s_eff),
                result.forecaster.params.param_count(),
                activation_float_count(dims, cfg, cfg.batch_size),
                min(result.wall_seconds),
            ]
        )
    return rows


def format_bench_rows(rows):
    lines = [BENCH_COLUMNS]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"
