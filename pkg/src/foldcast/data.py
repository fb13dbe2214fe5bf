"""Traffic-series loading, z-score normalization, windowing, and the
historical-average baseline.

A series is a (steps x nodes) float64 matrix with timing metadata: the
sampling frequency (samples per day, dividing a day evenly) and the epoch
timestamp of row 0. Two on-disk forms are supported: a text format with a
``N=.. FREQ=.. START=..`` header followed by comma-separated rows, and a
binary container with magic ``STSF1``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

SECONDS_PER_DAY = 86400
BINARY_MAGIC = b"STSF1"


@dataclass
class TrafficSeries:
    """Raw (steps x nodes) signal matrix plus timing metadata."""

    values: np.ndarray
    frequency: int
    start: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"series values must be 2-D, got shape {self.values.shape}")
        if self.frequency <= 0:
            raise DataError(f"frequency must be positive, got {self.frequency}")
        if SECONDS_PER_DAY % self.frequency != 0:
            raise DataError(
                f"frequency {self.frequency} does not divide a day evenly"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError("series contains NaN/Inf values")

    @property
    def step_count(self):
        return self.values.shape[0]

    @property
    def node_count(self):
        return self.values.shape[1]

    @property
    def step_seconds(self):
        return SECONDS_PER_DAY // self.frequency

    def tod_index(self, k):
        """Time-of-day phase of row k, in [0, frequency)."""
        offset = (self.start % SECONDS_PER_DAY) // self.step_seconds
        return int((offset + k) % self.frequency)

    def dow_index(self, k):
        """Day-of-week of row k, 0 = Monday (epoch day 0 was a Thursday)."""
        day = (self.start + k * self.step_seconds) // SECONDS_PER_DAY
        return int((day + 3) % 7)


@dataclass
class SampleWindow:
    """One training example: T input steps and T' target steps per node.

    ``input`` is (N x T) node-major, ``target`` is (N x T'); ``anchor_t``
    is the series row index of the last input step, and tod/dow phases are
    taken at that anchor.
    """

    input: np.ndarray
    target: np.ndarray
    anchor_t: int
    tod_index: int
    dow_index: int


@dataclass
class NormStats:
    mean: float
    std: float


def load_series(path, format="auto"):
    """Load a series from ``path``; ``format`` is 'text', 'binary', or 'auto'
    (sniffs the binary magic)."""
    if format == "auto":
        with open(path, "rb") as fh:
            format = "binary" if fh.read(5) == BINARY_MAGIC else "text"
    if format == "binary":
        return _load_binary(path)
    if format == "text":
        return _load_text(path)
    raise DataError(f"unknown series format {format!r}")


def _load_text(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = {}
        for part in header.split():
            if "=" not in part:
                raise DataError(f"{path}: malformed header field {part!r}")
            key, val = part.split("=", 1)
            fields[key] = val
        try:
            n = int(fields["N"])
            freq = int(fields["FREQ"])
            start = int(fields["START"])
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: bad header {header!r}") from exc
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != n:
                raise DataError(
                    f"{path}: row {lineno} has {len(cells)} cells, expected {n}"
                )
            row = np.empty(n, dtype=np.float64)
            for col, cell in enumerate(cells):
                try:
                    row[col] = float(cell)
                except ValueError as exc:
                    raise DataError(
                        f"{path}: non-numeric cell at row {lineno}, col {col}: {cell!r}"
                    ) from exc
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return TrafficSeries(np.vstack(rows), frequency=freq, start=start)


def _load_binary(path):
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != BINARY_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        head = fh.read(32)
        if len(head) != 32:
            raise DataError(f"{path}: truncated binary header")
        steps, n, freq = struct.unpack("<QQQ", head[:24])
        (start,) = struct.unpack("<q", head[24:])
        payload = fh.read(steps * n * 8)
        if len(payload) != steps * n * 8:
            raise DataError(f"{path}: truncated payload")
        values = np.frombuffer(payload, dtype="<f8").reshape(steps, n)
    return TrafficSeries(values.copy(), frequency=int(freq), start=int(start))


def save_series(series, path, format="text"):
    if format == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"N={series.node_count} FREQ={series.frequency} START={series.start}\n")
            for row in series.values:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
    elif format == "binary":
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<QQQ", series.step_count, series.node_count, series.frequency))
            fh.write(struct.pack("<q", series.start))
            fh.write(series.values.astype("<f8").tobytes())
    else:
        raise DataError(f"unknown series format {format!r}")


def fit_normalizer(series, train_fraction):
    """Mean/std over the first floor(train_fraction * steps) rows, all
    nodes pooled."""
    if not 0 < train_fraction <= 1:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    rows = int(np.floor(train_fraction * series.step_count + 1e-9))
    if rows < 1:
        raise DataError("train fraction covers no rows")
    chunk = series.values[:rows]
    std = float(chunk.std())
    if std == 0.0:
        raise DataError("degenerate dataset: zero variance in the training slice")
    return NormStats(mean=float(chunk.mean()), std=std)


def apply_zscore(series, stats):
    return TrafficSeries(
        (series.values - stats.mean) / stats.std,
        frequency=series.frequency,
        start=series.start,
    )


def invert_zscore(values, stats):
    return np.asarray(values) * stats.std + stats.mean


def split_boundaries(steps, split):
    """Row indices (r1, r2) of the train/val and val/test boundaries."""
    s0, s1, s2 = split
    if abs(s0 + s1 + s2 - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {split}")
    r1 = int(np.floor(s0 * steps + 1e-9))
    r2 = int(np.floor((s0 + s1) * steps + 1e-9))
    return r1, r2


def make_windows(series, t_in, horizon, split=(0.6, 0.2, 0.2)):
    """Slide a (T + T') window over the series and split chronologically.

    A window with start row k belongs to train when it fits entirely below
    the train row boundary (so no train target crosses it), to val when it
    fits below the val/test boundary, and to test otherwise. Every window
    is assigned to exactly one split.
    """
    if t_in < 1 or horizon < 1:
        raise ValueError("window lengths must be >= 1")
    steps = series.step_count
    total = steps - t_in - horizon + 1
    if total < 1:
        raise DataError(
            f"series too short: {steps} steps cannot fit T={t_in} + T'={horizon}"
        )
    r1, r2 = split_boundaries(steps, split)
    span = t_in + horizon
    out = ([], [], [])
    for k in range(total):
        end = k + span
        window = SampleWindow(
            input=series.values[k : k + t_in].T.copy(),
            target=series.values[k + t_in : end].T.copy(),
            anchor_t=k + t_in - 1,
            tod_index=series.tod_index(k + t_in - 1),
            dow_index=series.dow_index(k + t_in - 1),
        )
        if end <= r1:
            out[0].append(window)
        elif end <= r2:
            out[1].append(window)
        else:
            out[2].append(window)
    return out


def _window_row_phases(window, t_in, frequency):
    """(tod, dow) phase of every row covered by the window, keyed by row index.

    Derived purely from the anchor phases: stepping one row forward
    advances tod by one and rolls dow when tod wraps.
    """
    anchor = window.anchor_t
    phases = {}
    horizon = window.target.shape[1]
    for k in range(anchor - t_in + 1, anchor + horizon + 1):
        delta = k - anchor
        raw = window.tod_index + delta
        tod = raw % frequency
        dow = (window.dow_index + raw // frequency) % 7
        phases[k] = (tod, dow)
    return phases


class HAModel:
    """Per-node, per-(tod, dow)-phase training means with node-mean fallback."""

    def __init__(self, phase_mean, node_mean, frequency):
        self.phase_mean = phase_mean  # (freq, 7, N), NaN where unseen
        self.node_mean = node_mean  # (N,)
        self.frequency = frequency

    def predict(self, window):
        """N x T' forecast for the window's target rows."""
        n = window.input.shape[0]
        t_in = window.input.shape[1]
        horizon = window.target.shape[1]
        pred = np.empty((n, horizon))
        phases = _window_row_phases(window, t_in, self.frequency)
        for j in range(horizon):
            tod, dow = phases[window.anchor_t + 1 + j]
            col = self.phase_mean[tod, dow]
            pred[:, j] = np.where(np.isnan(col), self.node_mean, col)
        return pred


def ha_fit(train_windows, t_in, frequency):
    """Accumulate phase means from the rows the training windows cover.

    Overlapping windows see the same row values, so each distinct row is
    counted once.
    """
    if not train_windows:
        raise DataError("HA baseline needs a non-empty training set")
    n = train_windows[0].input.shape[0]
    sums = np.zeros((frequency, 7, n))
    counts = np.zeros((frequency, 7, 1))
    node_sum = np.zeros(n)
    node_count = 0
    seen = set()
    for w in train_windows:
        phases = _window_row_phases(w, t_in, frequency)
        start = w.anchor_t - t_in + 1
        for k, (tod, dow) in phases.items():
            if k in seen:
                continue
            seen.add(k)
            if k <= w.anchor_t:
                row = w.input[:, k - start]
            else:
                row = w.target[:, k - w.anchor_t - 1]
            sums[tod, dow] += row
            counts[tod, dow] += 1
            node_sum += row
            node_count += 1
    with np.errstate(invalid="ignore"):
        phase_mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return HAModel(phase_mean, node_sum / node_count, frequency)


def ha_baseline(train_windows, query_window, t_in, frequency):
    """Historical-average prediction for one query window."""
    return ha_fit(train_windows, t_in, frequency).predict(query_window)
