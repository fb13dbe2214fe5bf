"""Error metrics, computed in original signal units after de-normalization.

MAPE skips ground-truth entries whose magnitude falls below MAPE_FLOOR;
near-zero flows (overnight readings) otherwise dominate the percentage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAPE_FLOOR = 1e-3


@dataclass
class Metrics:
    rmse: float
    mae: float
    mape: float  # percent

    def row(self):
        return [self.rmse, self.mae, self.mape]


class MetricAccumulator:
    """Streaming RMSE/MAE/MAPE over (prediction, truth) arrays."""

    def __init__(self):
        self.sq_sum = 0.0
        self.abs_sum = 0.0
        self.count = 0
        self.ape_sum = 0.0
        self.ape_count = 0

    def update(self, pred, truth):
        pred = np.asarray(pred, dtype=np.float64)
        truth = np.asarray(truth, dtype=np.float64)
        err = pred - truth
        self.sq_sum += float((err * err).sum())
        self.abs_sum += float(np.abs(err).sum())
        self.count += err.size
        ok = np.abs(truth) >= MAPE_FLOOR
        self.ape_sum += float((np.abs(err)[ok] / np.abs(truth)[ok]).sum())
        self.ape_count += int(ok.sum())

    def result(self):
        if self.count == 0:
            raise ValueError("no entries accumulated")
        mape = 100.0 * self.ape_sum / self.ape_count if self.ape_count else 0.0
        return Metrics(
            rmse=float(np.sqrt(self.sq_sum / self.count)),
            mae=self.abs_sum / self.count,
            mape=mape,
        )


def compute_metrics(pred, truth):
    acc = MetricAccumulator()
    acc.update(pred, truth)
    return acc.result()
