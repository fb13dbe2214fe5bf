#!/usr/bin/env python3
"""Dataset handling: synthetic generation, the text format, z-score
normalization, chronological windowing, and the historical-average
baseline.

Run: python demos/02_data_pipeline.py
"""
import os
import tempfile

import numpy as np

from foldcast.data import (
    apply_zscore,
    fit_normalizer,
    ha_fit,
    invert_zscore,
    load_series,
    make_windows,
    save_series,
)
from foldcast.metrics import MetricAccumulator
from foldcast.synth import generate_series


def main():
    series = generate_series(n_nodes=8, days=14, frequency=24, noise=2.0, seed=42)
    print(f"synthetic series: {series.step_count} steps x {series.node_count} nodes, "
          f"{series.frequency}/day")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "demo.txt")
        save_series(series, path)
        head = open(path).readline().strip()
        print("file header:", head)
        series = load_series(path)

    stats = fit_normalizer(series, train_fraction=0.6)
    print(f"train-slice stats: mean {stats.mean:.2f} std {stats.std:.2f}")
    normed = apply_zscore(series, stats)
    round_trip = invert_zscore(normed.values, stats)
    print("round-trip max error:", np.max(np.abs(round_trip - series.values)))

    train_w, val_w, test_w = make_windows(normed, t_in=12, horizon=6)
    print(f"windows: {len(train_w)} train / {len(val_w)} val / {len(test_w)} test "
          f"(total {series.step_count - 12 - 6 + 1})")
    w = train_w[0]
    print(f"first window: input {w.input.shape}, target {w.target.shape}, "
          f"anchor row {w.anchor_t}, tod {w.tod_index}, dow {w.dow_index}")

    ha = ha_fit(train_w, t_in=12, frequency=series.frequency)
    acc = MetricAccumulator()
    for w in test_w:
        acc.update(invert_zscore(ha.predict(w), stats), invert_zscore(w.target, stats))
    m = acc.result()
    print(f"HA baseline on test: rmse {m.rmse:.3f} mae {m.mae:.3f} mape {m.mape:.2f}%")


if __name__ == "__main__":
    main()
