#!/usr/bin/env python3
"""End-to-end training on synthetic data: optimize, early-stop, evaluate
against the historical-average baseline, and round-trip a checkpoint.

Run: python demos/04_train_forecaster.py   (about a minute single-threaded)
"""
import os
import tempfile

import numpy as np

from foldcast.checkpoint import load_into, save_checkpoint
from foldcast.data import ha_fit, invert_zscore
from foldcast.metrics import MetricAccumulator
from foldcast.synth import generate_series
from foldcast.train import Forecaster, TrainConfig, evaluate, train


def main():
    series = generate_series(n_nodes=12, days=14, frequency=24, noise=2.0, seed=3)
    cfg = TrainConfig(
        t_in=12, horizon=6, embed_dim=16, ffn_dim=64, heads=2, layers=1,
        batch_size=16, lr=1e-3, milestones=(40,), patience=10,
        mask_ratio=0.2, subgraph_size=5, seed=0, max_epochs=50,
    )

    def progress(epoch, loss, val):
        if epoch % 5 == 0 or epoch == 1:
            print(f"epoch {epoch:3d}: train loss {loss:.4f}  val MAE {val.mae:.3f}")

    result = train(cfg, series, progress=progress)
    print(f"\nstopped after {result.epochs_run} epochs; best epoch {result.best_epoch} "
          f"(val MAE {result.best_val_mae:.3f})")

    train_w, _, test_w = result.windows
    model_m = evaluate(result.forecaster, test_w, result.stats)
    ha = ha_fit(train_w, cfg.t_in, series.frequency)
    acc = MetricAccumulator()
    for w in test_w:
        acc.update(invert_zscore(ha.predict(w), result.stats),
                   invert_zscore(w.target, result.stats))
    ha_m = acc.result()
    print(f"model on test: rmse {model_m.rmse:.3f} mae {model_m.mae:.3f} mape {model_m.mape:.2f}%")
    print(f"HA    on test: rmse {ha_m.rmse:.3f} mae {ha_m.mae:.3f} mape {ha_m.mape:.2f}%")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.bin")
        save_checkpoint(result.forecaster.params, path)
        fresh = Forecaster.build(cfg, series.node_count, series.frequency,
                                 np.random.default_rng(99))
        load_into(fresh.params, path)
        again = evaluate(fresh, test_w, result.stats)
        print(f"\ncheckpoint round trip: test MAE {again.mae:.6f} "
              f"(identical: {again.mae == model_m.mae})")


if __name__ == "__main__":
    main()
