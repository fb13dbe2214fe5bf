#!/usr/bin/env python3
"""From windows to encoder input: temporal folding, embedding fusion, and
the node-visibility mechanism (masking + subgraph sampling).

Run: python demos/03_tokens_and_visibility.py
"""
import numpy as np

from foldcast.data import apply_zscore, fit_normalizer, make_windows
from foldcast.synth import generate_series
from foldcast.tokenize import fold_spatial_sf, fold_temporal, fuse_embeddings
from foldcast.train import (
    Forecaster,
    TrainConfig,
    snapshot_token_count,
    tfg_token_count,
    visible_token_count,
)
from foldcast.visibility import PAD, apply_visibility, plan_visibility, scatter_back


def main():
    print("-- token accounting: folding vs snapshot stacking --")
    for n, t in ((307, 24), (170, 48)):
        print(f"N={n:3d} T={t}: folded {tfg_token_count(n):4d} tokens "
              f"vs {snapshot_token_count(n, t):5d} stacked snapshot tokens")

    series = generate_series(n_nodes=10, days=10, frequency=24, noise=1.5, seed=1)
    normed = apply_zscore(series, fit_normalizer(series, 0.6))
    windows, _, _ = make_windows(normed, t_in=12, horizon=6)
    window = windows[0]

    tokens = fold_temporal(window)
    print(f"\ntemporal folding: window ({window.input.shape}) -> {tokens.shape[0]} tokens "
          f"of length {tokens.shape[1]}")
    sf = fold_spatial_sf(window)
    print(f"spatial folding (ablation variant): {sf.shape[0]} tokens of length {sf.shape[1]}")

    cfg = TrainConfig(t_in=12, horizon=6, embed_dim=8, ffn_dim=16, heads=2)
    forecaster = Forecaster.build(cfg, series.node_count, series.frequency,
                                  np.random.default_rng(0))
    fused = fuse_embeddings(tokens, forecaster.params.tables(),
                            window.tod_index, window.dow_index)
    d = cfg.embed_dim
    print(f"fused tokens: {fused.shape} (= attribute | spatial | tod | dow slices of {d})")
    same_tod = np.all(fused.data[:, 2 * d : 3 * d] == fused.data[0, 2 * d : 3 * d])
    print("tod/dow slices shared across nodes:", same_tod)

    print("\n-- node visibility --")
    rng = np.random.default_rng(7)
    plan = plan_visibility(series.node_count, mask_ratio=0.3, subgraph_size=4, rng=rng)
    print(f"N=10, r=0.3, s=4: masked {plan.masked.tolist()}, pad {plan.pad_count}, "
          f"{plan.subgraph_count} subgraphs")
    print("slot layout (-1 = zero padding):")
    print(plan.slots)
    z0 = apply_visibility(fused, plan)
    print("encoder input shape:", z0.shape)
    pad_norms = np.linalg.norm(z0.data[plan.slots == PAD], axis=-1)
    print("pad-slot row norms:", pad_norms)

    preds = np.arange(z0.shape[0] * z0.shape[1] * 6, dtype=float).reshape(
        z0.shape[0], z0.shape[1], 6
    )
    back, include = scatter_back(preds, plan)
    print(f"scatter_back: {include.sum()} of {series.node_count} nodes carry predictions; "
          f"masked nodes excluded from loss")

    print("\n-- processed token count over the mask-ratio sweep --")
    for r in (0.0, 0.2, 0.5, 0.8, 0.9):
        print(f"r={r:0.1f}: {visible_token_count(307, r, 50):3d} tokens per sample (N=307, s=50)")


if __name__ == "__main__":
    main()
