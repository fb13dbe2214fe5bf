"""Token construction: temporal folding plus embedding fusion.

Temporal folding turns one sample window into one token per node by
collapsing the node's T input steps into a single attribute vector; the
spatial alternative (one token per time step, carrying all N node values)
exists for the folding ablation. Fusion projects the folded attributes
and concatenates the projection with spatial, time-of-day, and
day-of-week embeddings into a 4d-wide token.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class EmbeddingTables:
    """Learnable lookup tables and the attribute projection.

    wx: (T x d) projection with bias (d,); spatial: (N x d);
    tod: (frequency x d); dow: (7 x d).
    """

    wx: Tensor
    wx_b: Tensor
    spatial: Tensor | None  # absent in spatial-folding mode
    tod: Tensor
    dow: Tensor

    @property
    def dim(self):
        return self.wx.shape[1]


def fold_temporal(window):
    """N x T matrix of per-node folded attribute vectors.

    Row n is node n's input sequence; windows already store inputs
    node-major, so this is a pure (copying) reshape.
    """
    return np.array(window.input, dtype=np.float64)


def unfold_temporal(tokens):
    """Inverse of fold_temporal (bijection)."""
    return np.array(tokens, dtype=np.float64)


def fold_spatial_sf(window):
    """T x N matrix of spatially-folded tokens, one per time step."""
    return np.array(window.input.T, dtype=np.float64)


def fuse_embeddings(tf_tokens, tables, tod_index, dow_index):
    """Fuse one window's tokens into an N x 4d tensor.

    The projection output, the per-node spatial row, and the single
    tod/dow rows (broadcast to all nodes) are concatenated in that order,
    so slices [2d, 3d) and [3d, 4d) are constant across nodes.
    """
    tokens = np.atleast_2d(np.asarray(tf_tokens, dtype=np.float64))
    out = fuse_embeddings_batch(tokens[None], tables, np.array([tod_index]), np.array([dow_index]))
    return T.reshape(out, out.shape[1:])


def fuse_embeddings_batch(tokens, tables, tod_indices, dow_indices):
    """Batched fusion: (B, N, T) tokens -> (B, N, 4d) tensor."""
    b, n, _ = tokens.shape
    freq = tables.tod.shape[0]
    tod_indices = np.asarray(tod_indices)
    dow_indices = np.asarray(dow_indices)
    if tod_indices.min() < 0 or tod_indices.max() >= freq:
        raise IndexError(f"tod index out of range [0, {freq})")
    if dow_indices.min() < 0 or dow_indices.max() >= 7:
        raise IndexError("dow index out of range [0, 7)")
    e_x = T.add(T.matmul(Tensor(tokens), tables.wx), tables.wx_b)
    node_ids = np.broadcast_to(np.arange(n), (b, n))
    e_s = T.gather_rows(tables.spatial, node_ids)
    e_tod = T.gather_rows(tables.tod, np.repeat(tod_indices[:, None], n, axis=1))
    e_dow = T.gather_rows(tables.dow, np.repeat(dow_indices[:, None], n, axis=1))
    return T.concat_lastdim([e_x, e_s, e_tod, e_dow])


def fuse_embeddings_sf_batch(tokens, tables, tod_indices, dow_indices):
    """Spatial-folding fusion: (B, T, N) tokens -> (B, T, 3d) tensor.

    One SF token mixes attributes of every node, so no per-token spatial
    embedding exists; tod/dow (anchor-derived, shared across tokens) are
    still appended.
    """
    b, steps, _ = tokens.shape
    e_x = T.add(T.matmul(Tensor(tokens), tables.wx), tables.wx_b)
    e_tod = T.gather_rows(tables.tod, np.repeat(np.asarray(tod_indices)[:, None], steps, axis=1))
    e_dow = T.gather_rows(tables.dow, np.repeat(np.asarray(dow_indices)[:, None], steps, axis=1))
    return T.concat_lastdim([e_x, e_tod, e_dow])


def export_embeddings(tables, path):
    """Write the spatial/tod/dow tables as CSV for offline projection
    (e.g. t-SNE): header ``table,index,dim0..dim{d-1}``, one row per entry."""
    d = tables.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["table", "index"] + [f"dim{i}" for i in range(d)])
        for name, tbl in (("spatial", tables.spatial), ("tod", tables.tod), ("dow", tables.dow)):
            if tbl is None:
                continue
            for idx, row in enumerate(tbl.data):
                writer.writerow([name, idx] + [repr(float(v)) for v in row])
