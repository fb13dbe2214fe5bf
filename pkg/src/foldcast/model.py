"""Pre-norm transformer encoder over visible tokens plus an MLP head.

Attention is confined within each subgraph: the (groups x s x width)
token tensor batches groups along the leading axis, so a token attends
only to the s-1 peers sharing its group. There is no positional encoding;
slot order within a group carries no meaning and the encoder is
permutation-equivariant over it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .tokenize import EmbeddingTables

TFG = "TFG"
SF = "SF"


@dataclass
class ModelDims:
    """Everything needed to size the parameter arrays."""

    t_in: int
    horizon: int
    embed_dim: int  # d; tokens are 4d wide (3d in SF mode)
    ffn_dim: int
    heads: int
    layers: int
    n_nodes: int
    frequency: int
    folding: str = TFG

    @property
    def width(self):
        return 4 * self.embed_dim if self.folding == TFG else 3 * self.embed_dim

    @property
    def head_dim(self):
        if self.width % self.heads != 0:
            raise ValueError(
                f"heads ({self.heads}) must divide token width ({self.width})"
            )
        return self.width // self.heads


class ModelParams:
    """Ordered name -> Tensor mapping; the insertion order is the stable
    checkpoint manifest order."""

    def __init__(self, dims):
        self.dims = dims
        self.tensors = {}

    def add(self, name, data):
        t = Tensor(data, requires_grad=True)
        self.tensors[name] = t
        return t

    def __getitem__(self, name):
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def manifest(self):
        return {name: t.shape for name, t in self.tensors.items()}

    def param_count(self):
        return sum(t.size for t in self.tensors.values())

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def grads(self):
        return {name: t.grad for name, t in self.tensors.items() if t.grad is not None}

    def clone_data(self):
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_data(self, blobs):
        for name, t in self.tensors.items():
            t.data = np.array(blobs[name], dtype=np.float64)

    def tables(self):
        """Embedding-table view over the shared parameter tensors."""
        tt = self.tensors
        return EmbeddingTables(
            wx=tt["embed.wx"],
            wx_b=tt["embed.wx_b"],
            spatial=tt.get("embed.s"),
            tod=tt["embed.tod"],
            dow=tt["embed.dow"],
        )


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_params(dims, rng):
    """Initialize all learnable arrays: uniform(+-1/sqrt(fan_in)) for
    projections, normal(0, 0.02) for embedding tables, zeros for biases,
    ones/zeros for layer-norm affines."""
    params = ModelParams(dims)
    d = dims.embed_dim
    w = dims.width
    if dims.folding == TFG:
        params.add("embed.wx", _uniform(rng, dims.t_in, (dims.t_in, d)))
        params.add("embed.wx_b", np.zeros(d))
        params.add("embed.s", rng.normal(0.0, 0.02, size=(dims.n_nodes, d)))
    else:
        params.add("embed.wx", _uniform(rng, dims.n_nodes, (dims.n_nodes, d)))
        params.add("embed.wx_b", np.zeros(d))
    params.add("embed.tod", rng.normal(0.0, 0.02, size=(dims.frequency, d)))
    params.add("embed.dow", rng.normal(0.0, 0.02, size=(7, d)))
    for i in range(dims.layers):
        params.add(f"enc.{i}.ln1.g", np.ones(w))
        params.add(f"enc.{i}.ln1.b", np.zeros(w))
        params.add(f"enc.{i}.qkv", _uniform(rng, w, (w, 3 * w)))
        params.add(f"enc.{i}.qkv_b", np.zeros(3 * w))
        params.add(f"enc.{i}.wo", _uniform(rng, w, (w, w)))
        params.add(f"enc.{i}.wo_b", np.zeros(w))
        params.add(f"enc.{i}.ln2.g", np.ones(w))
        params.add(f"enc.{i}.ln2.b", np.zeros(w))
        params.add(f"enc.{i}.ffn1", _uniform(rng, w, (w, dims.ffn_dim)))
        params.add(f"enc.{i}.ffn1_b", np.zeros(dims.ffn_dim))
        params.add(f"enc.{i}.ffn2", _uniform(rng, dims.ffn_dim, (dims.ffn_dim, w)))
        params.add(f"enc.{i}.ffn2_b", np.zeros(w))
    head_out = dims.horizon if dims.folding == TFG else dims.n_nodes
    params.add("head.0", _uniform(rng, w, (w, dims.ffn_dim)))
    params.add("head.0_b", np.zeros(dims.ffn_dim))
    params.add("head.1", _uniform(rng, dims.ffn_dim, (dims.ffn_dim, head_out)))
    params.add("head.1_b", np.zeros(head_out))
    if dims.folding == SF:
        # SF emits one all-node forecast per time-step token; a final
        # linear over the time axis maps T tokens onto the T' horizon.
        params.add("sf.time", _uniform(rng, dims.t_in, (dims.t_in, dims.horizon)))
        params.add("sf.time_b", np.zeros(dims.horizon))
    return params


def msa(z, params, layer, heads):
    """Multi-head self-attention within each leading-axis group.

    Scores are scaled by sqrt(width / heads); heads are concatenated and
    passed through the output projection.
    """
    groups, s, width = z.shape
    head_dim = width // heads
    qkv = T.add(T.matmul(z, params[f"enc.{layer}.qkv"]), params[f"enc.{layer}.qkv_b"])
    parts = []
    for j, lo in enumerate((0, width, 2 * width)):
        piece = T.slice_lastdim(qkv, lo, lo + width)
        piece = T.reshape(piece, (groups, s, heads, head_dim))
        parts.append(T.transpose(piece, (0, 2, 1, 3)))  # (groups, h, s, hd)
    q, k, v = parts
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(head_dim))
    attn = T.softmax_lastdim(scores)
    ctx = T.matmul(attn, v)  # (groups, h, s, hd)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (groups, s, width))
    return T.add(T.matmul(ctx, params[f"enc.{layer}.wo"]), params[f"enc.{layer}.wo_b"])


def encoder_forward(z0, params, layers, heads):
    """Pre-norm residual blocks: attention then feed-forward, each applied
    to the layer-normed input and added back."""
    z = z0
    for i in range(layers):
        normed = T.layer_norm(z, params[f"enc.{i}.ln1.g"], params[f"enc.{i}.ln1.b"])
        z = T.add(msa(normed, params, i, heads), z)
        normed = T.layer_norm(z, params[f"enc.{i}.ln2.g"], params[f"enc.{i}.ln2.b"])
        ffn = T.add(T.matmul(normed, params[f"enc.{i}.ffn1"]), params[f"enc.{i}.ffn1_b"])
        ffn = T.gelu(ffn)
        ffn = T.add(T.matmul(ffn, params[f"enc.{i}.ffn2"]), params[f"enc.{i}.ffn2_b"])
        z = T.add(ffn, z)
    return z


def predict(z, params):
    """Per-token MLP head with GELU between the two linear maps."""
    h = T.add(T.matmul(z, params["head.0"]), params["head.0_b"])
    h = T.gelu(h)
    return T.add(T.matmul(h, params["head.1"]), params["head.1_b"])
