#!/usr/bin/env python3
"""Tour of the tensor core: forward ops, reverse-mode gradients, and a
finite-difference cross-check.

Run: python demos/01_autograd_basics.py
"""
import numpy as np

import foldcast.tensor as T
from foldcast.tensor import Tensor


def main():
    rng = np.random.default_rng(0)

    print("-- forward ops --")
    x = Tensor([[1.0, 2.0], [3.0, 4.0]])
    w = Tensor(rng.standard_normal((2, 3)))
    y = T.gelu(T.matmul(x, w))
    print("matmul+gelu:", np.round(y.data, 4).tolist())

    probs = T.softmax_lastdim(Tensor([[1000.0, 0.0], [0.0, 0.0]]))
    print("softmax rows sum to", probs.data.sum(axis=-1), "(stable at 1000-unit scores)")

    normed = T.layer_norm(
        Tensor(rng.standard_normal((2, 8)) * 30 + 5), Tensor(np.ones(8)), Tensor(np.zeros(8))
    )
    print("layer_norm per-slice mean:", np.abs(normed.data.mean(-1)).max())

    print()
    print("-- reverse mode --")
    a = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    b = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    proj = rng.standard_normal((4, 3))
    loss = T.tsum(T.mul(T.softmax_lastdim(T.matmul(a, b)), proj))
    loss.backward()
    print("loss:", loss.item())
    print("grad norms: a", np.linalg.norm(a.grad), " b", np.linalg.norm(b.grad))

    print()
    print("-- finite-difference cross-check on `a` --")
    eps = 1e-5

    def f(av):
        scores = av @ b.data
        e = np.exp(scores - scores.max(-1, keepdims=True))
        return float((e / e.sum(-1, keepdims=True) * proj).sum())

    fd = np.zeros_like(a.data)
    flat, out = a.data.reshape(-1), fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(a.data)
        flat[i] = orig - eps
        lo = f(a.data)
        flat[i] = orig
        out[i] = (hi - lo) / (2 * eps)
    rel = np.max(np.abs(fd - a.grad) / np.maximum(np.abs(fd), 1e-6))
    print(f"max relative error vs central differences: {rel:.2e}")

    print()
    print("-- Adam on a quadratic --")
    p = Tensor(np.array([2.0]), requires_grad=True)
    state = T.AdamState()
    for step in range(1, 41):
        T.adam_step({"p": p}, {"p": 2.0 * p.data}, state, lr=0.1)
        if step % 8 == 0:
            print(f"step {step:2d}: p = {p.data[0]:+.5f}  f(p) = {p.data[0]**2:.6f}")


if __name__ == "__main__":
    main()
