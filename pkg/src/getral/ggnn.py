"""Gated graph neighborhood propagation.

One step mixes each node's features with its aggregated neighborhood
through GRU-style update/reset gates:

    a = A_norm (H W_a)
    z = sigmoid(a W_z + H U_z + b_z)
    r = sigmoid(a W_r + H U_r + b_r)
    cand = tanh(a W_h + (r . H) U_h + b_h)
    out  = cand . z + H . (1 - z)

The scaled variant damps each neighbor j's message by (1 - sigmoid(s_j)),
which is how gradient reaches the redundancy scores after a discard.
Matrices are applied on the right (row-vector convention) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .params import ParamGroup
from .rng import RngState, stream


@dataclass
class GgnnParams(ParamGroup):
    w_a: np.ndarray
    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray

    @classmethod
    def init(cls, dim: int, gen: np.random.Generator) -> "GgnnParams":
        """Weights uniform in [-1/sqrt(d), 1/sqrt(d)], biases zero."""
        bound = 1.0 / np.sqrt(dim)

        def w():
            return gen.uniform(-bound, bound, size=(dim, dim))

        def b():
            return np.zeros((1, dim))

        return cls(w(), w(), w(), b(), w(), w(), b(), w(), w(), b())

    @classmethod
    def zeros(cls, dim: int) -> "GgnnParams":
        z = np.zeros((dim, dim))
        b = np.zeros((1, dim))
        return cls(z, z.copy(), z.copy(), b, z.copy(), z.copy(), b.copy(),
                   z.copy(), z.copy(), b.copy())

    @classmethod
    def seeded(cls, dim: int, rng_state: RngState, purpose: str) -> "GgnnParams":
        return cls.init(dim, stream(rng_state, purpose))


@dataclass
class GgnnTrace:
    aggregated: ad.Tensor
    update_gate: ad.Tensor
    reset_gate: ad.Tensor
    candidate: ad.Tensor
    output: ad.Tensor


def _gated_mix(agg, h, p):
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(agg, p.w_z), ad.matmul(h, p.u_z)), p.b_z))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(agg, p.w_r), ad.matmul(h, p.u_r)), p.b_r))
    cand = ad.tanh(
        ad.add(ad.add(ad.matmul(agg, p.w_h), ad.matmul(ad.mul(r, h), p.u_h)), p.b_h)
    )
    out = ad.add(ad.mul(cand, z), ad.sub(h, ad.mul(h, z)))
    return GgnnTrace(agg, z, r, cand, out)


def ggnn_step(norm_adjacency, h, p: GgnnParams) -> GgnnTrace:
    """One propagation step over the normalized adjacency."""
    a_norm = ad._wrap(norm_adjacency)
    n = h.shape[0]
    if a_norm.shape != (n, n):
        raise ad.ShapeError(
            f"ggnn_step: adjacency {a_norm.shape} does not match {n} feature rows"
        )
    agg = ad.matmul(a_norm, ad.matmul(h, p.w_a))
    return _gated_mix(agg, h, p)


def ggnn_scaled_step(norm_adjacency, h, scores, p: GgnnParams) -> GgnnTrace:
    """Propagation with neighbor messages damped by (1 - sigmoid(score_j))."""
    a_norm = ad._wrap(norm_adjacency)
    n = h.shape[0]
    if a_norm.shape != (n, n):
        raise ad.ShapeError(
            f"ggnn_scaled_step: adjacency {a_norm.shape} does not match {n} feature rows"
        )
    if scores.shape != (n, 1):
        raise ad.ShapeError(
            f"ggnn_scaled_step: scores must be ({n}, 1), got {scores.shape}"
        )
    damp = ad.sub(ad.constant(np.ones((n, 1))), ad.sigmoid(scores))
    agg = ad.matmul(a_norm, ad.mul(ad.matmul(h, p.w_a), damp))
    return _gated_mix(agg, h, p)
