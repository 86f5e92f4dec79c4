"""Evidence graph structure refinement.

Each refinement pass scores every evidence node's redundancy from two
views: a linear projection of the node's own features, and its relevance
to the claim measured by Gaussian-kernel pooling over a cosine
translation matrix. Both raw score channels are contextualized by small
one-dimensional gated graph scorers, fused with a coefficient, and the
top scoring fraction of active nodes is discarded by zeroing their
adjacency rows/columns. A score-scaled propagation step follows, which is
the path that carries gradient back into the scorer weights (the discard
itself is a hard mask).

Claims are short and never refined; only evidence graphs pass through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .ggnn import GgnnParams, ggnn_scaled_step, ggnn_step
from .params import ParamGroup
from .rng import RngState, stream


class RefinementError(Exception):
    pass


@dataclass(frozen=True)
class KernelBank:
    """Gaussian kernel means and widths (fixed, non-trainable)."""

    mus: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        if self.mus.shape != self.sigmas.shape or self.mus.ndim != 1:
            raise RefinementError("kernel means and widths must be equal-length vectors")
        if np.any(self.sigmas <= 0):
            raise RefinementError("kernel widths must be positive")

    @property
    def size(self) -> int:
        return self.mus.shape[0]


def default_bank(k: int) -> KernelBank:
    """One exact-match kernel (mu=1, sigma=1e-3) first, then k-1 kernels of
    width 0.1 with means at the centers of k-1 equal bins over [-1, 1]."""
    if k < 2:
        raise RefinementError(f"kernel count must be >= 2, got {k}")
    mus = [1.0]
    sigmas = [1e-3]
    for t in range(1, k):
        mus.append(-1.0 + (2.0 * t - 1.0) / (k - 1))
        sigmas.append(0.1)
    return KernelBank(np.array(mus), np.array(sigmas))


@dataclass
class RefinementParams(ParamGroup):
    w_se: np.ndarray
    w_sc: np.ndarray
    scorer_se: GgnnParams
    scorer_sc: GgnnParams
    beta: float
    discard_rate: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise RefinementError(f"fusion coefficient must be in [0,1], got {self.beta}")
        if not 0.0 <= self.discard_rate < 1.0:
            raise RefinementError(f"discard rate must be in [0,1), got {self.discard_rate}")

    @classmethod
    def seeded(cls, dim: int, kernels: int, beta: float, discard_rate: float,
               rng_state: RngState, purpose: str) -> "RefinementParams":
        gen = stream(rng_state, purpose)
        bound_se = 1.0 / math.sqrt(dim)
        bound_sc = 1.0 / math.sqrt(kernels)
        return cls(
            w_se=gen.uniform(-bound_se, bound_se, size=(dim, 1)),
            w_sc=gen.uniform(-bound_sc, bound_sc, size=(kernels, 1)),
            scorer_se=GgnnParams.init(1, gen),
            scorer_sc=GgnnParams.init(1, gen),
            beta=beta,
            discard_rate=discard_rate,
        )


@dataclass
class RefinementTrace:
    translation: ad.Tensor
    kernel_feats: ad.Tensor
    raw_self: ad.Tensor
    raw_claim: ad.Tensor
    ctx_self: ad.Tensor
    ctx_claim: ad.Tensor
    fused: ad.Tensor
    discarded: np.ndarray
    adjacency_after: np.ndarray


@dataclass
class EvidenceState:
    """One evidence graph mid-pipeline: masked adjacency, liveness, features."""

    norm_adjacency: np.ndarray
    active: np.ndarray
    features: ad.Tensor


def self_score(h_e, w_se) -> ad.Tensor:
    """Node-self redundancy: linear projection of evidence features to one column."""
    return ad.matmul(h_e, w_se)


def translation_matrix(h_e, h_c) -> ad.Tensor:
    """Cosine similarity of every evidence node row against every claim node row."""
    return ad.cosine_rows(h_e, h_c)


def kernel_features(m, bank: KernelBank) -> ad.Tensor:
    """Per-node kernel responses: K[i,t] = log sum_j gaussian_t(M[i,j]).

    The inner sum is floored at 1e-12 before the log (engine log-domain
    convention), bounding the narrow exact-match kernel's no-match
    response instead of letting it run to -(M-1)^2/2e-6 scale, which
    would saturate every downstream scorer gate.
    """
    if m.shape[1] == 0:
        raise RefinementError("empty claim")
    return ad.kernel_pool(m, bank.mus, bank.sigmas)


def claim_score(k, w_sc) -> ad.Tensor:
    """Claim-relevance redundancy: linear projection of kernel features."""
    return ad.matmul(k, w_sc)


def fuse_scores(norm_adjacency, raw_self, raw_claim, scorer_se: GgnnParams,
                scorer_sc: GgnnParams, beta: float, crossed: bool = False):
    """Contextualize both score channels with their own 1-dim gated scorer
    over the graph, then mix: fused = (1-beta) ctx_self + beta ctx_claim.

    ``crossed`` feeds each scorer the opposite raw channel (the literal
    printed form); default keeps channels straight.
    """
    in_self, in_claim = (raw_claim, raw_self) if crossed else (raw_self, raw_claim)
    ctx_self = ggnn_step(norm_adjacency, in_self, scorer_se).output
    ctx_claim = ggnn_step(norm_adjacency, in_claim, scorer_sc).output
    fused = ad.add(ad.scalar_mul(ctx_self, 1.0 - beta), ad.scalar_mul(ctx_claim, beta))
    return ctx_self, ctx_claim, fused


def discard_topk(norm_adjacency, scores, active, rate):
    """Drop the top-scoring floor(rate * active_count) active nodes.

    Never empties the graph: the discard count is capped one below the
    active count. Ties break toward the smaller node index. Returns the
    masked adjacency, the shrunk mask, and the discarded indices. Hard,
    non-differentiable mask.
    """
    active = np.asarray(active, dtype=bool)
    n_active = int(active.sum())
    if n_active == 0:
        raise RefinementError("all nodes already inactive")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(scores)):
        raise RefinementError("redundancy scores must be finite")
    k = math.floor(rate * n_active)
    if k >= n_active:
        k = n_active - 1
    candidates = np.flatnonzero(active)
    order = np.lexsort((candidates, -scores[candidates]))
    idx = np.sort(candidates[order[:k]])
    masked = np.array(norm_adjacency, copy=True)
    masked[idx, :] = 0.0
    masked[:, idx] = 0.0
    new_active = active.copy()
    new_active[idx] = False
    return masked, new_active, idx


def srm_layer(
    claim_features,
    state: EvidenceState,
    params: RefinementParams,
    encoder: GgnnParams,
    bank: KernelBank,
    crossed: bool = False,
    fixed_discard: np.ndarray | None = None,
):
    """One refine-and-propagate pass over an evidence graph.

    Scores, discards, then runs the score-scaled propagation step on the
    masked adjacency. ``fixed_discard`` bypasses the score-driven
    selection with a preset index set (used to hold the mask fixed while
    finite-differencing the layer).
    """
    raw_self = self_score(state.features, params.w_se)
    translation = translation_matrix(state.features, claim_features)
    feats = kernel_features(translation, bank)
    raw_claim = claim_score(feats, params.w_sc)
    ctx_self, ctx_claim, fused = fuse_scores(
        state.norm_adjacency, raw_self, raw_claim,
        params.scorer_se, params.scorer_sc, params.beta, crossed=crossed,
    )
    if fixed_discard is None:
        masked, new_active, idx = discard_topk(
            state.norm_adjacency, fused.values, state.active, params.discard_rate
        )
    else:
        idx = np.asarray(fixed_discard, dtype=np.int64)
        masked = np.array(state.norm_adjacency, copy=True)
        masked[idx, :] = 0.0
        masked[:, idx] = 0.0
        new_active = state.active.copy()
        new_active[idx] = False
    step = ggnn_scaled_step(masked, state.features, fused, encoder)
    trace = RefinementTrace(
        translation=translation,
        kernel_feats=feats,
        raw_self=raw_self,
        raw_claim=raw_claim,
        ctx_self=ctx_self,
        ctx_claim=ctx_claim,
        fused=fused,
        discarded=idx,
        adjacency_after=masked,
    )
    return EvidenceState(masked, new_active, step.output), trace
