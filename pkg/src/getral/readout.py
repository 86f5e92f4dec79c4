"""Attentive readout, side information, classifier and task loss.

The same attention form serves two granularities: word-level (claim mean
queries evidence nodes) and document-level (claim+speaker queries evidence
representations). Per head: p = tanh([key; query] W_c), score = p W_p,
weights = softmax over active keys, output = weighted key sum; heads
concatenate. Discarded graph nodes are excluded before scoring, so they
get exactly zero weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .params import ParamGroup
from .rng import RngState, stream


class ReadoutError(Exception):
    pass


@dataclass
class AttentionHead(ParamGroup):
    w_c: np.ndarray
    w_p: np.ndarray


@dataclass
class AttentionParams(ParamGroup):
    heads: list[AttentionHead]
    key_dim: int
    query_dim: int

    @classmethod
    def seeded(cls, key_dim: int, query_dim: int, n_heads: int,
               rng_state: RngState, purpose: str) -> "AttentionParams":
        """Hidden dim equals the key dim; weights uniform +-1/sqrt(fan_in)."""
        gen = stream(rng_state, purpose)
        bc = 1.0 / math.sqrt(key_dim + query_dim)
        bp = 1.0 / math.sqrt(key_dim)
        heads = [
            AttentionHead(
                w_c=gen.uniform(-bc, bc, size=(key_dim + query_dim, key_dim)),
                w_p=gen.uniform(-bp, bp, size=(key_dim, 1)),
            )
            for _ in range(n_heads)
        ]
        return cls(heads=heads, key_dim=key_dim, query_dim=query_dim)


@dataclass
class AttnResult:
    output: ad.Tensor
    weights: list[np.ndarray]


def claim_mean(h_c, active) -> ad.Tensor:
    """Mean of the active claim node rows."""
    idx = np.flatnonzero(np.asarray(active, dtype=bool))
    if idx.size == 0:
        raise ReadoutError("claim has no active nodes")
    return ad.row_mean(ad.gather_rows(h_c, idx))


def attn_readout(keys, active, query, params: AttentionParams) -> AttnResult:
    """Multi-head attentive pooling of the active key rows toward a query.

    ``weights`` holds one full-length vector per head with zeros at
    inactive positions (those rows never enter the softmax).
    """
    active = np.asarray(active, dtype=bool)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        raise ReadoutError("no active rows to attend over")
    if keys.shape[1] != params.key_dim or query.shape != (1, params.query_dim):
        raise ReadoutError(
            f"attention dims: keys {keys.shape} query {query.shape} vs "
            f"(key={params.key_dim}, query={params.query_dim})"
        )
    gathered = ad.gather_rows(keys, idx)
    tiled_q = ad.matmul(ad.constant(np.ones((idx.size, 1))), query)
    joined = ad.concat_cols(gathered, tiled_q)
    outputs = []
    weights = []
    for head in params.heads:
        proj = ad.tanh(ad.matmul(joined, head.w_c))
        scores = ad.matmul(proj, head.w_p)
        alpha = ad.softmax_last(ad.transpose(scores))
        outputs.append(ad.matmul(alpha, gathered))
        full = np.zeros(active.shape[0])
        full[idx] = alpha.values[0]
        weights.append(full)
    out = outputs[0] if len(outputs) == 1 else ad.concat_cols(*outputs)
    return AttnResult(output=out, weights=weights)


@dataclass
class SideInfo(ParamGroup):
    """Learned speaker/publisher embeddings; row 0 is the unknown row."""

    speaker_table: np.ndarray
    publisher_table: np.ndarray
    speaker_ids: dict[str, int] = field(default_factory=dict)
    publisher_ids: dict[str, int] = field(default_factory=dict)

    @classmethod
    def seeded(cls, speakers, publishers, dim: int,
               rng_state: RngState, purpose: str) -> "SideInfo":
        gen = stream(rng_state, purpose)
        bound = 1.0 / math.sqrt(dim)
        speaker_ids = {name: i + 1 for i, name in enumerate(speakers)}
        publisher_ids = {name: i + 1 for i, name in enumerate(publishers)}
        return cls(
            speaker_table=gen.uniform(-bound, bound, size=(len(speaker_ids) + 1, dim)),
            publisher_table=gen.uniform(-bound, bound, size=(len(publisher_ids) + 1, dim)),
            speaker_ids=speaker_ids,
            publisher_ids=publisher_ids,
        )

    @property
    def dim(self) -> int:
        return self.speaker_table.shape[1] if hasattr(self.speaker_table, "shape") else 0


def lookup_speaker(side: SideInfo, speaker):
    """(1,b) speaker row; missing/unseen ids hit the learned unknown row."""
    idx = side.speaker_ids.get(speaker, 0) if speaker is not None else 0
    return ad.gather_rows(side.speaker_table, [idx]), idx != 0


def lookup_publisher(side: SideInfo, publisher):
    idx = side.publisher_ids.get(publisher, 0) if publisher is not None else 0
    return ad.gather_rows(side.publisher_table, [idx]), idx != 0


def with_side(representation, side_row) -> ad.Tensor:
    """Concatenate a pooled representation with its side-information row."""
    return ad.concat_cols(representation, side_row)


def doc_attention(evidence_reps, query, params: AttentionParams) -> AttnResult:
    """Document-level attention over per-evidence representation rows."""
    if not evidence_reps:
        raise ReadoutError("no evidences")
    keys = evidence_reps[0] if len(evidence_reps) == 1 else ad.concat_rows(*evidence_reps)
    return attn_readout(keys, np.ones(len(evidence_reps), dtype=bool), query, params)


@dataclass
class ClassifierParams(ParamGroup):
    w_f: np.ndarray
    b_f: np.ndarray

    @classmethod
    def zeros(cls, in_dim: int) -> "ClassifierParams":
        """Zero init: a fresh model predicts exactly [0.5, 0.5]."""
        return cls(w_f=np.zeros((in_dim, 2)), b_f=np.zeros((1, 2)))


def classify(h, params: ClassifierParams) -> ad.Tensor:
    """Two-way softmax over one affine layer; class 1 = fake, class 0 = true."""
    return ad.softmax_last(ad.add(ad.matmul(h, params.w_f), params.b_f))


_PICK_FAKE = np.array([[0.0], [1.0]])


def cross_entropy(y_hat, label) -> ad.Tensor:
    """Binary cross entropy on the fake-class probability, clamp-guarded."""
    if label not in (0, 1):
        raise ReadoutError(f"label must be 0 or 1, got {label!r}")
    p_fake = ad.clamp(ad.matmul(y_hat, ad.constant(_PICK_FAKE)), ad.PROB_LO, ad.PROB_HI)
    log_p = ad.log(p_fake)
    log_not_p = ad.log(ad.sub(ad.constant([[1.0]]), p_fake))
    return ad.sub(
        ad.constant([[0.0]]),
        ad.add(ad.scalar_mul(log_p, float(label)), ad.scalar_mul(log_not_p, 1.0 - float(label))),
    )
