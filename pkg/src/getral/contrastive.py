"""Supervised contrastive loss with adversarially augmented views.

A view perturbs the most-attended evidence representation of an instance
along its own task-loss gradient (unit-normalized, scaled to epsilon) and
re-runs document attention with the same weights. Views enter the
positive/negative pools labeled like their anchors but are never anchors
themselves. The loss follows the written per-anchor form with the
denominator over negatives only (so it can be negative); the conventional
all-members denominator is available behind a switch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .readout import AttentionParams, doc_attention

GRAD_NORM_EPS = 1e-12


@dataclass
class ViewTrace:
    representation: ad.Tensor
    evidence_index: int
    applied: bool
    perturbation_norm: float
    direction: np.ndarray | None


def adversarial_view(
    tape,
    claim_rep,
    evidence_reps,
    doc_alpha_head0,
    instance_loss,
    doc_params: AttentionParams,
    epsilon: float,
    fixed_index: int | None = None,
    fixed_direction: np.ndarray | None = None,
) -> ViewTrace:
    """Build one augmented view of an instance already on the tape.

    Picks the evidence with the highest head-0 document attention weight
    (ties to the lower index), takes the gradient of this instance's own
    task loss at that intermediate representation, and shifts it by
    epsilon along the normalized gradient. The direction is a constant:
    no gradient flows through the gradient itself. A vanishing gradient
    (norm < 1e-12) skips augmentation and returns the original
    representation rebuilt as the view.

    ``fixed_index``/``fixed_direction`` replay a previously captured
    selection so the view map stays differentiable under finite
    differencing.
    """
    if not evidence_reps:
        raise ValueError("instance has no evidences")
    if fixed_index is not None:
        k = int(fixed_index)
    else:
        k = int(np.argmax(doc_alpha_head0))
    if fixed_direction is not None:
        direction = np.asarray(fixed_direction, dtype=np.float64)
    else:
        grads = ad.backward(tape, instance_loss)
        g = grads.get(evidence_reps[k].node)
        norm = 0.0 if g is None else float(np.sqrt((g * g).sum()))
        if norm < GRAD_NORM_EPS:
            rebuilt = ad.concat_cols(
                claim_rep,
                doc_attention(evidence_reps, claim_rep, doc_params).output,
            )
            return ViewTrace(rebuilt, k, False, 0.0, None)
        direction = epsilon * g / norm
    perturbed = ad.add(evidence_reps[k], ad.constant(direction))
    reps = list(evidence_reps)
    reps[k] = perturbed
    attended = doc_attention(reps, claim_rep, doc_params)
    view = ad.concat_cols(claim_rep, attended.output)
    shift = float(np.sqrt(((perturbed.values - evidence_reps[k].values) ** 2).sum()))
    return ViewTrace(view, k, True, shift, direction)


def supcon_loss(anchors, labels, tau, views=None, standard_denominator=False) -> ad.Tensor:
    """Batch supervised contrastive loss over anchors and optional views.

    Per anchor h: positives are same-label members of the pool
    (originals plus views) excluding h itself; negatives are
    different-label members. Anchors with an empty side contribute
    nothing; the batch loss averages the contributing anchors.
    Degenerate batches (fewer than two pool members, or no anchor with
    both sides) yield exactly 0.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    anchors = list(anchors)
    views = list(views) if views else []
    if len(anchors) != len(labels):
        raise ValueError("one label per anchor required")
    if views and len(views) != len(anchors):
        raise ValueError("views must pair 1:1 with anchors")
    members = anchors + views
    member_labels = list(labels) + (list(labels) if views else [])
    if len(members) < 2:
        return ad.constant([[0.0]])
    anchor_stack = anchors[0] if len(anchors) == 1 else ad.concat_rows(*anchors)
    pool_stack = members[0] if len(members) == 1 else ad.concat_rows(*members)
    sims = ad.cosine_rows(anchor_stack, pool_stack)
    inv_tau = 1.0 / tau
    per_anchor = []
    for i, label in enumerate(labels):
        pos = [j for j, lj in enumerate(member_labels) if lj == label and j != i]
        neg = [j for j, lj in enumerate(member_labels) if lj != label]
        if not pos or not neg:
            continue
        row = ad.transpose(ad.gather_rows(sims, [i]))
        pos_mean = ad.row_mean(ad.gather_rows(row, pos))
        denom_idx = sorted(pos + neg) if standard_denominator else neg
        lse = ad.logsumexp_all(ad.scalar_mul(ad.gather_rows(row, denom_idx), inv_tau))
        per_anchor.append(ad.sub(lse, ad.scalar_mul(pos_mean, inv_tau)))
    if not per_anchor:
        return ad.constant([[0.0]])
    stacked = per_anchor[0] if len(per_anchor) == 1 else ad.concat_rows(*per_anchor)
    return ad.row_mean(stacked)


def total_loss(ce, cl, weight) -> ad.Tensor:
    """Joint objective: task loss plus weighted contrastive term."""
    if weight < 0:
        raise ValueError(f"contrastive weight must be >= 0, got {weight}")
    return ad.add(ce, ad.scalar_mul(cl, weight))
