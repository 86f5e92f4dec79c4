"""Mini-batch training with Adam, early stopping, and evaluation.

Each batch records one tape: every instance's forward, the per-instance
task losses, the adversarially augmented views, and the contrastive term
all live on it, so one backward yields every parameter gradient. Weight
decay is decoupled (applied straight to the weights, not through the
gradients). Early stopping watches validation F1-macro.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .contrastive import adversarial_view, supcon_loss, total_loss
from .metrics import MetricsReport, compute_metrics
from .model import InstanceForward, ModelParams, forward_instance, make_bank
from .refinement import KernelBank
from .rng import RngState, stream


class TrainingError(Exception):
    pass


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    ce: float
    cl: float
    valid_f1_macro: float
    valid_f1_micro: float


@dataclass
class TrainResult:
    best_params: ModelParams
    final_params: ModelParams
    history: list[EpochStats]
    best_f1_macro: float
    best_epoch: int


class Adam:
    """Adam with decoupled weight decay; one slot pair per parameter name."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict, skip=frozenset()):
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, array in params.named():
            if name in skip:
                continue
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(array))
            v = self._v.setdefault(name, np.zeros_like(array))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            array -= self.lr * (update + self.weight_decay * array)


def stratified_split(instances, fraction, gen):
    """Seeded per-label split; outputs keep the incoming order."""
    by_label: dict[int, list[int]] = {}
    for i, inst in enumerate(instances):
        by_label.setdefault(inst.label, []).append(i)
    valid_idx = set()
    for indices in by_label.values():
        if len(indices) < 2:
            continue
        shuffled = [indices[int(j)] for j in gen.permutation(len(indices))]
        n_valid = max(1, round(fraction * len(indices)))
        valid_idx.update(shuffled[:n_valid])
    train = [inst for i, inst in enumerate(instances) if i not in valid_idx]
    valid = [inst for i, inst in enumerate(instances) if i in valid_idx]
    if not train or not valid:
        raise TrainingError("split produced an empty side; dataset too small")
    return train, valid


def k_folds(instances, k, gen):
    """Seeded stratified k-fold partition; yields (train, valid) pairs."""
    if k < 2 or k > len(instances):
        raise TrainingError(f"fold count must be in [2, {len(instances)}], got {k}")
    by_label: dict[int, list[int]] = {}
    for i, inst in enumerate(instances):
        by_label.setdefault(inst.label, []).append(i)
    fold_of = {}
    for indices in by_label.values():
        shuffled = [indices[int(j)] for j in gen.permutation(len(indices))]
        for pos, idx in enumerate(shuffled):
            fold_of[idx] = pos % k
    pairs = []
    for fold in range(k):
        train = [inst for i, inst in enumerate(instances) if fold_of[i] != fold]
        valid = [inst for i, inst in enumerate(instances) if fold_of[i] == fold]
        if not train or not valid:
            raise TrainingError(f"fold {fold} is empty; use fewer folds")
        pairs.append((train, valid))
    return pairs


def _watch_params(tape, params):
    return params.map(tape.watch)


def _mean_scalar(tensors):
    if len(tensors) == 1:
        return tensors[0]
    return ad.row_mean(ad.concat_rows(*tensors))


def batch_gradients(params: ModelParams, batch, cfg: TrainConfig, bank: KernelBank):
    """Forward a batch, assemble the joint loss, and backpropagate.

    Returns (loss, ce, cl, grads-by-name, forwards, views). With a zero
    contrastive weight no views are built and the loss is exactly the
    batch-mean task loss.
    """
    with ad.Tape() as tape:
        watched = _watch_params(tape, params)
        forwards = [
            forward_instance(watched, inst, bank, cfg.crossed_contextualization)
            for inst in batch
        ]
        ce_mean = _mean_scalar([f.ce for f in forwards])
        views = []
        if cfg.contrastive_weight > 0.0:
            for f in forwards:
                views.append(adversarial_view(
                    tape, f.claim_rep, f.evidence_reps, f.doc_alpha[0],
                    f.ce, watched.doc_attention, cfg.epsilon,
                ))
            cl = supcon_loss(
                [f.joint for f in forwards],
                [f.instance.label for f in forwards],
                cfg.tau,
                views=[v.representation for v in views],
                standard_denominator=cfg.supcon_standard_denominator,
            )
            loss = total_loss(ce_mean, cl, cfg.contrastive_weight)
            cl_value = float(cl.values[0, 0])
        else:
            loss = ce_mean
            cl_value = 0.0
    grad_map = ad.backward(tape, loss)
    grads = {name: grad_map.of(tensor) for name, tensor in watched.named()}
    return loss, float(ce_mean.values[0, 0]), cl_value, grads, forwards, views


def evaluate(params: ModelParams, dataset, bank: KernelBank,
             crossed: bool = False) -> MetricsReport:
    """Pure metric pass; predictions are argmax with ties going to class 0."""
    if not dataset:
        raise TrainingError("cannot evaluate an empty dataset")
    frozen = params.map(ad.constant)
    predictions = []
    for inst in dataset:
        predictions.append(forward_instance(frozen, inst, bank, crossed).prediction)
    return compute_metrics([inst.label for inst in dataset], predictions)


def predict(params: ModelParams, dataset, bank: KernelBank, crossed: bool = False):
    """Per-instance probabilities and document attention weights."""
    frozen = params.map(ad.constant)
    out = []
    for inst in dataset:
        fwd = forward_instance(frozen, inst, bank, crossed)
        out.append({
            "id": inst.instance_id,
            "y_hat": [float(p) for p in fwd.y_hat.values[0]],
            "doc_alpha": [[float(w) for w in head] for head in fwd.doc_alpha],
        })
    return out


def train(params: ModelParams, train_set, valid_set, cfg: TrainConfig,
          bank: KernelBank | None = None) -> TrainResult:
    """Seeded epoch loop with early stopping on validation F1-macro."""
    if not train_set or not valid_set:
        raise TrainingError("train and validation sets must be non-empty")
    bank = bank or make_bank(cfg)
    shuffler = stream(RngState(cfg.seed), "epoch-shuffle")
    optimizer = Adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay)
    skip = frozenset() if cfg.train_embeddings else frozenset({"embedding"})
    history: list[EpochStats] = []
    best_f1 = -1.0
    best_epoch = -1
    best_params = params.copy()
    non_improving = 0
    for epoch in range(cfg.max_epochs):
        order = shuffler.permutation(len(train_set))
        total_ce = 0.0
        total_cl = 0.0
        total_loss_value = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[int(i)] for i in order[start:start + cfg.batch_size]]
            loss, ce, cl, grads, _, _ = batch_gradients(params, batch, cfg, bank)
            loss_value = float(loss.values[0, 0])
            if not np.isfinite(loss_value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            optimizer.step(params, grads, skip=skip)
            total_ce += ce * len(batch)
            total_cl += cl * len(batch)
            total_loss_value += loss_value * len(batch)
        n = len(train_set)
        report = evaluate(params, valid_set, bank, cfg.crossed_contextualization)
        history.append(EpochStats(
            epoch=epoch,
            train_loss=total_loss_value / n,
            ce=total_ce / n,
            cl=total_cl / n,
            valid_f1_macro=report.f1_macro,
            valid_f1_micro=report.f1_micro,
        ))
        if report.f1_macro > best_f1:
            best_f1 = report.f1_macro
            best_epoch = epoch
            best_params = params.copy()
            non_improving = 0
        else:
            non_improving += 1
            if non_improving >= cfg.patience:
                break
    return TrainResult(
        best_params=best_params,
        final_params=params,
        history=history,
        best_f1_macro=best_f1,
        best_epoch=best_epoch,
    )


def history_to_csv(history) -> str:
    """Stable textual form of the epoch history (used for reproducibility checks)."""
    lines = ["epoch,train_loss,ce,cl,valid_f1_macro,valid_f1_micro"]
    for row in history:
        lines.append(",".join([
            str(row.epoch),
            repr(row.train_loss),
            repr(row.ce),
            repr(row.cl),
            repr(row.valid_f1_macro),
            repr(row.valid_f1_micro),
        ]))
    return "\n".join(lines) + "\n"
