"""Loss, ADADELTA, the training loop with early stopping, and evaluation metrics."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .data import Instance, check_dims
from .knowledge import KbIndex, kb_vector_for_question
from .layout import AUXILIARIES
from .model import RunConfig, VqaModel, build_model, majority_answer
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

RHO = 0.95
EPS = 1e-6


def cross_entropy(dist: Tensor, target_index: int) -> Tensor:
    """-log(max(dist[target], 1e-12))."""
    if not 0 <= target_index < dist.size:
        raise ValueError(f"target {target_index} outside distribution of size {dist.size}")
    return T.neg_log_prob(dist, target_index, 1e-12)


@dataclass
class AdadeltaState:
    rho: float = RHO
    eps: float = EPS
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: dict[str, np.ndarray] = field(default_factory=dict)


def adadelta_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
                  state: AdadeltaState) -> None:
    """One ADADELTA update, in place, for every parameter that has a gradient.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    dx     = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}; step rejected")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {params[name].shape}")
    rho, eps = state.rho, state.eps
    for name, g in grads.items():
        p = params[name]
        eg = state.sq_grad.setdefault(name, np.zeros_like(p.data))
        ed = state.sq_delta.setdefault(name, np.zeros_like(p.data))
        eg *= rho
        eg += (1.0 - rho) * g * g
        dx = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * dx * dx
        p.data += dx


class EarlyStopping:
    """Stop once validation accuracy fails to improve for ``patience`` epochs in a row."""

    def __init__(self, patience: int = 1):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_acc: float) -> bool:
        if val_acc > self.best:
            self.best, self.best_epoch, self.bad_epochs = val_acc, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


# -- metrics ------------------------------------------------------------------

def question_category(question: Sequence[str]) -> str:
    words = [w.lower() for w in question]
    if words[:2] == ["how", "many"]:
        return "number"
    if words and words[0] in AUXILIARIES:
        return "yes/no"
    return "other"


def consensus_score(prediction: str, answers: Sequence[str]) -> float:
    return min(sum(a == prediction for a in answers) / 3.0, 1.0)


def exact_score(prediction: str, answers: Sequence[str]) -> float:
    return float(prediction == majority_answer(answers))


def kb_vectors(instances: Sequence[Instance], index: KbIndex | None, k: int) -> dict[str, np.ndarray]:
    if index is None:
        return {}
    return {inst.id: kb_vector_for_question(inst.question, index, k) for inst in instances}


def evaluate(model: VqaModel, instances: Sequence[Instance], metric: str = "exact",
             kb: Mapping[str, np.ndarray] | None = None) -> dict[str, float]:
    """Overall and per-category accuracy (categories without questions are omitted)."""
    score = {"exact": exact_score, "consensus": consensus_score}[metric]
    kb = kb or {}
    totals: dict[str, list[float]] = {"yes/no": [], "number": [], "other": []}
    for inst in instances:
        pred = model.predict(inst, kb.get(inst.id))
        totals[question_category(inst.question)].append(score(pred, inst.answers))
    out = {"overall": float(np.mean([s for v in totals.values() for s in v])) if instances else 0.0}
    out.update({k: float(np.mean(v)) for k, v in totals.items() if v})
    return out


# -- training -----------------------------------------------------------------

def batch_loss(model: VqaModel, batch: Sequence[Instance], kb: Mapping[str, np.ndarray]) -> Tensor:
    total = None
    for inst in batch:
        dist = model.forward(inst, kb.get(inst.id))
        loss = cross_entropy(dist, model.answers.target(inst.answers))
        total = loss if total is None else T.add(total, loss)
    return T.scale(total, 1.0 / len(batch))


@dataclass
class TrainResult:
    model: VqaModel
    history: list[dict]
    best_epoch: int


def train_loop(config: RunConfig, train: Sequence[Instance], val: Sequence[Instance],
               kb_index: KbIndex | None = None, pretrained: dict | None = None,
               model: VqaModel | None = None, metrics_path: str | None = None,
               on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Mini-batch ADADELTA with early stopping; returns the best-validation model."""
    if not train or not val:
        raise ValueError("training and validation sets must be nonempty")
    if model is None:
        model = build_model(config, train, pretrained)
    check_dims(train, model.dims)
    check_dims(val, model.dims)
    model.register_words(train)
    for inst in list(train) + list(val):
        model.layout_for(inst)
    need_kb = model.variant == "nmn+kb"
    kb_train = kb_vectors(train, kb_index, config.kb_topk) if need_kb else {}
    kb_val = kb_vectors(val, kb_index, config.kb_topk) if need_kb else {}

    params = model.params
    rng = params.rng
    state = AdadeltaState()
    stopper = EarlyStopping(config.patience)
    best = {n: t.data.copy() for n, t in params.items()}
    history = []
    metrics_fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            order = rng.permutation(len(train))
            losses = []
            for lo in range(0, len(train), config.batch):
                batch = [train[i] for i in order[lo:lo + config.batch]]
                with Tape() as tape:
                    loss = batch_loss(model, batch, kb_train)
                backward_params = list(params.values())
                T.backward(loss, tape, backward_params)
                adadelta_step(params, {n: t.grad for n, t in params.items()}, state)
                params.snap()
                losses.append(loss.item() * len(batch))
            row = {
                "epoch": epoch,
                "train_loss": float(sum(losses) / len(train)),
                "train_acc": evaluate(model, train, "exact", kb_train)["overall"],
                "val_acc": evaluate(model, val, config.metric, kb_val)["overall"],
            }
            row["seconds"] = time.perf_counter() - start
            history.append(row)
            log.info("epoch %d loss %.4f train %.3f val %.3f", epoch, row["train_loss"],
                     row["train_acc"], row["val_acc"])
            if metrics_fh:
                metrics_fh.write(json.dumps(row) + "\n")
                metrics_fh.flush()
            if on_epoch:
                on_epoch(row)
            stop = stopper.update(epoch, row["val_acc"])
            if stopper.best_epoch == epoch:
                best = {n: t.data.copy() for n, t in params.items()}
            if stop:
                break
    finally:
        if metrics_fh:
            metrics_fh.close()
    for n, t in params.items():
        t.data = best[n]
        t.grad = None
    return TrainResult(model, history, stopper.best_epoch)
