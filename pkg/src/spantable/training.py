"""Masked binary cross-entropy objective, Adam, and the training loop.

The loss sums BCE over spotting-designator cells only; everything outside
the validity mask contributes exactly zero loss and zero gradient.  Batch
losses average over sentences so the learning rate does not depend on batch
size.  The schedule is linear warmup followed by linear decay, and the whole
loop is deterministic for a fixed seed.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ExDocument, task_kind
from .metrics import evaluate_task, primary_metric
from .model import Model, trainable_parameters
from .tables import TargetTensor, build_target_tensor

log = logging.getLogger(__name__)

BCE_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    # desk-scale default; pretrained-backbone setups use 2e-5
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 200
    warmup_rate: float = 0.06
    schedule: bool = True
    seed: int = 0
    threshold: float = 0.5
    stop_at_f1: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.warmup_rate < 1.0:
            raise ValueError(f"warmup_rate must lie in [0, 1), got {self.warmup_rate}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")


def bce(y: float, y_hat: float) -> float:
    """Binary cross-entropy on a single cell; y_hat clamped away from {0, 1}."""
    y_hat = min(max(y_hat, BCE_EPS), 1.0 - BCE_EPS)
    return -(y * math.log(y_hat) + (1.0 - y) * math.log(1.0 - y_hat))


def masked_loss(scores: Tensor, target: TargetTensor) -> Tensor:
    """Sum of BCE over valid cells of the score tensor (graph-attached)."""
    if scores.value.shape != target.values.shape:
        raise ad.ShapeError(
            f"scores {scores.value.shape} vs targets {target.values.shape}"
        )
    s = ad.clip(scores, BCE_EPS, 1.0 - BCE_EPS)
    y = target.values
    pos = ad.mul(ad.log(s), y * target.valid)
    neg = ad.mul(ad.log(ad.add(ad.scale(s, -1.0), 1.0)), (1.0 - y) * target.valid)
    return ad.scale(ad.reduce_sum(ad.add(pos, neg)), -1.0)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self, lr_factor: float = 1.0) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * lr_factor
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p.value -= lr_t * m_hat / (np.sqrt(v_hat) + self.eps)


def lr_factor(step: int, total_steps: int, warmup_rate: float, schedule: bool) -> float:
    """Linear warmup to 1.0, then linear decay to 0 at the final step."""
    if not schedule or total_steps <= 0:
        return 1.0
    warmup_steps = int(round(warmup_rate * total_steps))
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    remaining = total_steps - warmup_steps
    if remaining <= 0:
        return 1.0
    return max(0.0, (total_steps - step) / remaining)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    f1: float


@dataclass
class TrainResult:
    trace: list[EpochStats] = field(default_factory=list)
    metric_name: str = ""

    @property
    def final_f1(self) -> float:
        return self.trace[-1].f1 if self.trace else 0.0


def write_trace(path, trace: list[EpochStats]) -> None:
    lines = "".join(f"{t.epoch},{t.mean_loss:.8f},{t.f1:.6f}\n" for t in trace)
    ad.atomic_write_text(path, "epoch,mean_loss,f1\n" + lines)


def _epoch_f1(model: Model, docs, kind: str, threshold: float) -> float:
    preds = [model.predict(d.tokens, threshold) for d in docs]
    reports = evaluate_task(kind, preds, [d.gold for d in docs], [d.tokens for d in docs])
    return reports[primary_metric(kind)].f1


def train(model: Model, docs: list[ExDocument], config: TrainConfig,
          trace_path=None) -> TrainResult:
    """Run the training loop in place on ``model.params``.

    Prompts and targets are fixed per document, so they are prepared once.
    Aborts with a diagnostic if the loss turns non-finite.
    """
    if not docs:
        raise ValueError("training needs a non-empty dataset")
    kind = task_kind(model.schemas)
    result = TrainResult(metric_name=primary_metric(kind))

    prepared = []
    for doc in docs:
        inp = model.prompt(doc.tokens)
        target = build_target_tensor(doc.gold, model.schemas, inp.n_text)
        prepared.append((inp, target))

    params = trainable_parameters(model)
    optimizer = Adam(params, lr=config.learning_rate)
    rng = random.Random(config.seed)
    steps_per_epoch = math.ceil(len(docs) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    step = 0

    for epoch in range(config.epochs):
        order = list(range(len(docs)))
        rng.shuffle(order)
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            ad.zero_grads(params)
            sentence_losses = []
            for idx in batch:
                inp, target = prepared[idx]
                loss = masked_loss(model.score(inp), target)
                if not np.isfinite(loss.value):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch}, sentence {idx}"
                    )
                sentence_losses.append(loss)
                losses.append(float(loss.value))
            total = sentence_losses[0]
            for extra in sentence_losses[1:]:
                total = ad.add(total, extra)
            ad.backward(ad.scale(total, 1.0 / len(batch)))
            optimizer.step(lr_factor(step, total_steps, config.warmup_rate, config.schedule))
            step += 1
        f1 = _epoch_f1(model, docs, kind, config.threshold)
        result.trace.append(EpochStats(epoch=epoch, mean_loss=float(np.mean(losses)), f1=f1))
        if config.stop_at_f1 is not None and f1 >= config.stop_at_f1:
            log.info("stopping at epoch %d: %s reached %.3f", epoch, result.metric_name, f1)
            break

    if trace_path is not None:
        write_trace(trace_path, result.trace)
    return result
