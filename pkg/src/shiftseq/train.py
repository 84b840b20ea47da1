"""Optimizers, LR schedule, metrics, and the cross-validation harness.

Training is deterministic given (configs, records, seed): initialization,
per-epoch shuffling, and augmentation draw from independent named RNG
substreams, so two runs with the same inputs produce bit-identical
parameter trajectories and metrics files.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import SequenceClassifier, build_model
from .data import assign_folds
from .errors import ConfigError, DimensionError, EmptyInputError, TrainingDiverged, UsageError
from .seeding import substream
from .tensor_autograd import Tensor, backward

OPTIMIZERS = ("adam", "adamw")


@dataclass
class TrainConfig:
    optimizer: str = "adamw"
    peak_lr: float = 5e-4
    weight_decay: float = 0.1
    batch_size: int = 32
    epochs: int = 100
    warmup_epochs: int = 5
    seed: int = 0
    min_lr_ratio: float = 0.0
    augment_prob: float = 0.0

    def validate(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.peak_lr > 0:
            raise ConfigError(f"peak_lr must be positive, got {self.peak_lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be non-negative, got {self.warmup_epochs}")
        if self.epochs > 0 and self.warmup_epochs >= self.epochs:
            raise ConfigError(
                f"warmup_epochs ({self.warmup_epochs}) must be below epochs ({self.epochs})")
        if not 0.0 <= self.min_lr_ratio <= 1.0:
            raise ConfigError(f"min_lr_ratio must be in [0, 1], got {self.min_lr_ratio}")
        if not 0.0 <= self.augment_prob <= 1.0:
            raise ConfigError(f"augment_prob must be in [0, 1], got {self.augment_prob}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def train_config_from_dict(raw: dict) -> TrainConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"train config must be a mapping, got {type(raw).__name__}")
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown train config keys: {', '.join(unknown)}")
    cfg = TrainConfig(**raw)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamHyper:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = False  # True = decoupled decay; False = plain adam, decay ignored


def init_adam_state(params: dict) -> dict:
    return {name: (np.zeros_like(p), np.zeros_like(p)) for name, p in params.items()}


def adam_step(params: dict, grads: dict, state: dict, t: int, hyper: AdamHyper) -> tuple:
    """One bias-corrected moment update; returns (new_params, new_state).

    Decoupled decay subtracts lr*wd*theta alongside the moment step, both
    taken from the pre-step parameters.
    """
    if t < 1:
        raise UsageError(f"step index t must start at 1, got {t}")
    if set(params) != set(grads):
        raise UsageError("params and grads must cover the same names")
    new_params, new_state = {}, {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, "
                                 f"parameter has {theta.shape}")
        m, v = state[name]
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g
        m_hat = m / (1.0 - hyper.beta1 ** t)
        v_hat = v / (1.0 - hyper.beta2 ** t)
        update = hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
        if hyper.decoupled:
            update = update + hyper.lr * hyper.weight_decay * theta
        new_params[name] = (theta - update).astype(theta.dtype)
        new_state[name] = (m, v)
    return new_params, new_state


class Optimizer:
    """Binds the functional update to a model's parameter tensors."""

    def __init__(self, model: SequenceClassifier, cfg: TrainConfig):
        self.params = model.named_parameters()
        self.cfg = cfg
        self.state = init_adam_state({n: p.data for n, p in self.params.items()})
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        hyper = AdamHyper(lr=lr, weight_decay=self.cfg.weight_decay,
                          decoupled=self.cfg.optimizer == "adamw")
        values = {n: p.data for n, p in self.params.items()}
        grads = {n: (p.grad if p.grad is not None else np.zeros_like(p.data))
                 for n, p in self.params.items()}
        new_values, self.state = adam_step(values, grads, self.state, self.t, hyper)
        for name, p in self.params.items():
            p.data = new_values[name]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def cosine_warmup_lr(step: int, total_steps: int, warmup_steps: int,
                     peak: float, min_ratio: float = 0.0) -> float:
    """Linear 0 -> peak over warmup, then cosine decay to peak*min_ratio."""
    if total_steps < 1:
        raise UsageError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= warmup_steps < total_steps:
        raise UsageError(f"warmup_steps must be in [0, total_steps), got {warmup_steps}")
    if step < 0:
        raise UsageError(f"step must be non-negative, got {step}")
    if not 0.0 <= min_ratio <= 1.0:
        raise UsageError(f"min_ratio must be in [0, 1], got {min_ratio}")
    if step >= total_steps:
        return peak * min_ratio
    if step < warmup_steps:
        return peak * step / warmup_steps
    phase = math.pi * (step - warmup_steps) / (total_steps - warmup_steps)
    return peak * (min_ratio + (1.0 - min_ratio) * 0.5 * (1.0 + math.cos(phase)))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    confusion: np.ndarray  # rows = true class, cols = predicted
    ua: float              # mean per-class recall, zero-support classes excluded
    wa: float              # overall accuracy


def compute_metrics(confusion) -> Metrics:
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise DimensionError(f"confusion matrix must be square, got {confusion.shape}")
    if np.any(confusion < 0):
        raise ConfigError("confusion matrix counts must be non-negative")
    total = confusion.sum()
    if total == 0:
        return Metrics(confusion=confusion, ua=0.0, wa=0.0)
    support = confusion.sum(axis=1)
    recalls = [confusion[k, k] / support[k] for k in range(confusion.shape[0]) if support[k] > 0]
    # plain left-to-right sum: any faithful recomputation reproduces it bit for bit
    ua = float(sum(recalls) / len(recalls))
    wa = float(np.trace(confusion) / total)
    return Metrics(confusion=confusion, ua=ua, wa=wa)


def pair_recall_average(logits: np.ndarray, labels: np.ndarray, pair=(0, 1)) -> float:
    """Forced-choice recall average on one class pair.

    Restricts predictions to the pair's logit columns, so other classes
    never absorb probability mass; chance level is exactly 0.5.
    """
    a, b = pair
    mask = (labels == a) | (labels == b)
    if not np.any(mask):
        raise EmptyInputError(f"no samples with labels in {pair}")
    sub = logits[mask][:, [a, b]]
    predicted = np.where(sub[:, 0] >= sub[:, 1], a, b)
    truth = labels[mask]
    recalls = []
    for cls in pair:
        cls_mask = truth == cls
        if np.any(cls_mask):
            recalls.append(float(np.mean(predicted[cls_mask] == cls)))
    return float(np.mean(recalls))


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def collate(records) -> tuple:
    """Pad records to the batch's longest sequence.

    Returns (features (B, L, Tmax, C) float32, lengths int64, labels int64).
    Padded frames are zero; they are excluded from pooling via lengths.
    """
    if not records:
        raise EmptyInputError("cannot collate an empty batch")
    l0, c0 = records[0].data.shape[0], records[0].data.shape[2]
    for rec in records:
        if rec.data.shape[0] != l0 or rec.data.shape[2] != c0:
            raise DimensionError(
                f"records disagree on layers/channels: {rec.data.shape} vs (L={l0}, C={c0})")
    t_max = max(rec.data.shape[1] for rec in records)
    feats = np.zeros((len(records), l0, t_max, c0), dtype=np.float32)
    lengths = np.empty(len(records), dtype=np.int64)
    labels = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        t = rec.data.shape[1]
        feats[i, :, :t, :] = rec.data
        lengths[i] = t
        labels[i] = rec.label
    return feats, lengths, labels


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield range(start, min(start + batch_size, n))


def predict_logits(model: SequenceClassifier, records, batch_size: int = 32) -> tuple:
    """Eval-mode logits for every record, in input order."""
    if not records:
        raise EmptyInputError("cannot evaluate an empty record list")
    chunks, labels = [], []
    for idx in _batches(len(records), batch_size):
        feats, lengths, batch_labels = collate([records[i] for i in idx])
        logits = model.forward(Tensor(feats), lengths=lengths, training=False)
        chunks.append(logits.data)
        labels.append(batch_labels)
    return np.concatenate(chunks, axis=0), np.concatenate(labels)


def evaluate(model: SequenceClassifier, records, batch_size: int = 32) -> Metrics:
    logits, labels = predict_logits(model, records, batch_size)
    k = model.cfg.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    predictions = np.argmax(logits, axis=1)
    for truth, pred in zip(labels, predictions):
        confusion[truth, pred] += 1
    return compute_metrics(confusion)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    metrics: Metrics
    final_loss: float
    model: SequenceClassifier
    curve: list = field(default_factory=list)  # (step, lr, loss) triples


def train_fold(model_cfg, train_cfg: TrainConfig, train_records, test_records,
               fold: int = 0, keep_curve: bool = False) -> FoldResult:
    """Train one fold to completion and evaluate on its held-out records."""
    train_cfg.validate()
    if not train_records:
        raise EmptyInputError("train_fold needs at least one training record")
    model = build_model(model_cfg, seed=train_cfg.seed)
    optimizer = Optimizer(model, train_cfg)
    n = len(train_records)
    steps_per_epoch = math.ceil(n / train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch
    warmup_steps = train_cfg.warmup_epochs * steps_per_epoch
    augment_rng = substream(train_cfg.seed, "augment", fold)

    curve = []
    final_loss = math.nan
    step = 0
    for epoch in range(train_cfg.epochs):
        order = substream(train_cfg.seed, "shuffle", fold, epoch).permutation(n)
        for idx in _batches(n, train_cfg.batch_size):
            batch = [train_records[order[i]] for i in idx]
            feats, lengths, labels = collate(batch)
            lr = cosine_warmup_lr(step, total_steps, warmup_steps,
                                  train_cfg.peak_lr, train_cfg.min_lr_ratio)
            loss, _ = model.loss(Tensor(feats), labels, lengths=lengths, training=True,
                                 augment_prob=train_cfg.augment_prob, rng=augment_rng)
            loss_value = float(loss.item())
            if not math.isfinite(loss_value):
                raise TrainingDiverged(
                    f"nonfinite loss {loss_value} at step {step} (epoch {epoch}, fold {fold})")
            optimizer.zero_grad()
            backward(loss)
            optimizer.step(lr)
            if keep_curve:
                curve.append((step, lr, loss_value))
            final_loss = loss_value
            step += 1

    metrics = evaluate(model, test_records, train_cfg.batch_size)
    return FoldResult(fold=fold, metrics=metrics, final_loss=final_loss,
                      model=model, curve=curve)


@dataclass
class CrossValResult:
    folds: list
    mean_ua: float
    mean_wa: float
    mean_loss: float


def cross_validate(model_cfg, train_cfg: TrainConfig, records,
                   keep_curves: bool = False) -> CrossValResult:
    """Leave-one-group-out: one fold per group, merged by fold index."""
    results = [train_fold(model_cfg, train_cfg,
                          [records[i] for i in plan.train_indices],
                          [records[i] for i in plan.test_indices],
                          fold=plan.fold, keep_curve=keep_curves)
               for plan in assign_folds(records)]
    return CrossValResult(
        folds=results,
        mean_ua=float(np.mean([r.metrics.ua for r in results])),
        mean_wa=float(np.mean([r.metrics.wa for r in results])),
        mean_loss=float(np.mean([r.final_loss for r in results])),
    )


# ---------------------------------------------------------------------------
# structured reporting
# ---------------------------------------------------------------------------

def format_metrics(result: CrossValResult) -> str:
    """One row per fold plus a mean row; fixed six-decimal formatting."""
    lines = [f"fold={r.fold} ua={r.metrics.ua:.6f} wa={r.metrics.wa:.6f} "
             f"loss={r.final_loss:.6f}" for r in result.folds]
    lines.append(f"fold=mean ua={result.mean_ua:.6f} wa={result.mean_wa:.6f} "
                 f"loss={result.mean_loss:.6f}")
    return "\n".join(lines)


def format_curves(result: CrossValResult) -> str:
    lines = []
    for r in result.folds:
        lines.extend(f"fold={r.fold} step={s} lr={lr:.6e} loss={loss:.6f}"
                     for s, lr, loss in r.curve)
    return "\n".join(lines)


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
        if text:
            f.write("\n")
