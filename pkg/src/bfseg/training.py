"""AdamW optimisation with plateau learning-rate decay, evaluation, checkpoints."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import AugmentConfig, augment
from .errors import ConfigError, DatasetError, TrainingDiverged
from .io import load_checkpoint, save_checkpoint
from .label_pyramid import build_mask_pyramid
from .losses import LossBreakdown, SupervisionMode, total_loss
from .metrics import ConfusionCounts, MetricsReport, accumulate, binarize, compute_metrics
from .model import BFSegModel, ModelConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-3
    lr_decay_factor: float = 0.7
    patience_epochs: int = 3
    weight_decay: float = 5e-4
    # moment decays and epsilon: the usual Adam defaults
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    mode: SupervisionMode = field(default_factory=SupervisionMode)
    augment: bool = True
    monitor: str = "iou"

    def __post_init__(self):
        if not 0 < self.lr_decay_factor < 1:
            raise ConfigError("lr_decay_factor must lie in (0, 1)")
        if self.patience_epochs < 1:
            raise ConfigError("patience_epochs must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.monitor not in ("iou", "f1", "precision", "recall"):
            raise ConfigError(f"cannot monitor {self.monitor!r}")
        if isinstance(self.mode, dict):
            object.__setattr__(self, "mode", SupervisionMode(**self.mode))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.to_dict()
        return d


# --------------------------------------------------------------------------
# learning-rate schedule
# --------------------------------------------------------------------------


def lr_step(current_lr, epochs_without_improvement, patience=3, factor=0.7):
    """Apply the plateau rule once the stale-epoch counter is up to date.

    Returns ``(new_lr, new_counter)``: the rate is multiplied by ``factor``
    and the counter reset when it has reached ``patience``.
    """
    if epochs_without_improvement >= patience:
        return current_lr * factor, 0
    return current_lr, epochs_without_improvement


class PlateauSchedule:
    """Tracks the best monitored value and decays the rate on plateaus."""

    def __init__(self, lr, patience=3, factor=0.7):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.best = -math.inf
        self.stale = 0

    def step(self, metric: float) -> bool:
        """Record one epoch's metric; returns True if it improved (strictly)."""
        improved = metric > self.best
        if improved:
            self.best = metric
            self.stale = 0
        else:
            self.stale += 1
        self.lr, self.stale = lr_step(self.lr, self.stale, self.patience, self.factor)
        return improved


def replay_lr(metrics, initial_lr=1e-3, patience=3, factor=0.7) -> list:
    """Learning rate in effect *after* each epoch for a metric sequence."""
    sched = PlateauSchedule(initial_lr, patience, factor)
    out = []
    for m in metrics:
        sched.step(m)
        out.append(sched.lr)
    return out


# --------------------------------------------------------------------------
# optimiser
# --------------------------------------------------------------------------


class AdamW:
    """Adam with decoupled weight decay, applied in place to a parameter dict."""

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=5e-4):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay:
                p -= (self.lr * self.weight_decay) * p
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# --------------------------------------------------------------------------
# training / evaluation
# --------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: LossBreakdown
    val: MetricsReport
    lr: float  # rate used during this epoch
    next_lr: float  # rate after the plateau rule saw this epoch's metric
    improved: bool

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss": self.train_loss.to_dict(),
            "val": self.val.to_dict(),
            "lr": self.lr,
            "next_lr": self.next_lr,
            "improved": self.improved,
        }


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def lrs(self):
        return [r.lr for r in self.records]

    def monitored(self, key="iou"):
        return [getattr(r.val, key) for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)


@dataclass
class TrainResult:
    model: BFSegModel  # best-by-monitored-metric weights
    history: TrainHistory
    best_epoch: int | None
    last_params: dict


def _stack(samples, dtype):
    images = np.stack([s.image for s in samples]).astype(dtype)
    labels = np.stack([s.label for s in samples]).astype(np.uint8)
    return images, labels


def _mean_breakdown(parts):
    """Sample-weighted mean of ``(LossBreakdown, n)`` pairs."""
    total_n = sum(n for _, n in parts)
    final = sum(b.final_ce * n for b, n in parts) / total_n
    len_ = [sum(b.lenient_per_scale[i] * n for b, n in parts) / total_n for i in range(4)]
    dis = [sum(b.distill_per_scale[i] * n for b, n in parts) / total_n for i in range(4)]
    total = final
    for v in len_ + dis:
        total += v
    return LossBreakdown(final, len_, dis, total)


def loss_and_grads(model: BFSegModel, images, labels, mode: SupervisionMode):
    preds, tape = model.forward(images, keep_tape=True)
    masks = build_mask_pyramid(labels)
    breakdown, g = total_loss(preds, masks, labels, mode)
    grads = model.backward(tape, g["cls"], g["final"])
    return breakdown, grads


def predict_logits(model: BFSegModel, images, batch_size=16) -> np.ndarray:
    out = []
    for i in range(0, len(images), batch_size):
        out.append(model.forward(images[i : i + batch_size]).final)
    return np.concatenate(out)


def evaluate(model: BFSegModel, samples, batch_size=16) -> MetricsReport:
    """Global-confusion metrics on ``samples`` (no augmentation)."""
    return compute_metrics(confusion_on(model, samples, batch_size))


def confusion_on(model, samples, batch_size=16) -> ConfusionCounts:
    if not samples:
        raise DatasetError("no samples to evaluate")
    acc = ConfusionCounts()
    for i in range(0, len(samples), batch_size):
        chunk = samples[i : i + batch_size]
        images, labels = _stack(chunk, model.dtype)
        acc = accumulate(binarize(model.forward(images).final), labels, acc)
    return acc


def train(model_config: ModelConfig, config: TrainConfig, train_set, val_set, on_epoch=None) -> TrainResult:
    """Train from a freshly initialised model.

    ``on_epoch`` is called with each :class:`EpochRecord` as it is produced.
    """
    model = BFSegModel(model_config)
    best_params = {k: v.copy() for k, v in model.params.items()}
    history = TrainHistory()
    if config.epochs == 0:
        return TrainResult(BFSegModel(model_config, best_params), history, None, model.params)
    if not train_set or not val_set:
        raise DatasetError("training and validation sets must be non-empty")
    aug_cfg = AugmentConfig() if config.augment else AugmentConfig(0.0, 0.0, 0.0)
    aug_cfg.check(train_set[0].label.shape)

    shuffle_seq, augment_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    augment_rng = np.random.default_rng(augment_seq)
    opt = AdamW(
        model.params,
        lr=config.initial_lr,
        betas=(config.beta1, config.beta2),
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    sched = PlateauSchedule(config.initial_lr, config.patience_epochs, config.lr_decay_factor)
    best_epoch = None

    for epoch in range(1, config.epochs + 1):
        lr = sched.lr
        opt.lr = lr
        order = shuffle_rng.permutation(len(train_set))
        parts = []
        for start in range(0, len(order), config.batch_size):
            batch = [augment(train_set[i], augment_rng, aug_cfg) for i in order[start : start + config.batch_size]]
            images, labels = _stack(batch, model.dtype)
            breakdown, grads = loss_and_grads(model, images, labels, config.mode)
            if not math.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: {breakdown.to_dict()}"
                )
            opt.step(grads)
            parts.append((breakdown, len(batch)))
        val = evaluate(model, val_set)
        improved = sched.step(getattr(val, config.monitor))
        if improved:
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
        record = EpochRecord(epoch, _mean_breakdown(parts), val, lr, sched.lr, improved)
        history.records.append(record)
        log.info("epoch %d loss %.4f val iou %.4f lr %.3g", epoch, record.train_loss.total, val.iou, lr)
        if on_epoch is not None:
            on_epoch(record)
    return TrainResult(BFSegModel(model_config, best_params), history, best_epoch, model.params)


def save_model(path, model: BFSegModel, extra: dict | None = None):
    save_checkpoint(path, model.params, model.config.to_dict(), extra)


def load_model(path) -> BFSegModel:
    params, config, _ = load_checkpoint(path)
    return BFSegModel(ModelConfig.from_dict(config), params)
