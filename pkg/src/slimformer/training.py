"""Teacher training and the one-stage self-distillation loop.

Per iteration the loop samples k architectures (always including the
smallest and largest — sandwich sampling), feeds one mini-batch to the
frozen teacher and to each sampled submodel, accumulates the backward
gradients of the per-submodel distillation losses into the shared master
buffers, and applies exactly one optimizer update.

Training strategies:
  kd_fixed_teacher — every submodel distills from the frozen teacher (default)
  inplace_distill  — the largest submodel trains on labels and serves as a
                     dynamic teacher for the rest (its logits detached)
  ground_truth     — no distillation; every submodel trains on labels
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .archspace import ArchDescriptor
from .data import Batch, iter_batches
from .model import ModelConfig, ParamStore, backbone_forward, init_dst
from .tensor import NumericError, Rng, Tensor

KD_KINDS = ("kl-softmax", "bce-sigmoid")
STRATEGIES = ("kd_fixed_teacher", "inplace_distill", "ground_truth")
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 13
    batch_size: int = 64
    base_lr: float = 1e-4
    warmup_epochs: int = 3
    decay_factor: float = 0.2
    decay_every: int = 2
    decay_after: int = 10
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    k: int = 4
    kd_kind: str = "kl-softmax"
    strategy: str = "kd_fixed_teacher"
    init: str = "teacher"
    seed: int = 0
    max_steps: int | None = None  # optional hard cap for short runs

    def __post_init__(self):
        if self.kd_kind not in KD_KINDS:
            raise ValueError(f"unknown kd kind {self.kd_kind!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.k < 2:
            raise ValueError("k must be at least 2 (the sandwich endpoints)")


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Learning rate for a 1-based epoch: linear warmup from base/warmup_epochs
    to base, flat until decay_after, then ×decay_factor every decay_every epochs."""
    if epoch < 1:
        raise ValueError("epochs are 1-based")
    if config.warmup_epochs > 0 and epoch <= config.warmup_epochs:
        return config.base_lr * epoch / config.warmup_epochs
    if epoch <= config.decay_after:
        return config.base_lr
    decays = (epoch - config.decay_after - 1) // config.decay_every + 1
    return config.base_lr * config.decay_factor**decays


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-master-parameter moment buffers plus the shared step counter."""

    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    step: int = 0


def optimizer_update(store: ParamStore, state: AdamState, lr: float, config: TrainConfig) -> None:
    """One adaptive-moment update over every trainable master tensor.

    Parameters whose gradient buffer is empty this step still decay their
    moments and receive the (zero-gradient) update.
    """
    state.step += 1
    b1, b2, eps = config.beta1, config.beta2, config.adam_eps
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, t in store.trainable():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if name not in state.moments:
            state.moments[name] = (np.zeros_like(t.data), np.zeros_like(t.data))
        m, v = state.moments[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if not np.all(np.isfinite(update)):
            raise NumericError(f"non-finite optimizer update for {name}")
        t.data -= update


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy against integer labels."""
    batch, classes = logits.shape
    onehot = np.zeros((batch, classes))
    onehot[np.arange(batch), labels] = 1.0
    return T.mul(T.sum_all(T.mul(T.log_softmax_last(logits), Tensor(onehot))), -1.0 / batch)


def _teacher_array(teacher_logits) -> np.ndarray:
    return teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits)


def _softmax_and_log(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shifted = x - x.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - log_z
    return np.exp(logp), logp


def kd_loss(teacher_logits, student_logits: Tensor, kind: str = "kl-softmax") -> Tensor:
    """Distillation loss; teacher logits are constants (no gradient).

    kl-softmax: mean_b KL(softmax(teacher) ‖ softmax(student)), fused so that
    identical logits give exactly zero loss and exactly zero gradient (the
    self-distillation fixed point survives adaptive-moment rescaling).
    bce-sigmoid: mean binary cross-entropy of sigmoid(student) against
    sigmoid(teacher) targets, log arguments clamped at 1e-12.
    """
    t = _teacher_array(teacher_logits)
    if t.shape != tuple(student_logits.shape):
        raise T.ShapeError(f"teacher/student shapes differ: {t.shape} vs {student_logits.shape}")
    batch = t.shape[0]
    if kind == "kl-softmax":
        p_t, logp_t = _softmax_and_log(t)
        p_s, logp_s = _softmax_and_log(student_logits.data)
        value = np.array(np.sum(np.where(p_t > 0.0, p_t * (logp_t - logp_s), 0.0)) / batch)

        def backward(g):
            if student_logits.requires_grad:
                student_logits.accumulate_grad(float(g) / batch * (p_s - p_t))

        return Tensor._from_op(value, (student_logits,), backward, "kd_kl")
    if kind == "bce-sigmoid":
        targets = 1.0 / (1.0 + np.exp(-t))
        p = T.sigmoid(student_logits)
        pos = T.mul(T.log(T.clamp_min(p, LOG_CLAMP)), Tensor(targets))
        neg = T.mul(T.log(T.clamp_min(T.add(T.mul(p, -1.0), 1.0), LOG_CLAMP)), Tensor(1.0 - targets))
        return T.mul(T.mean_all(T.add(pos, neg)), -1.0)
    raise ValueError(f"unknown kd kind {kind!r}")


# ---------------------------------------------------------------------------
# architecture sampling
# ---------------------------------------------------------------------------

def sample_architectures(selected: list[ArchDescriptor], k: int, rng: Rng) -> list[ArchDescriptor]:
    """Sandwich sample: the smallest and largest architectures plus k-2 uniform
    draws without replacement. Stream use: one choice of k-2 indices (none for k=2)."""
    if not 2 <= k <= len(selected):
        raise ValueError(f"k={k} outside [2, {len(selected)}]")
    smallest = min(selected, key=lambda a: (a.width, a.depth))
    largest = max(selected, key=lambda a: (a.width, a.depth))
    omega = [smallest, largest]
    rest = [a for a in selected if a not in omega]
    if k > 2:
        picks = rng.choice_without_replacement(len(rest), k - 2)
        omega.extend(rest[i] for i in picks)
    return omega


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def _finite_loss(loss: Tensor, context: str) -> float:
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError(f"training diverged ({context}): loss={value}")
    return value


def train_teacher(
    model_config: ModelConfig,
    config: TrainConfig,
    train_set,
    log: list | None = None,
    state: AdamState | None = None,
) -> ParamStore:
    """Cross-entropy training of the full architecture from scratch.

    RNG streams: parameter init uses Rng(seed) in schema order; batch
    shuffling uses child stream (1), one permutation per epoch.
    """
    store = ParamStore.build(model_config, config.seed)
    state = state if state is not None else AdamState()
    arch = store.largest()
    batches_rng = Rng(config.seed).child(1)
    step = 0
    for epoch in range(1, config.epochs + 1):
        lr = lr_schedule(epoch, config)
        order = batches_rng.permutation(len(train_set))
        epoch_loss = 0.0
        epoch_batches = 0
        for batch in iter_batches(train_set, config.batch_size, order):
            out = backbone_forward(store, arch, batch)
            loss = cross_entropy(out.logits, batch.answers)
            value = _finite_loss(loss, f"teacher epoch {epoch} step {step}")
            loss.backward()
            optimizer_update(store, state, lr, config)
            store.zero_grads()
            epoch_loss += value
            epoch_batches += 1
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                break
        if log is not None:
            log.append({
                "phase": "teacher", "epoch": epoch, "step": step, "lr": lr,
                "mean_loss": epoch_loss / max(epoch_batches, 1),
            })
        if config.max_steps is not None and step >= config.max_steps:
            break
    return store


def dst_train_step(
    batch: Batch,
    dst: ParamStore,
    teacher: ParamStore | None,
    omega: list[ArchDescriptor],
    config: TrainConfig,
    state: AdamState,
    lr: float,
) -> dict[str, float]:
    """One iteration: forward each sampled submodel, accumulate gradients,
    apply exactly one optimizer update. Returns the per-architecture losses."""
    losses: dict[str, float] = {}
    labels = batch.answers

    if config.strategy == "kd_fixed_teacher":
        if teacher is None:
            raise ValueError("kd_fixed_teacher requires a teacher store")
        with T.no_grad():
            target = backbone_forward(teacher, teacher.largest(), batch).logits.data
        for arch in omega:
            out = backbone_forward(dst, arch, batch)
            loss = kd_loss(target, out.logits, config.kd_kind)
            losses[arch.label] = _finite_loss(loss, f"dst {arch.label}")
            loss.backward()
    elif config.strategy == "ground_truth":
        for arch in omega:
            out = backbone_forward(dst, arch, batch)
            loss = cross_entropy(out.logits, labels)
            losses[arch.label] = _finite_loss(loss, f"dst {arch.label}")
            loss.backward()
    else:  # inplace_distill
        largest = max(omega, key=lambda a: (a.width, a.depth))
        out_l = backbone_forward(dst, largest, batch)
        loss_l = cross_entropy(out_l.logits, labels)
        losses[largest.label] = _finite_loss(loss_l, f"dst {largest.label}")
        loss_l.backward()
        target = out_l.logits.data.copy()
        for arch in omega:
            if arch is largest:
                continue
            out = backbone_forward(dst, arch, batch)
            loss = kd_loss(target, out.logits, config.kd_kind)
            losses[arch.label] = _finite_loss(loss, f"dst {arch.label}")
            loss.backward()

    optimizer_update(dst, state, lr, config)
    dst.zero_grads()
    return losses


def train_dst(
    teacher: ParamStore,
    config: TrainConfig,
    train_set,
    log: list | None = None,
    selected: list[ArchDescriptor] | None = None,
    state: AdamState | None = None,
) -> ParamStore:
    """The one-stage distillation loop over the selected architecture set.

    RNG streams from the run seed: child (1) shuffles batches (one permutation
    per epoch), child (2) samples the k-2 random architectures (one draw per
    iteration); random init, when requested, consumes Rng(seed) in schema order.
    """
    dst = init_dst(teacher, config.init, seed=config.seed)
    state = state if state is not None else AdamState()
    archs = selected if selected is not None else dst.selected()
    batches_rng = Rng(config.seed).child(1)
    arch_rng = Rng(config.seed).child(2)
    step = 0
    for epoch in range(1, config.epochs + 1):
        lr = lr_schedule(epoch, config)
        order = batches_rng.permutation(len(train_set))
        for batch in iter_batches(train_set, config.batch_size, order):
            omega = sample_architectures(archs, config.k, arch_rng)
            losses = dst_train_step(batch, dst, teacher, omega, config, state, lr)
            step += 1
            if log is not None:
                log.append({
                    "phase": "dst", "epoch": epoch, "step": step, "lr": lr,
                    "omega": [a.label for a in omega], "losses": losses,
                })
            if config.max_steps is not None and step >= config.max_steps:
                return dst
    return dst
