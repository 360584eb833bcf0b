"""Loss, optimizer, and the mini-batch training loop.

The cost is MPJPE, the mean Euclidean distance (in mm) between predicted and
true joint positions over all (frame, joint) pairs of a window. The optimizer
is stochastic gradient descent with Nesterov momentum in the lookahead form:

    v <- mu * v - lr * grad L(theta + mu * v)
    theta <- theta + v

Batch losses are means over the batch, so learning-rate semantics do not
depend on batch size. Early stopping halts when validation MPJPE has not
strictly improved for `patience` consecutive epochs; the parameters returned
are those of the best epoch.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, NumericError, ShapeError
from .network import ArchitectureConfig, NetworkParams, backward, build_network, forward
from .rng import RngState
from .tensor import Tensor

logger = logging.getLogger(__name__)

_MPJPE_EPS = 1e-12  # below this distance a joint contributes a zero gradient


def mpjpe(pred: Tensor, truth: Tensor) -> float:
    """Mean per joint position error in mm over all (frame, joint) pairs."""
    if pred.shape != truth.shape:
        raise ShapeError(f"pose shapes differ: {pred.shape} vs {truth.shape}")
    if pred.ndim != 3 or pred.shape[-1] != 3:
        raise ShapeError(f"poses must be [frames, joints, 3], got {pred.shape}")
    p = pred.numpy().astype(np.float64, copy=False)
    t = truth.numpy().astype(np.float64, copy=False)
    if not (np.isfinite(p).all() and np.isfinite(t).all()):
        raise NumericError("non-finite values in pose tensors")
    return float(np.sqrt(((p - t) ** 2).sum(axis=-1)).mean())


def mpjpe_gradient(pred: Tensor, truth: Tensor) -> Tensor:
    """d MPJPE / d pred: the unit displacement direction per joint divided by
    the (frame, joint) count; exactly zero where the distance is under 1e-12."""
    if pred.shape != truth.shape:
        raise ShapeError(f"pose shapes differ: {pred.shape} vs {truth.shape}")
    p = pred.numpy().astype(np.float64, copy=False)
    t = truth.numpy().astype(np.float64, copy=False)
    if not (np.isfinite(p).all() and np.isfinite(t).all()):
        raise NumericError("non-finite values in pose tensors")
    diff = p - t
    dist = np.sqrt((diff**2).sum(axis=-1, keepdims=True))
    count = pred.shape[0] * pred.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = np.where(dist < _MPJPE_EPS, 0.0, diff / (count * dist))
    return Tensor._wrap(grad.astype(pred.dtype, copy=False))


@dataclass
class OptimizerState:
    """Velocities plus hyperparameters for Nesterov SGD."""

    learning_rate: float = 1e-5
    momentum: float = 0.9
    velocity: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def for_params(cls, tensors: Mapping[str, Tensor], learning_rate: float = 1e-5,
                   momentum: float = 0.9) -> "OptimizerState":
        vel = {n: Tensor._wrap(np.zeros(t.shape, dtype=t.dtype)) for n, t in tensors.items()}
        return cls(learning_rate=learning_rate, momentum=momentum, velocity=vel)


def lookahead(tensors: Mapping[str, Tensor], state: OptimizerState) -> dict[str, Tensor]:
    """theta + mu * v: the point where Nesterov evaluates the gradient."""
    mu = state.momentum
    if mu == 0.0:
        return dict(tensors)
    return {n: Tensor._wrap(t.numpy() + mu * state.velocity[n].numpy())
            for n, t in tensors.items()}


def nesterov_step(tensors: Mapping[str, Tensor], grads: Mapping[str, Tensor],
                  state: OptimizerState) -> tuple[dict[str, Tensor], OptimizerState]:
    """One update given gradients evaluated at the lookahead point.

    With momentum 0 this reduces exactly to theta <- theta - lr * grad.
    Returns new tensors and new state; inputs are untouched.
    """
    if set(grads) != set(tensors):
        raise ShapeError("gradient names do not match parameter names")
    mu, lr = state.momentum, state.learning_rate
    new_vel: dict[str, Tensor] = {}
    new_tensors: dict[str, Tensor] = {}
    for n, t in tensors.items():
        if grads[n].shape != t.shape:
            raise ShapeError(f"gradient for {n} has shape {grads[n].shape}, expected {t.shape}")
        v = mu * state.velocity[n].numpy() - lr * grads[n].numpy()
        new_vel[n] = Tensor._wrap(v)
        new_tensors[n] = Tensor._wrap(t.numpy() + v)
    return new_tensors, OptimizerState(learning_rate=lr, momentum=mu, velocity=new_vel)


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of a training run. Defaults are the stock recipe."""

    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    batch_size: int = 10
    learning_rate: float = 1e-5
    momentum: float = 0.9
    patience: int = 15
    max_epochs: int = 200
    seed: int = 0
    precision: str = "float32"
    learn_prelu: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    train_loss_mm: float
    val_mpjpe_mm: float
    seconds: float


EPOCH_LOG_COLUMNS = ("epoch", "train_loss_mm", "val_mpjpe_mm", "seconds")


def append_epoch_log(path, report: EpochReport) -> None:
    """Append one CSV row (writing the header on first use)."""
    import os

    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(EPOCH_LOG_COLUMNS)
        w.writerow([report.epoch, repr(report.train_loss_mm),
                    repr(report.val_mpjpe_mm), f"{report.seconds:.3f}"])


def _pose_shape(arch: ArchitectureConfig) -> tuple[int, int, int]:
    return (arch.output_frames, arch.joints, 3)


def _sample_loss_and_grads(params: NetworkParams, video: Tensor, target: Tensor):
    # overflow in a diverging run is reported via DivergenceError, not warnings
    with np.errstate(over="ignore", invalid="ignore"):
        out, trace = forward(params, video)
        pose = out.reshape(_pose_shape(params.cfg))
        loss = mpjpe(pose, target)
        g = mpjpe_gradient(pose, target).reshape((params.cfg.head_out,))
        grads = backward(params, trace, g)
    return loss, grads


def evaluate_mpjpe(params: NetworkParams, samples: Sequence) -> float:
    """Mean MPJPE of the network over ClipSamples (videos already preprocessed)."""
    if not samples:
        raise ConfigError("cannot evaluate on an empty sample list")
    shape = _pose_shape(params.cfg)
    total = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for s in samples:
            out, _ = forward(params, s.video)
            total += mpjpe(out.reshape(shape), s.target)
    return total / len(samples)


def train(cfg: TrainConfig, train_set: Sequence, val_set: Sequence,
          log_path=None) -> tuple[NetworkParams, list[EpochReport]]:
    """Mini-batch training with Nesterov SGD and early stopping.

    train_set / val_set are sequences of ClipSamples whose video tensors match
    the architecture input shape and precision. Per epoch: one seeded shuffle,
    batches of `batch_size` (final partial batch kept), then a validation
    MPJPE pass. Stops when validation has not strictly improved for
    `patience` consecutive epochs or at `max_epochs`; returns the parameters
    of the best epoch and all epoch reports.
    """
    if not train_set or not val_set:
        raise ConfigError("train_set and val_set must be non-empty")
    root = RngState(cfg.seed)
    params = build_network(cfg.arch, root.split(0), dtype=cfg.dtype)
    state = OptimizerState.for_params(params.tensors, cfg.learning_rate, cfg.momentum)
    shuffle_rng = root.split(1)

    frozen = () if cfg.learn_prelu else tuple(n for n in params.names() if n.startswith("prelu"))

    best_params = params
    best_val = float("inf")
    stale = 0
    reports: list[EpochReport] = []

    for epoch in range(1, cfg.max_epochs + 1):
        tic = time.perf_counter()
        order = shuffle_rng.permutation(len(train_set))
        batch_losses: list[float] = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[int(i)] for i in order[start:start + cfg.batch_size]]
            look = NetworkParams(cfg=params.cfg, tensors=lookahead(params.tensors, state))
            acc: dict[str, np.ndarray] = {}
            loss_sum = 0.0
            for sample in batch:
                try:
                    loss, grads = _sample_loss_and_grads(look, sample.video, sample.target)
                except NumericError as e:
                    raise DivergenceError(
                        f"non-finite forward pass at epoch {epoch}, "
                        f"batch {start // cfg.batch_size} (clip {sample.clip_id})") from e
                loss_sum += loss
                for n, g in grads.items():
                    if n in acc:
                        acc[n] += g.numpy()
                    else:
                        acc[n] = g.numpy().copy()
            batch_loss = loss_sum / len(batch)
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}, batch {start // cfg.batch_size}")
            scale = 1.0 / len(batch)
            mean_grads = {n: Tensor._wrap(a * scale) for n, a in acc.items()}
            for n in frozen:
                mean_grads[n] = Tensor._wrap(np.zeros(params.tensors[n].shape, dtype=cfg.dtype))
            new_tensors, state = nesterov_step(params.tensors, mean_grads, state)
            params = NetworkParams(cfg=params.cfg, tensors=new_tensors)
            batch_losses.append(batch_loss)

        try:
            val = evaluate_mpjpe(params, val_set)
        except NumericError as e:
            raise DivergenceError(f"non-finite validation MPJPE at epoch {epoch}") from e
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite validation MPJPE at epoch {epoch}")
        report = EpochReport(epoch=epoch, train_loss_mm=float(np.mean(batch_losses)),
                             val_mpjpe_mm=val, seconds=time.perf_counter() - tic)
        reports.append(report)
        if log_path is not None:
            append_epoch_log(log_path, report)

        if val < best_val:
            best_val = val
            best_params = params
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("early stop at epoch %d (no improvement for %d epochs)",
                            epoch, cfg.patience)
                break
    return best_params, reports
