"""Model-ensemble prediction, pseudo-label construction, and distillation.

Distillation trains a student on soft cross-entropy against fixed ensemble
targets, either with plain momentum SGD or under a cyclical step-size
schedule whose cycle-end iterates are averaged (stochastic weight
averaging). Nothing in this module ever sees a ground-truth label: inputs
are unlabeled features and probability targets only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError, ShapeError
from .nn_core import MlpArch, SgdConfig, flatten, forward, loss_and_grad, sgd_step, unflatten
from .data import UnlabeledDataset
from .rng import RngStream

log = logging.getLogger(__name__)


@dataclass
class PseudoLabeledDataset:
    """Server features paired with soft probability targets."""

    features: np.ndarray
    soft_targets: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.soft_targets = np.asarray(self.soft_targets, dtype=np.float64)
        if len(self.features) != len(self.soft_targets):
            raise ShapeError(
                f"{len(self.features)} feature rows but {len(self.soft_targets)} target rows"
            )
        if np.any(self.soft_targets < 0):
            raise ShapeError("soft targets must be nonnegative")
        if np.any(np.abs(self.soft_targets.sum(axis=1) - 1.0) > 1e-9):
            raise ShapeError("soft target rows must sum to 1")

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class SwaSchedule:
    """Cyclical step sizes with snapshot collection at cycle ends."""

    eta_high: float = 1e-3
    eta_low: float = 4e-4
    cycle_len: int = 25
    collect_after: int = 250
    epochs: int = 20
    batch_size: int = 128

    def __post_init__(self) -> None:
        if self.eta_high <= 0 or self.eta_low <= 0 or self.eta_low > self.eta_high:
            raise ShapeError("need 0 < eta_low <= eta_high")
        if self.cycle_len < 1 or self.collect_after < 0:
            raise ShapeError("cycle_len must be >= 1 and collect_after >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ShapeError("epochs and batch_size must be positive")


@dataclass
class SwaTrace:
    """Optional per-step record used for diagnostics and schedule checks."""

    step_sizes: list[float] = field(default_factory=list)
    snapshot_steps: list[int] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)


def ensemble_predict(
    models: list[np.ndarray], arch: MlpArch, data: UnlabeledDataset
) -> np.ndarray:
    """Uniform average of each model's softmax output, in fixed model order."""
    if not models:
        raise ShapeError("ensemble requires at least one model")
    total = np.zeros((len(data), arch.class_count))
    for vec in models:
        total += forward(unflatten(vec, arch), data.features)
    return total / len(models)


def sharpen(probs: np.ndarray, power: float) -> np.ndarray:
    """Rowwise p^power renormalized; preserves the argmax for power >= 1."""
    if power < 1.0:
        raise ShapeError(f"sharpening power must be >= 1, got {power}")
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs.max(axis=1) <= 0.0):
        raise NumericError("cannot sharpen a row with no positive mass")
    raised = probs**power
    return raised / raised.sum(axis=1, keepdims=True)


def make_pseudo_set(
    models: list[np.ndarray],
    arch: MlpArch,
    unlabeled: UnlabeledDataset,
    sharpen_power: float | None = None,
) -> PseudoLabeledDataset:
    targets = ensemble_predict(models, arch, unlabeled)
    if sharpen_power is not None and sharpen_power != 1.0:
        targets = sharpen(targets, sharpen_power)
    return PseudoLabeledDataset(unlabeled.features, targets)


def swa_step_size(step: int, sched: SwaSchedule) -> float:
    """Linear decay high->low within each cycle, restarting at cycle boundaries."""
    if sched.cycle_len == 1:
        return sched.eta_high
    frac = (step % sched.cycle_len) / (sched.cycle_len - 1)
    # Convex form keeps both endpoints exact; clamp guards rounding drift.
    eta = (1.0 - frac) * sched.eta_high + frac * sched.eta_low
    return min(max(eta, sched.eta_low), sched.eta_high)


def _batches(n: int, batch_size: int, rng: RngStream):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def distill_swa(
    init: np.ndarray,
    arch: MlpArch,
    teacher: PseudoLabeledDataset,
    sched: SwaSchedule,
    sgd: SgdConfig,
    rng: RngStream,
    trace: SwaTrace | None = None,
) -> np.ndarray:
    """Distill under the cyclical schedule; return the mean of cycle-end snapshots.

    Snapshots are taken after finishing any step t with t >= collect_after
    and (t+1) % cycle_len == 0. If the run is too short to collect any,
    the final iterate is returned with a warning.
    """
    if len(teacher) == 0:
        raise ShapeError("teacher set is empty")
    cfg = replace(sgd, prox_mu=0.0, batch_size=sched.batch_size)
    model = unflatten(init, arch)
    buffer = np.zeros(arch.param_count())
    snap_sum = np.zeros(arch.param_count())
    snap_count = 0
    step = 0
    for _ in range(sched.epochs):
        for idx in _batches(len(teacher), sched.batch_size, rng):
            eta = swa_step_size(step, sched)
            _, grad = loss_and_grad(
                model, teacher.features[idx], teacher.soft_targets[idx], None, cfg
            )
            model, buffer = sgd_step(model, buffer, grad, cfg, step_size=eta)
            if trace is not None:
                trace.step_sizes.append(eta)
            if step >= sched.collect_after and (step + 1) % sched.cycle_len == 0:
                snap_sum += flatten(model)
                snap_count += 1
                if trace is not None:
                    trace.snapshot_steps.append(step)
                    trace.snapshots.append(flatten(model))
            step += 1
    if snap_count == 0:
        log.warning(
            "no SWA snapshots collected in %d steps (collect_after=%d); "
            "returning the final iterate",
            step,
            sched.collect_after,
        )
        return flatten(model)
    return snap_sum / snap_count


def distill_sgd(
    init: np.ndarray,
    arch: MlpArch,
    teacher: PseudoLabeledDataset,
    epochs: int,
    sgd: SgdConfig,
    rng: RngStream,
) -> np.ndarray:
    """Plain momentum-SGD distillation; returns the final iterate."""
    if len(teacher) == 0:
        raise ShapeError("teacher set is empty")
    cfg = replace(sgd, prox_mu=0.0)
    model = unflatten(init, arch)
    buffer = np.zeros(arch.param_count())
    for _ in range(epochs):
        for idx in _batches(len(teacher), cfg.batch_size, rng):
            _, grad = loss_and_grad(
                model, teacher.features[idx], teacher.soft_targets[idx], None, cfg
            )
            model, buffer = sgd_step(model, buffer, grad, cfg)
    return flatten(model)
