"""Client-side local training and interchangeable server aggregation strategies.

All four strategies consume a ``ClientWeightSet`` plus the current
``ServerState`` and produce a new state, so swapping strategies touches
nothing else. The server never sees client labels: it receives parameter
vectors, dataset sizes, and (for distillation) the unlabeled pool only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import LabeledDataset, UnlabeledDataset
from .ensemble_distill import (
    PseudoLabeledDataset,
    SwaSchedule,
    distill_sgd,
    distill_swa,
    make_pseudo_set,
)
from .errors import CapacityError, ConfigError
from .nn_core import MlpArch, SgdConfig, flatten, loss_and_grad, sgd_step, unflatten
from .posterior import ClientWeightSet, PosteriorKind, build_model_set, weighted_average
from .rng import RngStream


@dataclass(frozen=True)
class ClientConfig:
    """Local-training knobs; prox_mu > 0 anchors training at the incoming global."""

    local_epochs: int = 2
    base_step_size: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    prox_mu: float = 0.0
    batch_size: int = 40

    def __post_init__(self) -> None:
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ConfigError("local_epochs and batch_size must be positive")
        if self.base_step_size <= 0:
            raise ConfigError("base_step_size must be positive")


class StrategyKind(str, Enum):
    FEDAVG = "fedavg"
    FEDAVGM = "fedavgm"
    VDISTILL = "vdistill"
    FEDBE = "fedbe"


@dataclass
class ServerStrategy:
    """Aggregation rule plus the knobs the distillation-based rules need."""

    kind: StrategyKind
    server_momentum: float = 0.9
    posterior_kind: PosteriorKind = PosteriorKind.GAUSSIAN
    dirichlet_alpha: float = 0.5
    samples: int = 10
    include_avg: bool = True
    include_clients: bool = True
    swa: SwaSchedule | None = None
    sgd_distill_epochs: int = 20
    distill_step_size: float = 1e-3
    distill_momentum: float = 0.9
    distill_batch_size: int = 128
    sharpen_power: float | None = 2.0

    def needs_unlabeled(self) -> bool:
        return self.kind in (StrategyKind.VDISTILL, StrategyKind.FEDBE)

    def swa_schedule(self) -> SwaSchedule:
        return self.swa if self.swa is not None else SwaSchedule()


@dataclass
class ServerState:
    global_weights: np.ndarray
    momentum_buffer: np.ndarray
    round_index: int = 0

    def __post_init__(self) -> None:
        if self.global_weights.shape != self.momentum_buffer.shape:
            raise ConfigError("momentum buffer length must match global weights")

    @classmethod
    def initial(cls, global_weights: np.ndarray) -> "ServerState":
        return cls(global_weights, np.zeros_like(global_weights), 0)


@dataclass
class RoundDiagnostics:
    """Optional sink populated by server_round for monitoring and reports."""

    model_set: list[np.ndarray] | None = None
    sample_models: list[np.ndarray] | None = None
    teacher: PseudoLabeledDataset | None = None


def local_lr(round_index: int, total_rounds: int, base: float) -> float:
    """Round-wise plateaus: base, then x0.1 from 30% and x0.01 from 60% of rounds."""
    if not 0 <= round_index < total_rounds:
        raise ConfigError(f"round {round_index} outside [0, {total_rounds})")
    if round_index < 0.3 * total_rounds:
        return base
    if round_index < 0.6 * total_rounds:
        return base * 0.1
    return base * 0.01


def planned_steps(effective_epochs: float, n_examples: int, batch_size: int) -> int:
    """ceil(effective_epochs * ceil(N/B)): the step-count contract."""
    return math.ceil(effective_epochs * math.ceil(n_examples / batch_size))


def client_update(
    global_weights: np.ndarray,
    arch: MlpArch,
    data: LabeledDataset,
    cfg: ClientConfig,
    effective_epochs: float,
    step_size: float,
    rng: RngStream,
) -> np.ndarray:
    """Local momentum-SGD from the incoming global model; returns final weights.

    Runs planned_steps(...) updates over per-epoch reshuffled mini-batches
    of one-hot targets, with the proximal term (if any) anchored at the
    round's incoming global weights.
    """
    if len(data) == 0:
        raise CapacityError("client has no training examples")
    onehot = np.zeros((len(data), data.class_count))
    onehot[np.arange(len(data)), data.labels] = 1.0
    sgd_cfg = SgdConfig(
        step_size=step_size,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        prox_mu=cfg.prox_mu,
        batch_size=cfg.batch_size,
    )
    anchor = np.asarray(global_weights, dtype=np.float64) if cfg.prox_mu > 0 else None
    model = unflatten(global_weights, arch)
    buffer = np.zeros(arch.param_count())
    total = planned_steps(effective_epochs, len(data), cfg.batch_size)
    done = 0
    while done < total:
        order = rng.permutation(len(data))
        for start in range(0, len(data), cfg.batch_size):
            if done >= total:
                break
            idx = order[start : start + cfg.batch_size]
            _, grad = loss_and_grad(model, data.features[idx], onehot[idx], anchor, sgd_cfg)
            model, buffer = sgd_step(model, buffer, grad, sgd_cfg)
            done += 1
    return flatten(model)


def _distill_teacher(
    strategy: ServerStrategy,
    clients: ClientWeightSet,
    unlabeled: UnlabeledDataset,
    arch: MlpArch,
    rng: RngStream,
) -> tuple[list[np.ndarray], PseudoLabeledDataset]:
    if strategy.kind is StrategyKind.VDISTILL:
        # Vanilla distillation ensembles exactly the client models.
        model_set = list(clients.weights)
    else:
        model_set = build_model_set(
            clients,
            strategy.posterior_kind,
            strategy.samples,
            strategy.include_avg,
            strategy.include_clients,
            rng,
            dirichlet_alpha=strategy.dirichlet_alpha,
        )
    teacher = make_pseudo_set(model_set, arch, unlabeled, strategy.sharpen_power)
    return model_set, teacher


def server_round(
    state: ServerState,
    clients: ClientWeightSet,
    strategy: ServerStrategy,
    unlabeled: UnlabeledDataset | None,
    arch: MlpArch,
    rng: RngStream,
    diag: RoundDiagnostics | None = None,
) -> ServerState:
    """One aggregation step; returns the next server state."""
    if strategy.needs_unlabeled() and unlabeled is None:
        raise ConfigError(f"{strategy.kind.value} requires an unlabeled server pool")
    avg = weighted_average(clients)
    buffer = state.momentum_buffer

    if strategy.kind is StrategyKind.FEDAVG:
        new_global = avg
    elif strategy.kind is StrategyKind.FEDAVGM:
        # Momentum on the pseudo-gradient delta = old - avg, unit server step.
        # new = old - (beta*buf + delta) simplifies to avg - beta*buf, which
        # keeps momentum=0 bitwise-identical to FedAvg.
        new_global = avg - strategy.server_momentum * buffer
        buffer = strategy.server_momentum * buffer + (state.global_weights - avg)
    else:
        model_set, teacher = _distill_teacher(strategy, clients, unlabeled, arch, rng)
        if diag is not None:
            diag.model_set = model_set
            diag.teacher = teacher
            if strategy.kind is StrategyKind.FEDBE:
                n_fixed = int(strategy.include_avg) + (
                    len(clients) if strategy.include_clients else 0
                )
                diag.sample_models = model_set[n_fixed:]
        sgd_cfg = SgdConfig(
            step_size=strategy.distill_step_size,
            momentum=strategy.distill_momentum,
            weight_decay=0.0,
            prox_mu=0.0,
            batch_size=strategy.distill_batch_size,
        )
        if strategy.kind is StrategyKind.VDISTILL:
            new_global = distill_sgd(
                avg, arch, teacher, strategy.sgd_distill_epochs, sgd_cfg, rng
            )
        else:
            new_global = distill_swa(avg, arch, teacher, strategy.swa_schedule(), sgd_cfg, rng)

    return ServerState(new_global, buffer, state.round_index + 1)
