"""Multi-round simulation driver, monitoring harness, and one-round study.

Every stochastic choice draws from a stream keyed by (seed, purpose, round,
client-or-sample index), so a run is a pure function of its configuration:
identical configs produce byte-identical metrics and checkpoints, and
observation (monitoring, evaluation cadence) cannot perturb training.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_vector
from .config import CsvDatasetSpec, ExperimentConfig, resolved_text
from .data import (
    LabeledDataset,
    UnlabeledDataset,
    generate_swiss_roll,
    partition,
    read_labeled_csv,
    split_pool_indices,
)
from .ensemble_distill import ensemble_predict, make_pseudo_set
from .errors import ConfigError, NumericError
from .fed_algorithms import (
    RoundDiagnostics,
    ServerState,
    StrategyKind,
    client_update,
    local_lr,
    server_round,
)
from .metrics import accuracy, confidence_histogram, mean_counts, write_confidence_hist_csv
from .nn_core import MlpArch, flatten, forward, init_model, unflatten
from .posterior import ClientWeightSet, build_model_set
from .rng import derive

METRICS_HEADER = "round,global_acc,ensemble_acc,teacher_acc,mean_client_acc,wall_ms"


@dataclass
class RoundRecord:
    """Metrics for one evaluated round (accuracies on the held-out test set)."""

    round: int
    global_test_acc: float
    ensemble_test_acc: float | None
    teacher_pseudo_acc: float | None
    mean_client_acc: float
    wall_ms: int


@dataclass
class PreparedData:
    clients: list[LabeledDataset]
    unlabeled: UnlabeledDataset | None
    unlabeled_labels: np.ndarray | None  # held privately for diagnostics only
    test: LabeledDataset


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Generate/load the dataset, carve off the server pool, partition clients."""
    if isinstance(cfg.dataset, CsvDatasetSpec):
        classes = cfg.dataset.class_count or cfg.arch.class_count
        train = read_labeled_csv(cfg.dataset.train_path, classes)
        test = read_labeled_csv(cfg.dataset.test_path, classes)
    else:
        train, test = generate_swiss_roll(cfg.dataset)
    if train.features.shape[1] != cfg.arch.input_dim:
        raise ConfigError(
            f"dataset has {train.features.shape[1]} features but the architecture "
            f"expects {cfg.arch.input_dim}"
        )
    if train.class_count != cfg.arch.class_count:
        raise ConfigError(
            f"dataset has {train.class_count} classes but the architecture "
            f"outputs {cfg.arch.class_count}"
        )
    if cfg.server_pool_fraction > 0.0:
        pool_seed = cfg.partition.seed  # reuse the partition seed family
        client_idx, server_idx = split_pool_indices(
            len(train), cfg.server_pool_fraction, pool_seed
        )
        unlabeled = UnlabeledDataset(train.features[server_idx])
        unlabeled_labels = train.labels[server_idx].copy()
        pool = train.subset(client_idx)
    else:
        unlabeled, unlabeled_labels, pool = None, None, train
    clients = partition(pool, cfg.partition)
    return PreparedData(clients, unlabeled, unlabeled_labels, test)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _record_line(rec: RoundRecord, with_timings: bool) -> str:
    return ",".join(
        [
            str(rec.round),
            _fmt(rec.global_test_acc),
            _fmt(rec.ensemble_test_acc),
            _fmt(rec.teacher_pseudo_acc),
            _fmt(rec.mean_client_acc),
            _fmt(rec.wall_ms) if with_timings else "",
        ]
    )


def _test_accuracy(weights: np.ndarray, arch: MlpArch, test: LabeledDataset) -> float:
    return accuracy(forward(unflatten(weights, arch), test.features), test.labels)


def _run(cfg: ExperimentConfig, monitor_samples: int | None) -> list[RoundRecord]:
    prepared = prepare_data(cfg)
    if cfg.strategy.needs_unlabeled() and prepared.unlabeled is None:
        raise ConfigError(f"{cfg.strategy.kind.value} requires an unlabeled server pool")
    arch = cfg.arch
    state = ServerState.initial(flatten(init_model(arch, derive(cfg.seed, "init"))))
    sample_size = math.ceil(cfg.participation_fraction * cfg.client_count)

    out_dir = cfg.output_dir
    metrics_fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out_dir / "metrics.csv", "w")
        metrics_fh.write(METRICS_HEADER + "\n")
        metrics_fh.flush()

    records: list[RoundRecord] = []
    last_clients: ClientWeightSet | None = None
    last_samples: list[np.ndarray] | None = None
    try:
        for r in range(cfg.rounds):
            started = time.perf_counter()
            try:
                sampled = sorted(derive(cfg.seed, "sample", r).choose(cfg.client_count, sample_size))
                weights, sizes, participant_ids = [], [], []
                for i in sampled:
                    data_i = prepared.clients[i]
                    if len(data_i) == 0:
                        continue
                    if cfg.hetero_max_epochs > 0:
                        u = derive(cfg.seed, "hetero", r, i).uniform()
                        effective_epochs = cfg.hetero_max_epochs * (1.0 - u)
                    else:
                        effective_epochs = float(cfg.client_cfg.local_epochs)
                    if cfg.lr_round_decay:
                        step_size = local_lr(r, cfg.rounds, cfg.client_cfg.base_step_size)
                    else:
                        step_size = cfg.client_cfg.base_step_size
                    weights.append(
                        client_update(
                            state.global_weights,
                            arch,
                            data_i,
                            cfg.client_cfg,
                            effective_epochs,
                            step_size,
                            derive(cfg.seed, "client", r, i),
                        )
                    )
                    sizes.append(len(data_i))
                    participant_ids.append(i)
                if not weights:
                    raise ConfigError(f"round {r}: no sampled client has any data")
                clients_set = ClientWeightSet(weights, sizes)
                diag = RoundDiagnostics()
                state = server_round(
                    state,
                    clients_set,
                    cfg.strategy,
                    prepared.unlabeled,
                    arch,
                    derive(cfg.seed, "server", r),
                    diag=diag,
                )
            except NumericError as exc:
                raise NumericError(f"round {r}: {exc}") from exc

            last_clients = clients_set
            if diag.sample_models:
                last_samples = diag.sample_models

            if cfg.dump_teacher and diag.teacher is not None and out_dir is not None:
                teacher_path = out_dir / f"teacher_r{r + 1}.csv"
                _write_teacher_csv(teacher_path, diag.teacher.features, diag.teacher.soft_targets)

            if (r + 1) % cfg.eval_every == 0 or r == cfg.rounds - 1:
                ensemble_acc = None
                if diag.model_set:
                    ensemble_acc = accuracy(
                        ensemble_predict(diag.model_set, arch, UnlabeledDataset(prepared.test.features)),
                        prepared.test.labels,
                    )
                elif monitor_samples is not None:
                    monitor_set = build_model_set(
                        clients_set,
                        cfg.strategy.posterior_kind,
                        monitor_samples,
                        cfg.strategy.include_avg,
                        cfg.strategy.include_clients,
                        derive(cfg.seed, "monitor", r),
                        dirichlet_alpha=cfg.strategy.dirichlet_alpha,
                    )
                    last_samples = monitor_set
                    ensemble_acc = accuracy(
                        ensemble_predict(monitor_set, arch, UnlabeledDataset(prepared.test.features)),
                        prepared.test.labels,
                    )
                teacher_acc = None
                if diag.teacher is not None and prepared.unlabeled_labels is not None:
                    teacher_acc = accuracy(diag.teacher.soft_targets, prepared.unlabeled_labels)
                rec = RoundRecord(
                    round=r + 1,
                    global_test_acc=_test_accuracy(state.global_weights, arch, prepared.test),
                    ensemble_test_acc=ensemble_acc,
                    teacher_pseudo_acc=teacher_acc,
                    mean_client_acc=float(
                        np.mean([_test_accuracy(w, arch, prepared.test) for w in weights])
                    ),
                    wall_ms=int((time.perf_counter() - started) * 1000),
                )
                records.append(rec)
                if metrics_fh is not None:
                    metrics_fh.write(_record_line(rec, cfg.record_timings) + "\n")
                    metrics_fh.flush()
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    if out_dir is not None:
        save_vector(out_dir / "final.fbe1", arch, state.global_weights)
        _write_histograms(out_dir, cfg, state, last_clients, last_samples, prepared)
        (out_dir / "config.resolved").write_text(resolved_text(cfg))
    return records


def _write_teacher_csv(path: Path, features: np.ndarray, targets: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d, c = features.shape[1], targets.shape[1]
        writer.writerow([f"x{i}" for i in range(d)] + [f"p{j}" for j in range(c)])
        for feat_row, target_row in zip(features, targets):
            writer.writerow([repr(float(v)) for v in feat_row]
                            + [repr(float(v)) for v in target_row])


def _write_histograms(
    out_dir: Path,
    cfg: ExperimentConfig,
    state: ServerState,
    clients: ClientWeightSet | None,
    samples: list[np.ndarray] | None,
    prepared: PreparedData,
) -> None:
    """Final-round confidence histograms on the test set, per model tag."""
    arch, test = cfg.arch, prepared.test
    entries = []

    def add(tag: str, weights: np.ndarray) -> None:
        hist = confidence_histogram(forward(unflatten(weights, arch), test.features), test.labels)
        entries.append((tag, hist.bin_edges, hist.correct_counts, hist.incorrect_counts))

    add("global", state.global_weights)
    if clients is not None:
        client_hists = []
        for i, w in enumerate(clients.weights):
            probs = forward(unflatten(w, arch), test.features)
            client_hists.append(confidence_histogram(probs, test.labels))
            h = client_hists[-1]
            entries.append((f"client_{i}", h.bin_edges, h.correct_counts, h.incorrect_counts))
        edges, corr, inc = mean_counts(client_hists)
        entries.append(("client_mean", edges, corr, inc))
    if samples:
        sample_hists = []
        for i, w in enumerate(samples):
            probs = forward(unflatten(w, arch), test.features)
            sample_hists.append(confidence_histogram(probs, test.labels))
            h = sample_hists[-1]
            entries.append((f"sample_{i}", h.bin_edges, h.correct_counts, h.incorrect_counts))
        edges, corr, inc = mean_counts(sample_hists)
        entries.append(("sample_mean", edges, corr, inc))
    write_confidence_hist_csv(out_dir / "confidence_hist.csv", entries)


def run_experiment(cfg: ExperimentConfig) -> list[RoundRecord]:
    """Full multi-round simulation; writes outputs when output_dir is set."""
    return _run(cfg, monitor_samples=None)


def monitor_bayesian_ensemble(cfg: ExperimentConfig, samples: int = 10) -> list[RoundRecord]:
    """FedAvg run that also scores the posterior ensemble each evaluated round.

    Observation draws from its own stream family, so the global-model
    trajectory is identical to a plain run with the same config.
    """
    if cfg.strategy.kind is not StrategyKind.FEDAVG:
        raise ConfigError("monitoring requires the fedavg strategy")
    return _run(cfg, monitor_samples=samples)


@dataclass
class OneRoundResult:
    """Test accuracies after one communication round with long local training."""

    weight_avg: float
    client_ensemble: float
    client_ensemble_sgd: float
    client_ensemble_swa: float
    bayes_ensemble: float
    bayes_ensemble_sgd: float
    bayes_ensemble_swa: float

    def rows(self) -> list[tuple[str, str, float]]:
        return [
            ("weight_average", "none", self.weight_avg),
            ("client_ensemble", "none", self.client_ensemble),
            ("client_ensemble", "sgd", self.client_ensemble_sgd),
            ("client_ensemble", "swa", self.client_ensemble_swa),
            ("bayes_ensemble", "none", self.bayes_ensemble),
            ("bayes_ensemble", "sgd", self.bayes_ensemble_sgd),
            ("bayes_ensemble", "swa", self.bayes_ensemble_swa),
        ]


def run_one_round_study(cfg: ExperimentConfig, local_epochs_long: int = 200) -> OneRoundResult:
    """Train clients once with many epochs, then compare aggregation rules.

    Weight average, the plain client ensemble, and the posterior-sampled
    ensemble are each evaluated directly and after SGD / SWA distillation
    into a single model initialized at the weight average.
    """
    from dataclasses import replace as _replace

    from .ensemble_distill import distill_sgd, distill_swa
    from .nn_core import SgdConfig
    from .posterior import weighted_average

    prepared = prepare_data(cfg)
    if prepared.unlabeled is None:
        raise ConfigError("the one-round study needs an unlabeled server pool")
    arch = cfg.arch
    init = flatten(init_model(arch, derive(cfg.seed, "init")))
    weights, sizes = [], []
    for i in range(cfg.client_count):
        data_i = prepared.clients[i]
        if len(data_i) == 0:
            continue
        weights.append(
            client_update(
                init,
                arch,
                data_i,
                cfg.client_cfg,
                float(local_epochs_long),
                cfg.client_cfg.base_step_size,
                derive(cfg.seed, "client", 0, i),
            )
        )
        sizes.append(len(data_i))
    clients_set = ClientWeightSet(weights, sizes)
    avg = weighted_average(clients_set)

    strategy = cfg.strategy
    test_pool = UnlabeledDataset(prepared.test.features)
    client_models = list(clients_set.weights)
    bayes_models = build_model_set(
        clients_set,
        strategy.posterior_kind,
        strategy.samples,
        strategy.include_avg,
        strategy.include_clients,
        derive(cfg.seed, "one-round-sample"),
        dirichlet_alpha=strategy.dirichlet_alpha,
    )

    distill_cfg = SgdConfig(
        step_size=strategy.distill_step_size,
        momentum=strategy.distill_momentum,
        weight_decay=0.0,
        prox_mu=0.0,
        batch_size=strategy.distill_batch_size,
    )

    def ensemble_acc(models: list[np.ndarray]) -> float:
        return accuracy(ensemble_predict(models, arch, test_pool), prepared.test.labels)

    def distilled_accs(models: list[np.ndarray], tag: int) -> tuple[float, float]:
        teacher = make_pseudo_set(models, arch, prepared.unlabeled, strategy.sharpen_power)
        w_sgd = distill_sgd(
            avg, arch, teacher, strategy.sgd_distill_epochs, distill_cfg,
            derive(cfg.seed, "one-round-distill-sgd", tag),
        )
        w_swa = distill_swa(
            avg, arch, teacher, strategy.swa_schedule(), distill_cfg,
            derive(cfg.seed, "one-round-distill-swa", tag),
        )
        return (
            _test_accuracy(w_sgd, arch, prepared.test),
            _test_accuracy(w_swa, arch, prepared.test),
        )

    client_sgd, client_swa = distilled_accs(client_models, 0)
    bayes_sgd, bayes_swa = distilled_accs(bayes_models, 1)
    result = OneRoundResult(
        weight_avg=_test_accuracy(avg, arch, prepared.test),
        client_ensemble=ensemble_acc(client_models),
        client_ensemble_sgd=client_sgd,
        client_ensemble_swa=client_swa,
        bayes_ensemble=ensemble_acc(bayes_models),
        bayes_ensemble_sgd=bayes_sgd,
        bayes_ensemble_swa=bayes_swa,
    )
    if cfg.output_dir is not None:
        out_dir = Path(cfg.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "one_round.csv", "w") as fh:
            fh.write("method,distill,accuracy\n")
            for method, distill, acc in result.rows():
                fh.write(f"{method},{distill},{_fmt(acc)}\n")
        (out_dir / "config.resolved").write_text(resolved_text(cfg))
    return result
