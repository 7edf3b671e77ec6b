"""Experiment configuration: dataclasses, INI parsing, and the resolved echo.

The config file is flat key-value text with sections for the experiment,
dataset, architecture, partition, client training, strategy, and SWA
schedule; ``parse_config`` fills every omitted key with its default and
derives dataset/partition seeds from the master seed when absent, so a run
is a pure function of the file plus an optional seed override.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .data import PartitionKind, PartitionSpec, SwissRollSpec, read_labeled_csv
from .ensemble_distill import SwaSchedule
from .errors import ConfigError
from .fed_algorithms import ClientConfig, ServerStrategy, StrategyKind
from .nn_core import Activation, MlpArch
from .posterior import PosteriorKind
from .rng import derive_seed


@dataclass(frozen=True)
class CsvDatasetSpec:
    train_path: str
    test_path: str
    class_count: int | None = None


@dataclass
class ExperimentConfig:
    seed: int
    rounds: int
    client_count: int
    dataset: SwissRollSpec | CsvDatasetSpec
    partition: PartitionSpec
    arch: MlpArch
    client_cfg: ClientConfig
    strategy: ServerStrategy
    participation_fraction: float = 1.0
    server_pool_fraction: float = 0.2
    eval_every: int = 1
    hetero_max_epochs: float = 0.0
    lr_round_decay: bool = True
    output_dir: Path | None = None
    dump_teacher: bool = False
    record_timings: bool = False

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if not 0.0 < self.participation_fraction <= 1.0:
            raise ConfigError(
                f"participation_fraction must be in (0, 1], got {self.participation_fraction}"
            )
        if self.participation_fraction * self.client_count < 1.0 - 1e-12:
            raise ConfigError("participation_fraction * client_count must be >= 1")
        if not 0.0 <= self.server_pool_fraction < 1.0:
            raise ConfigError("server_pool_fraction must lie in [0, 1)")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.hetero_max_epochs < 0:
            raise ConfigError("hetero_max_epochs must be >= 0")
        if self.partition.client_count != self.client_count:
            raise ConfigError(
                f"partition is for {self.partition.client_count} clients, "
                f"experiment has {self.client_count}"
            )
        if self.strategy.needs_unlabeled() and self.server_pool_fraction == 0.0:
            raise ConfigError(
                f"{self.strategy.kind.value} needs an unlabeled pool; "
                "set server_pool_fraction > 0"
            )


def _enum_by_value(enum_cls, raw: str, what: str):
    try:
        return enum_cls(raw.strip().lower())
    except ValueError:
        valid = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"unknown {what} {raw!r}; expected one of: {valid}") from None


def _csv_class_count(spec: CsvDatasetSpec) -> int:
    if spec.class_count is not None:
        return spec.class_count
    train = read_labeled_csv(spec.train_path)
    test = read_labeled_csv(spec.test_path)
    return max(train.class_count, test.class_count)


def _csv_input_dim(spec: CsvDatasetSpec) -> int:
    with open(spec.train_path) as fh:
        header = fh.readline().strip().split(",")
    return len(header) - 1


def dataset_dims(dataset: SwissRollSpec | CsvDatasetSpec) -> tuple[int, int]:
    """(input_dim, class_count) for the configured dataset."""
    if isinstance(dataset, SwissRollSpec):
        return 2, dataset.class_count
    return _csv_input_dim(dataset), _csv_class_count(dataset)


def build_arch(dataset, hidden: tuple[int, ...], activation: Activation) -> MlpArch:
    d, c = dataset_dims(dataset)
    return MlpArch((d, *hidden, c), activation)


def parse_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    exp = parser["experiment"] if parser.has_section("experiment") else {}
    seed = seed_override if seed_override is not None else int(exp.get("seed", 0))
    client_count = int(exp.get("clients", 3))

    ds = parser["dataset"] if parser.has_section("dataset") else {}
    kind = ds.get("kind", "swiss_roll").strip().lower()
    if kind == "swiss_roll":
        dataset: SwissRollSpec | CsvDatasetSpec = SwissRollSpec(
            train_per_class=int(ds.get("train_per_class", 400)),
            test_per_class=int(ds.get("test_per_class", 200)),
            noise_sigma=float(ds.get("noise_sigma", 0.05)),
            turns=float(ds.get("turns", 1.5)),
            seed=int(ds["seed"]) if "seed" in ds else derive_seed(seed, "dataset"),
            class_count=int(ds.get("classes", 3)),
        )
    elif kind == "csv":
        if "train_path" not in ds or "test_path" not in ds:
            raise ConfigError("csv dataset needs train_path and test_path")
        dataset = CsvDatasetSpec(
            train_path=ds["train_path"],
            test_path=ds["test_path"],
            class_count=int(ds["classes"]) if "classes" in ds else None,
        )
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}; expected swiss_roll or csv")

    arch_sec = parser["arch"] if parser.has_section("arch") else {}
    hidden_raw = str(arch_sec.get("hidden", "32")).strip()
    hidden = tuple(int(h) for h in hidden_raw.split(",") if h.strip()) if hidden_raw else ()
    activation = _enum_by_value(Activation, arch_sec.get("activation", "relu"), "activation")
    arch = build_arch(dataset, hidden, activation)

    part = parser["partition"] if parser.has_section("partition") else {}
    partition = PartitionSpec(
        kind=_enum_by_value(PartitionKind, part.get("kind", "step"), "partition kind"),
        client_count=client_count,
        step_major_classes=int(part.get("major_classes", 1)),
        step_major_count=int(part.get("major_count", 0)),
        step_minor_count=int(part.get("minor_count", 0)),
        dirichlet_alpha=float(part.get("alpha", 0.1)),
        seed=int(part["seed"]) if "seed" in part else derive_seed(seed, "partition"),
    )

    cli = parser["client"] if parser.has_section("client") else {}
    client_cfg = ClientConfig(
        local_epochs=int(cli.get("epochs", 2)),
        base_step_size=float(cli.get("lr", 0.01)),
        momentum=float(cli.get("momentum", 0.9)),
        weight_decay=float(cli.get("weight_decay", 1e-4)),
        prox_mu=float(cli.get("prox_mu", 0.0)),
        batch_size=int(cli.get("batch_size", 40)),
    )

    swa_sec = parser["swa"] if parser.has_section("swa") else {}
    swa = SwaSchedule(
        eta_high=float(swa_sec.get("eta_high", 1e-3)),
        eta_low=float(swa_sec.get("eta_low", 4e-4)),
        cycle_len=int(swa_sec.get("cycle_len", 25)),
        collect_after=int(swa_sec.get("collect_after", 250)),
        epochs=int(swa_sec.get("epochs", 20)),
        batch_size=int(swa_sec.get("batch_size", 128)),
    )

    strat = parser["strategy"] if parser.has_section("strategy") else {}
    sharpen_raw = str(strat.get("sharpen_power", "2.0")).strip().lower()
    sharpen_power = None if sharpen_raw in ("off", "none", "0") else float(sharpen_raw)
    strategy = ServerStrategy(
        kind=_enum_by_value(StrategyKind, strat.get("kind", "fedavg"), "strategy kind"),
        server_momentum=float(strat.get("server_momentum", 0.9)),
        posterior_kind=_enum_by_value(
            PosteriorKind, strat.get("posterior", "gaussian"), "posterior kind"
        ),
        dirichlet_alpha=float(strat.get("alpha", 0.5)),
        samples=int(strat.get("samples", 10)),
        include_avg=_get_bool(strat, "include_avg", True),
        include_clients=_get_bool(strat, "include_clients", True),
        swa=swa,
        sgd_distill_epochs=int(strat.get("distill_epochs", 20)),
        distill_step_size=float(strat.get("distill_lr", 1e-3)),
        distill_momentum=float(strat.get("distill_momentum", 0.9)),
        distill_batch_size=int(strat.get("distill_batch", 128)),
        sharpen_power=sharpen_power,
    )

    out_raw = exp.get("output_dir", "") if exp else ""
    return ExperimentConfig(
        seed=seed,
        rounds=int(exp.get("rounds", 10)),
        client_count=client_count,
        dataset=dataset,
        partition=partition,
        arch=arch,
        client_cfg=client_cfg,
        strategy=strategy,
        participation_fraction=float(exp.get("participation", 1.0)),
        server_pool_fraction=float(exp.get("server_pool_fraction", 0.2)),
        eval_every=int(exp.get("eval_every", 1)),
        hetero_max_epochs=float(exp.get("hetero_max_epochs", 0.0)),
        lr_round_decay=_get_bool(cli, "lr_round_decay", True),
        output_dir=Path(out_raw) if out_raw else None,
    )


def swiss_reference_config(
    seed: int,
    kind: StrategyKind = StrategyKind.FEDAVG,
    rounds: int = 10,
    output_dir: Path | None = None,
) -> ExperimentConfig:
    """Desk-scale Swiss-roll reference: 3 clients, 80/10/10 Step split,
    two-layer MLP, Dirichlet posterior with alpha 0.5 and 10 samples.

    Calibrated so weight averaging lands mid-band while the sampled
    ensemble clears it: a narrow hidden layer makes the weight average
    brittle under client drift, and the flat round step size (no round
    decay over these 10 rounds) keeps clients diverged at the final round.
    Distillation uses a schedule scaled to the small pool.
    """
    dataset = SwissRollSpec(
        train_per_class=1600,
        test_per_class=500,
        noise_sigma=0.05,
        turns=0.7,
        seed=derive_seed(seed, "dataset"),
    )
    partition = PartitionSpec(
        kind=PartitionKind.STEP,
        client_count=3,
        step_major_classes=1,
        step_major_count=800,
        step_minor_count=100,
        seed=derive_seed(seed, "partition"),
    )
    arch = build_arch(dataset, (16,), Activation.RELU)
    client_cfg = ClientConfig(
        local_epochs=2,
        base_step_size=0.01,
        momentum=0.9,
        weight_decay=1e-4,
        prox_mu=0.0,
        batch_size=40,
    )
    swa = SwaSchedule(
        eta_high=4e-2,
        eta_low=1.6e-2,
        cycle_len=25,
        collect_after=250,
        epochs=20,
        batch_size=40,
    )
    strategy = ServerStrategy(
        kind=kind,
        server_momentum=0.9,
        posterior_kind=PosteriorKind.DIRICHLET,
        dirichlet_alpha=0.5,
        samples=10,
        include_avg=True,
        include_clients=True,
        swa=swa,
        sgd_distill_epochs=20,
        distill_step_size=4e-2,
        distill_momentum=0.9,
        distill_batch_size=40,
        sharpen_power=2.0,
    )
    return ExperimentConfig(
        seed=seed,
        rounds=rounds,
        client_count=3,
        dataset=dataset,
        partition=partition,
        arch=arch,
        client_cfg=client_cfg,
        strategy=strategy,
        participation_fraction=1.0,
        server_pool_fraction=0.2,
        eval_every=1,
        lr_round_decay=False,
        output_dir=output_dir,
    )


def swiss_one_round_config(seed: int, output_dir: Path | None = None) -> ExperimentConfig:
    """Swiss-roll setup for the one-round study (long local training).

    Ten small 80/10/10 clients: with 200 local epochs the committee of
    client models is informative while convex combinations of their
    weights stay functional, which is the regime the study compares.
    Sampling uses a sparse Dirichlet (alpha 0.1) over clients only.
    """
    dataset = SwissRollSpec(
        train_per_class=240,
        test_per_class=500,
        noise_sigma=0.05,
        turns=0.7,
        seed=derive_seed(seed, "dataset"),
    )
    partition = PartitionSpec(
        kind=PartitionKind.STEP,
        client_count=10,
        step_major_classes=1,
        step_major_count=32,
        step_minor_count=4,
        seed=derive_seed(seed, "partition"),
    )
    arch = build_arch(dataset, (64,), Activation.RELU)
    client_cfg = ClientConfig(
        local_epochs=200,
        base_step_size=0.01,
        momentum=0.9,
        weight_decay=1e-4,
        prox_mu=0.0,
        batch_size=128,
    )
    swa = SwaSchedule(
        eta_high=4e-2,
        eta_low=1.6e-2,
        cycle_len=10,
        collect_after=20,
        epochs=20,
        batch_size=40,
    )
    strategy = ServerStrategy(
        kind=StrategyKind.FEDBE,
        posterior_kind=PosteriorKind.DIRICHLET,
        dirichlet_alpha=0.1,
        samples=10,
        include_avg=False,
        include_clients=True,
        swa=swa,
        sgd_distill_epochs=20,
        distill_step_size=4e-2,
        distill_momentum=0.9,
        distill_batch_size=40,
        sharpen_power=2.0,
    )
    return ExperimentConfig(
        seed=seed,
        rounds=1,
        client_count=10,
        dataset=dataset,
        partition=partition,
        arch=arch,
        client_cfg=client_cfg,
        strategy=strategy,
        participation_fraction=1.0,
        server_pool_fraction=0.2,
        eval_every=1,
        lr_round_decay=False,
        output_dir=output_dir,
    )


def _get_bool(section, key: str, default: bool) -> bool:
    if key not in section:
        return default
    raw = str(section[key]).strip().lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean {key} = {raw!r}")


def resolved_text(cfg: ExperimentConfig) -> str:
    """Echo of every effective parameter in the config-file format."""
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "seed": str(cfg.seed),
        "rounds": str(cfg.rounds),
        "clients": str(cfg.client_count),
        "participation": repr(cfg.participation_fraction),
        "server_pool_fraction": repr(cfg.server_pool_fraction),
        "eval_every": str(cfg.eval_every),
        "hetero_max_epochs": repr(cfg.hetero_max_epochs),
        "output_dir": str(cfg.output_dir) if cfg.output_dir else "",
    }
    if isinstance(cfg.dataset, SwissRollSpec):
        parser["dataset"] = {
            "kind": "swiss_roll",
            "train_per_class": str(cfg.dataset.train_per_class),
            "test_per_class": str(cfg.dataset.test_per_class),
            "noise_sigma": repr(cfg.dataset.noise_sigma),
            "turns": repr(cfg.dataset.turns),
            "seed": str(cfg.dataset.seed),
            "classes": str(cfg.dataset.class_count),
        }
    else:
        parser["dataset"] = {
            "kind": "csv",
            "train_path": cfg.dataset.train_path,
            "test_path": cfg.dataset.test_path,
            "classes": str(cfg.dataset.class_count or ""),
        }
    parser["arch"] = {
        "hidden": ",".join(str(s) for s in cfg.arch.layer_sizes[1:-1]),
        "activation": cfg.arch.activation.value,
    }
    parser["partition"] = {
        "kind": cfg.partition.kind.value,
        "major_classes": str(cfg.partition.step_major_classes),
        "major_count": str(cfg.partition.step_major_count),
        "minor_count": str(cfg.partition.step_minor_count),
        "alpha": repr(cfg.partition.dirichlet_alpha),
        "seed": str(cfg.partition.seed),
    }
    parser["client"] = {
        "epochs": str(cfg.client_cfg.local_epochs),
        "lr": repr(cfg.client_cfg.base_step_size),
        "momentum": repr(cfg.client_cfg.momentum),
        "weight_decay": repr(cfg.client_cfg.weight_decay),
        "prox_mu": repr(cfg.client_cfg.prox_mu),
        "batch_size": str(cfg.client_cfg.batch_size),
        "lr_round_decay": str(cfg.lr_round_decay).lower(),
    }
    strat = cfg.strategy
    parser["strategy"] = {
        "kind": strat.kind.value,
        "server_momentum": repr(strat.server_momentum),
        "posterior": strat.posterior_kind.value,
        "alpha": repr(strat.dirichlet_alpha),
        "samples": str(strat.samples),
        "include_avg": str(strat.include_avg).lower(),
        "include_clients": str(strat.include_clients).lower(),
        "sharpen_power": repr(strat.sharpen_power) if strat.sharpen_power else "off",
        "distill_epochs": str(strat.sgd_distill_epochs),
        "distill_lr": repr(strat.distill_step_size),
        "distill_momentum": repr(strat.distill_momentum),
        "distill_batch": str(strat.distill_batch_size),
    }
    swa = strat.swa_schedule()
    parser["swa"] = {
        "eta_high": repr(swa.eta_high),
        "eta_low": repr(swa.eta_low),
        "cycle_len": str(swa.cycle_len),
        "collect_after": str(swa.collect_after),
        "epochs": str(swa.epochs),
        "batch_size": str(swa.batch_size),
    }
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in parser[section].items())
        lines.append("")
    return "\n".join(lines)
