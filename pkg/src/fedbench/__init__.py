"""fedbench: deterministic federated-learning simulation bench."""

from .config import CsvDatasetSpec, ExperimentConfig, parse_config, swiss_reference_config
from .data import (
    LabeledDataset,
    PartitionKind,
    PartitionSpec,
    SwissRollSpec,
    UnlabeledDataset,
    generate_swiss_roll,
    partition,
    split_server_pool,
)
from .ensemble_distill import (
    PseudoLabeledDataset,
    SwaSchedule,
    distill_sgd,
    distill_swa,
    ensemble_predict,
    make_pseudo_set,
    sharpen,
)
from .fed_algorithms import (
    ClientConfig,
    ServerState,
    ServerStrategy,
    StrategyKind,
    client_update,
    local_lr,
    server_round,
)
from .metrics import accuracy, confidence_histogram
from .nn_core import (
    Activation,
    MlpArch,
    MlpModel,
    SgdConfig,
    flatten,
    forward,
    init_model,
    loss_and_grad,
    sgd_step,
    unflatten,
)
from .orchestrator import (
    OneRoundResult,
    RoundRecord,
    monitor_bayesian_ensemble,
    run_experiment,
    run_one_round_study,
)
from .posterior import (
    ClientWeightSet,
    DirichletPosterior,
    GaussianPosterior,
    PosteriorKind,
    build_model_set,
    fit_gaussian,
    sample_dirichlet_model,
    sample_gaussian,
    weighted_average,
)
from .rng import RngStream, derive, derive_seed

__version__ = "0.1.0"
