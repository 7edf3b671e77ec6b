import numpy as np
import pytest

from fedbench.data import LabeledDataset, UnlabeledDataset
from fedbench.ensemble_distill import SwaSchedule
from fedbench.errors import CapacityError, ConfigError
from fedbench.fed_algorithms import (
    ClientConfig,
    RoundDiagnostics,
    ServerState,
    ServerStrategy,
    StrategyKind,
    client_update,
    local_lr,
    planned_steps,
    server_round,
)
from fedbench.nn_core import MlpArch, SgdConfig, flatten, forward, loss_and_grad, sgd_step, unflatten
from fedbench.posterior import ClientWeightSet, PosteriorKind, weighted_average
from fedbench.rng import derive

ARCH = MlpArch((2, 4, 3))


def random_vec(seed: int, arch: MlpArch = ARCH) -> np.ndarray:
    return np.random.default_rng(seed).normal(scale=0.5, size=arch.param_count())


def small_dataset(seed: int, n: int = 30) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    return LabeledDataset(rng.normal(size=(n, 2)), rng.integers(0, 3, size=n), 3)


def make_clients(n: int, seed: int = 0) -> ClientWeightSet:
    return ClientWeightSet([random_vec(seed + i) for i in range(n)],
                           [10 * (i + 1) for i in range(n)])


class TestLocalLr:
    def test_plateau_values(self):
        assert local_lr(0, 40, 0.01) == 0.01
        assert local_lr(12, 40, 0.01) == pytest.approx(0.001, rel=1e-12)
        assert local_lr(24, 40, 0.01) == pytest.approx(0.0001, rel=1e-12)

    def test_boundary_below(self):
        assert local_lr(11, 40, 0.01) == 0.01

    def test_base_scaling(self):
        for r in (0, 15, 30):
            assert local_lr(r, 40, 0.02) == pytest.approx(2 * local_lr(r, 40, 0.01), rel=1e-12)

    def test_range_check(self):
        with pytest.raises(ConfigError):
            local_lr(40, 40, 0.01)


class TestPlannedSteps:
    def test_contract(self):
        assert planned_steps(2, 320, 40) == 16
        assert planned_steps(2.0, 100, 40) == 6      # ceil(100/40)=3 per epoch
        assert planned_steps(0.5, 40, 40) == 1
        assert planned_steps(0.1, 100, 40) == 1
        assert planned_steps(20, 7, 40) == 20


class TestClientUpdate:
    def test_zero_step_size_returns_global(self):
        g = random_vec(1)
        out = client_update(g, ARCH, small_dataset(2), ClientConfig(), 2, 0.0, derive(1, "c"))
        np.testing.assert_array_equal(out, g)

    def test_prox_zero_matches_reference_loop(self):
        # Independent reference loop that contains no proximal code at all.
        g = random_vec(3)
        data = small_dataset(4)
        cfg = ClientConfig(local_epochs=2, weight_decay=0.01, prox_mu=0.0, batch_size=8)
        out = client_update(g, ARCH, data, cfg, 2, 0.05, derive(2, "c"))

        onehot = np.zeros((len(data), 3))
        onehot[np.arange(len(data)), data.labels] = 1.0
        sgd_cfg = SgdConfig(step_size=0.05, momentum=cfg.momentum,
                            weight_decay=cfg.weight_decay, batch_size=8)
        model = unflatten(g, ARCH)
        buf = np.zeros(ARCH.param_count())
        rng = derive(2, "c")
        done = 0
        while done < 8:  # ceil(2 * ceil(30/8)) = 8
            order = rng.permutation(len(data))
            for start in range(0, len(data), 8):
                if done >= 8:
                    break
                idx = order[start:start + 8]
                _, grad = loss_and_grad(model, data.features[idx], onehot[idx], None, sgd_cfg)
                model, buf = sgd_step(model, buf, grad, sgd_cfg)
                done += 1
        np.testing.assert_array_equal(out, flatten(model))

    def test_prox_dominated_limit(self):
        # Step size in the stable regime for the 1e6 proximal curvature;
        # a wrong-sign or wrong-anchor prox gradient diverges here.
        g = random_vec(5)
        data = small_dataset(6)
        cfg = ClientConfig(prox_mu=1e6, batch_size=8)
        out = client_update(g, ARCH, data, cfg, 2, 1e-6, derive(3, "c"))
        assert np.max(np.abs(out - g)) < 1e-3
        plain = client_update(g, ARCH, data, ClientConfig(prox_mu=0.0, batch_size=8),
                              2, 1e-6, derive(3, "c"))
        assert not np.array_equal(out, plain)

    def test_empty_dataset(self):
        empty = LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 3)
        with pytest.raises(CapacityError):
            client_update(random_vec(7), ARCH, empty, ClientConfig(), 2, 0.01, derive(4, "c"))

    def test_deterministic(self):
        g = random_vec(9)
        data = small_dataset(10)
        a = client_update(g, ARCH, data, ClientConfig(), 2, 0.05, derive(5, "c"))
        b = client_update(g, ARCH, data, ClientConfig(), 2, 0.05, derive(5, "c"))
        np.testing.assert_array_equal(a, b)


class TestServerRoundAveraging:
    def test_fedavg_single_client_identity(self):
        clients = ClientWeightSet([random_vec(11)], [25])
        state = ServerState.initial(random_vec(12))
        out = server_round(state, clients, ServerStrategy(StrategyKind.FEDAVG),
                           None, ARCH, derive(6, "s"))
        np.testing.assert_array_equal(out.global_weights, clients.weights[0])
        assert out.round_index == 1

    def test_fedavgm_zero_momentum_equals_fedavg(self):
        clients = make_clients(3, seed=20)
        state_a = ServerState.initial(random_vec(13))
        state_m = ServerState.initial(random_vec(13))
        for r in range(5):
            out_a = server_round(state_a, clients, ServerStrategy(StrategyKind.FEDAVG),
                                 None, ARCH, derive(7, "s", r))
            out_m = server_round(state_m, clients,
                                 ServerStrategy(StrategyKind.FEDAVGM, server_momentum=0.0),
                                 None, ARCH, derive(7, "s", r))
            np.testing.assert_array_equal(out_a.global_weights, out_m.global_weights)
            state_a, state_m = out_a, out_m

    def test_fedavgm_momentum_formula(self):
        clients = make_clients(2, seed=30)
        g0 = random_vec(14)
        buf0 = np.random.default_rng(15).normal(size=ARCH.param_count())
        state = ServerState(g0, buf0, 0)
        beta = 0.7
        out = server_round(state, clients, ServerStrategy(StrategyKind.FEDAVGM, server_momentum=beta),
                           None, ARCH, derive(8, "s"))
        avg = weighted_average(clients)
        np.testing.assert_allclose(out.global_weights, avg - beta * buf0, atol=1e-15)
        np.testing.assert_allclose(out.momentum_buffer, beta * buf0 + (g0 - avg), atol=1e-15)


class TestServerRoundDistillation:
    def test_missing_pool_raises(self):
        clients = make_clients(2)
        state = ServerState.initial(random_vec(16))
        for kind in (StrategyKind.VDISTILL, StrategyKind.FEDBE):
            with pytest.raises(ConfigError):
                server_round(state, clients, ServerStrategy(kind), None, ARCH, derive(9, "s"))

    def test_vdistill_teacher_is_exactly_clients(self):
        clients = make_clients(3, seed=40)
        state = ServerState.initial(random_vec(17))
        pool = UnlabeledDataset(np.random.default_rng(18).normal(size=(32, 2)))
        diag = RoundDiagnostics()
        strategy = ServerStrategy(StrategyKind.VDISTILL, sgd_distill_epochs=1,
                                  distill_batch_size=16)
        server_round(state, clients, strategy, pool, ARCH, derive(10, "s"), diag=diag)
        assert len(diag.model_set) == 3
        for got, want in zip(diag.model_set, clients.weights):
            np.testing.assert_array_equal(got, want)

    def test_fedbe_self_distillation_fixed_point(self):
        # Teacher degenerates to the average's own (unsharpened) predictions.
        clients = make_clients(3, seed=50)
        state = ServerState.initial(random_vec(19))
        pool = UnlabeledDataset(np.random.default_rng(20).normal(size=(48, 2)))
        strategy = ServerStrategy(
            StrategyKind.FEDBE,
            samples=0,
            include_avg=True,
            include_clients=False,
            sharpen_power=None,
            swa=SwaSchedule(eta_high=1e-2, eta_low=4e-3, cycle_len=3, collect_after=0,
                            epochs=4, batch_size=16),
        )
        out = server_round(state, clients, strategy, pool, ARCH, derive(11, "s"))
        avg = weighted_average(clients)
        assert np.max(np.abs(out.global_weights - avg)) < 1e-8

    def test_fedbe_model_set_composition(self):
        clients = make_clients(4, seed=60)
        state = ServerState.initial(random_vec(21))
        pool = UnlabeledDataset(np.random.default_rng(22).normal(size=(32, 2)))
        diag = RoundDiagnostics()
        strategy = ServerStrategy(
            StrategyKind.FEDBE,
            posterior_kind=PosteriorKind.DIRICHLET,
            samples=5,
            swa=SwaSchedule(cycle_len=2, collect_after=0, epochs=2, batch_size=16),
        )
        server_round(state, clients, strategy, pool, ARCH, derive(12, "s"), diag=diag)
        assert len(diag.model_set) == 1 + 4 + 5
        assert len(diag.sample_models) == 5
        assert diag.teacher is not None and len(diag.teacher) == 32

    def test_round_index_and_state_shapes(self):
        clients = make_clients(2, seed=70)
        pool = UnlabeledDataset(np.random.default_rng(23).normal(size=(16, 2)))
        state = ServerState.initial(random_vec(24))
        for kind in StrategyKind:
            strategy = ServerStrategy(
                kind, samples=2, sgd_distill_epochs=1, distill_batch_size=8,
                swa=SwaSchedule(cycle_len=2, collect_after=0, epochs=1, batch_size=8),
            )
            out = server_round(state, clients, strategy, pool, ARCH, derive(13, "s"))
            assert out.round_index == 1
            assert out.global_weights.shape == state.global_weights.shape
            assert out.momentum_buffer.shape == state.momentum_buffer.shape

    def test_deterministic(self):
        clients = make_clients(3, seed=80)
        pool = UnlabeledDataset(np.random.default_rng(25).normal(size=(24, 2)))
        state = ServerState.initial(random_vec(26))
        strategy = ServerStrategy(
            StrategyKind.FEDBE, samples=4,
            swa=SwaSchedule(cycle_len=2, collect_after=0, epochs=2, batch_size=8),
        )
        a = server_round(state, clients, strategy, pool, ARCH, derive(14, "s"))
        b = server_round(state, clients, strategy, pool, ARCH, derive(14, "s"))
        np.testing.assert_array_equal(a.global_weights, b.global_weights)
