"""Global-model distributions fitted to client weights, and sampling from them.

Two constructions are supported: a diagonal Gaussian fitted with
data-size-weighted mean and variance, and a Dirichlet over convex
combinations of the client weight vectors. Either yields a set of global
models for Bayesian model ensembling.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .checkpoint import save_vector
from .errors import ConfigError, ShapeError
from .nn_core import MlpArch
from .rng import RngStream


class PosteriorKind(str, Enum):
    GAUSSIAN = "gaussian"
    DIRICHLET = "dirichlet"


@dataclass
class ClientWeightSet:
    """Parameter vectors uploaded by participating clients, with |D_i| sizes."""

    weights: list[np.ndarray]
    data_sizes: list[int]

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.data_sizes):
            raise ShapeError(
                f"{len(self.weights)} weight vectors but {len(self.data_sizes)} sizes"
            )
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        dim = self.weights[0].shape
        if any(w.shape != dim for w in self.weights):
            raise ShapeError("client weight vectors have mismatched lengths")
        if any(s <= 0 for s in self.data_sizes):
            raise ShapeError(f"data sizes must be positive, got {self.data_sizes}")

    def __len__(self) -> int:
        return len(self.weights)

    def size_fractions(self) -> np.ndarray:
        sizes = np.asarray(self.data_sizes, dtype=np.float64)
        return sizes / sizes.sum()


@dataclass
class GaussianPosterior:
    mu: np.ndarray
    sigma_diag: np.ndarray

    def __post_init__(self) -> None:
        if self.mu.shape != self.sigma_diag.shape:
            raise ShapeError("mu and sigma_diag lengths differ")
        if np.any(self.sigma_diag < 0):
            raise ShapeError("sigma_diag entries must be nonnegative")


@dataclass
class DirichletPosterior:
    alpha: np.ndarray
    clients: ClientWeightSet

    def __post_init__(self) -> None:
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if len(self.alpha) != len(self.clients):
            raise ShapeError(
                f"{len(self.alpha)} alphas for {len(self.clients)} clients"
            )
        if np.any(self.alpha <= 0):
            raise ShapeError("Dirichlet alphas must be positive")


def weighted_average(clients: ClientWeightSet) -> np.ndarray:
    """Data-size-weighted elementwise average of client weights."""
    fractions = clients.size_fractions()
    out = np.zeros_like(clients.weights[0])
    for frac, w in zip(fractions, clients.weights):
        out += frac * w
    return out


def fit_gaussian(clients: ClientWeightSet) -> GaussianPosterior:
    """Diagonal Gaussian with size-weighted mean and size-weighted variance."""
    mu = weighted_average(clients)
    sigma = np.zeros_like(mu)
    for frac, w in zip(clients.size_fractions(), clients.weights):
        diff = w - mu
        sigma += frac * diff * diff
    return GaussianPosterior(mu, sigma)


def sample_gaussian(post: GaussianPosterior, rng: RngStream) -> np.ndarray:
    z = rng.normals(len(post.mu))
    return post.mu + np.sqrt(post.sigma_diag) * z


def sample_dirichlet_weights(post: DirichletPosterior, rng: RngStream) -> np.ndarray:
    """Combination coefficients lambda_i = gamma_i*|D_i| / sum(gamma*|D|)."""
    gamma = rng.dirichlet(post.alpha)
    sizes = np.asarray(post.clients.data_sizes, dtype=np.float64)
    scaled = gamma * sizes
    return scaled / scaled.sum()


def sample_dirichlet_model(post: DirichletPosterior, rng: RngStream) -> np.ndarray:
    """Convex combination of client weights; lies in their per-coordinate hull."""
    lam = sample_dirichlet_weights(post, rng)
    out = np.zeros_like(post.clients.weights[0])
    for coeff, w in zip(lam, post.clients.weights):
        out += coeff * w
    return out


def build_model_set(
    clients: ClientWeightSet,
    kind: PosteriorKind,
    samples: int,
    include_avg: bool,
    include_clients: bool,
    rng: RngStream,
    dirichlet_alpha: float = 0.5,
) -> list[np.ndarray]:
    """Model set for ensembling, in deterministic order: average, clients, samples."""
    if samples < 0:
        raise ConfigError(f"sample count must be >= 0, got {samples}")
    if samples == 0 and not include_avg and not include_clients:
        raise ConfigError("model set would be empty: no samples and both flags off")
    models: list[np.ndarray] = []
    if include_avg:
        models.append(weighted_average(clients))
    if include_clients:
        models.extend(clients.weights)
    if samples > 0:
        if kind is PosteriorKind.GAUSSIAN:
            post = fit_gaussian(clients)
            models.extend(sample_gaussian(post, rng) for _ in range(samples))
        else:
            post = DirichletPosterior(np.full(len(clients), dirichlet_alpha), clients)
            models.extend(sample_dirichlet_model(post, rng) for _ in range(samples))
    return models


def save_gaussian_posterior(
    post: GaussianPosterior, arch: MlpArch, mu_path: str | Path, var_path: str | Path
) -> None:
    """Two FBE1 checkpoints (mean and diagonal variance) for offline inspection."""
    save_vector(mu_path, arch, post.mu)
    save_vector(var_path, arch, post.sigma_diag)
