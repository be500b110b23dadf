"""Synthetic sparse-indicator survival data for Cox and Fine-Gray benchmarks.

Covariates are i.i.d. Bernoulli(density) indicators; true coefficients are
standard normal with probability ``1 - beta_sparsity`` and zero otherwise.
Event times are exponential with rate ``exp(x'beta)``.  Competing-risk data
follow the unit-exponential mixture design for the primary cause, with
competing coefficients ``-beta1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataset import SurvivalDataset


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    density: float = 0.05
    beta_sparsity: float = 0.80
    p_mix: float = 0.5
    seed: int = 0
    censoring_quantile: float | None = None

    def __post_init__(self):
        if self.n < 0 or self.p < 0:
            raise ValueError("n and p must be nonnegative")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        if not 0.0 <= self.beta_sparsity <= 1.0:
            raise ValueError("beta_sparsity must lie in [0, 1]")
        if not 0.0 < self.p_mix <= 1.0:
            raise ValueError("p_mix must lie in (0, 1]")
        if self.censoring_quantile is not None and not 0.0 < self.censoring_quantile <= 1.0:
            raise ValueError("censoring_quantile must lie in (0, 1]")


def _streams(seed: int):
    # independent generators for design, coefficients and outcomes
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def simulate_indicators(n: int, p: int, density: float, rng: np.random.Generator) -> sp.csc_matrix:
    """Column-by-column Bernoulli(density) indicator matrix in CSC form."""
    indptr = np.zeros(p + 1, dtype=np.int64)
    rows = []
    for j in range(p):
        nz = np.flatnonzero(rng.random(n) < density)
        rows.append(nz)
        indptr[j + 1] = indptr[j] + nz.size
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return sp.csc_matrix((np.ones(indices.size), indices, indptr), shape=(n, p))


def draw_beta(p: int, beta_sparsity: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(p) >= beta_sparsity
    return rng.standard_normal(p) * keep


def _censor(t: np.ndarray, quantile: float | None):
    if quantile is None:
        return t, np.ones(t.size, dtype=np.int64)
    cut = np.quantile(t, quantile)
    return np.minimum(t, cut), (t <= cut).astype(np.int64)


def simulate_cox(config: SimConfig, beta=None, X=None):
    """Return ``(dataset, true_beta)``; ``beta``/``X`` override the random draws."""
    rx, rb, rt = _streams(config.seed)
    X = simulate_indicators(config.n, config.p, config.density, rx) if X is None else sp.csc_matrix(X)
    beta = draw_beta(config.p, config.beta_sparsity, rb) if beta is None else np.asarray(beta, float)
    rate = np.exp(X @ beta)
    t = rt.exponential(size=config.n) / rate
    y, delta = _censor(t, config.censoring_quantile)
    return SurvivalDataset.from_arrays(y, delta, X), beta


def primary_probability(xb1, p_mix: float) -> np.ndarray:
    """P(cause 1 | x) = 1 - (1 - p)^exp(x'beta1), the CIF at t = infinity."""
    return 1.0 - (1.0 - p_mix) ** np.exp(xb1)


def primary_cif(t, xb1, p_mix: float):
    return 1.0 - (1.0 - p_mix * (1.0 - np.exp(-np.asarray(t, float)))) ** np.exp(xb1)


def primary_time_given_cause(uniform, xb1, p_mix: float) -> np.ndarray:
    """Inverse of the cause-1 conditional CDF ``CIF(t) / CIF(inf)``."""
    p1 = primary_probability(xb1, p_mix)
    inner = 1.0 - (1.0 - uniform * p1) ** np.exp(-xb1)
    return -np.log1p(-inner / p_mix)


def simulate_finegray(config: SimConfig, beta1=None, X=None):
    """Return ``(dataset, true_beta1, true_beta2)`` with ``beta2 = -beta1``."""
    rx, rb, rt = _streams(config.seed)
    X = simulate_indicators(config.n, config.p, config.density, rx) if X is None else sp.csc_matrix(X)
    beta1 = draw_beta(config.p, config.beta_sparsity, rb) if beta1 is None else np.asarray(beta1, float)
    beta2 = -beta1
    xb1 = X @ beta1
    xb2 = X @ beta2
    cause1 = rt.random(config.n) < primary_probability(xb1, config.p_mix)
    u = rt.random(config.n)
    e = rt.exponential(size=config.n)
    t = np.where(cause1, primary_time_given_cause(u, xb1, config.p_mix), e / np.exp(xb2))
    y, observed = _censor(t, config.censoring_quantile)
    status = np.where(observed == 1, np.where(cause1, 1, 2), 0)
    return SurvivalDataset.from_arrays(y, status, X), beta1, beta2
