"""Repeated k-fold cross-validation of the penalty strength, and bootstrap intervals."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ccd import FitConfig, FitResult, PenaltySpec, fit
from .dataset import SurvivalDataset
from .engine import COX, EngineState
from .errors import BootstrapError, EmptyFoldError, SurvScanError

log = logging.getLogger(__name__)

# strength used to pin penalized coefficients at zero while fitting exempt ones
_PIN_AT_ZERO = 1e300


@dataclass(frozen=True)
class CVConfig:
    folds: int = 10
    repetitions: int = 10
    grid: tuple | None = None
    seed: int = 0
    parallel_replicates: int = 1
    grid_points: int = 10
    grid_ratio: float = 1e-3

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.parallel_replicates < 1:
            raise ValueError("parallel_replicates must be >= 1")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float)
            if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
                raise ValueError("grid must be nonempty, positive and strictly ascending")
            object.__setattr__(self, "grid", tuple(float(v) for v in g))


@dataclass
class CVResult:
    grid: np.ndarray
    mean_loglik: np.ndarray
    sd_loglik: np.ndarray
    n_evaluations: np.ndarray
    selected_value: float
    final_fit: FitResult
    failed_replicates: int = 0
    penalty_kind: str = "l1"
    per_replicate: np.ndarray = field(default=None, repr=False)


def fold_assignment(status, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Random fold labels with event rows dealt first, round-robin.

    Every fold gets at least one event when there are at least ``folds``
    events, and fold sizes differ by at most one.
    """
    status = np.asarray(status)
    ev = np.flatnonzero(status == 1)
    rest = np.flatnonzero(status != 1)
    order = np.concatenate([rng.permutation(ev), rng.permutation(rest)])
    labels = np.empty(status.size, dtype=np.int64)
    labels[order] = np.arange(status.size) % folds
    return labels


def replicate_rng(seed: int, grid_index: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, grid_index, rep]))


def heldout_loglik(train_beta: np.ndarray, heldout: SurvivalDataset, model: str, plan) -> float:
    """Partial / pseudo log-likelihood of the held-out rows alone at ``train_beta``.

    For Fine-Gray the censoring curve is re-estimated on the held-out rows.
    """
    if heldout.n_events == 0:
        return 0.0
    state = EngineState(heldout, model, plan, beta=train_beta)
    return state.log_likelihood()


def gamma_max(dataset: SurvivalDataset, model: str = COX, exempt=frozenset(),
              config: FitConfig | None = None) -> float:
    """Smallest l1 strength at which every penalized coefficient stays at zero."""
    config = config or FitConfig()
    exempt = frozenset(exempt)
    pin = PenaltySpec("l1", _PIN_AT_ZERO, exempt)
    beta = fit(dataset, model, pin, config).beta if exempt else np.zeros(dataset.p)
    state = EngineState(dataset, model, config.plan, beta=beta)
    free = [j for j in range(dataset.p) if j not in exempt]
    if not free:
        return 0.0
    return max(abs(state.grad_hessian(j).gradient) for j in free)


def default_grid(dataset, model, penalty_kind, exempt, fit_config, cv_config) -> np.ndarray:
    if penalty_kind == "l1":
        top = gamma_max(dataset, model, exempt, fit_config)
        if top <= 0:
            top = 1.0
        return np.logspace(np.log10(top * cv_config.grid_ratio), np.log10(top), cv_config.grid_points)
    # l2 prior variances; there is no analogue of gamma_max
    return np.logspace(-3, 3, cv_config.grid_points)


def _run_replicate(dataset, model, penalty, fit_config, cv_config, grid_index, rep):
    rng = replicate_rng(cv_config.seed, grid_index, rep)
    labels = fold_assignment(dataset.status, cv_config.folds, rng)
    plan = fit_config.plan
    out = np.empty(cv_config.folds)
    for k in range(cv_config.folds):
        test = np.flatnonzero(labels == k)
        train = np.flatnonzero(labels != k)
        train_ds = dataset.take(train)
        if train_ds.n_events == 0:
            raise EmptyFoldError(f"training split for fold {k} has no events")
        res = fit(train_ds, model, penalty, fit_config)
        out[k] = heldout_loglik(res.beta, dataset.take(test), model, plan)
    return out


def cross_validate(dataset: SurvivalDataset, model: str = COX, penalty_kind: str = "l1",
                   cv_config: CVConfig | None = None, fit_config: FitConfig | None = None,
                   exempt=frozenset()) -> CVResult:
    """Pick the strength maximizing mean held-out log-likelihood over folds x repetitions.

    Replicate ``(grid_index, rep)`` draws its partition from a generator
    seeded by ``(seed, grid_index, rep)``, so results do not depend on
    ``parallel_replicates``.
    """
    cv_config = cv_config or CVConfig()
    fit_config = fit_config or FitConfig()
    if penalty_kind not in ("l1", "l2"):
        raise ValueError("cross-validation needs an l1 or l2 penalty")
    if cv_config.folds > dataset.n:
        raise ValueError("more folds than observations")
    if dataset.n_events < cv_config.folds:
        raise EmptyFoldError(f"{dataset.n_events} events cannot populate {cv_config.folds} folds")
    exempt = frozenset(exempt)
    if cv_config.grid is None:
        grid = default_grid(dataset, model, penalty_kind, exempt, fit_config, cv_config)
    else:
        grid = np.asarray(cv_config.grid, dtype=float)

    tasks = [(gi, rep) for gi in range(grid.size) for rep in range(cv_config.repetitions)]

    def run(task):
        gi, rep = task
        pen = PenaltySpec(penalty_kind, float(grid[gi]), exempt)
        try:
            return _run_replicate(dataset, model, pen, fit_config, cv_config, gi, rep)
        except EmptyFoldError:
            raise
        except SurvScanError as exc:
            log.warning("replicate grid=%d rep=%d failed: %s", gi, rep, exc)
            return None

    if cv_config.parallel_replicates > 1:
        with ThreadPoolExecutor(max_workers=cv_config.parallel_replicates,
                                thread_name_prefix="survscan-cv") as pool:
            outs = list(pool.map(run, tasks))
    else:
        outs = [run(t) for t in tasks]

    per = np.full((grid.size, cv_config.repetitions, cv_config.folds), np.nan)
    failed = 0
    for (gi, rep), vals in zip(tasks, outs):
        if vals is None:
            failed += 1
        else:
            per[gi, rep] = vals
    flat = per.reshape(grid.size, -1)
    counts = np.sum(~np.isnan(flat), axis=1)
    if np.any(counts == 0):
        raise SurvScanError("every replicate failed for at least one grid value")
    mean = np.nanmean(flat, axis=1)
    sd = np.array([np.std(r[~np.isnan(r)], ddof=1) if np.sum(~np.isnan(r)) > 1 else 0.0 for r in flat])
    best = int(np.argmax(mean))
    selected = float(grid[best])
    final = fit(dataset, model, PenaltySpec(penalty_kind, selected, exempt), fit_config)
    return CVResult(grid=grid, mean_loglik=mean, sd_loglik=sd, n_evaluations=counts,
                    selected_value=selected, final_fit=final, failed_replicates=failed,
                    penalty_kind=penalty_kind, per_replicate=per)


def bootstrap_interval(dataset: SurvivalDataset, model: str, penalty: PenaltySpec,
                       fit_config: FitConfig | None, coefficient_index: int, B: int = 1000,
                       seed: int = 0, level: float = 0.95, return_draws: bool = False):
    """Percentile interval for one coefficient from ``B`` subject-level resamples."""
    if B < 100:
        raise ValueError("need at least 100 bootstrap resamples")
    if not 0 <= coefficient_index < dataset.p:
        raise IndexError(f"coefficient index {coefficient_index} out of range")
    fit_config = fit_config or FitConfig()
    draws = []
    failures = 0
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        rows = rng.integers(0, dataset.n, size=dataset.n)
        try:
            res = fit(dataset.take(rows), model, penalty, fit_config)
        except SurvScanError as exc:
            log.warning("bootstrap resample %d failed: %s", b, exc)
            failures += 1
            continue
        draws.append(res.beta[coefficient_index])
    if failures > 0.1 * B:
        raise BootstrapError(f"{failures} of {B} bootstrap fits failed")
    alpha = (1.0 - level) / 2.0
    draws = np.asarray(draws)
    lo, hi = np.percentile(draws, [100 * alpha, 100 * (1 - alpha)])
    if return_draws:
        return float(lo), float(hi), draws
    return float(lo), float(hi)

