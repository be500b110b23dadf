"""Cyclic coordinate descent with trust-region-limited one-dimensional Newton steps."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import SurvivalDataset
from .engine import COX, EngineState
from .errors import NonFiniteStep
from .scan_core import DEFAULT_CHUNK_SIZE, ChunkPlan, default_workers

PENALTIES = ("none", "l1", "l2")


@dataclass(frozen=True)
class PenaltySpec:
    """``l1``: subtract ``strength * |beta_j|``; ``l2``: subtract ``beta_j**2 / (2 * strength)``."""

    kind: str = "none"
    strength: float = 0.0
    exempt: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in PENALTIES:
            raise ValueError(f"unknown penalty {self.kind!r}")
        if self.kind == "l1" and not self.strength >= 0:
            raise ValueError("l1 strength must be >= 0")
        if self.kind == "l2" and not self.strength > 0:
            raise ValueError("l2 variance must be > 0")
        object.__setattr__(self, "exempt", frozenset(int(j) for j in self.exempt))

    def kind_for(self, j: int) -> str:
        return "none" if j in self.exempt else self.kind

    def validate(self, p: int) -> None:
        bad = [j for j in self.exempt if not 0 <= j < p]
        if bad:
            raise ValueError(f"exempt column(s) {sorted(bad)} out of range for p={p}")

    def value(self, beta: np.ndarray) -> float:
        """Amount subtracted from the log-likelihood."""
        if self.kind == "none" or beta.size == 0:
            return 0.0
        mask = np.ones(beta.size, dtype=bool)
        mask[list(self.exempt)] = False
        b = beta[mask]
        if self.kind == "l1":
            return float(self.strength * np.abs(b).sum()) if b.size else 0.0
        return float(np.dot(b, b) / (2.0 * self.strength))


@dataclass(frozen=True)
class FitConfig:
    tolerance: float = 1e-6
    max_cycles: int = 1000
    trust_init: float = 1.0
    recompute_interval: int = 100
    chunk_size: int = DEFAULT_CHUNK_SIZE
    threads: int | None = None
    path: str = "fused"

    def __post_init__(self):
        if not self.tolerance >= 0:
            raise ValueError("tolerance must be >= 0")
        if self.max_cycles < 0:
            raise ValueError("max_cycles must be >= 0")
        if not self.trust_init > 0:
            raise ValueError("trust_init must be positive")

    @property
    def plan(self) -> ChunkPlan:
        return ChunkPlan(self.chunk_size, self.threads or default_workers())


@dataclass
class FitResult:
    beta: np.ndarray
    objective: float
    log_likelihood: float
    cycles: int
    converged: bool
    objective_trace: list
    wall_time: float = 0.0
    gradient_time: float = 0.0
    skipped_steps: int = 0
    monotone_violations: int = 0
    model: str = COX
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    cycle_gradient_times: list = field(default_factory=list)

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.beta))


def newton_step(beta_j: float, gradient: float, hessian: float, kind: str, strength: float,
                halfwidth: float) -> tuple[float, float, float]:
    """One damped Newton update of a single coordinate.

    ``gradient``/``hessian`` are log-likelihood derivatives (hessian <= 0).
    Returns ``(new_beta_j, applied_step, new_halfwidth)``.
    """
    g, h = gradient, hessian
    if kind == "l2":
        g -= beta_j / strength
        h -= 1.0 / strength
    elif kind == "l1":
        if beta_j == 0.0:
            # directional derivatives of the negated objective: -g + s forward, g + s backward
            if g > strength:
                g -= strength
            elif g < -strength:
                g += strength
            else:
                g = 0.0
        else:
            g -= strength * math.copysign(1.0, beta_j)

    if g == 0.0:
        raw = 0.0
    elif not h < 0.0:
        raise NonFiniteStep(f"zero curvature with slope {g:g}")
    else:
        raw = -g / h
    applied = math.copysign(min(abs(raw), halfwidth), raw) if raw != 0.0 else 0.0
    new = beta_j + applied
    if kind == "l1" and beta_j != 0.0 and new != 0.0 and (new > 0.0) != (beta_j > 0.0):
        new = 0.0
        applied = -beta_j
    return new, applied, max(2.0 * abs(applied), halfwidth / 2.0)


def coordinate_step(state: EngineState, j: int, beta: np.ndarray, penalty: PenaltySpec,
                    halfwidth: float) -> tuple[float, float, float]:
    """Evaluate derivatives for ``beta[j]``, take a step and update the state in place."""
    gh = state.grad_hessian(j)
    kind = penalty.kind_for(j)
    new, applied, hw = newton_step(float(beta[j]), gh.gradient, gh.hessian, kind, penalty.strength, halfwidth)
    if applied != 0.0:
        state.update_xbeta_sparse(j, applied)
        beta[j] = new
    return new, applied, hw


def _converged(old: float, new: float, tol: float) -> bool:
    return abs(new - old) <= tol * max(abs(old), abs(new))


def fit(dataset: SurvivalDataset, model: str = COX, penalty: PenaltySpec | None = None,
        config: FitConfig | None = None, beta0=None, ipcw=None) -> FitResult:
    """Maximize the penalized (pseudo) partial likelihood by cyclic coordinate descent.

    Coordinates are visited in ascending order; a cycle ends the fit when the
    relative change of the penalized objective drops below ``tolerance``.
    """
    penalty = penalty or PenaltySpec()
    config = config or FitConfig()
    penalty.validate(dataset.p)
    t_start = time.perf_counter()
    p = dataset.p
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=np.float64)
    state = EngineState(dataset, model, config.plan, beta=beta, ipcw=ipcw, path=config.path,
                        recompute_interval=config.recompute_interval)
    ll = state.log_likelihood()
    obj = ll - penalty.value(beta)
    trace = [obj]
    result = FitResult(beta=beta, objective=obj, log_likelihood=ll, cycles=0, converged=p == 0,
                       objective_trace=trace, model=model, penalty=penalty)
    if p == 0:
        result.wall_time = time.perf_counter() - t_start
        return result

    hw = np.full(p, config.trust_init)
    for cycle in range(1, config.max_cycles + 1):
        gtime = 0.0
        for j in range(p):
            t0 = time.perf_counter()
            gh = state.grad_hessian(j)
            gtime += time.perf_counter() - t0
            try:
                new, applied, hw_j = newton_step(float(beta[j]), gh.gradient, gh.hessian,
                                                 penalty.kind_for(j), penalty.strength, hw[j])
            except NonFiniteStep:
                result.skipped_steps += 1
                continue
            if applied != 0.0:
                state.update_xbeta_sparse(j, applied)
                beta[j] = new
            hw[j] = hw_j
        result.gradient_time += gtime
        result.cycle_gradient_times.append(gtime)
        ll = state.log_likelihood()
        new_obj = ll - penalty.value(beta)
        trace.append(new_obj)
        if new_obj < obj - 1e-10:
            result.monotone_violations += 1
        result.cycles = cycle
        done = _converged(obj, new_obj, config.tolerance)
        obj = new_obj
        if done:
            result.converged = True
            break

    result.objective = obj
    result.log_likelihood = ll
    result.wall_time = time.perf_counter() - t_start
    return result
