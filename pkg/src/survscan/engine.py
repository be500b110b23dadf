"""Linear-time Cox / Fine-Gray log-likelihood, coordinate gradient and Hessian.

With rows sorted by decreasing time the Cox risk-set sums are prefix sums
of ``exp(X beta)``, and the Fine-Gray competing part adds suffix sums of the
IPCW-weighted terms.  One coordinate evaluation does a single chunked pass:
scan the tuple ``(e, e*x, e*x**2)``, form ``G`` and ``H`` at each tied block's
last row, and reduce the event-weighted ``G`` and ``H - G**2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .censoring import IPCWVectors, build_ipcw
from .dataset import SurvivalDataset
from .errors import DomainError, ExpOverflowError, InvalidColumn, NonPositiveDenominator
from .scan_core import (
    ChunkPlan,
    fused_block_reduce,
    partially_fused_block_reduce,
    prefix_scan,
    reduce_sum,
    run_chunks,
    separated_block_reduce,
    suffix_scan,
)

COX = "cox"
FINEGRAY = "finegray"
MODELS = (COX, FINEGRAY)
PATHS = ("fused", "partial", "unfused")

EXP_SAFE_BOUND = 700.0


@dataclass(frozen=True)
class GradHess:
    gradient: float
    hessian: float
    fixed_term: float


def precompute_fixed_terms(dataset: SurvivalDataset) -> np.ndarray:
    """``delta' X_j`` for every column; constant throughout the fit."""
    mask = dataset.event_mask
    return np.array([c.dot(mask) for c in dataset.columns], dtype=np.float64)


class EngineState:
    """Running linear predictor, its exponential, and model constants for one fit.

    Not thread-safe; give each concurrent fit its own state.
    """

    def __init__(self, dataset: SurvivalDataset, model: str = COX, plan: ChunkPlan | None = None,
                 beta=None, ipcw: IPCWVectors | None = None, path: str = "fused",
                 recompute_interval: int = 100):
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
        if path not in PATHS:
            raise ValueError(f"unknown evaluation path {path!r}")
        if model == COX and dataset.n_competing:
            raise DomainError("status 2 (competing event) is only valid for the Fine-Gray model")
        self.dataset = dataset
        self.model = model
        self.plan = plan or ChunkPlan.default()
        self.path = path
        self.recompute_interval = recompute_interval
        self.ipcw = None
        if model == FINEGRAY:
            self.ipcw = ipcw if ipcw is not None else build_ipcw(dataset)
        self.fixed_terms = precompute_fixed_terms(dataset)
        self._ptr: dict[int, np.ndarray] = {}
        self.steps_since_refresh = 0
        self.set_beta(np.zeros(dataset.p) if beta is None else beta)

    @property
    def has_suffix(self) -> bool:
        return self.ipcw is not None and self.ipcw.has_competing

    def set_beta(self, beta) -> None:
        """Recompute ``X beta`` and its exponential from scratch."""
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != (self.dataset.p,):
            raise ValueError("beta has the wrong length")
        xb = np.zeros(self.dataset.n)
        for j, c in enumerate(self.dataset.columns):
            if beta[j] != 0.0:
                xb[c.indices] += c.entry_values * beta[j]
        if np.any(np.abs(xb) > EXP_SAFE_BOUND):
            raise ExpOverflowError(f"|X beta| exceeds {EXP_SAFE_BOUND}")
        self.xbeta = xb
        self.exp_xbeta = np.exp(xb)
        self.steps_since_refresh = 0

    def refresh_exp(self) -> None:
        self.exp_xbeta = np.exp(self.xbeta)
        self.steps_since_refresh = 0

    def _column(self, j: int):
        if not 0 <= j < self.dataset.p:
            raise InvalidColumn(f"column {j} out of range for p={self.dataset.p}")
        return self.dataset.columns[j]

    def update_xbeta_sparse(self, j: int, delta: float) -> None:
        """Add ``delta * X_j`` to the linear predictor, touching nonzero rows only."""
        if delta == 0.0:
            return
        if not np.isfinite(delta):
            raise ValueError("non-finite coordinate update")
        col = self._column(j)
        idx = col.indices
        if col.is_indicator:
            new = self.xbeta[idx] + delta
        else:
            new = self.xbeta[idx] + col.values * delta
        if new.size and np.max(np.abs(new)) > EXP_SAFE_BOUND:
            raise ExpOverflowError(f"|X beta| would exceed {EXP_SAFE_BOUND} after updating column {j}")
        self.xbeta[idx] = new
        if col.is_indicator:
            self.exp_xbeta[idx] *= np.exp(delta)
        else:
            self.exp_xbeta[idx] = np.exp(new)
        self.steps_since_refresh += 1
        if self.recompute_interval and self.steps_since_refresh >= self.recompute_interval:
            self.refresh_exp()

    # -- evaluation -------------------------------------------------------------------

    def _weights(self):
        if self.has_suffix:
            return self.ipcw.u, self.ipcw.g_at_event
        return None, None

    def _chunk_ptr(self, j: int, col) -> np.ndarray:
        ptr = self._ptr.get(j)
        if ptr is None:
            n, chunk = self.dataset.n, self.plan.chunk_size
            starts = np.minimum(np.arange(self.plan.n_chunks(n) + 1, dtype=np.int64) * chunk, n)
            ptr = np.searchsorted(col.indices, starts).astype(np.int64)
            self._ptr[j] = ptr
        return ptr

    def dense_lanes(self, j: int) -> np.ndarray:
        """Materialized ``(e, e*x, e*x*x)`` for column j."""
        x = self._column(j).to_dense()
        e = self.exp_xbeta
        b = e * x
        return np.vstack([e, b, b * x])

    def _sums(self, j: int, path: str):
        col = self._column(j)
        ds = self.dataset
        u, g = self._weights()
        if path == "unfused":
            return separated_block_reduce(self.dense_lanes(j), ds.block_event_weight, self.plan, u, g)
        if path == "partial":
            return partially_fused_block_reduce(self.dense_lanes(j), ds.block_event_weight, self.plan, u, g)
        n = ds.n
        if n == 0:
            return 0.0, 0.0
        has_u = u is not None
        if not has_u:
            u = g = np.zeros(0)
        chunk = self.plan.chunk_size
        nch = self.plan.n_chunks(n)
        ptr = self._chunk_ptr(j, col)
        val = np.zeros(0) if col.is_indicator else col.values
        ind = col.is_indicator
        ex, idx, bw = self.exp_xbeta, col.indices, ds.block_event_weight
        tot_f = np.zeros((3, nch))
        tot_b = np.zeros((3, nch))
        run_chunks(self.plan, nch, lambda a, b: K.sparse_fused_totals(
            ex, idx, val, ind, ptr, u, has_u, chunk, a, b, tot_f, tot_b))
        off_f = K.exclusive_offsets(tot_f, False)
        off_b = K.exclusive_offsets(tot_b, True)
        partial = np.zeros((2, nch))
        bad = run_chunks(self.plan, nch, lambda a, b: K.sparse_fused_apply(
            ex, idx, val, ind, ptr, bw, u, g, has_u, chunk, a, b, off_f, off_b, partial))
        if sum(bad):
            raise NonPositiveDenominator(
                f"{sum(bad)} risk-set denominator(s) <= 0 for column {j}; exp(X beta) under/overflow?"
            )
        gs, hs = K.sum_in_order(partial)
        return float(gs), float(hs)

    def grad_hessian(self, j: int, path: str | None = None) -> GradHess:
        """First and second derivative of the log-likelihood in ``beta_j``."""
        gs, hs = self._sums(j, path or self.path)
        fixed = float(self.fixed_terms[j])
        return GradHess(gradient=fixed - gs, hessian=-hs, fixed_term=fixed)

    def log_likelihood(self) -> float:
        """Cox log-partial or Fine-Gray log-pseudo likelihood at the current beta."""
        ds = self.dataset
        if ds.n_events == 0:
            return 0.0
        e = self.exp_xbeta
        bw = ds.block_event_weight
        m = bw != 0.0
        den = prefix_scan(e, self.plan)[m]
        if self.has_suffix:
            suf = suffix_scan(self.ipcw.u * e, self.plan)
            excl = np.append(suf[1:], 0.0)
            den = den + self.ipcw.g_at_event[m] * excl[m]
        if np.any(~(den > 0.0)):
            raise NonPositiveDenominator("risk-set denominator <= 0 in log-likelihood")
        linear = reduce_sum(ds.event_mask * self.xbeta, self.plan)
        return float(linear - np.dot(bw[m], np.log(den)))


def grad_hessian(state: EngineState, j: int, path: str | None = None) -> GradHess:
    return state.grad_hessian(j, path)


def log_likelihood(state: EngineState) -> float:
    return state.log_likelihood()


def update_xbeta_sparse(state: EngineState, j: int, delta: float) -> None:
    state.update_xbeta_sparse(j, delta)
