"""Kaplan-Meier curve of the censoring distribution and IPCW factors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import DegenerateCurveError


@dataclass(frozen=True)
class CensoringCurve:
    """Step function ``G(t) = P(C > t)`` estimated by product-limit.

    ``survival_values[k]`` is the value on ``[jump_times[k], jump_times[k+1])``;
    before the first jump the curve is 1.
    """

    jump_times: np.ndarray
    survival_values: np.ndarray

    def __call__(self, t) -> np.ndarray:
        """Right-continuous value G(t)."""
        k = np.searchsorted(self.jump_times, np.asarray(t, dtype=np.float64), side="right")
        return np.concatenate(([1.0], self.survival_values))[k]

    def left_limit(self, t) -> np.ndarray:
        """G(t-), the value just before ``t``."""
        k = np.searchsorted(self.jump_times, np.asarray(t, dtype=np.float64), side="left")
        return np.concatenate(([1.0], self.survival_values))[k]


@dataclass(frozen=True)
class IPCWVectors:
    u: np.ndarray
    g_at_event: np.ndarray

    @property
    def has_competing(self) -> bool:
        return bool(np.any(self.u > 0))


def km_censoring(dataset: SurvivalDataset) -> CensoringCurve:
    """Product-limit estimate treating status 0 as the 'event'.

    At a time shared by failures and censorings, the failures are counted as
    happening first, so every subject with ``Y >= s`` is in the risk count.
    """
    if dataset.n == 0:
        raise ValueError("cannot estimate a censoring curve from an empty dataset")
    t = dataset.time[::-1]
    cens = dataset.status[::-1] == 0
    uniq, first = np.unique(t, return_index=True)
    n_at_risk = t.size - first
    d_cens = np.add.reduceat(cens.astype(np.int64), first)
    jumps = d_cens > 0
    factors = 1.0 - d_cens[jumps] / n_at_risk[jumps]
    surv = np.cumprod(factors)
    curve = CensoringCurve(uniq[jumps], surv)

    events = dataset.time[dataset.status == 1]
    if events.size and surv.size and np.any(curve.left_limit(events.max()) <= 0.0):
        raise DegenerateCurveError("censoring curve reaches 0 before the last event time")
    return curve


def build_ipcw(dataset: SurvivalDataset, curve: CensoringCurve | None = None) -> IPCWVectors:
    """Per-row factors ``u`` and ``g`` with ``w_r(Y_i) = g_i * u_r`` on the competing part.

    For a subject ``r`` who had the competing event before ``Y_i`` the IPCW
    weight is ``G(Y_i-) / G(Y_r-)``; ``g_i = G(Y_i-)`` depends only on the
    evaluation row and ``u_r = 1 / G(Y_r-)`` only on the contributing row, so
    the sum over such ``r`` is ``g_i`` times a suffix sum of ``u * exp(X beta)``.
    """
    if curve is None:
        curve = km_censoring(dataset)
    g = curve.left_limit(dataset.time)
    competing = dataset.status == 2
    if np.any(g[competing] <= 0.0) or np.any(g[dataset.status == 1] <= 0.0):
        raise DegenerateCurveError("censoring curve is 0 at an event time")
    u = np.zeros(dataset.n)
    u[competing] = 1.0 / g[competing]
    return IPCWVectors(u=u, g_at_event=g)
