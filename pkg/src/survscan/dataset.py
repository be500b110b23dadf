"""Survival data storage: time-sorted outcomes plus a column-major sparse design.

Rows are kept in decreasing order of observed time (ties broken by original
row id) so that every risk set ``{r : y_r >= y_i}`` is a prefix of the arrays.
Covariate columns are stored dense, sparse-valued, or as bare index lists
when all nonzeros equal 1.
"""
from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataIndexError, DomainError, DuplicateEntryError, ParseError, SchemaError

SPARSE_DENSITY_THRESHOLD = 0.25

DENSE = "dense"
SPARSE = "sparse"
INDICATOR = "indicator"


@dataclass(frozen=True, eq=False)
class SparseColumn:
    kind: str
    n: int
    indices: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (DENSE, SPARSE, INDICATOR):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == DENSE:
            if self.values is None or self.values.shape != (self.n,):
                raise ValueError("dense column must hold exactly n values")
        else:
            idx = self.indices
            if idx.size and (idx[0] < 0 or idx[-1] >= self.n or np.any(np.diff(idx) <= 0)):
                raise ValueError("column indices must be strictly ascending within [0, n)")
            if self.kind == SPARSE and (self.values is None or self.values.shape != idx.shape):
                raise ValueError("sparse column needs one value per index")

    @classmethod
    def from_dense(cls, x: np.ndarray) -> "SparseColumn":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls.from_entries(x.size, nz, x[nz], dense=x)

    @classmethod
    def from_entries(cls, n: int, indices, values, dense=None) -> "SparseColumn":
        """Pick the storage kind for a column given its nonzero entries."""
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if n > 0 and indices.size / n >= SPARSE_DENSITY_THRESHOLD:
            if dense is None:
                dense = np.zeros(n)
                dense[indices] = values
            return cls(DENSE, n, np.arange(n, dtype=np.int64), np.ascontiguousarray(dense, dtype=np.float64))
        if np.all(values == 1.0):
            return cls(INDICATOR, n, np.ascontiguousarray(indices))
        return cls(SPARSE, n, np.ascontiguousarray(indices), np.ascontiguousarray(values))

    @property
    def is_indicator(self) -> bool:
        return self.kind == INDICATOR

    @property
    def nnz(self) -> int:
        if self.kind == DENSE:
            return int(np.count_nonzero(self.values))
        return int(self.indices.size)

    @cached_property
    def entry_values(self) -> np.ndarray:
        """Values aligned with ``indices`` (ones for indicator columns)."""
        if self.kind == INDICATOR:
            return np.ones(self.indices.size)
        return self.values

    def to_dense(self) -> np.ndarray:
        if self.kind == DENSE:
            return self.values.copy()
        out = np.zeros(self.n)
        out[self.indices] = self.entry_values
        return out

    def dot(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=np.float64)
        if self.kind == INDICATOR:
            return float(v[self.indices].sum())
        if self.kind == DENSE:
            return float(self.values @ v)
        return float(self.values @ v[self.indices])

    @property
    def nbytes(self) -> int:
        if self.kind == DENSE:
            return self.values.nbytes
        return self.indices.nbytes + (0 if self.values is None else self.values.nbytes)

    def equals(self, other: "SparseColumn") -> bool:
        if self.kind != other.kind or self.n != other.n:
            return False
        if self.kind == DENSE:
            return np.array_equal(self.values, other.values)
        if not np.array_equal(self.indices, other.indices):
            return False
        return self.kind == INDICATOR or np.array_equal(self.values, other.values)


def _sort_order(time: np.ndarray, row_id: np.ndarray) -> np.ndarray:
    # decreasing time, then ascending row id
    return np.lexsort((row_id, -time))


def _block_starts(time: np.ndarray) -> np.ndarray:
    n = time.size
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    breaks = np.flatnonzero(time[1:] != time[:-1]) + 1
    return np.concatenate(([0], breaks, [n])).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Immutable, time-sorted survival data.

    Attributes
    ----------
    time, status, row_id : ndarray
        Outcomes in decreasing-time order.  ``status`` is 0 (censored),
        1 (event of interest) or 2 (competing event).
    columns : tuple of SparseColumn
        Covariates, already permuted to the sorted row order.
    block_starts : ndarray
        Boundaries of maximal runs of equal time; block ``b`` spans rows
        ``block_starts[b]:block_starts[b+1]``.
    """

    time: np.ndarray
    status: np.ndarray
    row_id: np.ndarray
    columns: tuple
    names: tuple
    block_starts: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, time, status, X=None, row_id=None, names: Sequence[str] | None = None
                    ) -> "SurvivalDataset":
        """Validate, sort by decreasing time and compress covariate columns.

        ``X`` may be a dense ``(n, p)`` array, any scipy sparse matrix, or None.
        """
        time = np.asarray(time, dtype=np.float64).ravel()
        status_f = np.asarray(status, dtype=np.float64).ravel()
        n = time.size
        if status_f.size != n:
            raise ValueError("time and status must have the same length")
        if not np.all(np.isfinite(time)):
            raise ParseError("non-finite survival time")
        if np.any(time < 0):
            raise DomainError("survival times must be nonnegative")
        if not np.all(np.isin(status_f, (0.0, 1.0, 2.0))):
            bad = status_f[~np.isin(status_f, (0.0, 1.0, 2.0))][0]
            raise DomainError(f"status must be 0, 1 or 2 (got {bad:g})")
        status = status_f.astype(np.int8)
        row_id = np.arange(n, dtype=np.int64) if row_id is None else np.asarray(row_id, dtype=np.int64).ravel()
        if row_id.size != n:
            raise ValueError("row_id must have one entry per observation")
        order = _sort_order(time, row_id)

        if X is None:
            X = sp.csc_matrix((n, 0))
        if sp.issparse(X):
            X = sp.csc_matrix(X, dtype=np.float64)
            if X.shape[0] != n:
                raise ValueError("design matrix row count does not match outcomes")
            if X.nnz and not np.all(np.isfinite(X.data)):
                raise ParseError("non-finite covariate value")
            Xs = X[order, :].tocsc()
            Xs.eliminate_zeros()
            Xs.sort_indices()
            cols = tuple(
                SparseColumn.from_entries(n, Xs.indices[Xs.indptr[j]:Xs.indptr[j + 1]],
                                          Xs.data[Xs.indptr[j]:Xs.indptr[j + 1]])
                for j in range(Xs.shape[1])
            )
        else:
            X = np.asarray(X, dtype=np.float64)
            if X.ndim == 1:
                X = X.reshape(-1, 1)
            if X.shape[0] != n:
                raise ValueError("design matrix row count does not match outcomes")
            if not np.all(np.isfinite(X)):
                raise ParseError("non-finite covariate value")
            Xs = X[order]
            cols = tuple(SparseColumn.from_dense(Xs[:, j]) for j in range(X.shape[1]))

        p = len(cols)
        if names is None:
            names = tuple(f"x{j}" for j in range(p))
        names = tuple(str(s) for s in names)
        if len(names) != p:
            raise ValueError("need one name per covariate column")
        ts = np.ascontiguousarray(time[order])
        return cls(ts, np.ascontiguousarray(status[order]), np.ascontiguousarray(row_id[order]),
                   cols, names, _block_starts(ts))

    # -- basic shape ------------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.time.size)

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def nnz(self) -> int:
        return sum(c.nnz for c in self.columns)

    @property
    def n_blocks(self) -> int:
        return int(self.block_starts.size - 1)

    @cached_property
    def n_events(self) -> int:
        return int(np.count_nonzero(self.status == 1))

    @cached_property
    def n_competing(self) -> int:
        return int(np.count_nonzero(self.status == 2))

    @cached_property
    def event_mask(self) -> np.ndarray:
        return (self.status == 1).astype(np.float64)

    @cached_property
    def block_event_weight(self) -> np.ndarray:
        """Count of status-1 rows per tied block, placed on each block's last row."""
        from .scan_core import block_event_weights
        return block_event_weights(self.event_mask, self.block_starts)

    @cached_property
    def block_end(self) -> np.ndarray:
        """For every row, the index of the last row of its tied block."""
        sizes = np.diff(self.block_starts)
        return np.repeat(self.block_starts[1:] - 1, sizes)

    @property
    def nbytes(self) -> int:
        outcome = self.time.nbytes + self.status.nbytes + self.row_id.nbytes + self.block_starts.nbytes
        return outcome + sum(c.nbytes for c in self.columns)

    def column(self, j: int) -> SparseColumn:
        return self.columns[j]

    # -- conversions ------------------------------------------------------------

    def to_csc(self) -> sp.csc_matrix:
        indptr = np.zeros(self.p + 1, dtype=np.int64)
        idx, vals = [], []
        for j, c in enumerate(self.columns):
            if c.kind == DENSE:
                nz = np.flatnonzero(c.values)
                idx.append(nz)
                vals.append(c.values[nz])
            else:
                idx.append(c.indices)
                vals.append(c.entry_values)
            indptr[j + 1] = indptr[j] + idx[-1].size
        if self.p:
            indices = np.concatenate(idx)
            data = np.concatenate(vals)
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0)
        return sp.csc_matrix((data, indices, indptr), shape=(self.n, self.p))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.p))
        for j, c in enumerate(self.columns):
            out[:, j] = c.to_dense()
        return out

    def take(self, positions) -> "SurvivalDataset":
        """New dataset from rows at ``positions`` of this (sorted) dataset.

        Repeated positions are allowed (bootstrap); in that case the rows get
        fresh ids ``0..m-1`` in the order given.
        """
        positions = np.asarray(positions, dtype=np.int64)
        unique = np.unique(positions).size == positions.size
        row_id = self.row_id[positions] if unique else np.arange(positions.size)
        X = self.to_csc().tocsr()[positions, :]
        return SurvivalDataset.from_arrays(self.time[positions], self.status[positions], X,
                                           row_id=row_id, names=self.names)

    def with_times(self, time) -> "SurvivalDataset":
        """Same rows with replaced times (re-sorted)."""
        return SurvivalDataset.from_arrays(time, self.status, self.to_csc(), self.row_id, self.names)

    def equals(self, other: "SurvivalDataset") -> bool:
        return (
            np.array_equal(self.time, other.time)
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.row_id, other.row_id)
            and np.array_equal(self.block_starts, other.block_starts)
            and self.names == other.names
            and self.p == other.p
            and all(a.equals(b) for a, b in zip(self.columns, other.columns))
        )

    def fingerprint(self) -> dict:
        h = hashlib.sha256()
        for arr in (self.time, self.status, self.row_id):
            h.update(np.ascontiguousarray(arr).tobytes())
        csc = self.to_csc()
        for arr in (csc.indptr.astype(np.int64), csc.indices.astype(np.int64), csc.data):
            h.update(np.ascontiguousarray(arr).tobytes())
        return {"rows": self.n, "columns": self.p, "nonzeros": int(csc.nnz),
                "events": self.n_events, "competing": self.n_competing,
                "sha256": h.hexdigest()}


def sort_and_block(dataset: SurvivalDataset) -> SurvivalDataset:
    """Canonical decreasing-time order with tied blocks; idempotent."""
    return SurvivalDataset.from_arrays(dataset.time, dataset.status, dataset.to_csc(),
                                       dataset.row_id, dataset.names)


# -- file formats -------------------------------------------------------------------


def _loadtxt(source, what: str) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            arr = np.loadtxt(source, delimiter=",", comments="#", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"malformed numeric field in {what}: {exc}") from exc
    if arr.size and not np.all(np.isfinite(arr)):
        raise ParseError(f"missing or non-finite value in {what}")
    return arr


def _as_ids(col: np.ndarray, what: str) -> np.ndarray:
    if np.any(col != np.round(col)):
        raise ParseError(f"non-integer id in {what}")
    return col.astype(np.int64)


def load_dense_csv(path, time_col: str = "time", status_col: str = "status") -> SurvivalDataset:
    """Read a header-first CSV; every column other than time/status is a covariate."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        body = fh.read()
    for col in (time_col, status_col):
        if col not in header:
            raise SchemaError(f"{path}: missing required column {col!r}")
    arr = _loadtxt(io.StringIO(body), str(path))
    if arr.size == 0:
        arr = np.zeros((0, len(header)))
    if arr.shape[1] != len(header):
        raise ParseError(f"{path}: rows have {arr.shape[1]} fields, header has {len(header)}")
    ti, si = header.index(time_col), header.index(status_col)
    cov = [k for k in range(len(header)) if k not in (ti, si)]
    return SurvivalDataset.from_arrays(arr[:, ti], arr[:, si], arr[:, cov],
                                       names=[header[k] for k in cov])


def _shape_hint(path) -> int | None:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line.startswith("#"):
                break
            if line.lstrip("# ").startswith("shape:"):
                return int(line.split(":", 1)[1].split(",")[1])
    return None


def load_sparse_coo(obs_path, matrix_path) -> SurvivalDataset:
    """Read ``row_id,time,status`` and ``row_id,col_id,value`` files (zero-based ids)."""
    obs = _loadtxt(obs_path, str(obs_path))
    if obs.size == 0:
        obs = np.zeros((0, 3))
    if obs.shape[1] != 3:
        raise ParseError(f"{obs_path}: expected 3 fields per line (row_id,time,status)")
    trip = _loadtxt(matrix_path, str(matrix_path))
    if trip.size == 0:
        trip = np.zeros((0, 3))
    if trip.shape[1] != 3:
        raise ParseError(f"{matrix_path}: expected 3 fields per line (row_id,col_id,value)")

    row_id = _as_ids(obs[:, 0], str(obs_path))
    n = row_id.size
    if np.unique(row_id).size != n:
        raise DuplicateEntryError(f"{obs_path}: repeated row_id")
    if n and row_id.min() < 0:
        raise DataIndexError(f"{obs_path}: negative row_id")

    r = _as_ids(trip[:, 0], str(matrix_path))
    c = _as_ids(trip[:, 1], str(matrix_path))
    p_hint = _shape_hint(matrix_path)
    p = int(c.max()) + 1 if c.size else 0
    if p_hint is not None:
        if p > p_hint:
            raise DataIndexError(f"{matrix_path}: col_id {p - 1} beyond declared width {p_hint}")
        p = p_hint
    if c.size and c.min() < 0:
        raise DataIndexError(f"{matrix_path}: negative col_id")
    # map row ids to positions in the obs file
    order = np.argsort(row_id, kind="stable")
    pos = np.searchsorted(row_id[order], r)
    pos = np.minimum(pos, max(n - 1, 0))
    if r.size and (n == 0 or np.any(row_id[order][pos] != r)):
        missing = r[row_id[order][pos] != r] if n else r
        raise DataIndexError(f"{matrix_path}: row_id {int(missing[0])} not present in {obs_path}")
    rows = order[pos] if n else pos
    if r.size:
        key = rows.astype(np.int64) * max(p, 1) + c
        if np.unique(key).size != key.size:
            raise DuplicateEntryError(f"{matrix_path}: repeated (row_id, col_id) entry")
    X = sp.csc_matrix((trip[:, 2], (rows, c)), shape=(n, p))
    return SurvivalDataset.from_arrays(obs[:, 1], obs[:, 2], X, row_id=row_id)


def write_sparse_coo(dataset: SurvivalDataset, obs_path, matrix_path) -> None:
    """Write the two-file sparse format, rows in ascending row_id order."""
    order = np.argsort(dataset.row_id, kind="stable")
    obs = np.column_stack([dataset.row_id[order], dataset.time[order], dataset.status[order]])
    np.savetxt(obs_path, obs, fmt=["%d", "%.17g", "%d"], delimiter=",",
               header="row_id,time,status", comments="# ")
    coo = dataset.to_csc().tocsr()[order, :].tocoo()
    ordr = np.lexsort((coo.col, coo.row))
    trip = np.column_stack([dataset.row_id[order][coo.row[ordr]], coo.col[ordr], coo.data[ordr]])
    np.savetxt(matrix_path, trip.reshape(-1, 3), fmt=["%d", "%d", "%.17g"], delimiter=",",
               header=f"shape: {dataset.n},{dataset.p}\nrow_id,col_id,value", comments="# ")


def write_dense_csv(dataset: SurvivalDataset, path) -> None:
    order = np.argsort(dataset.row_id, kind="stable")
    body = np.column_stack([dataset.time[order], dataset.status[order], dataset.to_dense()[order]])
    fmt = ["%.17g", "%d"] + ["%.17g"] * dataset.p
    np.savetxt(path, body.reshape(-1, 2 + dataset.p), fmt=fmt, delimiter=",",
               header=",".join(["time", "status", *dataset.names]), comments="")
