import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from survscan.dataset import (DENSE, INDICATOR, SPARSE, SparseColumn, SurvivalDataset, load_dense_csv,
                              load_sparse_coo, sort_and_block, write_dense_csv, write_sparse_coo)
from survscan.errors import (DataIndexError, DomainError, DuplicateEntryError, ParseError,
                             SchemaError)
from survscan.simgen import SimConfig, simulate_cox, simulate_finegray


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_three_row_sort(tmp_path):
    f = write(tmp_path / "d.csv", "time,status,x\n1,1,0\n3,0,1\n2,1,0\n")
    ds = load_dense_csv(f)
    assert ds.time.tolist() == [3, 2, 1]
    assert ds.status.tolist() == [0, 1, 1]
    assert ds.to_dense()[:, 0].tolist() == [1, 0, 0]
    assert ds.names == ("x",)


def test_ties_form_blocks():
    ds = SurvivalDataset.from_arrays([2, 2, 1], [1, 1, 1])
    assert ds.block_starts.tolist() == [0, 2, 3]
    assert ds.n_blocks == 2


def test_tie_broken_by_row_id():
    ds = SurvivalDataset.from_arrays([1.0, 1.0, 1.0], [1, 0, 1], row_id=[5, 2, 9])
    assert ds.row_id.tolist() == [2, 5, 9]


def test_already_sorted_is_identity():
    ds = SurvivalDataset.from_arrays([5, 4, 3, 1], [1, 0, 1, 1], np.eye(4))
    assert ds.row_id.tolist() == [0, 1, 2, 3]
    assert sort_and_block(ds).equals(ds)


def test_status_domain(tmp_path):
    f = write(tmp_path / "d.csv", "time,status\n1,3\n")
    with pytest.raises(DomainError):
        load_dense_csv(f)


def test_negative_time():
    with pytest.raises(DomainError):
        SurvivalDataset.from_arrays([-1.0], [1])


def test_missing_column(tmp_path):
    f = write(tmp_path / "d.csv", "time,x\n1,0\n")
    with pytest.raises(SchemaError):
        load_dense_csv(f)


@pytest.mark.parametrize("body", ["1,1,\n", "1,1,abc\n", "1,1,nan\n"])
def test_malformed_or_missing_values(tmp_path, body):
    f = write(tmp_path / "d.csv", "time,status,x\n" + body)
    with pytest.raises(ParseError):
        load_dense_csv(f)


def test_compression_rule():
    n = 1000
    ind = np.zeros(n)
    ind[[3, 50, 700]] = 1.0
    c = SparseColumn.from_dense(ind)
    assert c.kind == INDICATOR and c.is_indicator
    vals = ind * 2.5
    assert SparseColumn.from_dense(vals).kind == SPARSE
    dense = (np.arange(n) % 3 == 0).astype(float)
    assert SparseColumn.from_dense(dense).kind == DENSE
    # threshold boundary: exactly 25% -> dense
    q = np.zeros(8)
    q[:2] = 1
    assert SparseColumn.from_dense(q).kind == DENSE


def test_column_validation():
    with pytest.raises(ValueError):
        SparseColumn(SPARSE, 5, np.array([3, 1]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SparseColumn(INDICATOR, 5, np.array([5]))
    with pytest.raises(ValueError):
        SparseColumn(DENSE, 5, np.arange(5), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_indicator_dot_exact(n, density, seed):
    rng = np.random.default_rng(seed)
    x = (rng.random(n) < density).astype(float)
    # values exactly representable so the dense dot is exact too
    v = rng.integers(-1000, 1000, size=n).astype(float)
    col = SparseColumn.from_dense(x)
    assert col.dot(v) == float(x @ v)
    assert np.array_equal(col.to_dense(), x)


def test_empty_matrix_file(tmp_path):
    obs = write(tmp_path / "o.csv", "0,1.0,1\n1,2.0,0\n")
    mat = write(tmp_path / "m.csv", "")
    ds = load_sparse_coo(obs, mat)
    assert ds.p == 0 and ds.n == 2


def test_coo_duplicate_entry(tmp_path):
    obs = write(tmp_path / "o.csv", "0,1.0,1\n1,2.0,0\n")
    mat = write(tmp_path / "m.csv", "0,0,1\n0,0,1\n")
    with pytest.raises(DuplicateEntryError):
        load_sparse_coo(obs, mat)


def test_coo_bad_ids(tmp_path):
    obs = write(tmp_path / "o.csv", "0,1.0,1\n1,2.0,0\n")
    with pytest.raises(DataIndexError):
        load_sparse_coo(obs, write(tmp_path / "m1.csv", "7,0,1\n"))
    with pytest.raises(DataIndexError):
        load_sparse_coo(obs, write(tmp_path / "m2.csv", "0,-1,1\n"))
    with pytest.raises(DataIndexError):
        load_sparse_coo(obs, write(tmp_path / "m3.csv", "# shape: 2,2\n0,4,1\n"))
    with pytest.raises(IndexError):
        load_sparse_coo(obs, write(tmp_path / "m4.csv", "9,0,1\n"))


def test_shape_hint_keeps_empty_columns(tmp_path):
    obs = write(tmp_path / "o.csv", "0,1.0,1\n1,2.0,0\n")
    mat = write(tmp_path / "m.csv", "# shape: 2,5\n0,1,1\n")
    assert load_sparse_coo(obs, mat).p == 5


@pytest.mark.parametrize("model", ["cox", "finegray"])
def test_sparse_round_trip(tmp_path, model):
    cfg = SimConfig(n=400, p=12, density=0.1, seed=3, censoring_quantile=0.8)
    ds = simulate_cox(cfg)[0] if model == "cox" else simulate_finegray(cfg)[0]
    write_sparse_coo(ds, tmp_path / "o.csv", tmp_path / "m.csv")
    back = load_sparse_coo(tmp_path / "o.csv", tmp_path / "m.csv")
    assert back.equals(ds)
    write_sparse_coo(back, tmp_path / "o2.csv", tmp_path / "m2.csv")
    assert (tmp_path / "m.csv").read_bytes() == (tmp_path / "m2.csv").read_bytes()


def test_dense_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X = np.where(rng.random((50, 4)) < 0.3, rng.normal(size=(50, 4)), 0.0)
    ds = SurvivalDataset.from_arrays(rng.exponential(size=50), rng.integers(0, 2, 50), X)
    write_dense_csv(ds, tmp_path / "d.csv")
    back = load_dense_csv(tmp_path / "d.csv")
    assert np.array_equal(back.time, ds.time)
    assert np.array_equal(back.to_dense(), ds.to_dense())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 80), st.integers(0, 2**32 - 1))
def test_permutation_invariance(n, seed):
    rng = np.random.default_rng(seed)
    t = np.round(rng.exponential(size=n), 1)
    s = rng.integers(0, 3, n)
    X = (rng.random((n, 3)) < 0.3) * rng.normal(size=(n, 3))
    ids = np.arange(n)
    ref = SurvivalDataset.from_arrays(t, s, X, row_id=ids)
    perm = rng.permutation(n)
    shuffled = SurvivalDataset.from_arrays(t[perm], s[perm], X[perm], row_id=ids[perm])
    assert shuffled.equals(ref)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 80), st.integers(0, 2**32 - 1))
def test_sorting_is_permutation(n, seed):
    rng = np.random.default_rng(seed)
    t = np.round(rng.exponential(size=n), 1)
    s = rng.integers(0, 3, n)
    X = (rng.random((n, 2)) < 0.5).astype(float)
    ds = SurvivalDataset.from_arrays(t, s, X)
    before = sorted(zip(t.tolist(), s.tolist(), map(tuple, X.tolist())))
    after = sorted(zip(ds.time.tolist(), ds.status.tolist(), map(tuple, ds.to_dense().tolist())))
    assert before == after
    assert np.all(np.diff(ds.time) <= 0)
    for a, b in zip(ds.block_starts[:-1], ds.block_starts[1:]):
        assert np.all(ds.time[a:b] == ds.time[a])


def test_memory_proportional_to_nonzeros():
    # scaled-down version of a 5% indicator grid: storage follows nnz, not n * p
    n, p = 100_000, 100
    X = sp.random(n, p, density=0.05, format="csc", random_state=1, data_rvs=np.ones)
    ds = SurvivalDataset.from_arrays(np.arange(n, dtype=float), np.ones(n), X)
    col_bytes = sum(c.nbytes for c in ds.columns)
    assert col_bytes == 8 * ds.nnz
    assert col_bytes < 0.06 * n * p * 8
    X2 = sp.random(n, p, density=0.01, format="csc", random_state=1, data_rvs=np.ones)
    ds2 = SurvivalDataset.from_arrays(np.arange(n, dtype=float), np.ones(n), X2)
    ratio = sum(c.nbytes for c in ds2.columns) / col_bytes
    assert ratio == pytest.approx(ds2.nnz / ds.nnz)


def test_take_and_fingerprint():
    ds = simulate_cox(SimConfig(n=200, p=5, seed=1))[0]
    sub = ds.take(np.arange(0, 200, 2))
    assert sub.n == 100
    assert set(sub.row_id.tolist()) == set(ds.row_id[::2].tolist())
    boot = ds.take(np.zeros(10, dtype=int))
    assert boot.row_id.tolist() == list(range(10))
    fp = ds.fingerprint()
    assert fp["rows"] == 200 and fp["columns"] == 5 and fp["nonzeros"] == ds.nnz
    assert fp == simulate_cox(SimConfig(n=200, p=5, seed=1))[0].fingerprint()
    assert fp["sha256"] != simulate_cox(SimConfig(n=200, p=5, seed=2))[0].fingerprint()["sha256"]


def test_status_counts():
    ds = SurvivalDataset.from_arrays([1, 2, 3, 4], [0, 1, 2, 1])
    assert ds.n_events == 2 and ds.n_competing == 1
