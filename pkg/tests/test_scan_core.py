import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from survscan.errors import NonPositiveDenominator
from survscan.scan_core import (ChunkPlan, block_event_weights, fused_scan_transform_reduce,
                                partially_fused_scan_transform_reduce, prefix_scan, reduce_sum,
                                separated_scan_transform_reduce, suffix_scan, tuple3_scan)


def rel_close(a, b, tol):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    scale = np.maximum(np.abs(b), 1.0)
    return np.all(np.abs(a - b) <= tol * scale)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(0, 300), elements=finite)
plans = st.builds(ChunkPlan, st.sampled_from([1, 2, 7, 64, 1024]), st.integers(1, 4))


def test_prefix_small():
    assert prefix_scan([1, 2, 3]).tolist() == [1, 3, 6]
    assert prefix_scan([]).size == 0


def test_suffix_small():
    assert suffix_scan([1, 2, 3]).tolist() == [6, 5, 3]
    assert suffix_scan([5]).tolist() == [5]


def test_tuple3_small():
    out = tuple3_scan([[1, 1], [2, 0], [4, 0]])
    assert out.tolist() == [[1, 2], [2, 2], [4, 4]]
    assert tuple3_scan(np.zeros((3, 0))).shape == (3, 0)


def test_tuple3_rejects_wrong_lane_count():
    with pytest.raises(ValueError):
        tuple3_scan(np.ones((2, 4)))


def test_chunkplan_validation():
    with pytest.raises(ValueError):
        ChunkPlan(0, 1)
    with pytest.raises(ValueError):
        ChunkPlan(4, 0)
    plan = ChunkPlan(7, 2)
    assert plan.n_chunks(15) * plan.chunk_size >= 15


@settings(max_examples=60, deadline=None)
@given(vectors, plans)
def test_chunked_matches_serial(v, plan):
    serial = ChunkPlan.serial(max(v.size, 1))
    assert rel_close(prefix_scan(v, plan), prefix_scan(v, serial), 1e-12)
    assert rel_close(suffix_scan(v, plan), suffix_scan(v, serial), 1e-12)


@settings(max_examples=60, deadline=None)
@given(vectors, plans)
def test_prefix_matches_cumsum(v, plan):
    ref = np.cumsum(v)
    scale = np.maximum(np.cumsum(np.abs(v)), 1.0)
    assert np.all(np.abs(prefix_scan(v, plan) - ref) <= 1e-12 * scale)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.floats(-10, 10), st.integers(0, 2**32 - 1), plans)
def test_linearity(n, alpha, seed, plan):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=n), rng.normal(size=n)
    lhs = prefix_scan(alpha * u + v, plan)
    rhs = alpha * prefix_scan(u, plan) + prefix_scan(v, plan)
    scale = np.maximum(np.cumsum(np.abs(alpha * u) + np.abs(v)), 1.0)
    assert np.all(np.abs(lhs - rhs) <= 1e-10 * scale)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(0, 1e3)), plans)
def test_last_element_is_reduction(v, plan):
    assert rel_close(prefix_scan(v, plan)[-1], reduce_sum(v, plan), 1e-12)
    assert rel_close(suffix_scan(v, plan)[0], reduce_sum(v, plan), 1e-12)


@settings(max_examples=60, deadline=None)
@given(vectors)
def test_reversal_identity_serial(v):
    plan = ChunkPlan.serial(max(v.size, 1))
    assert np.array_equal(suffix_scan(v, plan), prefix_scan(v[::-1], plan)[::-1])


@pytest.mark.parametrize("chunk", [1, 7, 1024, 5000])
def test_tuple3_matches_independent_scans(chunk):
    rng = np.random.default_rng(chunk)
    lanes = rng.uniform(1, 2, size=(3, 5000))
    plan = ChunkPlan(chunk, 3)
    for direction, fn in (("forward", prefix_scan), ("backward", suffix_scan)):
        out = tuple3_scan(lanes, direction, plan)
        for k in range(3):
            assert rel_close(out[k], fn(lanes[k], ChunkPlan.serial(5000)), 1e-12)


def test_deterministic_across_worker_counts():
    v = np.random.default_rng(0).normal(size=100_003)
    outs = [prefix_scan(v, ChunkPlan(1000, w)) for w in (1, 2, 5, 8)]
    for o in outs[1:]:
        assert np.array_equal(o, outs[0])


def test_block_event_weights():
    # blocks [0,1], [2], [3,4,5]
    mask = np.array([1, 1, 0, 1, 0, 1], float)
    bw = block_event_weights(mask, np.array([0, 2, 3, 6]))
    assert bw.tolist() == [0, 2, 0, 0, 0, 2]


def _brute_transform(lanes, mask, starts, u=None, scale=None):
    """Direct loops: block-final forward sums and strictly-later backward sums."""
    n = lanes.shape[1]
    g = h = 0.0
    ends = np.repeat(starts[1:] - 1, np.diff(starts))
    for i in range(n):
        if not mask[i]:
            continue
        e = ends[i]
        d = [lanes[k, : e + 1].sum() for k in range(3)]
        if u is not None:
            # scale is read at the block's last row (it is constant within a tied block in practice)
            s = 1.0 if scale is None else scale[e]
            d = [d[k] + s * (u[e + 1:] * lanes[k, e + 1:]).sum() for k in range(3)]
        G, H = d[1] / d[0], d[2] / d[0]
        g += G
        h += H - G * G
    return g, h


def _random_problem(rng, n, with_u):
    x = np.where(rng.random(n) < 0.3, rng.normal(size=n), 0.0)
    e = rng.uniform(0.5, 2.0, size=n)
    lanes = np.vstack([e, e * x, e * x * x])
    mask = (rng.random(n) < 0.6).astype(float)
    t = np.sort(np.round(rng.exponential(size=n), 1))[::-1]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(t)) + 1, [n]])
    u = scale = None
    if with_u:
        u = np.where(rng.random(n) < 0.3, rng.uniform(1, 3, size=n), 0.0)
        scale = rng.uniform(0.2, 1.0, size=n)
    return lanes, mask, starts, u, scale


@pytest.mark.parametrize("with_u", [False, True])
@pytest.mark.parametrize("chunk", [1, 7, 64, 1000])
def test_fused_matches_brute_force(with_u, chunk):
    rng = np.random.default_rng(chunk + 10 * with_u)
    lanes, mask, starts, u, scale = _random_problem(rng, 300, with_u)
    ref = _brute_transform(lanes, mask, starts, u, scale)
    plan = ChunkPlan(chunk, 2)
    for fn in (fused_scan_transform_reduce, separated_scan_transform_reduce,
               partially_fused_scan_transform_reduce):
        got = fn(lanes, mask, starts, plan, weights=u, scale=scale)
        assert rel_close(got, ref, 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 400), st.integers(0, 2**32 - 1), st.booleans(), plans)
def test_fused_equals_unfused(n, seed, with_u, plan):
    lanes, mask, starts, u, scale = _random_problem(np.random.default_rng(seed), n, with_u)
    f = fused_scan_transform_reduce(lanes, mask, starts, plan, weights=u, scale=scale)
    s = separated_scan_transform_reduce(lanes, mask, starts, plan, weights=u, scale=scale)
    p = partially_fused_scan_transform_reduce(lanes, mask, starts, plan, weights=u, scale=scale)
    assert rel_close(f, s, 1e-12)
    assert rel_close(p, s, 1e-12)


def test_fused_toy_cox():
    # sorted times (2, 1), both events, x = (1, 0), beta = 0
    lanes = np.array([[1.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
    starts = np.array([0, 1, 2])
    g, h = fused_scan_transform_reduce(lanes, [1, 1], starts)
    gs, hs = separated_scan_transform_reduce(lanes, [1, 1], starts)
    assert g == pytest.approx(1.5, abs=1e-15)
    assert h == pytest.approx(0.25, abs=1e-15)
    assert abs(g - gs) <= 1e-12 and abs(h - hs) <= 1e-12


def test_no_events_gives_zero():
    lanes = np.ones((3, 10))
    assert fused_scan_transform_reduce(lanes, np.zeros(10), np.arange(11)) == (0.0, 0.0)


def test_nonpositive_denominator():
    lanes = np.zeros((3, 4))
    for fn in (fused_scan_transform_reduce, separated_scan_transform_reduce,
               partially_fused_scan_transform_reduce):
        with pytest.raises(NonPositiveDenominator):
            fn(lanes, np.ones(4), np.arange(5))


def test_scan_million_uniform():
    v = np.random.default_rng(1).uniform(1, 2, size=1_000_000)
    serial = prefix_scan(v, ChunkPlan.serial(v.size))
    assert rel_close(prefix_scan(v, ChunkPlan(65536, 4)), serial, 1e-12)
