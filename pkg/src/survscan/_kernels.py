"""Numba kernels for chunked scans, reductions and the fused gradient/Hessian pass.

Every kernel works on a contiguous range of chunks ``[c0, c1)`` so the caller
can hand disjoint ranges to different threads.  Inside a chunk, summation is
strictly sequential (left-to-right for forward, right-to-left for backward),
which makes results depend only on the chunk size, never on the thread count.

Lane arrays are 2-D ``(L, N)``; a plain vector is scanned as ``(1, N)``.
"""
import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def _bounds(c, chunk, n):
    s = c * chunk
    e = s + chunk
    if e > n:
        e = n
    return s, e


@njit(nogil=True, cache=True)
def lane_chunk_totals(x, chunk, c0, c1, reverse, out):
    nl, n = x.shape
    acc = np.empty(nl)
    for c in range(c0, c1):
        s, e = _bounds(c, chunk, n)
        for l in range(nl):
            acc[l] = 0.0
        if reverse:
            for i in range(e - 1, s - 1, -1):
                for l in range(nl):
                    acc[l] += x[l, i]
        else:
            for i in range(s, e):
                for l in range(nl):
                    acc[l] += x[l, i]
        for l in range(nl):
            out[l, c] = acc[l]


@njit(nogil=True, cache=True)
def lane_chunk_scan(x, chunk, c0, c1, reverse, offsets, out):
    nl, n = x.shape
    acc = np.empty(nl)
    for c in range(c0, c1):
        s, e = _bounds(c, chunk, n)
        for l in range(nl):
            acc[l] = offsets[l, c]
        if reverse:
            for i in range(e - 1, s - 1, -1):
                for l in range(nl):
                    acc[l] += x[l, i]
                    out[l, i] = acc[l]
        else:
            for i in range(s, e):
                for l in range(nl):
                    acc[l] += x[l, i]
                    out[l, i] = acc[l]


@njit(nogil=True, cache=True)
def exclusive_offsets(totals, reverse):
    nl, nch = totals.shape
    off = np.zeros((nl, nch))
    if reverse:
        for c in range(nch - 2, -1, -1):
            for l in range(nl):
                off[l, c] = off[l, c + 1] + totals[l, c + 1]
    else:
        for c in range(1, nch):
            for l in range(nl):
                off[l, c] = off[l, c - 1] + totals[l, c - 1]
    return off


@njit(nogil=True, cache=True)
def sum_in_order(partial):
    """Row sums of ``partial`` taken strictly in column order."""
    nl, nch = partial.shape
    out = np.zeros(nl)
    for c in range(nch):
        for l in range(nl):
            out[l] += partial[l, c]
    return out


@njit(nogil=True, cache=True)
def _risk_terms(w, a0, a1, a2):
    g = a1 / a0
    h = a2 / a0
    return w * g, w * (h - g * g)


# -- fused pass over dense lanes ------------------------------------------------

@njit(nogil=True, cache=True)
def dense_fused_totals(lanes, u, has_u, chunk, c0, c1, tot_f, tot_b):
    n = lanes.shape[1]
    for c in range(c0, c1):
        s, e = _bounds(c, chunk, n)
        t0 = 0.0
        t1 = 0.0
        t2 = 0.0
        for i in range(s, e):
            t0 += lanes[0, i]
            t1 += lanes[1, i]
            t2 += lanes[2, i]
        tot_f[0, c] = t0
        tot_f[1, c] = t1
        tot_f[2, c] = t2
        if has_u:
            t0 = 0.0
            t1 = 0.0
            t2 = 0.0
            for i in range(e - 1, s - 1, -1):
                ui = u[i]
                t0 += ui * lanes[0, i]
                t1 += ui * lanes[1, i]
                t2 += ui * lanes[2, i]
            tot_b[0, c] = t0
            tot_b[1, c] = t1
            tot_b[2, c] = t2


@njit(nogil=True, cache=True)
def dense_fused_apply(lanes, bw, u, scale, has_u, chunk, c0, c1, off_f, off_b, partial):
    """Scan, block-end transform and local reduction for chunks c0..c1.

    Returns the number of non-positive denominators met.
    """
    n = lanes.shape[1]
    bad = 0
    for c in range(c0, c1):
        s, e = _bounds(c, chunk, n)
        if has_u:
            # exclusive suffix sums: rows strictly after i
            suf = np.empty((3, e - s))
            r0 = off_b[0, c]
            r1 = off_b[1, c]
            r2 = off_b[2, c]
            for i in range(e - 1, s - 1, -1):
                k = i - s
                suf[0, k] = r0
                suf[1, k] = r1
                suf[2, k] = r2
                ui = u[i]
                r0 += ui * lanes[0, i]
                r1 += ui * lanes[1, i]
                r2 += ui * lanes[2, i]
        else:
            suf = np.empty((3, 0))
        a0 = off_f[0, c]
        a1 = off_f[1, c]
        a2 = off_f[2, c]
        gs = 0.0
        hs = 0.0
        for i in range(s, e):
            a0 += lanes[0, i]
            a1 += lanes[1, i]
            a2 += lanes[2, i]
            w = bw[i]
            if w != 0.0:
                if has_u:
                    sc = scale[i]
                    k = i - s
                    d0 = a0 + sc * suf[0, k]
                    d1 = a1 + sc * suf[1, k]
                    d2 = a2 + sc * suf[2, k]
                else:
                    d0 = a0
                    d1 = a1
                    d2 = a2
                if not d0 > 0.0:
                    bad += 1
                    continue
                tg, th = _risk_terms(w, d0, d1, d2)
                gs += tg
                hs += th
        partial[0, c] = gs
        partial[1, c] = hs
    return bad


@njit(nogil=True, cache=True)
def transform_reduce_chunks(scanned, suffix_excl, bw, scale, has_u, chunk, c0, c1, partial):
    """Block-end transform and reduction over already scanned lanes."""
    n = scanned.shape[1]
    bad = 0
    for c in range(c0, c1):
        s, e = _bounds(c, chunk, n)
        gs = 0.0
        hs = 0.0
        for i in range(s, e):
            w = bw[i]
            if w != 0.0:
                if has_u:
                    sc = scale[i]
                    d0 = scanned[0, i] + sc * suffix_excl[0, i]
                    d1 = scanned[1, i] + sc * suffix_excl[1, i]
                    d2 = scanned[2, i] + sc * suffix_excl[2, i]
                else:
                    d0 = scanned[0, i]
                    d1 = scanned[1, i]
                    d2 = scanned[2, i]
                if not d0 > 0.0:
                    bad += 1
                    continue
                tg, th = _risk_terms(w, d0, d1, d2)
                gs += tg
                hs += th
        partial[0, c] = gs
        partial[1, c] = hs
    return bad


# -- fused pass reading a sparse column ------------------------------------------
#
# Lanes are (e, e*x, e*x*x) with e = exp(X beta) dense and x the sparse column;
# the second and third lanes are only touched at the column's nonzero rows.

@njit(nogil=True, cache=True)
def sparse_fused_totals(ex, idx, val, indicator, ptr, u, has_u, chunk, c0, c1, tot_f, tot_b):
    n = ex.shape[0]
    for c in range(c0, c1):
        s, e = _bounds(c, chunk, n)
        t0 = 0.0
        for i in range(s, e):
            t0 += ex[i]
        t1 = 0.0
        t2 = 0.0
        for p in range(ptr[c], ptr[c + 1]):
            x = 1.0 if indicator else val[p]
            b = ex[idx[p]] * x
            t1 += b
            t2 += b * x
        tot_f[0, c] = t0
        tot_f[1, c] = t1
        tot_f[2, c] = t2
        if has_u:
            t0 = 0.0
            for i in range(e - 1, s - 1, -1):
                t0 += u[i] * ex[i]
            t1 = 0.0
            t2 = 0.0
            for p in range(ptr[c + 1] - 1, ptr[c] - 1, -1):
                i = idx[p]
                x = 1.0 if indicator else val[p]
                b = ex[i] * x
                t1 += u[i] * b
                t2 += u[i] * (b * x)
            tot_b[0, c] = t0
            tot_b[1, c] = t1
            tot_b[2, c] = t2


@njit(nogil=True, cache=True)
def sparse_fused_apply(ex, idx, val, indicator, ptr, bw, u, scale, has_u, chunk, c0, c1,
                       off_f, off_b, partial):
    n = ex.shape[0]
    bad = 0
    for c in range(c0, c1):
        s, e = _bounds(c, chunk, n)
        if has_u:
            suf = np.empty((3, e - s))
            r0 = off_b[0, c]
            r1 = off_b[1, c]
            r2 = off_b[2, c]
            p = ptr[c + 1] - 1
            p0 = ptr[c]
            for i in range(e - 1, s - 1, -1):
                k = i - s
                suf[0, k] = r0
                suf[1, k] = r1
                suf[2, k] = r2
                ui = u[i]
                r0 += ui * ex[i]
                if p >= p0 and idx[p] == i:
                    x = 1.0 if indicator else val[p]
                    b = ex[i] * x
                    r1 += ui * b
                    r2 += ui * (b * x)
                    p -= 1
        else:
            suf = np.empty((3, 0))
        a0 = off_f[0, c]
        a1 = off_f[1, c]
        a2 = off_f[2, c]
        p = ptr[c]
        p1 = ptr[c + 1]
        gs = 0.0
        hs = 0.0
        for i in range(s, e):
            a0 += ex[i]
            if p < p1 and idx[p] == i:
                x = 1.0 if indicator else val[p]
                b = ex[i] * x
                a1 += b
                a2 += b * x
                p += 1
            w = bw[i]
            if w != 0.0:
                if has_u:
                    sc = scale[i]
                    k = i - s
                    d0 = a0 + sc * suf[0, k]
                    d1 = a1 + sc * suf[1, k]
                    d2 = a2 + sc * suf[2, k]
                else:
                    d0 = a0
                    d1 = a1
                    d2 = a2
                if not d0 > 0.0:
                    bad += 1
                    continue
                tg, th = _risk_terms(w, d0, d1, d2)
                gs += tg
                hs += th
        partial[0, c] = gs
        partial[1, c] = hs
    return bad
