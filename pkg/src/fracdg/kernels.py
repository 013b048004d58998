"""Hot loops: axis-aligned ray traversal and dense coupling accumulation.

Each kernel has a compiled path (element-to-element walking / in-place
scatter) and a pure-numpy path (brute-force line/triangle intersection /
sparse products). ``FRACDG_DISABLE_NUMBA=1`` selects the numpy path.

Rays are handled in canonical coordinates: ``S`` is the integration
coordinate, ``T`` the fixed one, and the walk always heads towards smaller
``S``. Right-sided rays are traced by negating ``S``.
"""
from __future__ import annotations

import numpy as np

from ._jit import NUMBA_ENABLED, njit

DEGENERATE = -1
LOST = -2


@njit
def _cross(S, T, tri, e, t0, tol):
    """Crossing interval of line T = t0 with element e.

    Returns (status, smin, smax, face_of_smin); status 1 = two crossings,
    0 = no crossing, -1 = a vertex lies on the line.
    """
    n = 0
    smin = np.inf
    smax = -np.inf
    kmin = -1
    for k in range(3):
        a = tri[e, k]
        b = tri[e, (k + 1) % 3]
        da = T[a] - t0
        db = T[b] - t0
        if abs(da) <= tol:
            return -1, 0.0, 0.0, -1
        if da * db < 0.0:
            s = S[a] + (t0 - T[a]) / (T[b] - T[a]) * (S[b] - S[a])
            n += 1
            if s < smin:
                smin = s
                kmin = k
            if s > smax:
                smax = s
    if n == 2:
        return 1, smin, smax, kmin
    return 0, 0.0, 0.0, -1


@njit
def _walk(S, T, tri, nbr, s_target, t0, start, lo_bound, tol, out_e, out_s0, out_s1,
          offset, store):
    """Walk upstream from ``start``; returns the segment count or a negative code."""
    K = tri.shape[0]
    st, smin, smax, k = _cross(S, T, tri, start, t0, tol)
    if st < 0:
        return DEGENERATE
    if st == 0:
        return LOST
    e = start
    near = s_target
    far = min(smin, s_target)
    count = 0
    for _ in range(K + 4):
        if store:
            out_e[offset + count] = e
            out_s0[offset + count] = far
            out_s1[offset + count] = near
        count += 1
        cur = far
        nb = nbr[e, k]
        if nb >= 0:
            st, smin, smax, k = _cross(S, T, tri, nb, t0, tol)
            if st < 0:
                return DEGENERATE
            if st == 0:
                return LOST
            e = nb
            near = cur
            far = min(smin, cur)
            continue
        if cur <= lo_bound + tol:
            return count
        # left the mesh before the bounding box: look for a re-entry upstream
        best = -1
        best_hi = -np.inf
        best_lo = 0.0
        best_k = -1
        for j in range(K):
            if j == e:
                continue
            st, smin, smax, kk = _cross(S, T, tri, j, t0, tol)
            if st < 0:
                return DEGENERATE
            if st == 1 and smax <= cur + tol and smax > best_hi:
                best = j
                best_hi = smax
                best_lo = smin
                best_k = kk
        if best < 0:
            return count
        e = best
        k = best_k
        near = min(best_hi, cur)
        far = best_lo
    return LOST


@njit
def _trace_all(S, T, tri, nbr, s_target, t_target, start, lo_bound, tol, eps,
               offsets, out_e, out_s0, out_s1, t_used, store):
    P = s_target.shape[0]
    for p in range(P):
        t0 = t_target[p]
        if store:
            t0 = t_used[p]
            _walk(S, T, tri, nbr, s_target[p], t0, start[p], lo_bound, tol,
                  out_e, out_s0, out_s1, offsets[p], True)
            continue
        n = DEGENERATE
        for attempt in range(12):
            n = _walk(S, T, tri, nbr, s_target[p], t0, start[p], lo_bound, tol,
                      out_e, out_s0, out_s1, 0, False)
            if n >= 0:
                break
            step = (attempt // 2 + 1) * eps
            t0 = t_target[p] + (step if attempt % 2 == 0 else -step)
        offsets[p + 1] = n
        t_used[p] = t0


def trace_walk(S, T, tri, nbr, s_target, t_target, start, lo_bound, tol, eps):
    """Compiled walking traversal; returns (offsets, elem, s_far, s_near)."""
    P = len(s_target)
    offsets = np.zeros(P + 1, dtype=np.int64)
    t_used = np.empty(P)
    dummy_i = np.empty(0, dtype=np.int64)
    dummy_f = np.empty(0)
    _trace_all(S, T, tri, nbr, s_target, t_target, start, lo_bound, tol, eps,
               offsets, dummy_i, dummy_f, dummy_f, t_used, False)
    if np.any(offsets[1:] < 0):
        bad = int(np.flatnonzero(offsets[1:] < 0)[0])
        raise RuntimeError(f"ray traversal failed for target {bad}")
    np.cumsum(offsets, out=offsets)
    n = offsets[-1]
    out_e = np.empty(n, dtype=np.int64)
    out_s0 = np.empty(n)
    out_s1 = np.empty(n)
    _trace_all(S, T, tri, nbr, s_target, t_target, start, lo_bound, tol, eps,
               offsets, out_e, out_s0, out_s1, t_used, True)
    return offsets, out_e, out_s0, out_s1


def trace_bruteforce(S, T, tri, s_target, t_target, tol, eps, chunk_cells=3_000_000):
    """Numpy traversal: intersect each ray with every element at once."""
    P = len(s_target)
    K = len(tri)
    TS = S[tri]
    TT = T[tri]
    chunk = max(1, chunk_cells // (3 * K))
    pieces_e, pieces_s0, pieces_s1, counts = [], [], [], np.zeros(P, dtype=np.int64)
    for c0 in range(0, P, chunk):
        st = s_target[c0:c0 + chunk]
        t0 = t_target[c0:c0 + chunk].copy()
        # perturb rays that graze an upstream vertex
        for attempt in range(12):
            near_v = np.abs(TT[None, :, :] - t0[:, None, None]) <= tol
            upstream = TS[None, :, :] < st[:, None, None] + tol
            bad = np.any(near_v & upstream, axis=(1, 2))
            if not bad.any():
                break
            step = (attempt // 2 + 1) * eps
            t0[bad] = t_target[c0:c0 + chunk][bad] + (step if attempt % 2 == 0 else -step)
        da = TT - t0[:, None, None]
        db = np.roll(TT, -1, axis=1) - t0[:, None, None]
        sa = TS[None, :, :]
        sb = np.roll(TS, -1, axis=1)[None, :, :]
        crossing = da * db < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            s = sa + (-da) / (db - da) * (sb - sa)
        lo = np.where(crossing, s, np.inf).min(axis=2)
        hi = np.where(crossing, s, -np.inf).max(axis=2)
        ok = (crossing.sum(axis=2) == 2)
        hi = np.minimum(hi, st[:, None])
        ok &= lo < hi
        pidx, eidx = np.nonzero(ok)
        order = np.lexsort((-hi[pidx, eidx], pidx))
        pidx, eidx = pidx[order], eidx[order]
        pieces_e.append(eidx)
        pieces_s0.append(lo[pidx, eidx])
        pieces_s1.append(hi[pidx, eidx])
        counts[c0:c0 + chunk] = np.bincount(pidx, minlength=len(st))
    offsets = np.zeros(P + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return (offsets, np.concatenate(pieces_e).astype(np.int64),
            np.concatenate(pieces_s0), np.concatenate(pieces_s1))


def trace(S, T, tri, nbr, s_target, t_target, start, lo_bound, tol, eps, method=None):
    method = method or ("walk" if NUMBA_ENABLED else "bruteforce")
    if method == "walk":
        return trace_walk(S, T, tri, nbr, s_target, t_target, start, lo_bound, tol, eps)
    return trace_bruteforce(S, T, tri, s_target, t_target, tol, eps)


@njit
def _accumulate(F, owner, row_vals, offsets, seg_elem, seg_w, np_):
    P = owner.shape[0]
    for p in range(P):
        i0 = owner[p] * np_
        for k in range(offsets[p], offsets[p + 1]):
            j0 = seg_elem[k] * np_
            for a in range(np_):
                ra = row_vals[p, a]
                for b in range(np_):
                    F[i0 + a, j0 + b] += ra * seg_w[k, b]


def accumulate_coupling(n_dofs, owner, row_vals, offsets, seg_elem, seg_w, method=None):
    """F[i, j] = sum_p row_vals[p, i] * w_p[j] with rows in ``owner[p]``'s block."""
    method = method or ("numba" if NUMBA_ENABLED else "sparse")
    np_ = row_vals.shape[1]
    if method == "numba":
        F = np.zeros((n_dofs, n_dofs))
        _accumulate(F, owner, np.ascontiguousarray(row_vals), offsets, seg_elem,
                    np.ascontiguousarray(seg_w), np_)
        return F
    from scipy import sparse

    P = len(owner)
    rows = np.repeat(np.arange(P), np_)
    cols = (owner[:, None] * np_ + np.arange(np_)).ravel()
    left = sparse.csr_matrix((row_vals.ravel(), (rows, cols)), shape=(P, n_dofs))
    right = segments_to_sparse(n_dofs, offsets, seg_elem, seg_w)
    return (left.T @ right).toarray()


def segments_to_sparse(n_dofs, offsets, seg_elem, seg_w):
    from scipy import sparse

    P = len(offsets) - 1
    np_ = seg_w.shape[1]
    seg_point = np.repeat(np.arange(P), np.diff(offsets))
    rows = np.repeat(seg_point, np_)
    cols = (seg_elem[:, None] * np_ + np.arange(np_)).ravel()
    return sparse.csr_matrix((seg_w.ravel(), (rows, cols)), shape=(P, n_dofs))
