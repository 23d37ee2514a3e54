"""Hot loops: subset enumeration and batched double greedy.

Each kernel has a numba implementation (explicit loops, ``@njit``) and a
pure-numpy implementation (vectorized over subsets or runs). The active
backend is picked at import time:

* ``LATRED_JIT=0`` forces the numpy path;
* otherwise numba is used when it imports cleanly.

Both paths are always importable so tests and ``benchmarks/`` can compare them.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("LATRED_JIT", "1").strip().lower() not in ("0", "false", "no", "off")

_CHUNK = 1 << 15


def _jit(fn):
    if not HAVE_NUMBA:
        return fn
    return njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# quadratic pseudo-Boolean: f(x) = const + lin.x + x'Qx  (Q symmetric)
# ---------------------------------------------------------------------------


def _quad_values_loop(const, lin, Q):
    # value(h | rest) for rest below bit h, with the row sum over rest built incrementally
    k = lin.shape[0]
    total = 1 << k
    out = np.empty(total, dtype=np.float64)
    row = np.empty(max(total >> 1, 1), dtype=np.float64)
    out[0] = const
    for h in range(k):
        top = 1 << h
        base = lin[h] + Q[h, h]
        row[0] = 0.0
        out[top] = out[0] + base
        for r in range(1, top):
            low = 0
            while not (r >> low) & 1:
                low += 1
            row[r] = row[r & (r - 1)] + Q[h, low]
            out[top + r] = out[r] + base + 2.0 * row[r]
    return out


def _quad_values_np(const, lin, Q):
    k = lin.shape[0]
    total = 1 << k
    out = np.empty(total, dtype=np.float64)
    shifts = np.arange(k, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(np.float64)
        out[start : start + codes.size] = const + bits @ lin + np.einsum("ij,ij->i", bits @ Q, bits)
    return out


# ---------------------------------------------------------------------------
# symmetrized log-determinant: f(X) = logdet K_X + logdet K_{N-X}
# ---------------------------------------------------------------------------


def _chol_logdet(K, idx, m, work):
    # log det of K[idx[:m]][:, idx[:m]] via in-place Cholesky; nan if not PD
    if m == 0:
        return 0.0
    for a in range(m):
        for b in range(a + 1):
            work[a, b] = K[idx[a], idx[b]]
    acc = 0.0
    for j in range(m):
        s = work[j, j]
        for p in range(j):
            s -= work[j, p] * work[j, p]
        if s <= 0.0:
            return np.nan
        d = np.sqrt(s)
        work[j, j] = d
        acc += np.log(s)
        for i in range(j + 1, m):
            s2 = work[i, j]
            for p in range(j):
                s2 -= work[i, p] * work[j, p]
            work[i, j] = s2 / d
    return acc


def _logdet_values_loop(K, base, free):
    n = K.shape[0]
    k = free.shape[0]
    total = 1 << k
    out = np.empty(total, dtype=np.float64)
    inside = np.empty(n, dtype=np.int64)
    outside = np.empty(n, dtype=np.int64)
    member = np.empty(n, dtype=np.bool_)
    work = np.empty((n, n), dtype=np.float64)
    for code in range(total):
        for i in range(n):
            member[i] = base[i]
        for j in range(k):
            if (code >> j) & 1:
                member[free[j]] = True
        a = 0
        b = 0
        for i in range(n):
            if member[i]:
                inside[a] = i
                a += 1
            else:
                outside[b] = i
                b += 1
        out[code] = _chol_logdet(K, inside, a, work) + _chol_logdet(K, outside, b, work)
    return out


def _batched_logdet(K, masks):
    """``logdet K_X`` for each boolean row of ``masks`` (nan where not PD)."""
    out = np.zeros(masks.shape[0])
    sizes = masks.sum(axis=1)
    for s in np.unique(sizes):
        if s == 0:
            continue
        rows = np.flatnonzero(sizes == s)
        for start in range(0, rows.size, 4096):
            sel = rows[start : start + 4096]
            idx = np.nonzero(masks[sel])[1].reshape(sel.size, s)
            sub = K[idx[:, :, None], idx[:, None, :]]
            sign, logabs = np.linalg.slogdet(sub)
            out[sel] = np.where(sign > 0, logabs, np.nan)
    return out


def _logdet_values_np(K, base, free):
    k = free.shape[0]
    total = 1 << k
    out = np.empty(total, dtype=np.float64)
    shifts = np.arange(k, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        masks = np.repeat(base[None, :], codes.size, axis=0)
        masks[:, free] = ((codes[:, None] >> shifts) & 1).astype(bool)
        out[start : start + codes.size] = _batched_logdet(K, masks) + _batched_logdet(K, ~masks)
    return out


# ---------------------------------------------------------------------------
# double greedy over a quadratic objective, many independent runs
# ---------------------------------------------------------------------------


def _double_greedy_loop(lin, Q, lower, upper, order, u, randomized):
    n = lin.shape[0]
    runs = u.shape[0]
    out = np.empty((runs, n), dtype=np.bool_)
    qx = np.empty(n)
    qy = np.empty(n)
    for r in range(runs):
        for i in range(n):
            out[r, i] = lower[i]
        for i in range(n):
            sx = 0.0
            sy = 0.0
            for j in range(n):
                if lower[j]:
                    sx += Q[i, j]
                if upper[j]:
                    sy += Q[i, j]
            qx[i] = sx
            qy[i] = sy
        for step in range(order.shape[0]):
            i = order[step]
            # f(i | X) and -f(i | Y - i)
            a = lin[i] + Q[i, i] + 2.0 * qx[i]
            b = -(lin[i] - Q[i, i] + 2.0 * qy[i])
            if randomized:
                ap = a if a > 0.0 else 0.0
                bp = b if b > 0.0 else 0.0
                tot = ap + bp
                accept = tot == 0.0 or u[r, step] * tot < ap
            else:
                accept = a >= b
            if accept:
                out[r, i] = True
                for j in range(n):
                    qx[j] += Q[j, i]
            else:
                for j in range(n):
                    qy[j] -= Q[j, i]
    return out


def _double_greedy_np(lin, Q, lower, upper, order, u, randomized):
    runs = u.shape[0]
    X = np.repeat(lower[None, :], runs, axis=0)
    qx = np.repeat((Q @ lower.astype(np.float64))[None, :], runs, axis=0)
    qy = np.repeat((Q @ upper.astype(np.float64))[None, :], runs, axis=0)
    for step, i in enumerate(order):
        a = lin[i] + Q[i, i] + 2.0 * qx[:, i]
        b = -(lin[i] - Q[i, i] + 2.0 * qy[:, i])
        if randomized:
            ap = np.maximum(a, 0.0)
            bp = np.maximum(b, 0.0)
            tot = ap + bp
            accept = (tot == 0.0) | (u[:, step] * tot < ap)
        else:
            accept = a >= b
        X[:, i] = accept
        col = Q[:, i]
        qx += accept[:, None] * col[None, :]
        qy -= (~accept)[:, None] * col[None, :]
    return X


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

IMPLEMENTATIONS = {
    "numpy": {
        "quad_values": _quad_values_np,
        "logdet_values": _logdet_values_np,
        "double_greedy": _double_greedy_np,
    },
}

if HAVE_NUMBA:
    _chol_logdet = _jit(_chol_logdet)
    IMPLEMENTATIONS["numba"] = {
        "quad_values": _jit(_quad_values_loop),
        "logdet_values": _jit(_logdet_values_loop),
        "double_greedy": _jit(_double_greedy_loop),
    }

BACKEND = "numba" if USE_NUMBA else "numpy"


def backend() -> str:
    return BACKEND


def _impl(name):
    return IMPLEMENTATIONS[BACKEND][name]


def quad_values(const: float, lin: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Values of ``const + lin.z + z'Qz`` for every ``z`` in ``{0,1}^k``, indexed by code."""
    return _impl("quad_values")(float(const), np.ascontiguousarray(lin, dtype=np.float64), np.ascontiguousarray(Q, dtype=np.float64))


def logdet_values(K: np.ndarray, base: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Symmetrized log-determinant at ``base | code-bits-over-free`` for every code."""
    return _impl("logdet_values")(
        np.ascontiguousarray(K, dtype=np.float64),
        np.ascontiguousarray(base, dtype=np.bool_),
        np.ascontiguousarray(free, dtype=np.int64),
    )


def double_greedy(lin, Q, lower, upper, order, u, randomized: bool) -> np.ndarray:
    """Final sets (one boolean row per run) of double greedy on a quadratic objective."""
    return _impl("double_greedy")(
        np.ascontiguousarray(lin, dtype=np.float64),
        np.ascontiguousarray(Q, dtype=np.float64),
        np.ascontiguousarray(lower, dtype=np.bool_),
        np.ascontiguousarray(upper, dtype=np.bool_),
        np.ascontiguousarray(order, dtype=np.int64),
        np.ascontiguousarray(u, dtype=np.float64),
        bool(randomized),
    )
