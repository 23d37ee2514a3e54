"""Set-function oracles.

Every oracle derives from :class:`SetFunction`. Besides plain evaluation an
oracle exposes a *gain vector*::

    f.gains(x)[j] == f(i | x - {i})      for i = idx[j]

which is ``f(x + i) - f(x)`` when ``i`` is outside ``x`` and
``f(x) - f(x - i)`` when it is inside. One call at ``X_t`` and one at ``Y_t``
give every marginal the reduction algorithms need. The quadratic families
(subset selection, half products, cut, modular) and the log-determinant
families override it with closed forms; anything else falls back to two
evaluations per element.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from latred import _kernels
from latred.core import ElementSet, Lattice, ModularWeights

EXHAUSTIVE_MAX_N = 14


class NotPositiveDefiniteError(ValueError):
    """A matrix (or principal submatrix) failed its Cholesky factorization."""


def _as_mask(X, n: int) -> np.ndarray:
    if isinstance(X, ElementSet):
        if X.n != n:
            raise ValueError(f"ground set mismatch: oracle over {n}, set over {X.n}")
        return X.to_array()
    x = np.asarray(X, dtype=bool)
    if x.shape != (n,):
        raise ValueError(f"expected a membership mask of shape ({n},), got {x.shape}")
    return x


def _lattice_arrays(L: Lattice | None, n: int):
    if L is None:
        return np.zeros(n, dtype=bool), np.arange(n, dtype=np.int64)
    if L.n != n:
        raise ValueError(f"ground set mismatch: oracle over {n}, lattice over {L.n}")
    return L.lower.to_array(), np.flatnonzero(L.free.to_array()).astype(np.int64)


def _modular_table(base_value: float, w: np.ndarray) -> np.ndarray:
    vals = np.array([base_value])
    for wj in w:
        vals = np.concatenate([vals, vals + wj])
    return vals


class SetFunction:
    """Base oracle with thread-safe evaluation and marginal-query counters.

    Subclasses implement ``_value``; ``_gains`` and ``_values`` are optional
    fast paths. ``evals`` counts set-function values computed (one per
    evaluation call, ``2**k`` for a table of a ``k``-wide lattice);
    ``marginal_queries`` counts marginal gains requested.
    """

    family = "custom"

    def __init__(self, n: int):
        self.n = int(n)
        self._lock = threading.Lock()
        self._evals = 0
        self._marginals = 0

    # counters -------------------------------------------------------------

    @property
    def evals(self) -> int:
        return self._evals

    @property
    def marginal_queries(self) -> int:
        return self._marginals

    def reset_counts(self):
        with self._lock:
            self._evals = 0
            self._marginals = 0

    def _count(self, evals=0, marginals=0):
        with self._lock:
            self._evals += evals
            self._marginals += marginals

    # public surface -------------------------------------------------------

    def __call__(self, X) -> float:
        x = _as_mask(X, self.n)
        self._count(evals=1)
        return float(self._value(x))

    evaluate = __call__

    def gains(self, X, idx=None) -> np.ndarray:
        """``f(i | X - i)`` for each ``i`` in ``idx`` (all elements by default)."""
        x = _as_mask(X, self.n)
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=np.int64).reshape(-1)
        self._count(marginals=idx.size)
        if idx.size == 0:
            return np.zeros(0)
        return np.asarray(self._gains(x, idx), dtype=np.float64)

    def marginal(self, i: int, A) -> float:
        """``f(A + i) - f(A)``; ``i`` must not be a member of ``A``."""
        x = _as_mask(A, self.n)
        if not 0 <= i < self.n:
            raise ValueError(f"element {i} outside ground set of size {self.n}")
        if x[i]:
            raise ValueError(f"element {i} already belongs to the conditioning set")
        return float(self.gains(x, [i])[0])

    def values(self, L: Lattice | None = None) -> np.ndarray:
        """Table of ``f`` over every set in ``L``.

        Entry ``code`` is ``f(S | {free[j] : bit j of code})`` with ``free``
        the sorted elements of ``T - S``.
        """
        base, free = _lattice_arrays(L, self.n)
        self._count(evals=1 << free.size)
        return np.asarray(self._values(base, free), dtype=np.float64)

    def params(self) -> dict:
        return {}

    # overridable ----------------------------------------------------------

    def _value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _gains(self, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        fx = self._value(x)
        out = np.empty(idx.size)
        y = x.copy()
        for j, i in enumerate(idx):
            y[i] = not x[i]
            other = self._value(y)
            y[i] = x[i]
            out[j] = fx - other if x[i] else other - fx
        self._count(evals=1 + idx.size)
        return out

    def _values(self, base: np.ndarray, free: np.ndarray) -> np.ndarray:
        out = np.empty(1 << free.size)
        x = base.copy()
        for code in range(out.size):
            x[free] = (code >> np.arange(free.size)) & 1
            out[code] = self._value(x)
        return out


class FunctionOracle(SetFunction):
    """Wrap a plain callable ``fn(ElementSet) -> float``."""

    def __init__(self, fn: Callable[[ElementSet], float], n: int, family: str = "custom"):
        super().__init__(n)
        self.fn = fn
        self.family = family

    def _value(self, x):
        return float(self.fn(ElementSet.from_array(x)))


class QuadraticOracle(SetFunction):
    """``f(x) = const + lin.x + x'Qx`` over 0/1 vectors, ``Q`` symmetric."""

    def __init__(self, lin, Q=None, const: float = 0.0, family: str = "quadratic", spec=None):
        lin = np.array(lin, dtype=np.float64).reshape(-1)
        super().__init__(lin.size)
        Q = np.zeros((self.n, self.n)) if Q is None else np.array(Q, dtype=np.float64)
        if Q.shape != (self.n, self.n):
            raise ValueError(f"quadratic term must be {self.n}x{self.n}, got {Q.shape}")
        Q = 0.5 * (Q + Q.T)
        self.lin = lin
        self.Q = Q
        self.diag = np.diag(Q).copy()
        self.const = float(const)
        self.family = family
        self.spec = spec

    def _value(self, x):
        xf = x.astype(np.float64)
        return self.const + self.lin @ xf + xf @ self.Q @ xf

    def _gains(self, x, idx):
        xf = x.astype(np.float64)
        d = self.diag[idx]
        return self.lin[idx] + d + 2.0 * (self.Q[idx] @ xf - d * xf[idx])

    def _values(self, base, free):
        xb = base.astype(np.float64)
        qb = self.Q @ xb
        const = self.const + self.lin @ xb + xb @ qb
        lin = self.lin[free] + 2.0 * qb[free]
        return _kernels.quad_values(const, lin, self.Q[np.ix_(free, free)])

    def params(self):
        return {"n": self.n}


class SymLogDetOracle(SetFunction):
    """``f(X) = offset + scale * (logdet K_X + logdet K_{N-X})`` with ``det K_{} = 1``."""

    def __init__(self, K, scale: float = 1.0, offset: float = 0.0, family: str = "logdet", spec=None):
        K = np.array(K, dtype=np.float64)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {K.shape}")
        super().__init__(K.shape[0])
        self.K = K
        self.scale = float(scale)
        self.offset = float(offset)
        self.family = family
        self.spec = spec

    def _logdet(self, x):
        if not x.any():
            return 0.0
        sub = self.K[np.ix_(x, x)]
        try:
            c = np.linalg.cholesky(sub)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("principal submatrix is not positive definite") from exc
        return 2.0 * np.log(np.diag(c)).sum()

    def _value(self, x):
        return self.offset + self.scale * (self._logdet(x) + self._logdet(~x))

    def _log_condvar(self, x):
        # log Var(i | x - i) for every i, under a Gaussian with covariance K
        if not x.any():
            return np.log(np.diag(self.K))
        inside = np.flatnonzero(x)
        try:
            cf = sla.cho_factor(self.K[np.ix_(inside, inside)], lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("principal submatrix is not positive definite") from exc
        out = np.empty(self.n)
        Z = sla.solve_triangular(cf[0], self.K[inside], lower=True)
        out[:] = np.diag(self.K) - np.einsum("ij,ij->j", Z, Z)
        inv_diag = np.diag(sla.cho_solve(cf, np.eye(inside.size)))
        out[inside] = 1.0 / inv_diag
        if np.any(out <= 0):
            raise NotPositiveDefiniteError("conditional variance is not positive")
        return np.log(out)

    def _gains(self, x, idx):
        g = self._log_condvar(x) - self._log_condvar(~x)
        return self.scale * g[idx]

    def _values(self, base, free):
        vals = _kernels.logdet_values(self.K, base, free)
        if np.isnan(vals).any():
            raise NotPositiveDefiniteError("principal submatrix is not positive definite")
        return self.offset + self.scale * vals

    def params(self):
        return {"n": self.n}


# ---------------------------------------------------------------------------
# wrappers
# ---------------------------------------------------------------------------


class PerturbedOracle(SetFunction):
    """``g(X) = f(X) + r(X)`` for a modular ``r``; calls go through ``f``'s counters."""

    def __init__(self, f: SetFunction, r: ModularWeights):
        if r.n != f.n:
            raise ValueError(f"ground set mismatch: oracle over {f.n}, noise over {r.n}")
        super().__init__(f.n)
        self.base = f
        self.r = r
        self.family = f.family

    def __call__(self, X):
        x = _as_mask(X, self.n)
        self._count(evals=1)
        return self.base(x) + float(self.r.w[x].sum())

    evaluate = __call__

    def _value(self, x):
        return self.base._value(x) + float(self.r.w[x].sum())

    def gains(self, X, idx=None):
        x = _as_mask(X, self.n)
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=np.int64).reshape(-1)
        self._count(marginals=idx.size)
        return self.base.gains(x, idx) + self.r.w[idx]

    def values(self, L=None):
        base, free = _lattice_arrays(L, self.n)
        self._count(evals=1 << free.size)
        return self.base.values(L) + _modular_table(float(self.r.w[base].sum()), self.r.w[free])


class ContractedOracle(SetFunction):
    """``f'(Z) = f(S | Z)`` over the free elements of ``[S, T]``.

    Element ``j`` of the contracted ground set is ``free[j]``, the ``j``-th
    smallest element of ``T - S``. Requires at least one free element.
    """

    def __init__(self, f: SetFunction, L: Lattice):
        base, free = _lattice_arrays(L, f.n)
        if free.size == 0:
            raise ValueError("cannot contract onto a point lattice")
        super().__init__(free.size)
        self.base_oracle = f
        self.lattice = L
        self.lower = base
        self.free = free
        self.family = f.family

    def lift(self, Z) -> ElementSet:
        z = _as_mask(Z, self.n)
        x = self.lower.copy()
        x[self.free[z]] = True
        return ElementSet.from_array(x)

    def _full(self, z):
        x = self.lower.copy()
        x[self.free[z]] = True
        return x

    def __call__(self, Z):
        z = _as_mask(Z, self.n)
        self._count(evals=1)
        return self.base_oracle(self._full(z))

    evaluate = __call__

    def _value(self, z):
        return self.base_oracle._value(self._full(z))

    def gains(self, Z, idx=None):
        z = _as_mask(Z, self.n)
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=np.int64).reshape(-1)
        self._count(marginals=idx.size)
        return self.base_oracle.gains(self._full(z), self.free[idx])

    def values(self, L=None):
        base, free = _lattice_arrays(L, self.n)
        self._count(evals=1 << free.size)
        outer = Lattice.from_arrays(self._full(base), self._full(base) | np.isin(np.arange(self.base_oracle.n), self.free[free]))
        return self.base_oracle.values(outer)


class MemoizedOracle(SetFunction):
    """Cache evaluations by membership mask; safe under concurrent use."""

    def __init__(self, f: SetFunction):
        super().__init__(f.n)
        self.base = f
        self.family = f.family
        self._cache: dict[bytes, float] = {}
        self._cache_lock = threading.Lock()
        self.hits = 0

    def _value(self, x):
        key = np.packbits(x).tobytes()
        with self._cache_lock:
            if key in self._cache:
                self.hits += 1
                return self._cache[key]
        v = self.base(x)
        with self._cache_lock:
            self._cache[key] = v
        return v


class CountingOracle(SetFunction):
    """Audit wrapper: counts its own evaluation calls and delegates to ``f``."""

    def __init__(self, f: SetFunction):
        super().__init__(f.n)
        self.base = f
        self.family = f.family
        self.calls = 0

    def _value(self, x):
        with self._lock:
            self.calls += 1
        return self.base(x)


# ---------------------------------------------------------------------------
# objective families
# ---------------------------------------------------------------------------


def _square(M, name):
    M = np.array(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    return M


def _check_pd(M, name):
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc


@dataclass(frozen=True)
class SubsetSelectionSpec:
    M: np.ndarray = field(repr=False)
    lam: float = 0.7

    def __post_init__(self):
        M = _square(self.M, "M")
        if not np.allclose(M, M.T, atol=1e-12):
            raise ValueError("M must be symmetric")
        if (M < 0).any():
            raise ValueError("M must be entrywise nonnegative")
        if not 0.5 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0.5, 1], got {self.lam}")
        object.__setattr__(self, "M", M)

    @property
    def n(self):
        return self.M.shape[0]


@dataclass(frozen=True)
class GaussianMISpec:
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        cov = _square(self.cov, "covariance")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        _check_pd(cov, "covariance")
        object.__setattr__(self, "cov", cov)

    @property
    def n(self):
        return self.cov.shape[0]


@dataclass(frozen=True)
class LogDetSpec:
    K: np.ndarray = field(repr=False)

    def __post_init__(self):
        K = _square(self.K, "K")
        if not np.allclose(K, K.T, atol=1e-12):
            raise ValueError("K must be symmetric")
        _check_pd(K, "K")
        object.__setattr__(self, "K", K)

    @property
    def n(self):
        return self.K.shape[0]


@dataclass(frozen=True)
class HalfProductsSpec:
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)

    def __post_init__(self):
        vecs = [np.array(v, dtype=np.float64).reshape(-1) for v in (self.a, self.b, self.c)]
        if len({v.size for v in vecs}) != 1:
            raise ValueError("a, b, c must have the same length")
        if any((v < 0).any() for v in vecs):
            raise ValueError("a, b, c must be nonnegative")
        for name, v in zip("abc", vecs):
            object.__setattr__(self, name, v)

    @property
    def n(self):
        return self.a.size


@dataclass(frozen=True)
class CutSpec:
    W: np.ndarray = field(repr=False)

    def __post_init__(self):
        W = _square(self.W, "W")
        if not np.allclose(W, W.T, atol=1e-12):
            raise ValueError("W must be symmetric")
        if (W < 0).any():
            raise ValueError("edge weights must be nonnegative")
        if np.any(np.diag(W) != 0):
            raise ValueError("W must have a zero diagonal")
        object.__setattr__(self, "W", W)

    @property
    def n(self):
        return self.W.shape[0]


def _spec_mask(spec, X):
    return _as_mask(X, spec.n)


# Literal formulas. These deliberately avoid the quadratic/Schur machinery
# used by the oracles so that tests can check one against the other.


def subset_selection_eval(spec: SubsetSelectionSpec, X) -> float:
    x = _spec_mask(spec, X)
    return float(spec.M[:, x].sum() - spec.lam * spec.M[np.ix_(x, x)].sum())


def _gaussian_entropy(cov, x):
    k = int(x.sum())
    if k == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(cov[np.ix_(x, x)])
    if sign <= 0:
        raise NotPositiveDefiniteError("covariance submatrix is not positive definite")
    return 0.5 * (k * math.log(2 * math.pi * math.e) + logdet)


def gaussian_mi_eval(spec: GaussianMISpec, X) -> float:
    x = _spec_mask(spec, X)
    return _gaussian_entropy(spec.cov, x) + _gaussian_entropy(spec.cov, ~x)


def logdet_sym_eval(spec: LogDetSpec, X) -> float:
    x = _spec_mask(spec, X)
    total = 0.0
    for part in (x, ~x):
        if part.any():
            sign, logdet = np.linalg.slogdet(spec.K[np.ix_(part, part)])
            if sign <= 0:
                raise NotPositiveDefiniteError("principal submatrix is not positive definite")
            total += logdet
    return float(total)


def half_products_eval(spec: HalfProductsSpec, X) -> float:
    members = np.flatnonzero(_spec_mask(spec, X))
    total = float(spec.c[members].sum())
    for p, i in enumerate(members):
        for j in members[p + 1 :]:
            total -= spec.a[i] * spec.b[j]
    return total


def cut_eval(spec: CutSpec, X) -> float:
    x = _spec_mask(spec, X)
    return float(spec.W[np.ix_(x, ~x)].sum())


# oracle constructors


def subset_selection(spec: SubsetSelectionSpec) -> QuadraticOracle:
    return QuadraticOracle(spec.M.sum(axis=0), -spec.lam * spec.M, family="subset-selection", spec=spec)


def half_products(spec: HalfProductsSpec) -> QuadraticOracle:
    upper = np.triu(np.outer(spec.a, spec.b), k=1)
    Q = -0.5 * (upper + upper.T)
    return QuadraticOracle(spec.c, Q, family="half-products", spec=spec)


def cut(spec: CutSpec) -> QuadraticOracle:
    return QuadraticOracle(spec.W.sum(axis=1), -spec.W, family="cut", spec=spec)


def modular(w) -> QuadraticOracle:
    w = w.w if isinstance(w, ModularWeights) else np.asarray(w, dtype=np.float64)
    return QuadraticOracle(w, None, family="modular", spec=ModularWeights(w))


def logdet(spec: LogDetSpec) -> SymLogDetOracle:
    return SymLogDetOracle(spec.K, family="logdet", spec=spec)


def gaussian_mi(spec: GaussianMISpec) -> SymLogDetOracle:
    n = spec.n
    return SymLogDetOracle(
        spec.cov,
        scale=0.5,
        offset=0.5 * n * math.log(2 * math.pi * math.e),
        family="gaussian-mi",
        spec=spec,
    )


def unit_triangle() -> QuadraticOracle:
    """Cut function of the triangle graph with unit edge weights."""
    return cut(CutSpec(np.ones((3, 3)) - np.eye(3)))


# ---------------------------------------------------------------------------
# checks and ingestion
# ---------------------------------------------------------------------------


def verify_submodularity(f: SetFunction, tol: float = 1e-9, max_n: int = EXHAUSTIVE_MAX_N) -> bool:
    """Exhaustive diminishing-returns check.

    Uses the local form ``f(A+i) + f(A+j) >= f(A) + f(A+i+j)`` for every
    ``A`` and every pair ``i, j`` outside ``A``, which is equivalent to
    ``f(i|A) >= f(i|B)`` for all ``A <= B``, ``i`` not in ``B``.
    """
    if f.n > max_n:
        raise ValueError(f"exhaustive check limited to n <= {max_n}, got n = {f.n}")
    v = f.values()
    codes = np.arange(1 << f.n)
    for i in range(f.n):
        for j in range(i + 1, f.n):
            bi, bj = 1 << i, 1 << j
            A = codes[(codes & (bi | bj)) == 0]
            lhs = v[A | bi] + v[A | bj]
            rhs = v[A] + v[A | bi | bj]
            if np.any(lhs < rhs - tol):
                return False
    return True


def ingest_features(rows, gamma: float, jitter: float = 1e-8) -> LogDetSpec:
    """RBF similarity ``exp(-gamma * |x_i - x_j|^2)`` plus ``jitter`` on the diagonal."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("feature table must be two-dimensional (one row per point)")
    if gamma <= 0:
        raise ValueError(f"bandwidth must be positive, got {gamma}")
    if jitter < 0:
        raise ValueError(f"jitter must be nonnegative, got {jitter}")
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    K = np.exp(-gamma * d2) + jitter * np.eye(X.shape[0])
    return LogDetSpec(K)
