"""Lattice reduction for unconstrained submodular minimization and maximization.

Both procedures shrink a working interval ``[X, Y]`` using the signs of two
marginals per undecided element::

    U = {i in Y - X : f(i | X) < 0}
    D = {j in Y - X : f(j | Y - j) > 0}

Minimization moves ``U`` into ``X`` and drops ``D`` from ``Y``; maximization
does the opposite. ``U`` and ``D`` are always computed from the interval as
it was at the start of the iteration (batch updates).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from latred.core import ElementSet, GroundSet, Lattice
from latred.oracles import SetFunction

log = logging.getLogger(__name__)

MIN = "min"
MAX = "max"


def _check_mode(mode: str) -> str:
    if mode not in (MIN, MAX):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    return mode


@dataclass(frozen=True)
class IterationRecord:
    X: ElementSet
    Y: ElementSet
    U: ElementSet
    D: ElementSet


@dataclass
class ReductionTrace:
    """Everything a reduction run did, iteration by iteration."""

    mode: str
    initial: Lattice
    iterations: list[IterationRecord] = field(default_factory=list)
    lattices: list[Lattice] = field(default_factory=list)
    marginal_evals: int = 0

    @property
    def n(self) -> int:
        return self.initial.n

    @property
    def final(self) -> Lattice:
        return self.lattices[-1] if self.lattices else self.initial

    @property
    def reduced_flags(self) -> np.ndarray:
        """``H_i``: element ``i`` was undecided initially and decided at the end."""
        return self.initial.free.to_array() & ~self.final.free.to_array()

    @property
    def reduced(self) -> int:
        return int(self.reduced_flags.sum())

    @property
    def rates(self) -> list[float]:
        return [1.0 - L.width / self.n for L in self.lattices]

    @property
    def rate(self) -> float:
        return 1.0 - self.final.width / self.n

    def rate_after(self, k: int) -> float:
        """Reduction rate after ``k`` iterations (the final rate once the run has stopped)."""
        if k < 1:
            raise ValueError("iterations are counted from 1")
        if not self.lattices:
            return 1.0 - self.initial.width / self.n
        return 1.0 - self.lattices[min(k, len(self.lattices)) - 1].width / self.n

    def rows(self) -> list[dict]:
        return [
            {
                "iter": t,
                "|X_t|": len(rec.X),
                "|Y_t|": len(rec.Y),
                "|U_t|": len(rec.U),
                "|D_t|": len(rec.D),
                "rate": rate,
            }
            for t, (rec, rate) in enumerate(zip(self.iterations, self.rates), 1)
        ]


def reduction_step(f: SetFunction, X: np.ndarray, Y: np.ndarray, tol: float = 0.0):
    """One sign scan of the interval ``[X, Y]``.

    Returns ``(U, D, a, b, free)`` as boolean masks / arrays, where
    ``a = f(i | X)`` and ``b = f(i | Y - i)`` over the sorted ``free`` indices.
    """
    free = np.flatnonzero(Y & ~X)
    a = f.gains(X, free)
    b = f.gains(Y, free)
    U = np.zeros_like(X)
    D = np.zeros_like(X)
    U[free[a < -tol]] = True
    D[free[b > tol]] = True
    return U, D, a, b, free


def _reduce_arrays(f: SetFunction, X: np.ndarray, Y: np.ndarray, mode: str, tol: float = 0.0, trace=None):
    """Core loop on boolean masks. Returns ``(X, Y, a, b, free)``.

    ``a``/``b``/``free`` are the marginals from the final, non-shrinking scan
    (``None`` when the interval collapsed to a point).
    """
    while (Y & ~X).any():
        U, D, a, b, free = reduction_step(f, X, Y, tol)
        clash = U & D
        if clash.any():
            # impossible for submodular f; keep the interval valid by deciding neither
            log.warning("elements %s satisfy both reduction rules; oracle is not submodular here", np.flatnonzero(clash).tolist())
            U &= ~clash
            D &= ~clash
        if trace is not None:
            trace.iterations.append(
                IterationRecord(
                    ElementSet.from_array(X),
                    ElementSet.from_array(Y),
                    ElementSet.from_array(U),
                    ElementSet.from_array(D),
                )
            )
        if mode == MIN:
            X = X | U
            Y = Y & ~D
        else:
            Y = Y & ~U
            X = X | D
        if trace is not None:
            trace.lattices.append(Lattice.from_arrays(X, Y))
        if not U.any() and not D.any():
            return X, Y, a, b, free
    return X, Y, None, None, None


def _reduce(f: SetFunction, L: Lattice, mode: str, tol: float = 0.0) -> ReductionTrace:
    _check_mode(mode)
    if L.n != f.n:
        raise ValueError(f"ground set mismatch: oracle over {f.n}, lattice over {L.n}")
    trace = ReductionTrace(mode=mode, initial=L)
    before = f.marginal_queries
    _reduce_arrays(f, L.lower.to_array(), L.upper.to_array(), mode, tol, trace)
    trace.marginal_evals = f.marginal_queries - before
    return trace


def reduce_min(f: SetFunction, L: Lattice | None = None, tol: float = 0.0):
    """Shrink ``L`` while keeping every minimizer of ``f`` inside it.

    Returns ``(lattice, trace)``.
    """
    L = Lattice.full(f.n) if L is None else L
    trace = _reduce(f, L, MIN, tol)
    return trace.final, trace


def reduce_max(f: SetFunction, L: Lattice | None = None, tol: float = 0.0):
    """Shrink ``L`` while keeping every maximizer of ``f`` inside it.

    Returns ``(lattice, trace)``.
    """
    L = Lattice.full(f.n) if L is None else L
    trace = _reduce(f, L, MAX, tol)
    return trace.final, trace


def reduce(f: SetFunction, L: Lattice | None = None, mode: str = MAX, tol: float = 0.0):
    return (reduce_min if _check_mode(mode) == MIN else reduce_max)(f, L, tol)


@dataclass(frozen=True)
class ReducibilityReport:
    elements: np.ndarray
    K_i: np.ndarray
    K: int

    @property
    def reducible(self) -> bool:
        return self.K > 0


def _endpoint_marginals(f: SetFunction, L: Lattice):
    if L.n != f.n:
        raise ValueError(f"ground set mismatch: oracle over {f.n}, lattice over {L.n}")
    free = np.flatnonzero(L.free.to_array())
    if free.size == 0:
        raise ValueError("lattice has no undecided elements")
    return free, f.gains(L.lower.to_array(), free), f.gains(L.upper.to_array(), free)


def reducibility_index(f: SetFunction, L: Lattice | None = None) -> ReducibilityReport:
    """``K_i = sgn f(i|S) * sgn f(i|T-i)`` and ``K = max K_i``; reducible iff ``K > 0``."""
    L = Lattice.full(f.n) if L is None else L
    free, a, b = _endpoint_marginals(f, L)
    K_i = (np.sign(a) * np.sign(b)).astype(int)
    return ReducibilityReport(free, K_i, int(K_i.max()))


@dataclass(frozen=True)
class LatticeStats:
    """Margins and curvature of ``f`` on ``[S, T]``.

    ``c`` is ``None`` when no element has ``f(i|S) > 0``.
    """

    m: float
    Mx: float
    c: float | None
    k: float
    s: int
    F: float


def lattice_stats(f: SetFunction, L: Lattice | None = None) -> LatticeStats:
    L = Lattice.full(f.n) if L is None else L
    free, a, b = _endpoint_marginals(f, L)
    pos = a > 0
    c = float(np.max((a[pos] - b[pos]) / a[pos])) if pos.any() else None
    return LatticeStats(
        m=float(np.min(np.minimum(a, -b))),
        Mx=float(np.max(np.maximum(a, -b))),
        c=c,
        k=float(a.sum()),
        s=int(free.size),
        F=0.5 * (f(L.lower) + f(L.upper)),
    )


def reduction_rate(before: Lattice, after: Lattice, N: GroundSet | int | None = None) -> float:
    """``1 - |T' - S'| / n`` for ``after = [S', T']``, which must sit inside ``before``."""
    if not before.contains_lattice(after):
        raise ValueError("reduced lattice is not nested in the original lattice")
    n = before.n if N is None else (N.n if isinstance(N, GroundSet) else int(N))
    if n != after.n:
        raise ValueError(f"ground set mismatch: {n} vs {after.n}")
    return 1.0 - after.width / n
