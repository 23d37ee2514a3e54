"""Exact and heuristic optimizers over a set interval.

All solvers take ``(f, L, ...)`` and return a :class:`SolveReport` whose
``value`` is a fresh evaluation of ``f`` at the returned set.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from latred import _kernels
from latred.core import ElementSet, Lattice
from latred.oracles import ContractedOracle, QuadraticOracle, SetFunction
from latred.reduction import MAX, MIN, _check_mode, _reduce_arrays

BRUTE_FORCE_CAP = 24
NODE_BUDGET = 2_000_000


class SolverError(RuntimeError):
    pass


class NodeBudgetExceeded(SolverError):
    pass


@dataclass
class SolveReport:
    solver: str
    solution: ElementSet
    value: float
    evals: int
    marginals: int
    seconds: float
    trials: int = 1
    exact: bool = False
    seed: int | None = None
    mode: str = MAX
    info: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "solver": self.solver,
            "n": self.solution.n,
            "value": repr(self.value),
            "set": self.solution.serialize(),
            "evals": self.evals,
            "marginals": self.marginals,
            "seconds": f"{self.seconds:.6f}",
            "seed": "" if self.seed is None else self.seed,
            "exact": int(self.exact),
        }


class _Meter:
    """Captures oracle counters and wall time around a solver body."""

    def __init__(self, f: SetFunction):
        self.f = f

    def __enter__(self):
        self.e0 = self.f.evals
        self.m0 = self.f.marginal_queries
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
        self.evals = self.f.evals - self.e0
        self.marginals = self.f.marginal_queries - self.m0


def _better(mode, v, best):
    return v > best if mode == MAX else v < best


def _pick(mode, cands):
    """Best ``(value, mask_int, array)`` by value, ties to the smallest mask."""
    sign = -1.0 if mode == MAX else 1.0
    return min(cands, key=lambda c: (sign * c[0], c[1]))


def _full(f, L):
    return Lattice.full(f.n) if L is None else L


def contract_to_lattice(f: SetFunction, L: Lattice) -> ContractedOracle:
    """``f'(Z) = f(S | Z)`` over ``T - S``; map results back with ``.lift``.

    ``L`` must have at least one undecided element.
    """
    return ContractedOracle(f, L)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------


def _table_optimum(vals, mode, rel_tol=1e-12):
    best = vals.max() if mode == MAX else vals.min()
    slack = rel_tol * max(1.0, abs(best))
    hits = np.flatnonzero(vals >= best - slack) if mode == MAX else np.flatnonzero(vals <= best + slack)
    return int(hits[0])


def _code_to_set(L, code):
    x = L.lower.to_array()
    free = np.flatnonzero(L.free.to_array())
    x[free[(code >> np.arange(free.size)) & 1 == 1]] = True
    return ElementSet.from_array(x)


def brute_force(f: SetFunction, mode: str = MAX, L: Lattice | None = None, cap: int = BRUTE_FORCE_CAP) -> SolveReport:
    """Enumerate every set in ``L``; ties go to the smallest membership mask."""
    _check_mode(mode)
    L = _full(f, L)
    if L.width > cap:
        raise SolverError(f"brute force limited to {cap} free elements, got {L.width}")
    with _Meter(f) as m:
        vals = f.values(L)
        sol = _code_to_set(L, _table_optimum(vals, mode))
        value = f(sol)
    return SolveReport("brute", sol, value, m.evals, m.marginals, m.seconds, exact=True, mode=mode)


def brute_force_optima(f: SetFunction, mode: str = MAX, L: Lattice | None = None, rel_tol: float = 1e-9):
    """All sets within ``rel_tol`` (relative) of the optimum over ``L``, plus the optimal value."""
    L = _full(f, L)
    vals = f.values(L)
    best = vals.max() if mode == MAX else vals.min()
    slack = rel_tol * max(1.0, abs(best))
    hits = np.flatnonzero(vals >= best - slack) if mode == MAX else np.flatnonzero(vals <= best + slack)
    return [_code_to_set(L, int(c)) for c in hits], float(best)


# ---------------------------------------------------------------------------
# branch and bound (maximization)
# ---------------------------------------------------------------------------


def bnb_upper_bounds(f: SetFunction, L: Lattice) -> tuple[float, float]:
    """Two valid upper bounds on ``max f`` over ``L = [S, T]``.

    ``f(S) + sum max(0, f(i|S))`` and ``f(T) + sum max(0, -f(i|T-i))``,
    both from submodularity.
    """
    S, T = L.lower.to_array(), L.upper.to_array()
    free = np.flatnonzero(T & ~S)
    a = f.gains(S, free)
    b = f.gains(T, free)
    return f(S) + np.maximum(a, 0).sum(), f(T) + np.maximum(-b, 0).sum()


def branch_and_bound_max(f: SetFunction, L: Lattice | None = None, node_budget: int = NODE_BUDGET) -> SolveReport:
    """Exact maximization by best-first search over sub-intervals.

    Every node is first shrunk with the maximization reduction, then bounded
    by the tighter of the two modular bounds in :func:`bnb_upper_bounds` and,
    if still open, split on the element with the largest ``|f(i|S)| + |f(i|T-i)|``.
    """
    L = _full(f, L)
    nodes = branches = pruned = 0
    with _Meter(f) as meter:
        best_val = -np.inf
        best_x = None
        heap = [(-np.inf, 0, L.lower.to_array(), L.upper.to_array())]
        seq = 1
        while heap:
            key, _, S, T = heapq.heappop(heap)
            if -key <= best_val:
                pruned += 1
                continue
            nodes += 1
            if nodes > node_budget:
                raise NodeBudgetExceeded(f"branch and bound exceeded {node_budget} nodes")
            S, T, a, b, free = _reduce_arrays(f, S, T, MAX)
            fS = f(S)
            if fS > best_val:
                best_val, best_x = fS, S
            if free is None:
                continue
            fT = f(T)
            if fT > best_val:
                best_val, best_x = fT, T
            ub = min(fS + np.maximum(a, 0).sum(), fT + np.maximum(-b, 0).sum())
            if ub <= best_val:
                pruned += 1
                continue
            i = free[int(np.argmax(np.abs(a) + np.abs(b)))]
            branches += 1
            S_in = S.copy()
            S_in[i] = True
            T_out = T.copy()
            T_out[i] = False
            heapq.heappush(heap, (-ub, seq, S_in, T))
            heapq.heappush(heap, (-ub, seq + 1, S, T_out))
            seq += 2
        sol = ElementSet.from_array(best_x)
        value = f(sol)
    info = {"nodes": nodes, "branches": branches, "pruned": pruned}
    return SolveReport("bnb", sol, value, meter.evals, meter.marginals, meter.seconds, exact=True, mode=MAX, info=info)


# ---------------------------------------------------------------------------
# bi-directional (double) greedy
# ---------------------------------------------------------------------------


def _is_plain_quadratic(f):
    return type(f) is QuadraticOracle


def bidirectional_greedy_runs(f: SetFunction, L: Lattice | None = None, runs: int = 1, seed: int = 0, randomized: bool = True):
    """Independent double-greedy passes; returns ``(masks, values)``.

    Row ``r`` of ``masks`` is the final set of pass ``r``. Passes visit
    ``T - S`` in index order; pass ``r`` uses row ``r`` of the uniforms drawn
    from ``default_rng(seed)``.
    """
    L = _full(f, L)
    lower, upper = L.lower.to_array(), L.upper.to_array()
    order = np.flatnonzero(upper & ~lower)
    u = np.random.default_rng(seed).random((runs, order.size))
    if _is_plain_quadratic(f):
        masks = _kernels.double_greedy(f.lin, f.Q, lower, upper, order, u, randomized)
        f._count(marginals=2 * runs * order.size)
    else:
        masks = np.empty((runs, f.n), dtype=bool)
        for r in range(runs):
            X, Y = lower.copy(), upper.copy()
            for step, i in enumerate(order):
                a = f.gains(X, [i])[0]
                b = -f.gains(Y, [i])[0]
                if randomized:
                    ap, bp = max(a, 0.0), max(b, 0.0)
                    accept = ap + bp == 0.0 or u[r, step] * (ap + bp) < ap
                else:
                    accept = a >= b
                if accept:
                    X[i] = True
                else:
                    Y[i] = False
            masks[r] = X
    values = np.array([f(x) for x in masks])
    return masks, values


def bidirectional_greedy(f: SetFunction, L: Lattice | None = None, randomized: bool = True, seed: int = 0, trials: int = 1) -> SolveReport:
    """Double greedy for maximization; the best of ``trials`` passes is kept."""
    with _Meter(f) as m:
        masks, values = bidirectional_greedy_runs(f, L, trials, seed, randomized)
        cands = [(v, ElementSet.from_array(x).mask, x) for v, x in zip(values, masks)]
        v, _, x = _pick(MAX, cands)
        sol = ElementSet.from_array(x)
    name = "greedy" if randomized else "greedy-det"
    return SolveReport(name, sol, float(v), m.evals, m.marginals, m.seconds, trials=trials, seed=seed, mode=MAX)


# ---------------------------------------------------------------------------
# random local search and random permutation
# ---------------------------------------------------------------------------


def _local_search_from(f, x, free, mode, max_steps):
    value = f(x)
    for _ in range(max_steps):
        g = f.gains(x, free)
        delta = np.where(x[free], -g, g)
        gain = delta if mode == MAX else -delta
        j = int(np.argmax(gain))
        if gain[j] <= 1e-12 * (1.0 + abs(value)):
            break
        x[free[j]] = not x[free[j]]
        value += delta[j]
    return x


def random_local_search(
    f: SetFunction, L: Lattice | None = None, mode: str = MAX, seed: int = 0, restarts: int = 5
) -> SolveReport:
    """Steepest single-flip ascent (or descent) from uniform random starts in ``L``."""
    _check_mode(mode)
    L = _full(f, L)
    rng = np.random.default_rng(seed)
    lower = L.lower.to_array()
    free = np.flatnonzero(L.free.to_array())
    max_steps = 10 * (free.size + 1) ** 2
    with _Meter(f) as m:
        cands = []
        starts = []
        for _ in range(restarts):
            x = lower.copy()
            x[free] = rng.random(free.size) < 0.5
            starts.append(x.copy())
            if free.size:
                x = _local_search_from(f, x, free, mode, max_steps)
            cands.append((f(x), ElementSet.from_array(x).mask, x))
        v, _, x = _pick(mode, cands)
        sol = ElementSet.from_array(x)
    return SolveReport("local-search", sol, float(v), m.evals, m.marginals, m.seconds, trials=restarts, seed=seed, mode=mode)


def random_permutation_solver(
    f: SetFunction, L: Lattice | None = None, mode: str = MAX, seed: int = 0, trials: int = 5
) -> SolveReport:
    """Scan a random order of ``T - S``, keeping each element whose marginal strictly improves ``f``."""
    _check_mode(mode)
    L = _full(f, L)
    rng = np.random.default_rng(seed)
    lower = L.lower.to_array()
    free = np.flatnonzero(L.free.to_array())
    with _Meter(f) as m:
        cands = []
        for _ in range(trials):
            x = lower.copy()
            for i in rng.permutation(free):
                g = f.gains(x, [i])[0]
                if (g > 0) if mode == MAX else (g < 0):
                    x[i] = True
            cands.append((f(x), ElementSet.from_array(x).mask, x))
        v, _, x = _pick(mode, cands)
        sol = ElementSet.from_array(x)
    return SolveReport("permutation", sol, float(v), m.evals, m.marginals, m.seconds, trials=trials, seed=seed, mode=mode)


# ---------------------------------------------------------------------------
# uniform entry point
# ---------------------------------------------------------------------------

SOLVERS = ("brute", "bnb", "greedy", "greedy-det", "local-search", "permutation")
RANDOMIZED = ("greedy", "local-search", "permutation")


def solve(name: str, f: SetFunction, L: Lattice | None = None, mode: str = MAX, seed: int = 0, trials: int = 1) -> SolveReport:
    """Dispatch to a solver by name. Point lattices are answered directly."""
    _check_mode(mode)
    L = _full(f, L)
    if name not in SOLVERS:
        raise ValueError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}")
    if name in ("bnb", "greedy", "greedy-det") and mode == MIN:
        raise ValueError(f"solver {name!r} only maximizes")
    if L.is_point():
        with _Meter(f) as m:
            value = f(L.lower)
        return SolveReport(name, L.lower, value, m.evals, m.marginals, m.seconds, trials=trials, seed=seed, mode=mode, exact=name in ("brute", "bnb"))
    if name == "brute":
        rep = brute_force(f, mode, L)
    elif name == "bnb":
        rep = branch_and_bound_max(f, L)
    elif name == "greedy":
        rep = bidirectional_greedy(f, L, True, seed, trials)
    elif name == "greedy-det":
        rep = bidirectional_greedy(f, L, False, seed, 1)
    elif name == "local-search":
        rep = random_local_search(f, L, mode, seed, trials)
    else:
        rep = random_permutation_solver(f, L, mode, seed, trials)
    rep.seed = seed if name in RANDOMIZED else rep.seed
    return rep
