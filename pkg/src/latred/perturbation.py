"""Perturbation-reduction: reduce ``f + r`` for random modular ``r``, then solve ``f``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from latred.core import Lattice, ModularWeights, uniform_noise
from latred.oracles import PerturbedOracle, SetFunction
from latred.reduction import (
    MAX,
    MIN,
    LatticeStats,
    ReductionTrace,
    _check_mode,
    _reduce,
    reducibility_index,
)
from latred.solvers import SolveReport, solve


@dataclass(frozen=True)
class Perturbation:
    """A draw of modular noise with ``|r(i)| <= t``; ``seed`` is ``None`` for injected noise."""

    weights: ModularWeights
    t: float
    seed: int | None = None

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"noise scale must be nonnegative, got {self.t}")
        if np.any(np.abs(self.weights.w) > self.t):
            raise ValueError("noise weights exceed the stated scale")

    @classmethod
    def draw(cls, n: int, t: float, seed: int) -> Perturbation:
        return cls(uniform_noise(n, t, seed), float(t), int(seed))

    @classmethod
    def inject(cls, w, t: float | None = None) -> Perturbation:
        w = w if isinstance(w, ModularWeights) else ModularWeights(w)
        return cls(w, float(np.abs(w.w).max(initial=0.0)) if t is None else float(t))

    @property
    def n(self) -> int:
        return self.weights.n

    def __call__(self, X) -> float:
        return self.weights(X)


def perturbed_oracle(f: SetFunction, r: Perturbation | ModularWeights) -> PerturbedOracle:
    """``g = f + r``. Submodular whenever ``f`` is, since ``r`` is modular."""
    w = r.weights if isinstance(r, Perturbation) else r
    return PerturbedOracle(f, w)


def scale_ratio(stats: LatticeStats, t: float) -> float:
    """``(t - m) / (Mx - m)``."""
    if stats.Mx == stats.m:
        raise ValueError("degenerate lattice margins (Mx == m); ratio undefined")
    return (t - stats.m) / (stats.Mx - stats.m)


def scale_from_ratio(stats: LatticeStats, ratio: float) -> float:
    """Inverse of :func:`scale_ratio`."""
    if stats.Mx == stats.m:
        raise ValueError("degenerate lattice margins (Mx == m); ratio undefined")
    return stats.m + ratio * (stats.Mx - stats.m)


@dataclass
class PRResult:
    mode: str
    solution: object
    value: float
    lattice: Lattice
    step1_lattice: Lattice
    perturbation: Perturbation
    step1_trace: ReductionTrace | None
    step2_trace: ReductionTrace | None
    inner: SolveReport
    seconds: float
    evals: int
    marginals: int

    @property
    def rate(self) -> float:
        return 1.0 - self.lattice.width / self.lattice.n

    def loss(self, reference_value: float) -> float:
        """Gap to a reference optimum value of the unperturbed problem."""
        return self.value - reference_value if self.mode == MIN else reference_value - self.value


def _perturbation_reduction(f, L, t, seed, inner, mode, noise, trials, inner_seed):
    _check_mode(mode)
    L = Lattice.full(f.n) if L is None else L
    if L.n != f.n:
        raise ValueError(f"ground set mismatch: oracle over {f.n}, lattice over {L.n}")
    if noise is not None:
        r = noise if isinstance(noise, Perturbation) else Perturbation.inject(noise)
        if r.n != f.n:
            raise ValueError(f"ground set mismatch: oracle over {f.n}, noise over {r.n}")
    else:
        r = Perturbation.draw(f.n, t, seed)
    e0, m0 = f.evals, f.marginal_queries
    t0 = time.perf_counter()

    trace1 = None
    if L.width and reducibility_index(f, L).reducible:
        trace1 = _reduce(f, L, mode)
        L = trace1.final
    step1 = L

    trace2 = None
    if L.width:
        trace2 = _reduce(perturbed_oracle(f, r), L, mode)
        L = trace2.final

    rep = solve(inner, f, L, mode, seed if inner_seed is None else inner_seed, trials)
    seconds = time.perf_counter() - t0
    return PRResult(
        mode=mode,
        solution=rep.solution,
        value=rep.value,
        lattice=L,
        step1_lattice=step1,
        perturbation=r,
        step1_trace=trace1,
        step2_trace=trace2,
        inner=rep,
        seconds=seconds,
        evals=f.evals - e0,
        marginals=f.marginal_queries - m0,
    )


def pr_minimize(
    f: SetFunction,
    L: Lattice | None = None,
    t: float = 0.0,
    seed: int = 0,
    inner: str = "brute",
    noise=None,
    trials: int = 1,
    inner_seed: int | None = None,
) -> PRResult:
    """Approximate minimizer of ``f`` over ``L`` via one perturbed reduction.

    1. if ``f`` is reducible on ``L``, shrink ``L`` with the minimization reduction;
    2. draw ``r ~ U[-t, t]^n`` (or use ``noise``) and shrink again on ``f + r``;
    3. minimize the original ``f`` over what is left with solver ``inner``.

    ``L`` must contain every minimizer of ``f``.
    """
    return _perturbation_reduction(f, L, t, seed, inner, MIN, noise, trials, inner_seed)


def pr_maximize(
    f: SetFunction,
    L: Lattice | None = None,
    t: float = 0.0,
    seed: int = 0,
    inner: str = "brute",
    noise=None,
    trials: int = 1,
    inner_seed: int | None = None,
) -> PRResult:
    """Maximization counterpart of :func:`pr_minimize`."""
    return _perturbation_reduction(f, L, t, seed, inner, MAX, noise, trials, inner_seed)
