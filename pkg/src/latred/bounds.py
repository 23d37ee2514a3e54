"""Closed-form reducibility-gain and performance-loss bounds, and Monte Carlo estimators.

The evaluators are plain arithmetic on a :class:`BoundQuery`. The
``empirical_*`` helpers run the actual reduction on perturbed oracles so the
formulas can be checked against measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from latred.core import ElementSet, Lattice
from latred.oracles import SetFunction
from latred.perturbation import Perturbation, perturbed_oracle
from latred.reduction import (
    MAX,
    MIN,
    ReductionTrace,
    _check_mode,
    lattice_stats,
    reduction_step,
)


@dataclass(frozen=True)
class BoundQuery:
    """Inputs shared by the bound formulas; unset fields are ``None``.

    ``n`` and ``F`` stand for ``n_{k-1}`` and ``F_{k-1}`` when a query
    describes iteration ``k > 1``.
    """

    t: float
    n: int | None = None
    delta: float | None = None
    eps: float | None = None
    R_t: float | None = None
    c: float | None = None
    k: float | None = None
    s: int | None = None
    F: float | None = None
    opt: float | None = None

    @classmethod
    def from_stats(cls, stats, t: float, **kw) -> BoundQuery:
        return cls(t=t, c=stats.c, k=stats.k, s=stats.s, F=stats.F, **kw)


class BoundValue(NamedTuple):
    value: float
    raw: float


def _need(q, *names):
    missing = [n for n in names if getattr(q, n) is None]
    if missing:
        raise ValueError(f"bound query is missing {', '.join(missing)}")


def thm1_reduction_bound(q: BoundQuery) -> BoundValue:
    """Expected first-iteration reduction rate is at least ``1 - c k / (2 t s)`` (needs ``t > m``)."""
    _need(q, "c", "k", "s")
    if q.s <= 0:
        raise ValueError("no undecided elements (s = 0)")
    if q.t <= 0:
        raise ValueError("perturbation scale must be positive")
    raw = 1.0 - q.c * q.k / (2.0 * q.t * q.s)
    return BoundValue(max(0.0, raw), raw)


def _in_initial(reference: ElementSet, trace: ReductionTrace):
    if reference not in trace.initial:
        raise ValueError("reference optimum lies outside the initial lattice")


def thm2_loss_bounds(r: Perturbation, trace: ReductionTrace, reference: ElementSet, n: int | None = None, R_t: float | None = None):
    """Additive loss bounds ``(exact, coarse)`` for one perturbed reduction run.

    ``exact`` is ``-r(X_t - X_ref) + r(X_ref - Y_t)`` for minimization and
    ``r(X_t - X_ref) - r(X_ref - Y_t)`` for maximization; ``coarse`` is
    ``n t R_t``. ``trace`` is the perturbed run and ``reference`` an optimum
    of the unperturbed problem.
    """
    _in_initial(reference, trace)
    X_t, Y_t = trace.final.lower, trace.final.upper
    added, dropped = r.weights(X_t - reference), r.weights(reference - Y_t)
    exact = -added + dropped if trace.mode == MIN else added - dropped
    n = trace.n if n is None else n
    R_t = trace.rate if R_t is None else R_t
    return exact, n * r.t * R_t


def thm4_prob_bound(q: BoundQuery, mistaken: int) -> float:
    """With probability at least ``1 - delta`` the loss is below ``t sqrt(2 K_r (n + ln(1/delta)))``."""
    _need(q, "n", "delta")
    if not 0.0 < q.delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {q.delta}")
    return q.t * math.sqrt(2.0 * mistaken * (q.n + math.log(1.0 / q.delta)))


def expected_mistakes_bound(q: BoundQuery, iteration: int = 1, mode: str = MAX) -> float:
    """Upper bound on the expected number of mistaken decisions in one iteration.

    ``n/2 - (F - f(X_min))/t`` for minimization, ``n/2 - (f(X_max) - F)/t``
    for maximization, with ``n``, ``F`` taken at the start of ``iteration``.
    """
    _check_mode(mode)
    _need(q, "n", "F", "opt")
    if iteration < 1:
        raise ValueError("iterations are counted from 1")
    if q.t == 0:
        raise ValueError("perturbation scale must be nonzero")
    gap = q.F - q.opt if mode == MIN else q.opt - q.F
    return q.n / 2.0 - gap / q.t


def iteration_query(f: SetFunction, trace: ReductionTrace, iteration: int, t: float, opt: float) -> BoundQuery:
    """Query for iteration ``k``: ``n_{k-1}`` and ``F_{k-1}`` read off the trace."""
    rec = trace.iterations[iteration - 1]
    L = Lattice(rec.X, rec.Y)
    return BoundQuery(t=t, n=L.width, F=0.5 * (f(rec.X) + f(rec.Y)), opt=opt)


@dataclass(frozen=True)
class MistakenReductionReport:
    contraction: ElementSet
    count: int
    per_iteration: tuple[int, ...]


def mistaken_counts(reference: ElementSet, trace: ReductionTrace) -> MistakenReductionReport:
    """Contraction ``(ref | X_t) & Y_t`` of a reference optimum and the decisions that contradict it."""
    _in_initial(reference, trace)
    X_t, Y_t = trace.final.lower, trace.final.upper
    contraction = (reference | X_t) & Y_t
    per = []
    for rec in trace.iterations:
        if trace.mode == MAX:
            per.append(len(rec.U & reference) + len(rec.D - reference))
        else:
            per.append(len(rec.U - reference) + len(rec.D & reference))
    return MistakenReductionReport(contraction, len(contraction ^ reference), tuple(per))


def suggest_scale(q: BoundQuery, mode: str = "remark1") -> float:
    """Closed-form perturbation scales.

    ``remark1``: ``2 (f* - F) / (n (1 - 2 eps))``, targeting about ``eps n`` mistaken elements.
    ``remark2``: ``2 ((1 + delta) f* - F) / n``, targeting ratio ``1 - delta``.
    """
    _need(q, "n", "F", "opt")
    if mode == "remark1":
        _need(q, "eps")
        if not 0.0 < q.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 1/2), got {q.eps}")
        num = 2.0 * (q.opt - q.F)
        if num <= 0:
            raise ValueError("optimum must exceed F")
        return num / (q.n * (1.0 - 2.0 * q.eps))
    if mode == "remark2":
        _need(q, "delta")
        if q.delta <= 0:
            raise ValueError(f"delta must be positive, got {q.delta}")
        num = 2.0 * ((1.0 + q.delta) * q.opt - q.F)
        if num <= 0:
            raise ValueError("nonpositive scale numerator")
        return num / q.n
    raise ValueError(f"unknown mode {mode!r}; use 'remark1' or 'remark2'")


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


class Estimate(NamedTuple):
    mean: float
    stderr: float
    draws: int


def _estimate(samples) -> Estimate:
    x = np.asarray(samples, dtype=np.float64)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return Estimate(float(x.mean()), se, x.size)


def _draw_seeds(seed, draws):
    return np.random.SeedSequence(seed).generate_state(draws, dtype=np.uint64)


def empirical_first_iteration_rate(f: SetFunction, L: Lattice, t: float, draws: int, seed: int) -> Estimate:
    """Fraction of ``T - S`` decided by the first perturbed scan, averaged over draws."""
    S, T = L.lower.to_array(), L.upper.to_array()
    s = L.width
    rates = []
    for sd in _draw_seeds(seed, draws):
        g = perturbed_oracle(f, Perturbation.draw(f.n, t, int(sd)))
        U, D, *_ = reduction_step(g, S, T)
        rates.append((U | D).sum() / s)
    return _estimate(rates)


def empirical_first_iteration_mistakes(
    f: SetFunction, L: Lattice, t: float, draws: int, seed: int, reference: ElementSet, mode: str = MAX
) -> Estimate:
    """Mean number of first-iteration decisions contradicting ``reference``."""
    _check_mode(mode)
    S, T = L.lower.to_array(), L.upper.to_array()
    ref = reference.to_array()
    counts = []
    for sd in _draw_seeds(seed, draws):
        g = perturbed_oracle(f, Perturbation.draw(f.n, t, int(sd)))
        U, D, *_ = reduction_step(g, S, T)
        if mode == MAX:
            counts.append(int((U & ref).sum() + (D & ~ref).sum()))
        else:
            counts.append(int((U & ~ref).sum() + (D & ref).sum()))
    return _estimate(counts)


def bound_rows(config_id: str, f: SetFunction, L: Lattice, ts, draws: int, seed: int, reference: ElementSet, opt: float, mode: str = MAX):
    """Rows comparing first-iteration bounds with Monte Carlo means at each scale."""
    stats = lattice_stats(f, L)
    rows = []
    for j, t in enumerate(ts):
        ratio = (t - stats.m) / (stats.Mx - stats.m) if stats.Mx != stats.m else float("nan")
        q = BoundQuery.from_stats(stats, t, n=L.width, opt=opt)
        est = empirical_first_iteration_rate(f, L, t, draws, seed + j)
        if q.c is not None:
            rows.append(_bound_row(config_id, t, ratio, "reduction_rate_lower", thm1_reduction_bound(q).raw, est))
        est = empirical_first_iteration_mistakes(f, L, t, draws, seed + j, reference, mode)
        rows.append(_bound_row(config_id, t, ratio, "mistakes_upper", expected_mistakes_bound(q, 1, mode), est))
    return rows


def _bound_row(config_id, t, ratio, name, value, est):
    return {
        "config": config_id,
        "t": repr(float(t)),
        "P(t)": repr(float(ratio)),
        "bound": name,
        "bound_value": repr(float(value)),
        "empirical_mean": repr(est.mean),
        "empirical_stderr": repr(est.stderr),
        "draws": est.draws,
    }
