"""Property checks run by ``latred verify``.

Each check returns a list of human-readable violations; an empty list means
the property held on every instance tried.
"""

from __future__ import annotations

import numpy as np

from latred.core import Lattice, derive_seed
from latred.oracles import EXHAUSTIVE_MAX_N, SetFunction, verify_submodularity
from latred.perturbation import Perturbation, _perturbation_reduction
from latred.reduction import MAX, MIN, _reduce, reducibility_index
from latred.solvers import branch_and_bound_max, brute_force_optima

REL_TOL = 1e-9


def _close(a, b, scale):
    return abs(a - b) <= REL_TOL * max(1.0, abs(scale))


def check_submodular(name: str, f: SetFunction) -> list[str]:
    if f.n > EXHAUSTIVE_MAX_N:
        return []
    return [] if verify_submodularity(f) else [f"{name}: not submodular"]


def check_preservation(name: str, f: SetFunction) -> list[str]:
    """Every optimum stays inside ``[X_t, Y_t]`` after every iteration, both modes."""
    out = []
    for mode in (MIN, MAX):
        optima, _ = brute_force_optima(f, mode)
        trace = _reduce(f, Lattice.full(f.n), mode)
        for it, L in enumerate(trace.lattices, 1):
            lost = [X for X in optima if X not in L]
            if lost:
                out.append(f"{name}: {mode} optimum {lost[0].serialize() or '{}'} dropped at iteration {it}")
                break
    return out


def check_equivalence(name: str, f: SetFunction) -> list[str]:
    """``K > 0`` iff the first iteration shrinks the lattice (nonzero endpoint marginals only)."""
    L = Lattice.full(f.n)
    a = f.gains(L.lower.to_array())
    b = f.gains(L.upper.to_array())
    if np.any(a == 0) or np.any(b == 0):
        return []
    reducible = reducibility_index(f, L).reducible
    out = []
    for mode in (MIN, MAX):
        trace = _reduce(f, L, mode)
        shrank = trace.lattices[0].width < L.width
        if shrank != reducible:
            out.append(f"{name}: K>0 is {reducible} but {mode} first iteration shrank={shrank}")
    return out


def check_bnb(name: str, f: SetFunction) -> list[str]:
    _, best = brute_force_optima(f, MAX)
    rep = branch_and_bound_max(f)
    if not _close(rep.value, best, best):
        return [f"{name}: branch-and-bound {rep.value!r} != brute force {best!r}"]
    return []


def check_loss_bounds(name: str, f: SetFunction, ts, seed: int) -> list[str]:
    """Loss <= exact noise bound <= ``n t R_t`` for perturbation-reduction in both modes."""
    from latred.bounds import thm2_loss_bounds

    out = []
    for mode in (MIN, MAX):
        optima, best = brute_force_optima(f, mode)
        for j, t in enumerate(ts):
            r = Perturbation.draw(f.n, t, derive_seed(seed, j, mode == MAX))
            res = _perturbation_reduction(f, None, t, 0, "brute", mode, r, 1, 0)
            loss = res.loss(best)
            if res.step2_trace is None:
                if loss > REL_TOL * max(1.0, abs(best)):
                    out.append(f"{name}: {mode} t={t!r} lost {loss!r} without a perturbed step")
                continue
            ref = optima[0]
            exact, coarse = thm2_loss_bounds(r, res.step2_trace, ref, n=f.n, R_t=res.rate)
            slack = REL_TOL * max(1.0, abs(best))
            if loss > exact + slack:
                out.append(f"{name}: {mode} t={t!r} loss {loss!r} exceeds exact bound {exact!r}")
            if exact > coarse + slack:
                out.append(f"{name}: {mode} t={t!r} exact bound {exact!r} exceeds n t R_t = {coarse!r}")
    return out


def run_checks(instances, ts=(0.1, 0.5, 1.0, 2.0), seed: int = 0, bnb: bool = True) -> tuple[list[str], int]:
    """Run every check on ``(name, f)`` pairs. Returns ``(violations, checks_run)``."""
    violations, count = [], 0
    for i, (name, f) in enumerate(instances):
        suites = [
            check_submodular(name, f),
            check_preservation(name, f),
            check_equivalence(name, f),
            check_loss_bounds(name, f, ts, derive_seed(seed, i)),
        ]
        if bnb:
            suites.append(check_bnb(name, f))
        count += len(suites)
        for v in suites:
            violations.extend(v)
    return violations, count
