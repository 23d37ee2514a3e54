import math

import numpy as np
import pytest

from latred.bounds import (
    BoundQuery,
    bound_rows,
    empirical_first_iteration_mistakes,
    empirical_first_iteration_rate,
    expected_mistakes_bound,
    iteration_query,
    mistaken_counts,
    suggest_scale,
    thm1_reduction_bound,
    thm2_loss_bounds,
    thm4_prob_bound,
)
from latred.core import ElementSet, Lattice
from latred.harness import generate_instance
from latred.perturbation import Perturbation, perturbed_oracle, pr_maximize, pr_minimize
from latred.reduction import MAX, MIN, _reduce, lattice_stats
from latred.solvers import brute_force_optima


def S(n, *idx):
    return ElementSet.from_indices(n, idx)


def test_reduction_rate_bound_examples(triangle):
    q = BoundQuery.from_stats(lattice_stats(triangle), 4.0)
    assert thm1_reduction_bound(q).value == pytest.approx(0.5)
    assert thm1_reduction_bound(BoundQuery.from_stats(lattice_stats(triangle), 1e9)).value == pytest.approx(1.0)
    low = thm1_reduction_bound(BoundQuery.from_stats(lattice_stats(triangle), 1.0))
    assert low.value == 0.0 and low.raw == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        thm1_reduction_bound(BoundQuery(t=1.0))


def test_loss_bounds_triangle_min(triangle):
    res = pr_minimize(triangle, noise=[-3.0, 3.0, -3.0])
    exact, coarse = thm2_loss_bounds(res.perturbation, res.step2_trace, S(3))
    assert res.loss(0.0) == 2
    assert exact == pytest.approx(6.0)
    assert coarse == pytest.approx(3 * 3.0 * 1.0)


def test_loss_bounds_coarse_and_zero_noise(triangle):
    r0 = Perturbation.inject(np.zeros(3), t=0.0)
    trace = _reduce(perturbed_oracle(triangle, r0), Lattice.full(3), MAX)
    exact, coarse = thm2_loss_bounds(r0, trace, S(3, 0))
    assert exact == 0 and coarse == 0
    r = Perturbation.inject(np.full(20, 0.1), t=0.5)
    f = generate_instance("cut", 20, 0)
    trace = _reduce(f, Lattice.full(20), MAX)
    _, coarse = thm2_loss_bounds(r, trace, S(20), n=20, R_t=0.8)
    assert coarse == pytest.approx(8.0)


def test_high_probability_bound_examples():
    q = BoundQuery(t=1.0, n=20, delta=0.1)
    assert thm4_prob_bound(q, 4) == pytest.approx(math.sqrt(8 * (20 + math.log(10))))
    assert thm4_prob_bound(q, 4) == pytest.approx(13.357, abs=1e-3)
    assert thm4_prob_bound(q, 0) == 0
    with pytest.raises(ValueError):
        thm4_prob_bound(BoundQuery(t=1.0, n=20, delta=1.0), 1)


def test_expected_mistakes_examples():
    q = BoundQuery(t=4.0, n=3, F=0.0, opt=2.0)
    assert expected_mistakes_bound(q, 1, MAX) == pytest.approx(1.0)
    assert expected_mistakes_bound(BoundQuery(t=1e9, n=3, F=0.0, opt=2.0)) == pytest.approx(1.5)
    assert expected_mistakes_bound(BoundQuery(t=2.0, n=4, F=3.0, opt=1.0), 1, MIN) == pytest.approx(1.0)


def test_iteration_query():
    f = generate_instance("subset-selection", 10, 2)
    trace = pr_maximize(f, t=1.0, seed=1).step2_trace
    q = iteration_query(f, trace, 1, 1.0, 5.0)
    rec = trace.iterations[0]
    assert q.n == len(rec.Y - rec.X)
    assert q.F == pytest.approx(0.5 * (f(rec.X) + f(rec.Y)))


def test_mistaken_counts_examples(triangle):
    res = pr_maximize(triangle, noise=[-3.0, 3.0, -3.0])
    rep = mistaken_counts(S(3, 0), res.step2_trace)
    assert rep.contraction == S(3, 1) and rep.count == 2
    rep = mistaken_counts(S(3, 1), res.step2_trace)
    assert rep.count == 0


def test_contraction_identity_on_random_runs():
    for seed in range(30):
        f = generate_instance("subset-selection", 10, seed)
        for mode, run in ((MAX, pr_maximize), (MIN, pr_minimize)):
            res = run(f, t=1.0, seed=seed)
            if res.step2_trace is None:
                continue
            optima, _ = brute_force_optima(f, mode)
            ref = optima[0]
            X_t, Y_t = res.lattice.lower, res.lattice.upper
            r = res.perturbation.weights
            Xc = mistaken_counts(ref, res.step2_trace).contraction
            assert r(X_t - ref) - r(ref - Y_t) == pytest.approx(r(Xc) - r(ref))


def test_suggest_scale_examples():
    q = BoundQuery(t=0.0, n=3, F=0.0, opt=2.0, eps=0.25)
    assert suggest_scale(q, "remark1") == pytest.approx(8 / 3)
    with pytest.raises(ValueError):
        suggest_scale(BoundQuery(t=0.0, n=3, F=0.0, opt=2.0, eps=0.5), "remark1")
    q = BoundQuery(t=0.0, n=3, F=0.0, opt=2.0, delta=0.5)
    assert suggest_scale(q, "remark2") == pytest.approx(2.0)
    with pytest.raises(ValueError):
        suggest_scale(q, "remark3")


def test_bounds_are_pure(triangle):
    q = BoundQuery.from_stats(lattice_stats(triangle), 4.0, n=3, opt=2.0)
    assert thm1_reduction_bound(q) == thm1_reduction_bound(q)
    assert expected_mistakes_bound(q) == expected_mistakes_bound(q)


def test_empirical_triangle_against_bounds(triangle):
    L = Lattice.full(3)
    est = empirical_first_iteration_rate(triangle, L, 4.0, 1000, 0)
    assert est.mean >= 0.5 - 3 * est.stderr
    # element i is decided iff |r_i| > 2, which has probability 0.5 at t = 4
    assert abs(est.mean - 0.5) <= 4 * est.stderr
    est = empirical_first_iteration_mistakes(triangle, L, 4.0, 1000, 0, S(3, 0), MAX)
    assert est.mean <= 1.0 + 3 * est.stderr


def test_bound_rows_columns(triangle):
    rows = bound_rows("tri", triangle, Lattice.full(3), [3.0, 4.0], 50, 0, S(3, 0), 2.0)
    assert len(rows) == 4
    assert {r["bound"] for r in rows} == {"reduction_rate_lower", "mistakes_upper"}
    assert rows[0]["P(t)"] == "nan"  # Mx == m for the triangle
    assert all(r["draws"] == 50 for r in rows)
