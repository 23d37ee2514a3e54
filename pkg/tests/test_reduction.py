import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latred import oracles
from latred.core import ElementSet, Lattice
from latred.harness import FAMILIES, generate_instance
from latred.oracles import FunctionOracle
from latred.reduction import (
    MAX,
    MIN,
    lattice_stats,
    reduce,
    reduce_max,
    reduce_min,
    reducibility_index,
    reduction_rate,
)
from latred.solvers import brute_force_optima


def S(n, *idx):
    return ElementSet.from_indices(n, idx)


def test_modular_examples(mod3):
    L, trace = reduce_min(mod3)
    assert L == Lattice(S(3, 0, 2), S(3, 0, 2))
    assert trace.rate == 1.0
    assert trace.iterations[0].U == S(3, 0, 2) and trace.iterations[0].D == S(3, 1)
    # one iteration decides everything; the loop stops once the lattice is a point
    assert len(trace.iterations) == 1
    L, _ = reduce_max(mod3)
    assert L == Lattice(S(3, 1), S(3, 1))


@pytest.mark.parametrize("mode", [MIN, MAX])
def test_irreducible_examples(triangle, subset3, mode):
    for f in (triangle, subset3):
        L, trace = reduce(f, None, mode)
        assert L == Lattice.full(3)
        assert trace.rate == 0.0
        assert len(trace.iterations) == 1


def _literal_reduction(f, n, mode):
    # the textbook loop written against plain evaluations
    X, Y = set(), set(range(n))

    def val(A):
        return f(ElementSet.from_indices(n, A))

    while True:
        free = Y - X
        U = {i for i in free if val(X | {i}) - val(X) < 0}
        D = {j for j in free if val(Y) - val(Y - {j}) > 0}
        if not U and not D:
            return X, Y
        if mode == MIN:
            X, Y = X | U, Y - D
        else:
            X, Y = X | D, Y - U
        if X == Y:
            return X, Y


@pytest.mark.parametrize("mode", [MIN, MAX])
@pytest.mark.parametrize("family", FAMILIES)
def test_matches_literal_loop(family, mode):
    for seed in range(4):
        f = generate_instance(family, 8, seed)
        L, _ = reduce(f, None, mode)
        X, Y = _literal_reduction(f, 8, mode)
        assert L == Lattice(S(8, *X), S(8, *Y))


@given(st.sampled_from(FAMILIES), st.integers(6, 10), st.integers(0, 10**6), st.sampled_from([MIN, MAX]))
def test_optima_preserved_at_every_iteration(family, n, seed, mode):
    f = generate_instance(family, n, seed)
    optima, _ = brute_force_optima(f, mode)
    _, trace = reduce(f, None, mode)
    for L in trace.lattices:
        assert all(X in L for X in optima)


@given(st.sampled_from(FAMILIES), st.integers(0, 10**6), st.sampled_from([MIN, MAX]))
def test_trace_is_nested_and_rates_monotone(family, seed, mode):
    f = generate_instance(family, 12, seed)
    _, trace = reduce(f, None, mode)
    prev = trace.initial
    for L in trace.lattices:
        assert prev.contains_lattice(L)
        prev = L
    assert trace.rates == sorted(trace.rates)
    assert all(0.0 <= r <= 1.0 for r in trace.rates)
    assert trace.rate_after(1) <= trace.rate_after(100) == trace.rate


def test_reduction_on_sublattice():
    f = generate_instance("cut", 10, 3)
    L0 = Lattice(S(10, 0), S(10, 0, 1, 2, 3, 4, 5, 6))
    optima, _ = brute_force_optima(f, MAX, L0)
    L, trace = reduce_max(f, L0)
    assert L0.contains_lattice(L)
    assert all(X in L for X in optima)
    with pytest.raises(ValueError):
        reduce_max(f, Lattice.full(9))


def test_trace_rows():
    f = generate_instance("half-products", 10, 0)
    _, trace = reduce_min(f)
    rows = trace.rows()
    assert [r["iter"] for r in rows] == list(range(1, len(rows) + 1))
    for r, rec in zip(rows, trace.iterations):
        assert r["|U_t|"] == len(rec.U) and r["|D_t|"] == len(rec.D)
    assert trace.reduced == int(trace.reduced_flags.sum()) == round(trace.rate * 10)


def test_clash_is_logged_and_ignored(caplog):
    # not submodular: i's marginal is negative at X but positive at Y - i
    g = FunctionOracle(lambda X: -2 * len(X) + len(X) ** 2, 3)
    L, trace = reduce_min(g)
    assert "not submodular" in caplog.text
    assert L == Lattice.full(3)


def test_reducibility_examples(triangle, mod3):
    rep = reducibility_index(triangle)
    assert rep.K == -1 and list(rep.K_i) == [-1, -1, -1] and not rep.reducible
    assert reducibility_index(mod3).K == 1
    # f(0 | {}) = 0 gives K_0 = 0
    g = oracles.modular([0.0, -1.0])
    rep = reducibility_index(g)
    assert rep.K_i[0] == 0 and rep.K == 1
    with pytest.raises(ValueError):
        reducibility_index(g, Lattice(S(2, 0), S(2, 0)))


def test_reducibility_equivalence_on_random_instances():
    # K > 0 iff one iteration shrinks the lattice, when no endpoint marginal is 0
    hits = 0
    for seed in range(60):
        fam = FAMILIES[seed % len(FAMILIES)]
        f = generate_instance(fam, 9, seed)
        a, b = f.gains(ElementSet.empty(9)), f.gains(ElementSet.full(9))
        if np.any(a == 0) or np.any(b == 0):
            continue
        hits += 1
        K = reducibility_index(f).K
        for mode in (MIN, MAX):
            _, trace = reduce(f, None, mode)
            assert (trace.lattices[0].width < 9) == (K > 0)
    assert hits >= 50


def test_lattice_stats_examples(triangle, subset3):
    st_ = lattice_stats(triangle)
    assert (st_.m, st_.Mx, st_.c, st_.k, st_.s, st_.F) == (2, 2, 2, 6, 3, 0)
    st_ = lattice_stats(subset3)
    assert st_.m == pytest.approx(0.1)
    assert st_.Mx == pytest.approx(1.3)
    assert st_.c == pytest.approx(14 / 13)
    assert st_.k == pytest.approx(3.9)
    assert st_.s == 3
    assert st_.F == pytest.approx(0.5 * (0 + 1.8))
    assert lattice_stats(oracles.modular([1.0, 2.0, 0.5])).c == 0
    assert lattice_stats(oracles.modular([-1.0, -2.0])).c is None


def test_reduction_rate_examples():
    full = Lattice.full(100)
    assert reduction_rate(full, full) == 0
    pt = Lattice(S(100, 3), S(100, 3))
    assert reduction_rate(full, pt) == 1
    after = Lattice(ElementSet.empty(100), ElementSet.from_indices(100, range(30)))
    assert reduction_rate(full, after) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        reduction_rate(after, full)
