import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latred import oracles
from latred.core import ElementSet, Lattice, ModularWeights
from latred.harness import FAMILIES, generate_instance
from latred.oracles import verify_submodularity
from latred.perturbation import (
    Perturbation,
    perturbed_oracle,
    pr_maximize,
    pr_minimize,
    scale_from_ratio,
    scale_ratio,
)
from latred.reduction import (
    MAX,
    MIN,
    LatticeStats,
    lattice_stats,
    reduce,
    reducibility_index,
)
from latred.solvers import brute_force


def S(n, *idx):
    return ElementSet.from_indices(n, idx)


def test_perturbation_validation():
    r = Perturbation.draw(6, 0.5, 3)
    assert np.all(np.abs(r.weights.w) <= 0.5) and r.seed == 3
    with pytest.raises(ValueError):
        Perturbation(ModularWeights([2.0]), 1.0)
    inj = Perturbation.inject([-3.0, 3.0, -3.0])
    assert inj.t == 3.0 and inj.seed is None
    assert inj(S(3, 0, 1)) == 0.0


def test_perturbed_oracle_marginal_shift(triangle):
    r = Perturbation.draw(3, 1.0, 0)
    g = perturbed_oracle(triangle, r)
    for m in range(8):
        X = ElementSet(3, m)
        assert np.allclose(g.gains(X), triangle.gains(X) + r.weights.w)


@pytest.mark.parametrize("family", FAMILIES)
def test_perturbation_preserves_submodularity(family):
    f = generate_instance(family, 8, 2)
    for seed in range(20):
        assert verify_submodularity(perturbed_oracle(f, Perturbation.draw(8, 3.0, seed)))


def test_scale_ratio_examples():
    stats = LatticeStats(m=0.1, Mx=1.3, c=None, k=0.0, s=3, F=0.0)
    assert scale_ratio(stats, 0.7) == pytest.approx(0.5)
    assert scale_ratio(stats, 0.1) == 0
    assert scale_ratio(stats, 1.3) == 1
    assert scale_from_ratio(stats, 0.5) == pytest.approx(0.7)
    flat = LatticeStats(m=2, Mx=2, c=2, k=6, s=3, F=0)
    with pytest.raises(ValueError):
        scale_ratio(flat, 1.0)


def test_pr_minimize_triangle_trace(triangle):
    res = pr_minimize(triangle, noise=[-3.0, 3.0, -3.0])
    assert res.step1_trace is None  # triangle is irreducible
    it = res.step2_trace.iterations[0]
    assert it.U == S(3, 0, 2) and it.D == S(3, 1)
    assert res.lattice == Lattice(S(3, 0, 2), S(3, 0, 2))
    assert res.value == 2 and res.loss(0.0) == 2


def test_pr_maximize_triangle_trace(triangle):
    res = pr_maximize(triangle, noise=[-3.0, 3.0, -3.0])
    assert res.lattice == Lattice(S(3, 1), S(3, 1))
    assert res.value == 2 and res.loss(2.0) == 0


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("mode", [MIN, MAX])
def test_zero_noise_is_lossless(family, mode):
    f = generate_instance(family, 10, 7)
    run = pr_minimize if mode == MIN else pr_maximize
    res = run(f, t=0.0, seed=1)
    assert res.lattice == res.step1_lattice
    assert res.value == pytest.approx(brute_force(f, mode).value, abs=1e-12)


@given(st.integers(0, 10**6), st.floats(0.0, 10.0), st.sampled_from([MIN, MAX]))
def test_modular_any_noise_exact(seed, t, mode):
    f = generate_instance("modular", 9, seed)
    run = pr_minimize if mode == MIN else pr_maximize
    res = run(f, t=t, seed=seed)
    assert res.value == pytest.approx(brute_force(f, mode).value)


def test_noise_below_m_leaves_irreducible_lattice_alone():
    # every draw with t <= m keeps an irreducible instance irreducible
    checked = 0
    for seed in range(40):
        f = generate_instance(FAMILIES[seed % 4], 10, seed)
        rep = reducibility_index(f)
        if rep.reducible:
            continue
        checked += 1
        m = lattice_stats(f).m
        for d in range(10):
            g = perturbed_oracle(f, Perturbation.draw(10, 0.999 * m, d))
            assert not reducibility_index(g).reducible
            L, _ = reduce(g, None, MAX)
            assert L == Lattice.full(10)
    assert checked >= 10


def test_determinism():
    f = generate_instance("logdet", 10, 1)
    a = pr_maximize(f, t=0.2, seed=9, inner="greedy", trials=3)
    b = pr_maximize(f, t=0.2, seed=9, inner="greedy", trials=3)
    assert a.solution == b.solution and a.lattice == b.lattice and a.value == b.value
    assert a.perturbation.weights == b.perturbation.weights


def test_pr_respects_given_lattice():
    f = generate_instance("cut", 10, 5)
    L = Lattice(S(10, 0), S(10, 0, 1, 2, 3, 4, 5))
    res = pr_maximize(f, L, t=0.5, seed=2)
    assert L.contains_lattice(res.lattice)
    assert res.solution in res.lattice
    with pytest.raises(ValueError):
        pr_maximize(f, Lattice.full(9), t=0.5)
    with pytest.raises(ValueError):
        pr_minimize(f, noise=np.zeros(4))


def test_counters_reported():
    f = generate_instance("subset-selection", 10, 0)
    res = pr_maximize(f, t=0.5, seed=0)
    assert res.evals >= 1 and res.marginals >= 20
    assert res.inner.solver == "brute"


def test_subset_selection_stays_put(subset3):
    res = pr_maximize(subset3, t=0.0)
    assert res.lattice == Lattice.full(3)
    assert res.value == pytest.approx(max(subset3(ElementSet(3, m)) for m in range(8)))


def test_half_products_two_elements():
    hp = oracles.half_products(oracles.HalfProductsSpec(np.ones(2), np.ones(2), np.full(2, 0.5)))
    assert pr_maximize(hp).value == pytest.approx(0.5)
