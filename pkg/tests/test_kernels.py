import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latred import _kernels
from latred.core import ElementSet
from latred.harness import generate_instance
from latred.oracles import logdet_sym_eval

BACKENDS = sorted(_kernels.IMPLEMENTATIONS)


def _bits(code, k):
    return np.array([(code >> j) & 1 for j in range(k)], dtype=np.float64)


def test_numba_backend_present():
    # numba is a declared dependency, so both implementations must be registered
    assert BACKENDS == ["numba", "numpy"]


@pytest.mark.parametrize("backend", BACKENDS)
@given(st.integers(0, 9), st.integers(0, 2**32 - 1))
def test_quad_values_against_direct_formula(backend, k, seed):
    rng = np.random.default_rng(seed)
    lin = rng.normal(size=k)
    A = rng.normal(size=(k, k))
    Q = 0.5 * (A + A.T)
    const = float(rng.normal())
    out = _kernels.IMPLEMENTATIONS[backend]["quad_values"](const, lin, Q)
    assert out.shape == (1 << k,)
    for code in range(1 << k):
        z = _bits(code, k)
        assert out[code] == pytest.approx(const + lin @ z + z @ Q @ z, abs=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_logdet_values_against_literal(backend):
    f = generate_instance("logdet", 7, 4)
    base = np.zeros(7, dtype=bool)
    base[2] = True
    free = np.array([0, 3, 4, 6], dtype=np.int64)
    out = _kernels.IMPLEMENTATIONS[backend]["logdet_values"](f.K, base, free)
    for code in range(16):
        x = base.copy()
        x[free[_bits(code, 4) == 1]] = True
        assert out[code] == pytest.approx(logdet_sym_eval(f.spec, ElementSet.from_array(x)), abs=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_logdet_values_flag_indefinite(backend):
    K = np.array([[1.0, 2.0], [2.0, 1.0]])
    out = _kernels.IMPLEMENTATIONS[backend]["logdet_values"](K, np.zeros(2, dtype=bool), np.arange(2, dtype=np.int64))
    assert np.isnan(out).any()


def _greedy_reference(lin, Q, lower, upper, order, u, randomized):
    # plain double greedy on values, evaluated from scratch at every step
    def val(x):
        x = x.astype(float)
        return lin @ x + x @ Q @ x

    rows = []
    for r in range(u.shape[0]):
        X, Y = lower.copy(), upper.copy()
        for step, i in enumerate(order):
            Xi = X.copy()
            Xi[i] = True
            Yi = Y.copy()
            Yi[i] = False
            a, b = val(Xi) - val(X), val(Yi) - val(Y)
            if randomized:
                ap, bp = max(a, 0.0), max(b, 0.0)
                take = ap + bp == 0 or u[r, step] * (ap + bp) < ap
            else:
                take = a >= b
            if take:
                X = Xi
            else:
                Y = Yi
        assert np.array_equal(X, Y)
        rows.append(X)
    return np.array(rows)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("randomized", [True, False])
def test_double_greedy_against_reference(backend, randomized):
    f = generate_instance("cut", 12, 8)
    rng = np.random.default_rng(1)
    lower = np.zeros(12, dtype=bool)
    lower[[1, 7]] = True
    upper = np.ones(12, dtype=bool)
    upper[[3]] = False
    order = np.flatnonzero(upper & ~lower)
    u = rng.random((25, order.size))
    got = _kernels.IMPLEMENTATIONS[backend]["double_greedy"](f.lin, f.Q, lower, upper, order, u, randomized)
    assert np.array_equal(got, _greedy_reference(f.lin, f.Q, lower, upper, order, u, randomized))


def test_backends_agree_on_larger_tables():
    if len(BACKENDS) < 2:
        pytest.skip("single backend")
    f = generate_instance("subset-selection", 16, 2)
    a = _kernels.IMPLEMENTATIONS["numpy"]["quad_values"](0.3, f.lin, f.Q)
    b = _kernels.IMPLEMENTATIONS["numba"]["quad_values"](0.3, f.lin, f.Q)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-9)


def test_env_flag_selects_numpy():
    code = "from latred import _kernels; print(_kernels.backend())"
    env = dict(os.environ, LATRED_JIT="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["LATRED_JIT"] = "1"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
