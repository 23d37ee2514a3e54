import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from latred import oracles
from latred.harness import generate_instance

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def triangle():
    return oracles.unit_triangle()


@pytest.fixture
def mod3():
    return oracles.modular([-1.0, 2.0, -3.0])


@pytest.fixture
def subset3():
    M = np.full((3, 3), 0.5)
    np.fill_diagonal(M, 1.0)
    return oracles.subset_selection(oracles.SubsetSelectionSpec(M, 0.7))


def small_instances(n_values=(6, 8, 10), per=2, seed=0):
    """``(name, f)`` pairs across every family."""
    out = []
    from latred.harness import FAMILIES

    for fam in FAMILIES:
        for n in n_values:
            for c in range(per):
                out.append((f"{fam}-n{n}-{c}", generate_instance(fam, n, seed + 1000 * n + c)))
    return out
