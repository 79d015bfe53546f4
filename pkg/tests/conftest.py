import numpy as np
import pytest

from rpsubspace.data import generate_union


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def union_small():
    """Clean 3-class union of 3-dim subspaces in R^50."""
    return generate_union(50, 3, 3, 15, seed=3)


def binomial_se(p, trials):
    return float(np.sqrt(max(p * (1 - p), 1.0 / trials) / trials))


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
