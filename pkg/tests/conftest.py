import numpy as np
import pytest

from gradskip_lab.data_io import synthesize_heterogeneous
from gradskip_lab.problems import QuadraticObjective, lift, reference_minimizer


def random_quadratics(n, d, seed, mu=0.5, kappa_max=20.0):
    rng = np.random.default_rng(seed)
    L = mu * rng.uniform(1.0, kappa_max, size=n)
    return [QuadraticObjective(mu, L[i], rng.normal(size=d), rng.normal(size=d))
            for i in range(n)]


@pytest.fixture
def quad3():
    f = lift(random_quadratics(3, 4, seed=11))
    return f, reference_minimizer(f)


@pytest.fixture
def logistic3():
    f = lift(synthesize_heterogeneous(3, 5, [0.5, 2.0, 8.0], seed=4, m=30))
    return f, reference_minimizer(f)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
