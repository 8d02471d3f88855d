import numpy as np
import pytest

from kbonestep import CaseTag, ModelSpec, TimeGrid, bundled_model, parse_sexpr


@pytest.fixture(scope="session")
def ex1():
    """Observation-drift parameter: f = theta, a = 0, sigma = b = 1."""
    return bundled_model("ex1")


@pytest.fixture(scope="session")
def ex2():
    """State-drift parameter: f = 1, a = 3 theta, sigma = b = 1."""
    return bundled_model("ex2")


@pytest.fixture(scope="session")
def ex2_slow():
    """State-drift parameter with unit coefficient: a = theta."""
    return ModelSpec(f=parse_sexpr(1.0), a=parse_sexpr("theta"),
                     sigma=parse_sexpr(1.0), b=parse_sexpr(1.0),
                     theta_lo=0.5, theta_hi=1.5, y0=1.0, T=1.0, eps=0.01,
                     case_tag=CaseTag.THETA_IN_A)


@pytest.fixture(scope="session")
def grid10k(ex1):
    return TimeGrid(10_000, ex1.T)


def assert_allclose(a, b, **kw):
    np.testing.assert_allclose(a, b, **kw)
