import numpy as np
import pytest

from sflab.geometry import Sphere


class FlippedHessianSphere(Sphere):
    """Sphere whose projection Hessian (and its adjoint) carry the wrong sign."""

    def hess_pi(self, Q, X, Y):
        return -super().hess_pi(Q, X, Y)

    def hess_pi_adjoint(self, Q, W, X):
        return -super().hess_pi_adjoint(Q, W, X)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sphere():
    return Sphere()


@pytest.fixture
def mutated_sphere():
    return FlippedHessianSphere()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
