import numpy as np
import pytest

from zonotope_clt.boltzmann import ModelParams, make_params
from zonotope_clt.cones import Cone
from zonotope_clt.primitives import PrimitiveSet

# filled by test_acceptance: criterion number -> (passed, detail)
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical check")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def orthant():
    return Cone.orthant(2)


def single_vector_params(x, theta_dot_x, d=2):
    """A model whose primitive set is the single vector ``x`` with ``beta a.x = theta_dot_x``."""
    x = np.asarray(x, dtype=np.int64)
    cone = Cone.orthant(d)
    params = make_params(cone, [1] * d, 100)
    beta = params.beta
    a = params.a
    pset = PrimitiveSet(cone, a, params.cutoff, x[None, :], np.array([theta_dot_x / beta]))
    params.__dict__["primitives"] = pset
    return params


def custom_params(vectors, weights, beta=1.0, d=2) -> ModelParams:
    """Model over an explicit vector set with ``beta a.x = weights``."""
    vectors = np.asarray(vectors, dtype=np.int64)
    cone = Cone.orthant(d)
    params = ModelParams(cone, (1,) * d, 100.0, beta, np.ones(d), 40.0 / beta)
    params.__dict__["primitives"] = PrimitiveSet(cone, params.a, params.cutoff, vectors,
                                                 np.asarray(weights, dtype=float) / beta)
    return params
