import numpy as np
import pytest
from hypothesis import settings

from luvli.geometry import SymMatrix2

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def random_spd(rng, max_cond=1e3, scale=(0.1, 10.0)):
    """SPD matrix with log-uniform eigenvalues and a random orientation."""
    lo, hi = np.log(scale)
    a = np.exp(rng.uniform(lo, hi))
    b = a / np.exp(rng.uniform(0, np.log(max_cond)))
    t = rng.uniform(0, np.pi)
    c, s = np.cos(t), np.sin(t)
    R = np.array([[c, -s], [s, c]])
    M = R @ np.diag([a, b]) @ R.T
    return SymMatrix2(M[0, 0], 0.5 * (M[0, 1] + M[1, 0]), M[1, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def calibrated_population(rng, n, kind="laplacian", residual_scale=1.0):
    """``(residuals (n, 2), predicted (n, 3))`` with residuals drawn from ``residual_scale`` x each prediction.

    Predicted covariances have log-uniform eigenvalues in [0.5, 8] and random
    orientation, so all three components vary across records.
    """
    from luvli.geometry import Point2
    from luvli.likelihood import sample

    lam = np.exp(rng.uniform(np.log(0.5), np.log(8.0), size=(n, 2)))
    t = rng.uniform(0, np.pi, size=n)
    c, s = np.cos(t), np.sin(t)
    xx = c * c * lam[:, 0] + s * s * lam[:, 1]
    yy = s * s * lam[:, 0] + c * c * lam[:, 1]
    xy = c * s * (lam[:, 0] - lam[:, 1])
    pred = np.stack([xx, xy, yy], axis=1)
    # unit-covariance draws mapped through each record's Cholesky factor
    z = sample(kind, Point2(0.0, 0.0), SymMatrix2.identity(), rng, size=n)
    l11 = np.sqrt(residual_scale * xx)
    l21 = residual_scale * xy / l11
    l22 = np.sqrt(residual_scale * yy - l21 ** 2)
    res = np.stack([l11 * z[:, 0], l21 * z[:, 0] + l22 * z[:, 1]], axis=1)
    return res, pred


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
