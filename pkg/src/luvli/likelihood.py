"""Joint location/uncertainty/visibility negative log-likelihood.

A landmark prediction is a mean, a Cholesky-factored covariance and a
visibility probability. The loss for one landmark is the binary cross entropy
of the visibility plus, when the landmark is labelled visible, the negative log
density of its labelled location under a 2D Gaussian or 2D Laplacian.

Both densities are parameterised so that ``Sigma`` is the covariance of the
distribution. The Laplacian density is::

    P(z) = exp(-sqrt(3 m)) / ((2 pi / 3) sqrt|Sigma|),   m = (z-mu)^T Sigma^-1 (z-mu)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NonDifferentiablePoint
from .geometry import (
    CholeskyCovariance,
    Point2,
    SymMatrix2,
    require_spd,
    to_covariance,
)

VIS_EPS = 1e-7
ELU_OFFSET = 1.0 + 1e-4
CUSP_EPS = 1e-18

LOG_2PI = math.log(2.0 * math.pi)
LOG_2PI_3 = math.log(2.0 * math.pi / 3.0)
SQRT3 = math.sqrt(3.0)


class LikelihoodKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"


def _kind(kind) -> LikelihoodKind:
    return kind if isinstance(kind, LikelihoodKind) else LikelihoodKind(str(kind).lower())


@dataclass(frozen=True)
class LandmarkPrediction:
    mean: Point2
    chol: CholeskyCovariance
    visibility: float

    def __post_init__(self):
        if not (0.0 <= self.visibility <= 1.0):
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")

    @property
    def covariance(self) -> SymMatrix2:
        return to_covariance(self.chol)


@dataclass(frozen=True)
class GroundTruthLandmark:
    """Labelled landmark; an invisible landmark has no location."""

    location: Optional[Point2]
    visible: int

    def __post_init__(self):
        if self.visible not in (0, 1):
            raise ValueError("visible must be 0 or 1")
        if (self.location is not None) != bool(self.visible):
            raise ValueError("a location is present exactly when the landmark is visible")

    @classmethod
    def at(cls, x, y=None):
        p = x if isinstance(x, Point2) else Point2(float(x), float(y))
        return cls(p, 1)

    @classmethod
    def hidden(cls):
        return cls(None, 0)


@dataclass(frozen=True)
class StageLossConfig:
    weights: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w or any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise ValueError("stage weights must be non-negative with at least one positive")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, k):
        return cls((1.0,) * k)


# ---------------------------------------------------------------------------
# Vectorised core. Residuals ``d`` have shape (n, 2); Cholesky entries are
# broadcastable arrays.


def _whiten(d, l11, l21, l22):
    """Return ``w = L^-1 d`` and ``u = Sigma^-1 d`` column-wise."""
    w1 = d[..., 0] / l11
    w2 = (d[..., 1] - l21 * w1) / l22
    u2 = w2 / l22
    u1 = (w1 - l21 * u2) / l11
    return w1, w2, u1, u2


def nll_terms(kind, d, l11, l21, l22, cusp="raise"):
    """Location NLL and its gradients for a batch of residuals ``d = p - mu``.

    Returns ``(nll, grad_mu, grad_L)``, gradients taken w.r.t. the mean and the
    Cholesky entries, with shapes ``(n,)``, ``(n, 2)`` and
    ``(n, 3)``; ``grad_L`` is ordered ``(l11, l21, l22)``.

    For the Laplacian the gradient does not exist where ``d = 0``. With
    ``cusp="raise"`` this raises :class:`NonDifferentiablePoint`; with
    ``cusp="zero"`` the location part of the gradient is set to zero there
    (a valid subgradient).
    """
    kind = _kind(kind)
    d = np.atleast_2d(np.asarray(d, dtype=float))
    w1, w2, u1, u2 = _whiten(d, l11, l21, l22)
    m = w1 * w1 + w2 * w2
    half_logdet = np.log(l11) + np.log(l22)
    if kind is LikelihoodKind.GAUSSIAN:
        nll = half_logdet + 0.5 * m + LOG_2PI
        dm = np.full_like(m, 0.5)
    else:
        root = np.sqrt(3.0 * m)
        nll = half_logdet + root + LOG_2PI_3
        at_cusp = m < CUSP_EPS
        if np.any(at_cusp) and cusp == "raise":
            raise NonDifferentiablePoint("Laplacian loss has no gradient where p == mu")
        dm = np.where(at_cusp, 0.0, 1.5 / np.where(at_cusp, 1.0, root))
    # dm/dmu = -2 Sigma^-1 d ; dm/dL = -2 (Sigma^-1 d) w^T restricted to the lower triangle
    grad_mu = np.stack([-2.0 * dm * u1, -2.0 * dm * u2], axis=-1)
    g11 = 1.0 / l11 - 2.0 * dm * u1 * w1
    g21 = -2.0 * dm * u2 * w1
    g22 = 1.0 / l22 - 2.0 * dm * u2 * w2
    grad_L = np.stack(np.broadcast_arrays(g11, g21, g22), axis=-1)
    return nll, grad_mu, grad_L


def nll_sums(kind, dx, dy, l11, l21, l22):
    """Summed form of :func:`nll_terms` over residual columns ``dx``, ``dy``.

    Scalar Cholesky entries only; the Laplacian cusp contributes a zero
    location subgradient. Returns ``(nll_sum, grad_mu (2,), grad_L (3,))``.
    """
    kind = _kind(kind)
    n = dx.size
    w1 = dx / l11
    w2 = (dy - l21 * w1) / l22
    m = w1 * w1 + w2 * w2
    half_logdet = math.log(l11) + math.log(l22)
    if kind is LikelihoodKind.GAUSSIAN:
        total = n * (half_logdet + LOG_2PI) + 0.5 * m.sum()
        u2 = w2 / l22
        u1 = (w1 - l21 * u2) / l11
        g_mu = np.array([-u1.sum(), -u2.sum()])
        g_L = np.array([n / l11 - u1 @ w1, -(u2 @ w1), n / l22 - u2 @ w2])
        return total, g_mu, g_L
    root = np.sqrt(3.0 * m)
    total = n * (half_logdet + LOG_2PI_3) + root.sum()
    safe = root > math.sqrt(3.0 * CUSP_EPS)
    dm = np.zeros_like(root)
    np.divide(1.5, root, out=dm, where=safe)
    u2 = w2 / l22
    u1 = (w1 - l21 * u2) / l11
    a1, a2 = dm * u1, dm * u2
    g_mu = np.array([-2.0 * a1.sum(), -2.0 * a2.sum()])
    g_L = np.array([n / l11 - 2.0 * (a1 @ w1), -2.0 * (a2 @ w1), n / l22 - 2.0 * (a2 @ w2)])
    return total, g_mu, g_L


def bce(v, vhat):
    vhat = np.clip(vhat, VIS_EPS, 1.0 - VIS_EPS)
    return -(1.0 - v) * np.log1p(-vhat) - v * np.log(vhat)


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(a, dtype=float)))


def elu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


# ---------------------------------------------------------------------------
# Scalar API


def location_nll(kind, p: Point2, mu: Point2, cov: SymMatrix2) -> float:
    """Negative log density of ``p`` under the location model centred at ``mu``."""
    require_spd(cov)
    L = CholeskyCovariance.from_covariance(cov)
    d = np.array([[p.x - mu.x, p.y - mu.y]])
    nll, _, _ = nll_terms(kind, d, L.l11, L.l21, L.l22, cusp="zero")
    return float(nll[0])


def location_nll_chol(kind, p: Point2, mu: Point2, L: CholeskyCovariance) -> float:
    d = np.array([[p.x - mu.x, p.y - mu.y]])
    nll, _, _ = nll_terms(kind, d, L.l11, L.l21, L.l22, cusp="zero")
    return float(nll[0])


def luvli_loss(kind, gt: GroundTruthLandmark, pred: LandmarkPrediction) -> float:
    loss = float(bce(gt.visible, pred.visibility))
    if gt.visible:
        loss += location_nll_chol(kind, gt.location, pred.mean, pred.chol)
    return loss


def total_loss(kind, cfg: StageLossConfig, gts: Sequence[GroundTruthLandmark],
               preds_per_stage: Sequence[Sequence[LandmarkPrediction]]) -> float:
    """Weighted sum over stages of the per-stage mean landmark loss."""
    if len(preds_per_stage) != len(cfg.weights):
        raise DimensionMismatch(
            f"{len(preds_per_stage)} stages of predictions but {len(cfg.weights)} weights"
        )
    n = len(gts)
    if n == 0:
        raise DimensionMismatch("no landmarks")
    total = 0.0
    for i, (lam, preds) in enumerate(zip(cfg.weights, preds_per_stage)):
        if len(preds) != n:
            raise DimensionMismatch(f"stage {i} has {len(preds)} predictions for {n} landmarks")
        total += lam * sum(luvli_loss(kind, g, p) for g, p in zip(gts, preds)) / n
    return total


def _logit(v):
    return math.log(v) - math.log1p(-v)


def prediction_to_params(pred: LandmarkPrediction) -> np.ndarray:
    """``(mu_x, mu_y, l11, l21, l22, visibility_logit)``."""
    v = min(max(pred.visibility, VIS_EPS), 1.0 - VIS_EPS)
    return np.array([pred.mean.x, pred.mean.y, pred.chol.l11, pred.chol.l21, pred.chol.l22,
                     _logit(v)])


def params_to_prediction(theta) -> LandmarkPrediction:
    mx, my, l11, l21, l22, a = (float(t) for t in theta)
    return LandmarkPrediction(Point2(mx, my), CholeskyCovariance(l11, l21, l22),
                              float(sigmoid(a)))


def luvli_loss_params(kind, gt: GroundTruthLandmark, theta) -> float:
    """:func:`luvli_loss` as a function of the flat parameter vector."""
    return luvli_loss(kind, gt, params_to_prediction(theta))


def luvli_grad(kind, gt: GroundTruthLandmark, pred: LandmarkPrediction) -> np.ndarray:
    """Analytic gradient of :func:`luvli_loss`.

    Ordered as ``(mu_x, mu_y, l11, l21, l22, visibility_logit)``. The
    visibility derivative is taken through the sigmoid, and is zero where the
    clamp is active.

    Raises
    ------
    NonDifferentiablePoint
        Laplacian kind with the label exactly at the predicted mean.
    """
    g = np.zeros(6)
    vhat = pred.visibility
    if VIS_EPS < vhat < 1.0 - VIS_EPS:
        g[5] = vhat - gt.visible
    if gt.visible:
        d = np.array([[gt.location.x - pred.mean.x, gt.location.y - pred.mean.y]])
        L = pred.chol
        _, g_mu, g_L = nll_terms(kind, d, L.l11, L.l21, L.l22, cusp="raise")
        g[0:2] = g_mu[0]
        g[2:5] = g_L[0]
    return g


def cholesky_activation(raw) -> CholeskyCovariance:
    """Map three unconstrained outputs ``(r11, r21, r22)`` to a valid Cholesky factor."""
    r11, r21, r22 = (float(r) for r in raw)
    return CholeskyCovariance(float(elu(r11)) + ELU_OFFSET, r21, float(elu(r22)) + ELU_OFFSET)


def visibility_activation(raw: float) -> float:
    return float(np.clip(sigmoid(raw), VIS_EPS, 1.0 - VIS_EPS))


def sample(kind, mu: Point2, cov: SymMatrix2, rng: np.random.Generator, size=None):
    """Draw from the location model with mean ``mu`` and covariance ``cov``.

    Laplacian draws use the radial decomposition ``r (cos t, sin t)`` with
    ``r ~ Gamma(2, rate sqrt(3))``, which has unit covariance, mapped through
    the Cholesky factor.

    Returns a :class:`Point2` when ``size`` is None, otherwise an array of
    shape ``(size, 2)``.
    """
    kind = _kind(kind)
    L = CholeskyCovariance.from_covariance(cov).as_array()
    n = 1 if size is None else int(size)
    if kind is LikelihoodKind.GAUSSIAN:
        z = rng.standard_normal((n, 2))
    else:
        r = rng.gamma(2.0, 1.0 / SQRT3, size=n)
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    out = z @ L.T + np.array([mu.x, mu.y])
    if size is None:
        return Point2(float(out[0, 0]), float(out[0, 1]))
    return out


def density(kind, z, mu, cov) -> np.ndarray:
    """Density of the location model evaluated at points ``z`` of shape (..., 2)."""
    L = CholeskyCovariance.from_covariance(cov)
    z = np.asarray(z, dtype=float)
    d = z.reshape(-1, 2) - np.array([mu.x, mu.y])
    nll, _, _ = nll_terms(kind, d, L.l11, L.l21, L.l22, cusp="zero")
    return np.exp(-nll).reshape(z.shape[:-1])
