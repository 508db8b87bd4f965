"""Synthetic landmark populations and maximum-likelihood fitting of one landmark group."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import Degenerate
from .geometry import Point2, SymMatrix2, require_spd
from .likelihood import (
    VIS_EPS,
    GroundTruthLandmark,
    LandmarkPrediction,
    LikelihoodKind,
    _kind,
    bce,
    cholesky_activation,
    elu_grad,
    nll_sums,
    sample,
    sigmoid,
)

VISIBLE_CLASSES = ("unoccluded", "externally_occluded")


@dataclass(frozen=True)
class LandmarkTruth:
    mean: Point2
    cov: SymMatrix2
    visibility_rate: float = 1.0
    visible_class: str = "unoccluded"

    def __post_init__(self):
        require_spd(self.cov)
        if not 0.0 <= self.visibility_rate <= 1.0:
            raise ValueError("visibility_rate must lie in [0, 1]")
        if self.visible_class not in VISIBLE_CLASSES:
            raise ValueError(f"visible_class must be one of {VISIBLE_CLASSES}")


@dataclass(frozen=True)
class SyntheticScenario:
    landmarks: tuple
    kind: LikelihoodKind = LikelihoodKind.LAPLACIAN
    num_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        object.__setattr__(self, "kind", _kind(self.kind))
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        if not self.landmarks:
            raise ValueError("scenario needs at least one landmark")


def generate(scenario: SyntheticScenario) -> list[list[GroundTruthLandmark]]:
    """Draw ``num_samples`` labels per landmark, returned as ``[landmark][sample]``.

    Each landmark draws from its own child stream of ``seed``, so adding a
    landmark does not change the draws of the others.
    """
    streams = np.random.SeedSequence(scenario.seed).spawn(len(scenario.landmarks))
    out = []
    for truth, ss in zip(scenario.landmarks, streams):
        rng = np.random.default_rng(ss)
        n = scenario.num_samples
        visible = rng.random(n) < truth.visibility_rate
        locs = sample(scenario.kind, truth.mean, truth.cov, rng, size=int(visible.sum()))
        it = iter(locs)
        group = []
        for v in visible:
            if v:
                x, y = next(it)
                group.append(GroundTruthLandmark(Point2(float(x), float(y)), 1))
            else:
                group.append(GroundTruthLandmark.hidden())
        out.append(group)
    return out


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-2
    max_iter: int = 10_000
    tol: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-12
    min_learning_rate: float = 1e-15
    lr_growth: float = 1.1


@dataclass
class FitResult:
    prediction: LandmarkPrediction
    loss: float
    n_iter: int
    converged: bool
    grad_norm: float
    params: np.ndarray
    history: list = field(default_factory=list, repr=False)


class _GroupObjective:
    """Mean LUVLi loss of one landmark group as a function of unconstrained parameters.

    Parameters are ``(mu_x, mu_y, r11, r21, r22, a)`` where ``r`` are the raw
    Cholesky outputs before activation and ``a`` is the visibility logit.
    """

    def __init__(self, kind, points: np.ndarray, n_total: int):
        self.kind = _kind(kind)
        self.xs = np.ascontiguousarray(points[:, 0])
        self.ys = np.ascontiguousarray(points[:, 1])
        self.n_total = n_total
        self.rate = len(points) / n_total

    def __call__(self, theta):
        mx, my, r11, r21, r22, a = theta
        vhat = float(sigmoid(a))
        loss = float(bce(self.rate, vhat))
        grad = np.zeros(6)
        if VIS_EPS < vhat < 1.0 - VIS_EPS:
            grad[5] = vhat - self.rate
        if len(self.xs):
            L = cholesky_activation((r11, r21, r22))
            total, g_mu, g_L = nll_sums(self.kind, self.xs - mx, self.ys - my,
                                        L.l11, L.l21, L.l22)
            w = 1.0 / self.n_total
            loss += w * float(total)
            grad[0:2] = w * g_mu
            g = w * g_L
            grad[2] = g[0] * float(elu_grad(r11))
            grad[3] = g[1]
            grad[4] = g[2] * float(elu_grad(r22))
        return loss, grad


def _unpack(theta) -> LandmarkPrediction:
    mx, my, r11, r21, r22, a = (float(t) for t in theta)
    return LandmarkPrediction(Point2(mx, my), cholesky_activation((r11, r21, r22)),
                              float(np.clip(sigmoid(a), VIS_EPS, 1.0 - VIS_EPS)))


def adam_minimize(fun: Callable, x0, cfg: OptimizerConfig = OptimizerConfig()):
    """Adam with a step-halving safeguard.

    A step that increases the objective is rejected, the learning rate is
    halved and the first moment is cleared so the retry follows the current
    gradient. Accepted losses therefore never increase. After each accepted
    step the rate recovers by ``lr_growth`` up to its configured value.

    Returns ``(x, loss, grad_norm, n_iter, converged, history)``.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    lr = cfg.learning_rate
    history = [f]
    t = 0
    it = 0
    while it < cfg.max_iter:
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.tol or lr < cfg.min_learning_rate:
            break
        it += 1
        t += 1
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        x_new = x - lr * mhat / (np.sqrt(vhat) + cfg.eps)
        f_new, g_new = fun(x_new)
        if f_new <= f:
            x, f, g = x_new, f_new, g_new
            history.append(f)
            lr = min(cfg.learning_rate, lr * cfg.lr_growth)
        else:
            lr *= 0.5
            m[:] = 0.0
    gnorm = float(np.linalg.norm(g))
    return x, f, gnorm, it, gnorm < cfg.tol, history


def fit_mle(samples: Sequence[GroundTruthLandmark], kind=LikelihoodKind.LAPLACIAN,
            config: OptimizerConfig = OptimizerConfig(), init=None) -> FitResult:
    """Fit mean, Cholesky factor and visibility of one landmark group.

    The mean starts at the centroid of the visible labels, the raw Cholesky
    outputs at zero (covariance close to identity) and the visibility logit
    at zero, unless ``init`` supplies a 6-vector of unconstrained parameters.

    Raises
    ------
    Degenerate
        Some labels are visible but fewer than two distinct locations exist.
    """
    if len(samples) == 0:
        raise Degenerate("no samples to fit")
    pts = np.array([[s.location.x, s.location.y] for s in samples if s.visible], dtype=float)
    pts = pts.reshape(-1, 2)
    if len(pts) and len(np.unique(pts, axis=0)) < 2:
        raise Degenerate(
            f"{len(pts)} visible samples with fewer than 2 distinct locations; "
            "covariance is unidentifiable"
        )
    if init is None:
        centroid = pts.mean(axis=0) if len(pts) else np.zeros(2)
        init = np.array([centroid[0], centroid[1], 0.0, 0.0, 0.0, 0.0])
    objective = _GroupObjective(kind, pts, len(samples))
    x, f, gnorm, n_iter, converged, history = adam_minimize(objective, init, config)
    return FitResult(_unpack(x), f, n_iter, converged, gnorm, x, history)


def fit_groups(groups: Sequence[Sequence[GroundTruthLandmark]], kind=LikelihoodKind.LAPLACIAN,
               config: OptimizerConfig = OptimizerConfig()) -> list:
    """Fit every landmark group; a degenerate group yields its exception in place of a result."""
    results = []
    for g in groups:
        try:
            results.append(fit_mle(g, kind, config))
        except Degenerate as exc:
            results.append(exc)
    return results


def closed_form_gaussian(samples: Sequence[GroundTruthLandmark]):
    """Gaussian MLE: sample mean, biased sample covariance and visible fraction."""
    pts = np.array([[s.location.x, s.location.y] for s in samples if s.visible], dtype=float)
    mean = pts.mean(axis=0)
    c = np.cov(pts.T, bias=True)
    return (Point2(float(mean[0]), float(mean[1])), SymMatrix2.from_array(c),
            len(pts) / len(samples))


def finite_difference_check(loss: Callable, grad, params, h: float = 1e-5,
                            floor: float = 1e-8) -> float:
    """Worst elementwise relative error between ``grad`` and central differences of ``loss``.

    ``grad`` is either the analytic gradient at ``params`` or a callable
    returning it. The denominator is ``max(|analytic|, |numeric|, floor)``.
    """
    params = np.asarray(params, dtype=float)
    analytic = np.asarray(grad(params) if callable(grad) else grad, dtype=float)
    numeric = np.empty_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e.flat[i] = h
        numeric.flat[i] = (loss(params + e) - loss(params - e)) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_luvli_config(rng: np.random.Generator):
    """A random (ground truth, parameter vector) pair well away from the Laplacian cusp."""
    theta = np.array([
        rng.normal(0.0, 2.0), rng.normal(0.0, 2.0),
        rng.uniform(0.5, 3.0), rng.uniform(-1.0, 1.0), rng.uniform(0.5, 3.0),
        rng.uniform(-3.0, 3.0),
    ])
    if rng.random() < 0.8:
        while True:
            d = rng.normal(0.0, 2.0, size=2)
            if np.hypot(*d) > 0.2:
                break
        gt = GroundTruthLandmark.at(theta[0] + d[0], theta[1] + d[1])
    else:
        gt = GroundTruthLandmark.hidden()
    return gt, theta


def gradcheck(kind, trials: int, seed: int = 0, h: float = 1e-5) -> float:
    """Largest finite-difference discrepancy of the LUVLi gradient over random configurations."""
    from .likelihood import luvli_grad, luvli_loss_params, params_to_prediction

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        gt, theta = random_luvli_config(rng)
        err = finite_difference_check(
            lambda p: luvli_loss_params(kind, gt, p),
            lambda p: luvli_grad(kind, gt, params_to_prediction(p)),
            theta, h,
        )
        worst = max(worst, err)
    return worst

