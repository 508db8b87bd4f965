"""scikit-learn compatible wrappers around the spatial mean and the LUVLi fitter."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import check_heatmaps, check_kind, check_landmark_samples
from .errors import AllNonPositive
from .fitting import OptimizerConfig, fit_mle
from .geometry import Point2, to_covariance
from .heatmap import Heatmap, SigmaKind, argmax_quarter_offset, spatial_mean
from .likelihood import GroundTruthLandmark, bce, nll_terms, sample


class SpatialMeanTransformer(TransformerMixin, BaseEstimator):
    """Map heatmaps of shape ``(n, height, width)`` to ``(n, 2)`` landmark locations.

    Parameters
    ----------
    sigma : {"relu", "softmax", "temperature_softmax"}
    temperature : float
        Only used by ``"temperature_softmax"``.
    fallback : {"raise", "argmax"}
        What to do when a heatmap has no positive pixel under ``"relu"``.
    """

    def __init__(self, sigma="relu", temperature=0.1, fallback="raise"):
        self.sigma = sigma
        self.temperature = temperature
        self.fallback = fallback

    def _sigma_kind(self):
        if self.sigma == "temperature_softmax":
            return SigmaKind(self.sigma, self.temperature)
        return SigmaKind(self.sigma)

    def fit(self, X, y=None):
        X = check_heatmaps(X)
        if self.fallback not in ("raise", "argmax"):
            raise ValueError("fallback must be 'raise' or 'argmax'")
        self.sigma_kind_ = self._sigma_kind()
        self.heatmap_shape_ = X.shape[1:]
        return self

    def transform(self, X):
        check_is_fitted(self, "sigma_kind_")
        X = check_heatmaps(X)
        out = np.empty((len(X), 2))
        for i, grid in enumerate(X):
            H = Heatmap(grid)
            try:
                p = spatial_mean(H, self.sigma_kind_)
            except AllNonPositive:
                if self.fallback == "raise":
                    raise
                p = argmax_quarter_offset(H)
            out[i] = (p.x, p.y)
        return out


class LandmarkLikelihoodEstimator(DensityMixin, BaseEstimator):
    """Maximum-likelihood location, covariance and visibility of one landmark.

    ``X`` holds one labelled location per row; a row of NaNs is a sample in
    which the landmark was not visible.

    Attributes
    ----------
    location_ : ndarray of shape (2,)
    cholesky_ : ndarray of shape (2, 2)
        Lower-triangular factor of ``covariance_``.
    covariance_ : ndarray of shape (2, 2)
    visibility_ : float
    loss_, n_iter_, converged_ :
        Final mean loss and optimizer diagnostics.
    """

    def __init__(self, kind="laplacian", learning_rate=1e-2, max_iter=10_000, tol=1e-8):
        self.kind = kind
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        X, visible = check_landmark_samples(X)
        kind = check_kind(self.kind)
        samples = [GroundTruthLandmark.at(*row) if v else GroundTruthLandmark.hidden()
                   for row, v in zip(X, visible)]
        cfg = OptimizerConfig(learning_rate=self.learning_rate, max_iter=self.max_iter,
                              tol=self.tol)
        result = fit_mle(samples, kind, cfg)
        pred = result.prediction
        self.kind_ = kind
        self.prediction_ = pred
        self.location_ = np.array([pred.mean.x, pred.mean.y])
        self.cholesky_ = pred.chol.as_array()
        self.covariance_ = to_covariance(pred.chol).as_array()
        self.visibility_ = pred.visibility
        self.loss_ = result.loss
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        return self

    def score_samples(self, X):
        """Log-likelihood of each row under the fitted mixed visibility/location model."""
        check_is_fitted(self, "prediction_")
        X, visible = check_landmark_samples(X)
        out = -bce(visible.astype(float), self.visibility_)
        if visible.any():
            L = self.prediction_.chol
            nll, _, _ = nll_terms(self.kind_, X[visible] - self.location_,
                                  L.l11, L.l21, L.l22, cusp="zero")
            out[visible] -= nll
        return out

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=None):
        """Draw rows from the fitted model; invisible draws are NaN rows."""
        check_is_fitted(self, "prediction_")
        rng = np.random.default_rng(check_random_state(random_state).randint(2**32 - 1))
        visible = rng.random(n_samples) < self.visibility_
        out = np.full((n_samples, 2), np.nan)
        mu = Point2(*self.location_)
        out[visible] = sample(self.kind_, mu, self.prediction_.covariance, rng,
                              size=int(visible.sum()))
        return out
