"""Value types and closed-form algebra for 2x2 symmetric positive definite matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDefinite

SPD_EPS = 1e-300


def _check_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} entries must be finite, got {values}")


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        _check_finite("Point2", self.x, self.y)

    def __iter__(self):
        yield self.x
        yield self.y

    def __sub__(self, other):
        return Point2(self.x - other.x, self.y - other.y)

    def __add__(self, other):
        return Point2(self.x + other.x, self.y + other.y)

    def __neg__(self):
        return Point2(-self.x, -self.y)

    def as_array(self):
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class SymMatrix2:
    """Symmetric 2x2 matrix stored by its three unique entries."""

    xx: float
    xy: float
    yy: float

    def __post_init__(self):
        _check_finite("SymMatrix2", self.xx, self.xy, self.yy)

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(float(a[0, 0]), float(0.5 * (a[0, 1] + a[1, 0])), float(a[1, 1]))

    def as_array(self):
        return np.array([[self.xx, self.xy], [self.xy, self.yy]], dtype=float)

    def det(self):
        return self.xx * self.yy - self.xy * self.xy

    def trace(self):
        return self.xx + self.yy

    def scaled(self, c):
        return SymMatrix2(c * self.xx, c * self.xy, c * self.yy)

    def is_spd(self):
        return self.xx > SPD_EPS and self.det() > SPD_EPS


@dataclass(frozen=True)
class CholeskyCovariance:
    """Lower-triangular factor ``L = [[l11, 0], [l21, l22]]`` with ``Sigma = L L^T``."""

    l11: float
    l21: float
    l22: float

    def __post_init__(self):
        _check_finite("CholeskyCovariance", self.l11, self.l21, self.l22)
        if not (self.l11 > 0 and self.l22 > 0):
            raise NonPositiveDefinite(
                f"Cholesky diagonal must be positive, got l11={self.l11}, l22={self.l22}"
            )

    @classmethod
    def from_covariance(cls, cov: SymMatrix2) -> CholeskyCovariance:
        require_spd(cov)
        l11 = math.sqrt(cov.xx)
        l21 = cov.xy / l11
        l22 = math.sqrt(cov.det() / cov.xx)
        return cls(l11, l21, l22)

    def as_array(self):
        return np.array([[self.l11, 0.0], [self.l21, self.l22]], dtype=float)

    def log_det(self):
        """``log|Sigma|`` computed from the diagonal of the factor."""
        return 2.0 * (math.log(self.l11) + math.log(self.l22))


def require_spd(m: SymMatrix2):
    if not m.is_spd():
        raise NonPositiveDefinite(f"matrix is not positive definite: {m}")


def to_covariance(L: CholeskyCovariance) -> SymMatrix2:
    return SymMatrix2(
        L.l11 * L.l11,
        L.l11 * L.l21,
        L.l21 * L.l21 + L.l22 * L.l22,
    )


def inverse(m: SymMatrix2) -> SymMatrix2:
    """Adjugate inverse of an SPD matrix."""
    require_spd(m)
    det = m.det()
    return SymMatrix2(m.yy / det, -m.xy / det, m.xx / det)


def mahalanobis_sq(d: Point2, cov: SymMatrix2) -> float:
    inv = inverse(cov)
    q = inv.xx * d.x * d.x + 2.0 * inv.xy * d.x * d.y + inv.yy * d.y * d.y
    return max(q, 0.0)


def _eig_apply(m: SymMatrix2, fn) -> SymMatrix2:
    w, v = np.linalg.eigh(m.as_array())
    return SymMatrix2.from_array((v * fn(w)) @ v.T)


def matrix_log(m: SymMatrix2) -> SymMatrix2:
    require_spd(m)
    return _eig_apply(m, np.log)


def matrix_exp(m: SymMatrix2) -> SymMatrix2:
    return _eig_apply(m, np.exp)


def inv_sqrt(m: SymMatrix2) -> SymMatrix2:
    """Symmetric ``S`` with ``S m S = I``."""
    require_spd(m)
    return _eig_apply(m, lambda w: 1.0 / np.sqrt(w))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# Batched helpers over arrays of shape (n, 3) holding (xx, xy, yy) rows.


def sym_to_stack(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    out = np.empty(cov.shape[:-1] + (2, 2))
    out[..., 0, 0] = cov[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = cov[..., 1]
    out[..., 1, 1] = cov[..., 2]
    return out


def stack_to_sym(mats) -> np.ndarray:
    mats = np.asarray(mats, dtype=float)
    return np.stack(
        [mats[..., 0, 0], 0.5 * (mats[..., 0, 1] + mats[..., 1, 0]), mats[..., 1, 1]],
        axis=-1,
    )


def require_spd_batch(cov):
    cov = np.asarray(cov, dtype=float)
    det = cov[..., 0] * cov[..., 2] - cov[..., 1] ** 2
    bad = ~((cov[..., 0] > SPD_EPS) & (det > SPD_EPS))
    if np.any(bad):
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise NonPositiveDefinite(f"matrix at index {idx} is not positive definite")


def inv_sqrt_batch(cov) -> np.ndarray:
    require_spd_batch(cov)
    w, v = np.linalg.eigh(sym_to_stack(cov))
    return stack_to_sym((v / np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2))


def matrix_log_batch(cov) -> np.ndarray:
    require_spd_batch(cov)
    w, v = np.linalg.eigh(sym_to_stack(cov))
    return stack_to_sym((v * np.log(w)[..., None, :]) @ np.swapaxes(v, -1, -2))
