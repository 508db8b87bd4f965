"""Checks that predicted covariances match the spread of the actual residuals.

Three procedures are provided:

* equal-count binning of residual records by each predicted covariance entry,
  comparing the bin-mean prediction with the bin-mean squared residual;
* whitening each residual with its own predicted covariance and measuring the
  KL divergence between the 2D histogram of the whitened points and the
  standard 2D Laplacian;
* ranking images by mean predicted uncertainty against their NME.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionMismatch, EmptyInput, TooFewPoints, TooFewRecords
from .geometry import (
    Point2,
    SymMatrix2,
    inv_sqrt_batch,
    matrix_exp,
    matrix_log_batch,
    require_spd_batch,
)

COMPONENTS = ("xx", "xy", "yy")
DEFAULT_EXTENT = 6.0
DEFAULT_CELLS = 60
MIN_KL_POINTS = 1000

_GL_NODES = np.array([-1.0, 1.0]) / math.sqrt(3.0)


@dataclass(frozen=True)
class ResidualRecord:
    residual: Point2
    predicted: SymMatrix2


@dataclass(frozen=True, eq=False)
class ResidualRecords:
    """Columnar batch of residual records: ``residuals (n, 2)``, ``predicted (n, 3)``."""

    residuals: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.residuals, dtype=float).reshape(-1, 2)
        c = np.asarray(self.predicted, dtype=float).reshape(-1, 3)
        if len(r) != len(c):
            raise DimensionMismatch(f"{len(r)} residuals vs {len(c)} covariances")
        require_spd_batch(c)
        object.__setattr__(self, "residuals", r)
        object.__setattr__(self, "predicted", c)

    def __len__(self):
        return len(self.residuals)

    @classmethod
    def from_records(cls, records: Sequence[ResidualRecord]) -> ResidualRecords:
        r = [[rec.residual.x, rec.residual.y] for rec in records]
        c = [[rec.predicted.xx, rec.predicted.xy, rec.predicted.yy] for rec in records]
        return cls(np.array(r, dtype=float), np.array(c, dtype=float))


def _as_batch(records) -> ResidualRecords:
    if isinstance(records, ResidualRecords):
        return records
    return ResidualRecords.from_records(records)


def residual_records(pairs) -> ResidualRecords:
    """Collect residuals of visible landmarks from ``(ground_truth, predictions)`` pairs."""
    res, cov = [], []
    for gts, preds in pairs:
        for g, p in zip(gts, preds):
            if g.visible:
                res.append([g.location.x - p.mean.x, g.location.y - p.mean.y])
                c = p.covariance
                cov.append([c.xx, c.xy, c.yy])
    return ResidualRecords(np.array(res, dtype=float), np.array(cov, dtype=float))


@dataclass
class ComponentCalibration:
    component: str
    predicted: np.ndarray
    observed: np.ndarray
    pearson: Optional[float]
    slope: Optional[float]
    intercept: Optional[float]

    @property
    def degenerate(self):
        return self.pearson is None

    def to_dict(self):
        return {
            "component": self.component,
            "pearson": self.pearson,
            "degenerate": self.degenerate,
            "slope": self.slope,
            "intercept": self.intercept,
            "bins": [[float(a), float(b)] for a, b in zip(self.predicted, self.observed)],
        }


@dataclass
class CalibrationReport:
    components: dict
    n_per_bin: int
    kl: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "n_per_bin": self.n_per_bin,
            "components": {k: v.to_dict() for k, v in self.components.items()},
            "kl": self.kl,
        }
        out.update(self.extras)
        return out

    def bins_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "bin", "mean_predicted", "mean_squared_residual"])
        for name, comp in self.components.items():
            for i, (a, b) in enumerate(zip(comp.predicted, comp.observed)):
                w.writerow([name, i, repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _pearson(x, y):
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    r = float(np.corrcoef(x, y)[0, 1])
    return max(-1.0, min(1.0, r))


def bin_and_correlate(records, n_per_bin: int) -> CalibrationReport:
    """Equal-count binning of every covariance component against residual products.

    Records are sorted by the predicted component and cut into consecutive
    bins of ``n_per_bin`` (a trailing partial bin is dropped). Each bin
    contributes one pair (mean predicted value, mean of ``x*x``, ``x*y`` or
    ``y*y``). A component whose bin means do not vary has ``pearson=None``.
    """
    batch = _as_batch(records)
    n = len(batch)
    if n_per_bin < 1:
        raise ValueError("n_per_bin must be positive")
    if n < 2 * n_per_bin:
        raise TooFewRecords(f"{n} records cannot fill two bins of {n_per_bin}")
    n_bins = n // n_per_bin
    rx, ry = batch.residuals[:, 0], batch.residuals[:, 1]
    products = {"xx": rx * rx, "xy": rx * ry, "yy": ry * ry}
    comps = {}
    for j, name in enumerate(COMPONENTS):
        order = np.argsort(batch.predicted[:, j], kind="stable")[: n_bins * n_per_bin]
        pred = batch.predicted[order, j].reshape(n_bins, n_per_bin).mean(axis=1)
        obs = products[name][order].reshape(n_bins, n_per_bin).mean(axis=1)
        r = _pearson(pred, obs)
        slope = intercept = None
        if r is not None:
            slope, intercept = (float(v) for v in np.polyfit(pred, obs, 1))
        comps[name] = ComponentCalibration(name, pred, obs, r, slope, intercept)
    return CalibrationReport(comps, n_per_bin)


def standardize(records) -> np.ndarray:
    """Whiten each residual by its predicted covariance, ``Sigma^-1/2 r``; shape ``(n, 2)``."""
    batch = _as_batch(records)
    s = inv_sqrt_batch(batch.predicted)
    rx, ry = batch.residuals[:, 0], batch.residuals[:, 1]
    return np.stack([s[:, 0] * rx + s[:, 1] * ry, s[:, 1] * rx + s[:, 2] * ry], axis=-1)


def standard_laplacian_density(x, y):
    return (3.0 / (2.0 * math.pi)) * np.exp(-math.sqrt(3.0) * np.hypot(x, y))


def reference_cell_mass(extent: float = DEFAULT_EXTENT, cells: int = DEFAULT_CELLS):
    """Standard-Laplacian probability of each grid cell and of the region outside the grid.

    Each cell is integrated with the 2x2 Gauss-Legendre rule. Returns
    ``(mass (cells, cells) indexed [ix, iy], tail_mass)``.
    """
    edges = np.linspace(-extent, extent, cells + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    f = standard_laplacian_density(nodes[:, None], nodes[None, :])
    # Two equally weighted nodes per axis; weight = half-width each.
    f = f.reshape(cells, 2, cells, 2).sum(axis=(1, 3))
    mass = f * (half[:, None] * half[None, :])
    tail = max(1.0 - float(mass.sum()), 0.0)
    return mass, tail


def kl_from_counts(counts, tail_count, ref_mass, ref_tail) -> float:
    """``KL(empirical || reference)`` over grid cells plus one tail cell; empty cells add 0."""
    counts = np.asarray(counts, dtype=float).ravel()
    ref = np.asarray(ref_mass, dtype=float).ravel()
    p = np.append(counts, float(tail_count))
    q = np.append(ref, float(ref_tail))
    total = p.sum()
    if not total > 0:
        raise TooFewPoints("empty histogram")
    p = p / total
    nz = p > 0
    if np.any(q[nz] <= 0):
        return math.inf
    return float(max(np.sum(p[nz] * np.log(p[nz] / q[nz])), 0.0))


def histogram2d(points, extent: float = DEFAULT_EXTENT, cells: int = DEFAULT_CELLS):
    """Counts of ``points`` on the grid ``[-extent, extent]^2`` and the number outside it."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=cells,
                                  range=[[-extent, extent], [-extent, extent]])
    return counts, len(pts) - int(counts.sum())


def histogram_kl(points, extent: float = DEFAULT_EXTENT, cells: int = DEFAULT_CELLS) -> float:
    """KL divergence of the 2D histogram of ``points`` from the standard 2D Laplacian."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < MIN_KL_POINTS:
        raise TooFewPoints(f"need at least {MIN_KL_POINTS} points, got {len(pts)}")
    counts, tail = histogram2d(pts, extent, cells)
    ref, ref_tail = reference_cell_mass(extent, cells)
    return kl_from_counts(counts, tail, ref, ref_tail)


def mean_covariance_logeuclidean(covs: Sequence[SymMatrix2]) -> SymMatrix2:
    """Log-Euclidean mean ``exp(mean_i log Sigma_i)``."""
    if len(covs) == 0:
        raise EmptyInput("no covariances to average")
    arr = np.array([[c.xx, c.xy, c.yy] for c in covs], dtype=float)
    xx, xy, yy = matrix_log_batch(arr).mean(axis=0)
    return matrix_exp(SymMatrix2(float(xx), float(xy), float(yy)))


@dataclass
class RankCorrelation:
    ranks: np.ndarray
    nmes: np.ndarray
    spearman: float
    degenerate: bool

    def to_dict(self):
        return {
            "spearman": self.spearman,
            "degenerate": self.degenerate,
            "pairs": [[int(r), float(v)] for r, v in zip(self.ranks, self.nmes)],
        }


def nme_vs_uncertainty_rank(nmes: Sequence[float], uncertainties: Sequence[float]) -> RankCorrelation:
    """Images ordered by ascending mean uncertainty, paired with their NME.

    Constant input on either axis gives a Spearman coefficient of 0 with the
    ``degenerate`` flag set.
    """
    e = np.asarray(nmes, dtype=float)
    u = np.asarray(uncertainties, dtype=float)
    if e.shape != u.shape:
        raise DimensionMismatch("nme and uncertainty lists differ in length")
    if e.size == 0:
        raise EmptyInput("no images")
    order = np.argsort(u, kind="stable")
    ranks = np.arange(e.size)
    if np.ptp(e) == 0 or np.ptp(u) == 0:
        return RankCorrelation(ranks, e[order], 0.0, True)
    rho = float(np.corrcoef(rankdata(u), rankdata(e))[0, 1])
    return RankCorrelation(ranks, e[order], rho, False)
