"""Face-alignment evaluation metrics: NME variants, AUC, failure rate, visibility accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyAfterFilter,
    EmptyInput,
    MissingBbox,
    MissingEyeCorners,
    NoVisibleLandmarks,
)
from .likelihood import GroundTruthLandmark, LandmarkPrediction

NORMALIZERS = ("box", "interocular", "diag")

# Outer eye corners in the zero-based 68-point scheme.
LEFT_EYE_OUTER = 36
RIGHT_EYE_OUTER = 45


@dataclass(frozen=True)
class FaceEvalRecord:
    ground_truth: tuple
    predictions: tuple
    bbox: Optional[tuple] = None  # (width, height)

    def __post_init__(self):
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        object.__setattr__(self, "predictions", tuple(self.predictions))
        if len(self.ground_truth) != len(self.predictions):
            raise DimensionMismatch(
                f"{len(self.ground_truth)} labels vs {len(self.predictions)} predictions"
            )
        if self.bbox is not None:
            w, h = self.bbox
            if not (w > 0 and h > 0):
                raise ValueError(f"bbox dimensions must be positive, got {self.bbox}")
            object.__setattr__(self, "bbox", (float(w), float(h)))


def _tight_box(gts: Sequence[GroundTruthLandmark]):
    pts = np.array([[g.location.x, g.location.y] for g in gts if g.visible]).reshape(-1, 2)
    if len(pts) == 0:
        raise NoVisibleLandmarks("no visible landmark to build a bounding box from")
    w, h = pts.max(axis=0) - pts.min(axis=0)
    return float(w), float(h)


def normalizer(rec: FaceEvalRecord, kind: str = "box") -> float:
    """Face-scale normalizer ``d``.

    ``box`` is the geometric mean of the box sides, ``diag`` its diagonal and
    ``interocular`` the distance between the outer eye corners. Without a
    bounding box the tight box of the visible labels is used.
    """
    kind = kind.lower().replace("-", "").replace("_", "")
    if kind == "interocular":
        gts = rec.ground_truth
        if len(gts) <= RIGHT_EYE_OUTER:
            raise MissingEyeCorners(f"inter-ocular distance needs the 68-point scheme, got {len(gts)}")
        a, b = gts[LEFT_EYE_OUTER], gts[RIGHT_EYE_OUTER]
        if not (a.visible and b.visible):
            raise MissingEyeCorners("outer eye corners must both be visible")
        return math.hypot(a.location.x - b.location.x, a.location.y - b.location.y)
    if kind not in ("box", "diag"):
        raise ValueError(f"unknown normalizer {kind!r}")
    w, h = rec.bbox if rec.bbox is not None else _tight_box(rec.ground_truth)
    return math.sqrt(w * h) if kind == "box" else math.hypot(w, h)


def _error_sum(rec: FaceEvalRecord):
    total, count = 0.0, 0
    for g, p in zip(rec.ground_truth, rec.predictions):
        if g.visible:
            total += math.hypot(g.location.x - p.mean.x, g.location.y - p.mean.y)
            count += 1
    return total, count


def nme(rec: FaceEvalRecord, kind: str = "box") -> float:
    """Normalized mean error in percent; invisible landmarks count in the denominator."""
    d = normalizer(rec, kind)
    total, _ = _error_sum(rec)
    return 100.0 * total / (d * len(rec.ground_truth))


def nme_vis(rec: FaceEvalRecord, kind: str = "box") -> float:
    """Normalized mean error in percent over visible landmarks only."""
    total, count = _error_sum(rec)
    if count == 0:
        raise NoVisibleLandmarks("NME over visible landmarks needs at least one visible label")
    return 100.0 * total / (normalizer(rec, kind) * count)


def auc(nmes: Sequence[float], cutoff: float) -> float:
    """Area under the cumulative NME curve on ``[0, cutoff]``, divided by ``cutoff``.

    The empirical CDF is a step function, so each image with ``nme < cutoff``
    contributes ``(cutoff - nme) / cutoff`` to the mean.
    """
    x = np.asarray(nmes, dtype=float)
    if x.size == 0:
        raise EmptyInput("AUC of an empty set")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    return float(np.mean(np.clip(cutoff - x, 0.0, None)) / cutoff)


def failure_rate(nmes: Sequence[float], threshold: float) -> float:
    x = np.asarray(nmes, dtype=float)
    if x.size == 0:
        raise EmptyInput("failure rate of an empty set")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return float(100.0 * np.count_nonzero(x > threshold) / x.size)


def visibility_accuracy(vhat: Sequence[float], labels: Sequence[int], classes=None,
                        keep=None) -> float:
    """Fraction of landmarks where ``vhat > 0.5`` agrees with the binary label.

    ``classes`` holds one class name per landmark and ``keep`` the set of
    class names to evaluate; with ``keep=None`` every landmark counts.
    """
    vhat = np.asarray(vhat, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if vhat.shape != labels.shape:
        raise DimensionMismatch("predictions and labels differ in length")
    mask = np.ones(vhat.shape, dtype=bool)
    if keep is not None:
        if classes is None or len(classes) != len(vhat):
            raise DimensionMismatch("a class per landmark is needed for filtering")
        mask = np.array([c in keep for c in classes], dtype=bool)
    if not mask.any():
        raise EmptyAfterFilter("no landmark left after class filtering")
    return float(np.mean((vhat[mask] > 0.5) == (labels[mask] == 1)))


def uncertainty_scalar(pred: LandmarkPrediction, bbox=None, normalized: bool = False) -> float:
    """``|Sigma|^(1/2)``, equal to ``l11 * l22``; optionally divided by the box area."""
    s = pred.chol.l11 * pred.chol.l22
    if not normalized:
        return s
    if bbox is None:
        raise MissingBbox("normalized uncertainty needs a bounding box")
    w, h = bbox
    return s / (w * h)
