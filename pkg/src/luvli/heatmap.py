"""Heatmaps, proxy ground-truth rendering and the spatial-mean landmark estimator.

Pixel coordinates are zero based: ``x`` indexes columns, ``y`` indexes rows and
``(0, 0)`` is the centre of the top-left pixel.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import AllNonPositive, InvalidDimensions
from .geometry import Point2

DEFAULT_SIZE = 64
DEFAULT_TEMPERATURE = 0.1


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Row-major grid of responses, ``values[y, x]``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidDimensions(f"heatmap must be a non-empty 2D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    def coordinates(self):
        """Return ``(xs, ys)`` grids matching ``values``."""
        ys, xs = np.indices(self.values.shape, dtype=float)
        return xs, ys

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.values:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Heatmap:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise InvalidDimensions(f"ragged heatmap CSV, row lengths {sorted(widths)}")
        return cls(np.array([[float(v) for v in r] for r in rows], dtype=float))


@dataclass(frozen=True)
class SigmaKind:
    """Pixel post-processing applied before the weighted mean.

    ``variant`` is ``"relu"``, ``"softmax"`` or ``"temperature_softmax"``; the
    temperature is only used by the last one.
    """

    variant: str = "relu"
    temperature: float | None = None

    def __post_init__(self):
        if self.variant not in ("relu", "softmax", "temperature_softmax"):
            raise ValueError(f"unknown sigma variant {self.variant!r}")
        if self.variant == "temperature_softmax":
            t = DEFAULT_TEMPERATURE if self.temperature is None else float(self.temperature)
            if not t > 0:
                raise ValueError("temperature must be positive")
            object.__setattr__(self, "temperature", t)

    @classmethod
    def relu(cls):
        return cls("relu")

    @classmethod
    def softmax(cls):
        return cls("softmax")

    @classmethod
    def temperature_softmax(cls, tau=DEFAULT_TEMPERATURE):
        return cls("temperature_softmax", tau)

    @property
    def scale(self):
        """Inverse temperature of the softmax variants."""
        return 1.0 / self.temperature if self.variant == "temperature_softmax" else 1.0


def render_gaussian(center: Point2, s: float = 1.0, width: int = DEFAULT_SIZE,
                    height: int = DEFAULT_SIZE) -> Heatmap:
    """Unnormalised isotropic Gaussian of peak 1 at ``center`` sampled on the pixel grid."""
    if width < 1 or height < 1:
        raise InvalidDimensions(f"grid must be at least 1x1, got {width}x{height}")
    if not s > 0:
        raise ValueError("s must be positive")
    ys, xs = np.indices((height, width), dtype=float)
    r2 = (xs - center.x) ** 2 + (ys - center.y) ** 2
    return Heatmap(np.exp(-r2 / (2.0 * s * s)))


def _weights(values: np.ndarray, sigma: SigmaKind):
    if sigma.variant == "relu":
        w = np.maximum(values, 0.0)
        total = w.sum()
        if not total > 0:
            raise AllNonPositive("heatmap has no positive pixel")
        return w / total
    z = values * sigma.scale
    w = np.exp(z - z.max())
    return w / w.sum()


def spatial_mean(H: Heatmap, sigma: SigmaKind = SigmaKind()) -> Point2:
    p = _weights(H.values, sigma)
    xs, ys = H.coordinates()
    return Point2(float((p * xs).sum()), float((p * ys).sum()))


def spatial_mean_grad(H: Heatmap, sigma: SigmaKind = SigmaKind()) -> np.ndarray:
    """Jacobian of :func:`spatial_mean` w.r.t. every pixel, shape ``(height, width, 2)``."""
    p = _weights(H.values, sigma)
    xs, ys = H.coordinates()
    mx, my = (p * xs).sum(), (p * ys).sum()
    offsets = np.stack([xs - mx, ys - my], axis=-1)
    if sigma.variant == "relu":
        # d mu / dH = (c - mu) / S on positive pixels; p = H / S there.
        total = np.maximum(H.values, 0.0).sum()
        mask = (H.values > 0).astype(float) / total
        return offsets * mask[..., None]
    return offsets * (sigma.scale * p)[..., None]


def argmax_quarter_offset(H: Heatmap) -> Point2:
    """Argmax pixel shifted a quarter pixel towards the second-highest pixel.

    Ties are broken by row-major scan order.
    """
    flat = H.values.ravel()
    if flat.size < 2:
        raise InvalidDimensions("need at least two pixels")
    order = np.argsort(-flat, kind="stable")
    y0, x0 = divmod(int(order[0]), H.width)
    y1, x1 = divmod(int(order[1]), H.width)
    dx, dy = x1 - x0, y1 - y0
    norm = np.hypot(dx, dy)
    return Point2(x0 + 0.25 * dx / norm, y0 + 0.25 * dy / norm)
