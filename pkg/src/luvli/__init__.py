"""Landmark location, uncertainty and visibility likelihood tools."""

from .errors import *  # noqa: F401,F403
from .estimators import LandmarkLikelihoodEstimator, SpatialMeanTransformer
from .fitting import (
    FitResult,
    LandmarkTruth,
    OptimizerConfig,
    SyntheticScenario,
    closed_form_gaussian,
    fit_mle,
    generate,
)
from .geometry import CholeskyCovariance, Point2, SymMatrix2, to_covariance
from .heatmap import Heatmap, SigmaKind, argmax_quarter_offset, spatial_mean
from .likelihood import (
    GroundTruthLandmark,
    LandmarkPrediction,
    LikelihoodKind,
    luvli_grad,
    luvli_loss,
    sample,
)

__version__ = "0.1.0"
