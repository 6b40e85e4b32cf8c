"""Interpretable new-user clustering and fast-response churn prediction."""

from .baselines import LogisticRegressionGD, make_splits
from .clustering import SilhouetteKMeans, ThreeStepClustering
from .data import ActivitySeries, default_spec, generate_synthetic, load_activities
from .exceptions import (
    ClusChurnError,
    NotFittedError,
    NumericalError,
    ParseError,
    RangeError,
    ValidationError,
)
from .features import ActivityFeaturizer
from .graph import SocialGraph
from .model import PLSTMChurnClassifier

__version__ = "0.1.0"

__all__ = [
    "ActivityFeaturizer", "ActivitySeries", "ClusChurnError", "LogisticRegressionGD",
    "NotFittedError", "NumericalError", "ParseError", "PLSTMChurnClassifier", "RangeError",
    "SilhouetteKMeans", "SocialGraph", "ThreeStepClustering", "ValidationError", "default_spec",
    "generate_synthetic", "load_activities", "make_splits",
]
