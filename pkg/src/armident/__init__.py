"""Dynamic parameter identification and contact detection for serial arms
with an in-chain force/torque sensor."""

from .anomaly import ResidualStats, detect_contacts, roc_curve, t2_score, t2_threshold
from .estimators import DynamicsIdentifier, T2ContactDetector
from .model import ChainModel, load_model, load_model_file, reference_model
from .pls import NIPALSRegression, select_latent_count
from .regressors import ParameterLayout, stack_dataset
from .signal import Dataset, PolynomialDifferentiator, estimate_derivatives

__version__ = "0.1.0"

__all__ = [
    "ChainModel", "Dataset", "DynamicsIdentifier", "NIPALSRegression", "ParameterLayout",
    "PolynomialDifferentiator", "ResidualStats", "T2ContactDetector", "detect_contacts",
    "estimate_derivatives", "load_model", "load_model_file", "reference_model", "roc_curve",
    "select_latent_count", "stack_dataset", "t2_score", "t2_threshold",
]
