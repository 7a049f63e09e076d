"""Sparse Gaussian process classification with greedy basis-vector selection."""

from .adf import SiteParams, include, moment_match
from .dataio import Dataset, load_dataset, make_banana, make_gaussian_mixture
from .errors import (
    CandidateExhaustedError,
    DataFormatError,
    DegenerateSiteError,
    NoCandidateError,
    NumericalError,
    SGPCError,
    StateCorruptionError,
)
from .evaluate import Predictor, evaluate_set, predict_one
from .kernel import HyperParams
from .state import SgpcState, init_state
from .trainer import TrainConfig, TrainedModel, inner_loop, load_model, save_model, train

__version__ = "0.1.0"

__all__ = [
    "CandidateExhaustedError",
    "DataFormatError",
    "Dataset",
    "DegenerateSiteError",
    "HyperParams",
    "NoCandidateError",
    "NumericalError",
    "Predictor",
    "SGPCError",
    "SgpcState",
    "SiteParams",
    "StateCorruptionError",
    "TrainConfig",
    "TrainedModel",
    "evaluate_set",
    "include",
    "init_state",
    "inner_loop",
    "load_dataset",
    "load_model",
    "make_banana",
    "make_gaussian_mixture",
    "moment_match",
    "predict_one",
    "save_model",
    "train",
]
