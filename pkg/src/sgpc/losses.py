"""Moderated probit losses and the training-error bound they imply."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SGPCError
from .numerics import log_phi_stable
from .state import SgpcState

LOG2 = math.log(2.0)


def moderated_margins(fhat, diagA, y, b: float) -> np.ndarray:
    return y * (fhat + b) / np.sqrt(1.0 + np.maximum(diagA, 0.0))


def mean_nlp(fhat, diagA, y, b: float, mask=None) -> float:
    """Mean of ``-log Phi(y (f + b) / sqrt(1 + var))``, optionally over ``mask``."""
    if mask is not None:
        fhat, diagA, y = fhat[mask], diagA[mask], y[mask]
    if np.size(y) == 0:
        raise SGPCError("loss over an empty index set is undefined")
    return float(-np.mean(log_phi_stable(moderated_margins(fhat, diagA, y, b))))


def training_error(fhat, y, b: float) -> float:
    """Misclassification rate; a zero latent value counts as an error for either label."""
    return float(np.mean(np.sign(fhat + b) != y))


def nlp_holdout(state: SgpcState) -> float:
    """Mean NLP over the non-active examples."""
    return mean_nlp(state.fhat, state.diagA, state.y, state.hp.b, ~state.active)


def nlp_all(state: SgpcState) -> float:
    """Mean NLP over every training example (the selection objective)."""
    return mean_nlp(state.fhat, state.diagA, state.y, state.hp.b)


@dataclass(frozen=True)
class LossReport:
    nlp_holdout: float
    nlp_all: float
    train_error: float
    bound: float

    @property
    def bound_holds(self) -> bool:
        return self.train_error <= self.bound + 1e-12


def error_bound_check(state: SgpcState) -> LossReport:
    all_ = nlp_all(state)
    hold = nlp_holdout(state) if state.size < state.n else float("nan")
    return LossReport(
        nlp_holdout=hold,
        nlp_all=all_,
        train_error=training_error(state.fhat, state.y, state.hp.b),
        bound=all_ / LOG2,
    )
