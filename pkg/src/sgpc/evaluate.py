"""Predictions for unseen inputs and test-set metrics.

For a model with active inputs ``X_u`` and sites ``(m_u, p_u)``::

    fstar  = k_*u S B^-1 S m_u
    var    = k(x, x) - |L^-1 S k_u*|^2

with ``S = diag(sqrt(p_u))`` and ``L L^T = B = I + S K_uu S``.  Both need
only triangular solves against ``L``, so a prediction costs O(|u|^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NumericalError, SGPCError
from .kernel import kernel_matrix
from .losses import mean_nlp
from .numerics import log_phi_stable
from .trainer import TrainedModel


@dataclass(frozen=True)
class Prediction:
    fstar: float
    var_star: float
    prob_pos: float
    label: int


class Predictor:
    """Factorization of one model, reusable across many test points."""

    def __init__(self, model: TrainedModel):
        self.model = model
        self.hp = model.hp
        self.X_u = np.asarray(model.X_u, dtype=float)
        k = model.size
        if k == 0:
            self.L = np.zeros((0, 0))
            self.s = np.zeros(0)
            self.w = np.zeros(0)
            return
        self.s = np.sqrt(np.asarray(model.p_u, dtype=float))
        Kuu = kernel_matrix(self.X_u, self.X_u, self.hp)
        B = np.eye(k) + self.s[:, None] * Kuu * self.s[None, :]
        try:
            self.L = np.linalg.cholesky(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("B is not positive definite") from exc
        self.w = self.s * cho_solve((self.L, True), self.s * np.asarray(model.m_u, dtype=float))

    def latent(self, Xstar):
        """Predictive latent mean and variance for each row of ``Xstar``."""
        Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
        if self.X_u.size and Xstar.shape[1] != self.X_u.shape[1]:
            raise ValueError(f"dimension mismatch: {Xstar.shape[1]} vs {self.X_u.shape[1]}")
        prior = np.full(Xstar.shape[0], self.hp.v0)
        if self.model.size == 0:
            return np.zeros(Xstar.shape[0]), prior
        Ksu = kernel_matrix(Xstar, self.X_u, self.hp)
        fstar = Ksu @ self.w
        V = solve_triangular(self.L, self.s[:, None] * Ksu.T, lower=True)
        return fstar, prior - np.einsum("ij,ij->j", V, V)

    def prob_positive(self, Xstar):
        f, v = self.latent(Xstar)
        return np.exp(log_phi_stable((f + self.hp.b) / np.sqrt(1.0 + np.maximum(v, 0.0))))


def predict_one(model: TrainedModel, x, predictor: Predictor | None = None) -> Prediction:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict_one expects a single input vector")
    pred = predictor or Predictor(model)
    f, v = pred.latent(x[None, :])
    f, v = float(f[0]), float(v[0])
    shifted = f + model.hp.b
    prob = math.exp(log_phi_stable(shifted / math.sqrt(1.0 + max(v, 0.0))))
    return Prediction(fstar=f, var_star=v, prob_pos=prob, label=1 if shifted > 0 else -1)


def evaluate_set(model: TrainedModel, X_test, y_test) -> tuple[float, float]:
    """``(error_rate, mean NLP)`` on a labelled test set."""
    y_test = np.asarray(y_test, dtype=float)
    if y_test.size == 0:
        raise SGPCError("empty test set")
    f, v = Predictor(model).latent(X_test)
    b = model.hp.b
    err = float(np.mean(np.sign(f + b) != y_test))
    return err, mean_nlp(f, v, y_test, b)
