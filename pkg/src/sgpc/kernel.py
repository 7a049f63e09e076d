"""Squared exponential covariance and the hyperparameter container."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class HyperParams:
    """Kernel amplitude ``v0``, squared width ``sigma2`` and likelihood bias ``b``.

    The probit slope is fixed at one; it is exposed as ``lam`` only so that
    callers can read it, and any other value is rejected.
    """

    v0: float = 1.0
    sigma2: float = 1.0
    b: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if not (self.v0 > 0 and math.isfinite(self.v0)):
            raise ValueError(f"v0 must be positive and finite, got {self.v0}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2}")
        if not math.isfinite(self.b):
            raise ValueError(f"b must be finite, got {self.b}")
        if self.lam != 1.0:
            raise ValueError("the probit slope is fixed at 1")

    def to_vector(self) -> np.ndarray:
        """Unconstrained coordinates ``(log v0, log sigma2, b)``."""
        return np.array([math.log(self.v0), math.log(self.sigma2), self.b])

    @classmethod
    def from_vector(cls, theta) -> "HyperParams":
        return cls(v0=float(np.exp(theta[0])), sigma2=float(np.exp(theta[1])), b=float(theta[2]))

    def as_dict(self) -> dict:
        return {"v0": self.v0, "sigma2": self.sigma2, "b": self.b}


def kernel_eval(xi, xj, hp: HyperParams) -> float:
    """``v0 * exp(-|xi - xj|^2 / (2 sigma2))`` for a single pair of inputs."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    if xi.shape != xj.shape or xi.ndim != 1:
        raise ValueError(f"dimension mismatch: {xi.shape} vs {xj.shape}")
    d = (xi - xj)[None, :]
    return float(hp.v0 * np.exp(-0.5 * (d * d).sum(1) / hp.sigma2)[0])


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return cdist(A, B, "sqeuclidean")


def kernel_matrix(A, B, hp: HyperParams) -> np.ndarray:
    """Cross-covariance between the rows of ``A`` (p x d) and ``B`` (q x d)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return hp.v0 * np.exp(-0.5 * _sqdist(A, B) / hp.sigma2)


def kernel_column(X, j: int, hp: HyperParams) -> np.ndarray:
    """Column ``j`` of the training covariance, computed on demand in O(n d)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 0 <= j < n:
        raise IndexError(f"column {j} out of range for n={n}")
    d = X - X[j]
    col = hp.v0 * np.exp(-0.5 * (d * d).sum(1) / hp.sigma2)
    col[j] = hp.v0
    return col


def kernel_diag(X, hp: HyperParams) -> np.ndarray:
    return np.full(np.asarray(X).shape[0], hp.v0, dtype=float)


def median_heuristic(X, rng: np.random.Generator, max_points: int = 500) -> float:
    """Median squared pairwise distance over a random subsample of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] > max_points:
        X = X[rng.choice(X.shape[0], size=max_points, replace=False)]
    sq = _sqdist(X, X)
    iu = np.triu_indices(X.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.median(sq[iu]))
    return med if med > 0 else 1.0
