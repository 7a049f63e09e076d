"""Incremental posterior state for the greedy inner loop.

The posterior over the latent values at the training inputs is
``N(fhat, A)`` with ``A = (K^-1 + Pi)^-1`` and ``fhat = A Pi m``, where the
site precisions ``Pi`` are non-zero only on the active set ``u``.  We never
form ``A``; only its diagonal is tracked, together with

* ``L``: lower Cholesky factor of ``B = I + S K_uu S`` with ``S = Pi_uu^{1/2}``
* ``M = L^-1 S K_u.`` (``|u| x n``), so that ``A = K - M^T M``.

Storage is O(n |u|): ``M`` and the cached active kernel rows dominate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import NumericalError
from .kernel import HyperParams, kernel_column, kernel_diag, kernel_matrix

DENSE_ORACLE_CAP = 500


@dataclass
class SgpcState:
    """Live posterior of one inner loop.

    Buffers are preallocated for ``capacity`` inclusions and grown by
    doubling; the public properties return views trimmed to ``|u|``.
    """

    X: np.ndarray
    y: np.ndarray
    hp: HyperParams
    fhat: np.ndarray
    diagA: np.ndarray
    capacity: int = 16
    size: int = 0
    trace: list = field(default_factory=list, repr=False)
    exhausted: bool = False
    active: np.ndarray = field(default=None, repr=False)
    _u: np.ndarray = field(default=None, repr=False)
    _m: np.ndarray = field(default=None, repr=False)
    _p: np.ndarray = field(default=None, repr=False)
    _eta: np.ndarray = field(default=None, repr=False)
    _alpha_tilde: np.ndarray = field(default=None, repr=False)
    _L: np.ndarray = field(default=None, repr=False)
    _M: np.ndarray = field(default=None, repr=False)
    _K: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.X.shape[0]
        cap = max(1, min(self.capacity, n))
        self.capacity = cap
        if self.active is None:
            self.active = np.zeros(n, dtype=bool)
        self._u = np.zeros(cap, dtype=np.intp)
        self._m = np.zeros(cap)
        self._p = np.zeros(cap)
        self._eta = np.zeros(cap)
        self._alpha_tilde = np.zeros(cap)
        self._L = np.zeros((cap, cap))
        self._M = np.zeros((cap, n))
        self._K = np.zeros((cap, n))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def u(self) -> np.ndarray:
        return self._u[: self.size]

    @property
    def m_u(self) -> np.ndarray:
        return self._m[: self.size]

    @property
    def p_u(self) -> np.ndarray:
        return self._p[: self.size]

    @property
    def eta_u(self) -> np.ndarray:
        """Effective precision of each inclusion, in inclusion order."""
        return self._eta[: self.size]

    @property
    def alpha_tilde_u(self) -> np.ndarray:
        """Additive-model coefficient of each inclusion, in inclusion order."""
        return self._alpha_tilde[: self.size]

    @property
    def L(self) -> np.ndarray:
        return self._L[: self.size, : self.size]

    @property
    def M(self) -> np.ndarray:
        return self._M[: self.size]

    @property
    def K_active(self) -> np.ndarray:
        """Cached kernel rows ``K_{u,.}``."""
        return self._K[: self.size]

    def candidates(self) -> np.ndarray:
        """The non-active set in ascending index order."""
        return np.flatnonzero(~self.active)

    def column(self, j: int) -> np.ndarray:
        """``K_{.,j}``, served from the cache when ``j`` is active."""
        if self.active[j]:
            pos = int(np.flatnonzero(self.u == j)[0])
            return self._K[pos]
        return kernel_column(self.X, j, self.hp)

    def posterior_column(self, j: int, kcol: np.ndarray | None = None) -> np.ndarray:
        """Column ``j`` of the current posterior covariance, ``K_{.,j} - M^T M_{.,j}``."""
        if kcol is None:
            kcol = self.column(j)
        if self.size == 0:
            return kcol.copy()
        return kcol - self.M.T @ self.M[:, j]

    def _grow(self):
        new = min(2 * self.capacity, self.n)
        k = self.size

        def widen(a, shape):
            out = np.zeros(shape, dtype=a.dtype)
            out[tuple(slice(0, s) for s in a.shape)] = a
            return out

        self._u = widen(self._u, (new,))
        self._m = widen(self._m, (new,))
        self._p = widen(self._p, (new,))
        self._eta = widen(self._eta, (new,))
        self._alpha_tilde = widen(self._alpha_tilde, (new,))
        self._L = widen(self._L, (new, new))
        self._M = widen(self._M, (new, self.n))
        self._K = widen(self._K, (new, self.n))
        self.capacity = new
        assert self.size == k

    def append(self, j, m, p, eta, alpha_tilde, lvec, lscalar, mu, kcol):
        """Low-level append of one inclusion; see :func:`sgpc.adf.commit_inclusion`."""
        if self.size == self.capacity:
            self._grow()
        k = self.size
        self._u[k] = j
        self._m[k] = m
        self._p[k] = p
        self._eta[k] = eta
        self._alpha_tilde[k] = alpha_tilde
        self._L[k, :k] = lvec
        self._L[k, k] = lscalar
        self._M[k] = mu
        self._K[k] = kcol
        self.active[j] = True
        self.size = k + 1


def init_state(X, y, hp: HyperParams, capacity: int = 16) -> SgpcState:
    """Empty active set, ``fhat = 0`` and ``diag(A) = diag(K)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty 2-D array")
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one label per row of X")
    return SgpcState(
        X=X,
        y=y,
        hp=hp,
        fhat=np.zeros(X.shape[0]),
        diagA=kernel_diag(X, hp),
        capacity=capacity,
    )


@dataclass
class DenseOracle:
    A_full: np.ndarray
    fhat_full: np.ndarray


def dense_oracle(u, m_u, p_u, X, hp: HyperParams, cap: int = DENSE_ORACLE_CAP) -> DenseOracle:
    """Posterior from scratch in O(n^2); for tests only.

    ``A = K - K_.u S B^-1 S K_u.`` and ``fhat = K_.u S B^-1 S m_u``, using a
    fresh factorization of ``B`` and no incremental bookkeeping.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n > cap:
        raise ValueError(f"dense oracle refuses n={n} > cap={cap}")
    K = kernel_matrix(X, X, hp)
    u = np.asarray(u, dtype=np.intp)
    if u.size == 0:
        return DenseOracle(A_full=K, fhat_full=np.zeros(n))
    p_u = np.asarray(p_u, dtype=float)
    if np.any(p_u <= 0):
        raise NumericalError("site precisions must be positive")
    s = np.sqrt(p_u)
    Ku = K[:, u]
    B = np.eye(u.size) + s[:, None] * K[np.ix_(u, u)] * s[None, :]
    try:
        c = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("B is not positive definite") from exc
    SKu = s[:, None] * Ku.T
    A = K - SKu.T @ cho_solve((c, True), SKu)
    A = 0.5 * (A + A.T)
    fhat = SKu.T @ cho_solve((c, True), s * np.asarray(m_u, dtype=float))
    return DenseOracle(A_full=A, fhat_full=fhat)
