"""Greedy inner loop, hyperparameter outer loop and best-model tracking."""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .adf import compute_delta, commit_inclusion
from .errors import NoCandidateError, NumericalError, SGPCError
from .kernel import HyperParams, kernel_matrix, median_heuristic
from .losses import error_bound_check, mean_nlp, training_error
from .selection import SITE_ESTIMATORS, STRATEGIES, make_selector
from .siteopt import DEFAULT_BUDGET as SITE_BUDGET
from .state import SgpcState, init_state

log = logging.getLogger(__name__)

MAGIC = "SGPC1"
FD_STEP = 1e-5
THETA_BOUND = 20.0


@dataclass(frozen=True)
class TrainConfig:
    d_max: int
    kappa: int | None = None
    selector: str = "adaptive"
    site_estimator: str = "moment"
    iter_max: int = 20
    tol: float = 1e-4
    seed: int = 0
    hyper_budget: int = 100
    site_budget: int = SITE_BUDGET

    def __post_init__(self):
        if self.d_max < 1:
            raise ValueError("d_max must be at least 1")
        if self.kappa is not None and self.kappa < 1:
            raise ValueError("kappa must be at least 1")
        if self.iter_max < 1:
            raise ValueError("iter_max must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.selector not in STRATEGIES:
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.site_estimator not in SITE_ESTIMATORS:
            raise ValueError(f"unknown site estimator {self.site_estimator!r}")


@dataclass
class TrainedModel:
    u: np.ndarray
    X_u: np.ndarray
    m_u: np.ndarray
    p_u: np.ndarray
    hp: HyperParams
    nlp: float = math.nan
    train_error: float = math.nan
    trace: list = field(default_factory=list, repr=False)
    outer_trace: list = field(default_factory=list, repr=False)
    best_outer_iter: int = 0
    exhausted: bool = False

    @property
    def size(self) -> int:
        return int(self.u.size)


# ---------------------------------------------------------------------------
# inner loop
# ---------------------------------------------------------------------------


def inner_loop(X, y, hp: HyperParams, config: TrainConfig, rng: np.random.Generator,
               callback=None) -> SgpcState:
    """Grow the active set to ``d_max`` by select, estimate site, commit.

    Stops early (with ``state.exhausted`` set and a warning) if no candidate
    survives.  ``callback(state, outcome)`` runs after every commit.
    """
    n = np.asarray(X).shape[0]
    if config.d_max > n:
        raise ValueError(f"d_max={config.d_max} exceeds n={n}")
    state = init_state(X, y, hp, capacity=config.d_max)
    select = make_selector(config.selector, config.kappa, config.site_estimator, config.site_budget)
    while state.size < config.d_max:
        try:
            out = select(state, rng)
        except NoCandidateError as exc:
            state.exhausted = True
            warnings.warn(f"inner loop stopped at |u|={state.size}: {exc}", RuntimeWarning, stacklevel=2)
            break
        delta = compute_delta(state, out.j, out.site)
        commit_inclusion(state, out.j, out.site, delta)
        rep = error_bound_check(state)
        state.trace.append({
            "j": out.j,
            "train_error": rep.train_error,
            "nlp_all": rep.nlp_all,
            "nlp_holdout": rep.nlp_holdout,
            "eta": delta.eta,
            "alpha_tilde": delta.alpha_tilde,
        })
        if callback is not None:
            callback(state, out)
    return state


# ---------------------------------------------------------------------------
# frozen-site posterior and hyperparameters
# ---------------------------------------------------------------------------


def _factor(Kuu, Kun, p_u, m_u, v0):
    s = np.sqrt(p_u)
    B = np.eye(len(p_u)) + s[:, None] * Kuu * s[None, :]
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("B is not positive definite") from exc
    M = solve_triangular(L, s[:, None] * Kun, lower=True)
    diagA = v0 - np.einsum("ij,ij->j", M, M)
    fhat = M.T @ solve_triangular(L, s * m_u, lower=True)
    return fhat, diagA, L, M


def rebuild_posterior(u, m_u, p_u, hp: HyperParams, X):
    """Batch posterior ``(fhat, diagA, L, M)`` for frozen sites under ``hp``."""
    X = np.asarray(X, dtype=float)
    u = np.asarray(u, dtype=np.intp)
    n = X.shape[0]
    if u.size == 0:
        return np.zeros(n), np.full(n, hp.v0), np.zeros((0, 0)), np.zeros((0, n))
    p_u = np.asarray(p_u, dtype=float)
    if np.any(p_u <= 0):
        raise NumericalError("site precisions must be positive")
    Xu = X[u]
    return _factor(kernel_matrix(Xu, Xu, hp), kernel_matrix(Xu, X, hp), p_u,
                   np.asarray(m_u, dtype=float), hp.v0)


class FrozenSiteObjective:
    """Holdout NLP as a function of ``theta = (log v0, log sigma2, b)``.

    Squared distances are computed once, so each evaluation costs
    O(n |u|^2).  If every example is active the all-example NLP is used.
    """

    def __init__(self, u, m_u, p_u, X, y):
        X = np.asarray(X, dtype=float)
        self.u = np.asarray(u, dtype=np.intp)
        self.m_u = np.asarray(m_u, dtype=float)
        self.p_u = np.asarray(p_u, dtype=float)
        self.y = np.asarray(y, dtype=float)
        Xu = X[self.u]
        self.Duu = cdist(Xu, Xu, "sqeuclidean")
        self.Dun = cdist(Xu, X, "sqeuclidean")
        self.mask = np.ones(X.shape[0], dtype=bool)
        self.mask[self.u] = False
        if not self.mask.any():
            self.mask = None
        self.evaluations = 0

    def posterior(self, theta):
        v0, s2 = math.exp(theta[0]), math.exp(theta[1])
        Kuu = v0 * np.exp(-0.5 * self.Duu / s2)
        Kun = v0 * np.exp(-0.5 * self.Dun / s2)
        return _factor(Kuu, Kun, self.p_u, self.m_u, v0)

    def __call__(self, theta) -> float:
        self.evaluations += 1
        theta = np.asarray(theta, dtype=float)
        if np.any(np.abs(theta) > THETA_BOUND) or not np.all(np.isfinite(theta)):
            return math.inf
        try:
            fhat, diagA, _, _ = self.posterior(theta)
        except NumericalError:
            return math.inf
        return mean_nlp(fhat, diagA, self.y, float(theta[2]), self.mask)


def fd_gradient(fun, theta, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences with a common step in every coordinate."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (fun(theta + e) - fun(theta - e)) / (2.0 * h)
    return g


class _BudgetSpent(Exception):
    pass


def optimize_hyperparameters(u, m_u, p_u, X, y, hp0: HyperParams, budget: int = 100):
    """Conjugate-gradient descent of the holdout NLP with sites frozen.

    Returns ``(hp, nlp)``; ``nlp`` never exceeds the starting value because
    the best point ever evaluated is kept.
    """
    obj = FrozenSiteObjective(u, m_u, p_u, X, y)
    theta0 = hp0.to_vector()
    f0 = obj(theta0)
    if not math.isfinite(f0):
        warnings.warn("starting hyperparameters give a singular posterior; keeping them",
                      RuntimeWarning, stacklevel=2)
        return hp0, f0
    best = [f0, theta0.copy()]

    def f(theta):
        if obj.evaluations >= budget:
            raise _BudgetSpent
        v = obj(theta)
        if v < best[0]:
            best[0], best[1] = v, np.array(theta, dtype=float)
        # CG line searches need finite values
        return v if math.isfinite(v) else f0 + 1e6

    try:
        minimize(f, theta0, jac=lambda t: fd_gradient(f, t), method="CG",
                 options={"maxiter": max(budget // 7, 1), "gtol": 1e-6})
    except _BudgetSpent:
        pass
    return HyperParams.from_vector(best[1]), float(best[0])


def initial_hyperparameters(X, rng: np.random.Generator) -> HyperParams:
    """``v0 = 1``, median-heuristic width, zero bias."""
    return HyperParams(v0=1.0, sigma2=median_heuristic(X, rng), b=0.0)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


def train(X, y, config: TrainConfig, hp0: HyperParams | None = None) -> TrainedModel:
    """Alternate fresh greedy selection with hyperparameter refits.

    Stops after ``iter_max`` outer iterations or when the holdout NLP changes
    by less than ``tol``; returns the model with the lowest holdout NLP seen
    after any hyperparameter step.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(config.seed)
    hp = hp0 if hp0 is not None else initial_hyperparameters(X, rng)
    best: TrainedModel | None = None
    outer: list = []
    prev = None
    for it in range(1, config.iter_max + 1):
        t0 = time.perf_counter()
        state = inner_loop(X, y, hp, config, rng)
        seconds = time.perf_counter() - t0
        u, m_u, p_u = state.u.copy(), state.m_u.copy(), state.p_u.copy()
        hp_new, nlp_new = optimize_hyperparameters(u, m_u, p_u, X, y, hp, config.hyper_budget)
        if best is None or nlp_new < best.nlp:
            fhat, _, _, _ = rebuild_posterior(u, m_u, p_u, hp_new, X)
            best = TrainedModel(
                u=u, X_u=X[u].copy(), m_u=m_u, p_u=p_u, hp=hp_new, nlp=nlp_new,
                train_error=training_error(fhat, y, hp_new.b), trace=list(state.trace),
                best_outer_iter=it, exhausted=state.exhausted,
            )
        outer.append({"iter": it, "nlp": nlp_new, "best_nlp": best.nlp,
                      "inner_seconds": seconds, "inclusions": int(state.size)})
        log.debug("outer %d: nlp=%.6f best=%.6f", it, nlp_new, best.nlp)
        if prev is not None and abs(prev - nlp_new) < config.tol:
            break
        prev = nlp_new
        hp = hp_new
    best.outer_trace = outer
    return best


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_model(model: TrainedModel, path) -> None:
    """Text format: a ``SGPC1`` header line followed by one JSON object."""
    payload = {
        "u": [int(i) for i in model.u],
        "X_u": model.X_u.tolist(),
        "m_u": model.m_u.tolist(),
        "p_u": model.p_u.tolist(),
        "hp": model.hp.as_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MAGIC + "\n")
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != MAGIC:
            raise SGPCError(f"not an SGPC model file (header {header!r})")
        payload = json.loads(fh.read())
    X_u = np.asarray(payload["X_u"], dtype=float)
    return TrainedModel(
        u=np.asarray(payload["u"], dtype=np.intp),
        X_u=X_u.reshape(len(payload["u"]), -1) if X_u.size == 0 else X_u,
        m_u=np.asarray(payload["m_u"], dtype=float),
        p_u=np.asarray(payload["p_u"], dtype=float),
        hp=HyperParams(**payload["hp"]),
    )
