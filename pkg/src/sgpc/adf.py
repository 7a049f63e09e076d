"""Moment matching and rank-one inclusion of a single site.

Including candidate ``j`` with site ``(p, m)`` changes the posterior along
``ktilde = A_{.,j}`` (the current posterior covariance column)::

    diag(A) -= eta * ktilde**2        eta = p / (1 + p A_jj)
    fhat    += alpha_tilde * ktilde   alpha_tilde = eta * (m - fhat_j)

The factor bookkeeping appends ``[l^T, lscalar]`` to ``L`` and ``mu^T`` to
``M`` with ``mu = sqrt(p) * ktilde / lscalar``, so ``mu**2 == eta * ktilde**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSiteError, StateCorruptionError
from .numerics import inverse_mills
from .state import SgpcState

DEGENERACY_TOL = 1e-12
CORRUPTION_TOL = 1e-8


@dataclass(frozen=True)
class SiteParams:
    p: float
    m: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.m)):
            raise ValueError(f"site parameters must be finite, got p={self.p}, m={self.m}")
        if self.p < 0:
            raise ValueError(f"site precision must be non-negative, got {self.p}")


@dataclass(frozen=True)
class MomentMatch:
    """Moment-matched site for one candidate plus its intermediates."""

    site: SiteParams
    z: float
    alpha: float
    nu: float


@dataclass
class MomentMatchBatch:
    """Vectorized moment matching over a set of candidates.

    ``valid`` marks candidates whose site update is well defined; the other
    entries of ``p`` and ``m`` are NaN.
    """

    idx: np.ndarray
    z: np.ndarray
    alpha: np.ndarray
    nu: np.ndarray
    lam_bar: np.ndarray
    p: np.ndarray
    m: np.ndarray
    valid: np.ndarray


@dataclass
class InclusionDelta:
    j: int
    mu: np.ndarray
    lvec: np.ndarray
    lscalar: float
    eta: float
    alpha_tilde: float
    ktilde: np.ndarray
    kcol: np.ndarray

    def trial_fhat(self, state: SgpcState) -> np.ndarray:
        return state.fhat + self.alpha_tilde * self.ktilde

    def trial_diagA(self, state: SgpcState) -> np.ndarray:
        return state.diagA - self.mu * self.mu


def moment_match_many(state: SgpcState, idx) -> MomentMatchBatch:
    idx = np.asarray(idx, dtype=np.intp)
    b = state.hp.b
    A = state.diagA[idx]
    y = state.y[idx]
    shifted = state.fhat[idx] + b
    denom = 1.0 + A
    z = y * shifted / np.sqrt(denom)
    alpha = y * inverse_mills(z) / np.sqrt(denom)
    nu = alpha * (alpha + shifted / denom)
    lam_bar = 1.0 - A * nu
    valid = (nu > 0) & (lam_bar > DEGENERACY_TOL) & np.isfinite(nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(valid, nu / lam_bar, np.nan)
        m = np.where(valid, state.fhat[idx] + alpha / nu, np.nan)
    return MomentMatchBatch(idx=idx, z=z, alpha=alpha, nu=nu, lam_bar=lam_bar, p=p, m=m, valid=valid)


def moment_match(state: SgpcState, j: int) -> MomentMatch:
    """ADF site for candidate ``j`` from the current marginal ``N(fhat_j, A_jj)``."""
    if state.active[j]:
        raise ValueError(f"index {j} is already active")
    mm = moment_match_many(state, [j])
    if not mm.valid[0]:
        raise DegenerateSiteError(
            f"candidate {j}: nu={mm.nu[0]:.3e}, 1 - A_jj nu={mm.lam_bar[0]:.3e}"
        )
    return MomentMatch(
        site=SiteParams(p=float(mm.p[0]), m=float(mm.m[0])),
        z=float(mm.z[0]),
        alpha=float(mm.alpha[0]),
        nu=float(mm.nu[0]),
    )


def compute_delta(state: SgpcState, j: int, site: SiteParams, ktilde=None, kcol=None) -> InclusionDelta:
    """Trial inclusion of ``j``; the state is left untouched.

    ``ktilde`` and ``kcol`` may be passed in when the caller already has them
    (the site optimizer evaluates many sites for the same candidate).
    """
    if state.active[j]:
        raise ValueError(f"index {j} is already active")
    if kcol is None:
        kcol = state.column(j)
    k = state.size
    sp = math.sqrt(site.p)
    if k:
        lvec = sp * state.M[:, j]
    else:
        lvec = np.zeros(0)
    l2 = 1.0 + site.p * kcol[j] - float(lvec @ lvec)
    if l2 <= DEGENERACY_TOL:
        raise DegenerateSiteError(f"candidate {j}: lscalar^2={l2:.3e}")
    lscalar = math.sqrt(l2)
    if ktilde is None:
        ktilde = state.posterior_column(j, kcol)
    mu = (sp / lscalar) * ktilde
    eta = site.p / (1.0 + site.p * state.diagA[j])
    alpha_tilde = eta * (site.m - state.fhat[j])
    return InclusionDelta(
        j=j, mu=mu, lvec=lvec, lscalar=lscalar, eta=eta,
        alpha_tilde=alpha_tilde, ktilde=ktilde, kcol=kcol,
    )


def commit_inclusion(state: SgpcState, j: int, site: SiteParams, delta: InclusionDelta) -> SgpcState:
    """Absorb site ``j`` into ``state`` in place and return it.

    The mean moves along ``mu`` with coefficient ``alpha_tilde * lscalar / sqrt(p)``,
    which equals ``alpha_tilde * ktilde``.
    """
    if delta.j != j:
        raise ValueError("delta was computed for a different candidate")
    if site.p <= 0:
        raise ValueError("only sites with positive precision can be committed")
    new_diag = state.diagA - delta.mu * delta.mu
    worst = float(new_diag.min())
    if worst < -CORRUPTION_TOL:
        raise StateCorruptionError(f"including {j} drives a variance to {worst:.3e}")
    coef = delta.alpha_tilde * delta.lscalar / math.sqrt(site.p)
    state.fhat = state.fhat + coef * delta.mu
    state.diagA = new_diag
    state.append(j, site.m, site.p, delta.eta, delta.alpha_tilde,
                 delta.lvec, delta.lscalar, delta.mu, delta.kcol)
    return state


def include(state: SgpcState, j: int, site: SiteParams | None = None) -> SgpcState:
    """Moment-match (unless ``site`` is given) and commit ``j``."""
    if site is None:
        site = moment_match(state, j).site
    delta = compute_delta(state, j, site)
    return commit_inclusion(state, j, site, delta)
