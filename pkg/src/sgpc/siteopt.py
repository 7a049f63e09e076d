"""Site parameters chosen by directly minimizing the all-example NLP.

For a fixed candidate ``i`` the trial posterior after inclusion is

    fhat' = fhat + eta * (m - fhat_i) * ktilde
    diag(A)' = diag(A) - eta * ktilde**2,       eta = p / (1 + p A_ii)

so after computing ``ktilde`` once (O(n |u|)) every objective evaluation is
O(n).  Keeping ``diag(A)'`` non-negative requires ``eta <= eta_tilde`` with
``eta_tilde = min_l A_ll / ktilde_l**2``; when ``eta_tilde * A_ii >= 1`` this
never binds, otherwise ``p <= eta_tilde / (1 - eta_tilde A_ii)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .adf import SiteParams, moment_match
from .errors import CandidateExhaustedError, DegenerateSiteError
from .losses import mean_nlp
from .state import SgpcState

DEFAULT_BUDGET = 40
ZERO_VARIANCE = 1e-12
TAU_MIN = -30.0
TAU_MAX = 30.0
# keeps the bound itself off the zero-variance edge
UPPER_SHRINK = 1.0 - 1e-9


@dataclass(frozen=True)
class SiteFeasibility:
    eta_tilde: float
    unconstrained: bool
    p_upper: float

    def contains(self, p: float) -> bool:
        return p >= 0 and (self.unconstrained or p <= self.p_upper)


def _feasibility_from(diagA: np.ndarray, ktilde: np.ndarray, i: int) -> SiteFeasibility:
    Aii = float(diagA[i])
    if Aii <= ZERO_VARIANCE:
        raise CandidateExhaustedError(f"candidate {i} has zero posterior variance ({Aii:.3e})")
    k2 = ktilde * ktilde
    use = k2 >= 1e-300
    ratios = np.maximum(diagA[use], 0.0) / k2[use]
    # the l = i term is always present and equals 1 / A_ii
    eta_tilde = float(min(ratios.min(initial=np.inf), 1.0 / Aii))
    if eta_tilde * Aii >= 1.0:
        return SiteFeasibility(eta_tilde=eta_tilde, unconstrained=True, p_upper=math.inf)
    return SiteFeasibility(
        eta_tilde=eta_tilde,
        unconstrained=False,
        p_upper=eta_tilde / (1.0 - eta_tilde * Aii),
    )


def feasibility(state: SgpcState, i: int) -> SiteFeasibility:
    """Largest admissible effective precision for candidate ``i``."""
    if state.active[i]:
        raise ValueError(f"index {i} is already active")
    return _feasibility_from(state.diagA, state.posterior_column(i), i)


class TrialObjective:
    """``NLP_a`` of the state after including ``i`` with site ``(p, m)``."""

    def __init__(self, state: SgpcState, i: int):
        self.state = state
        self.i = i
        self.kcol = state.column(i)
        self.ktilde = state.posterior_column(i, self.kcol)
        self.k2 = self.ktilde * self.ktilde
        self.Aii = float(state.diagA[i])
        self.fi = float(state.fhat[i])
        self.evaluations = 0

    def __call__(self, m: float, p: float) -> float:
        self.evaluations += 1
        eta = p / (1.0 + p * self.Aii)
        at = eta * (m - self.fi)
        st = self.state
        return mean_nlp(st.fhat + at * self.ktilde, st.diagA - eta * self.k2, st.y, st.hp.b)

    def baseline(self) -> float:
        """Objective at ``p = 0`` (no inclusion)."""
        st = self.state
        return mean_nlp(st.fhat, st.diagA, st.y, st.hp.b)


def optimize_site(state: SgpcState, i: int, budget: int = DEFAULT_BUDGET) -> SiteParams:
    """Bounded Nelder-Mead warm-started at the moment-matched site.

    The search runs over ``(alpha_tilde, log p)`` rather than ``(m, log p)``:
    the loss depends on ``m`` only through ``alpha_tilde``, and the two
    original coordinates are badly coupled when ``p`` is small.  ``log p`` is
    capped at the feasibility bound.

    Raises :class:`CandidateExhaustedError` when ``i`` has zero variance, or
    when nothing feasible and finite was found.
    """
    obj = TrialObjective(state, i)
    feas = _feasibility_from(state.diagA, obj.ktilde, i)
    tau_hi = TAU_MAX if feas.unconstrained else math.log(feas.p_upper * UPPER_SHRINK)
    tau_hi = max(min(tau_hi, TAU_MAX), TAU_MIN)

    try:
        mm = moment_match(state, i).site
    except DegenerateSiteError:
        mm = None
    if mm is not None and mm.p > 0:
        m0, tau0 = mm.m, math.log(mm.p)
    else:
        m0, tau0 = obj.fi + state.y[i] * math.sqrt(1.0 + obj.Aii), 0.0
    tau0 = min(max(tau0, TAU_MIN), tau_hi)
    mm_feasible = mm is not None and mm.p > 0 and feas.contains(mm.p)

    def unpack(x):
        p = math.exp(min(max(x[1], TAU_MIN), tau_hi))
        eta = p / (1.0 + p * obj.Aii)
        return obj.fi + x[0] / eta, p

    def f(x):
        v = obj(*unpack(x))
        return v if math.isfinite(v) else 1e300

    p0 = math.exp(tau0)
    at0 = p0 / (1.0 + p0 * obj.Aii) * (m0 - obj.fi)
    dat = 0.5 / math.sqrt(1.0 + obj.Aii)
    dtau = 1.0 if tau0 + 1.0 <= tau_hi else -1.0
    x0 = np.array([at0, tau0])
    simplex = np.array([x0, x0 + [dat, 0.0], x0 + [0.0, dtau]])
    best_x, best_f = x0, f(x0)
    try:
        res = minimize(
            f, x0, method="Nelder-Mead",
            bounds=[(None, None), (TAU_MIN, tau_hi)],
            options={"initial_simplex": simplex, "maxfev": max(budget - 2, 3),
                     "xatol": 1e-8, "fatol": 1e-12},
        )
        if math.isfinite(res.fun) and res.fun <= best_f:
            best_x, best_f = res.x, res.fun
    except (ValueError, FloatingPointError):
        pass

    # p -> 0 is always feasible and reproduces the current loss
    base = obj.baseline()
    if best_f > base:
        best_x, best_f = np.array([0.0, TAU_MIN]), base

    if best_f >= 1e300:
        if mm_feasible:
            return mm
        raise CandidateExhaustedError(f"site optimization failed for candidate {i}")
    m, p = unpack(best_x)
    return SiteParams(p=p, m=m)
