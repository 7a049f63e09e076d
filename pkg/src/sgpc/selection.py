"""Basis-vector selection: step 3 of the greedy inner loop.

Four strategies are available under the names used by the command line:

``entropy``
    argmin of ``log(1 - nu_i A_ii)`` over all non-active examples.
``infogain``
    argmin of ``-log lam_i + 1 / lam_i + (fhat'_i - fhat_i)^2 / A_ii``.
``validation``
    uniformly sampled working set scored by the holdout NLP after a trial
    inclusion.
``adaptive``
    working set sampled with probability ``1 - Phi(moderated margin)`` and
    scored by the all-example NLP after a trial inclusion; sites come from
    moment matching or from :func:`sgpc.siteopt.optimize_site`.

``uniform`` is the adaptive scorer with a uniformly sampled working set, kept
for sampling ablations.  All ties resolve to the first candidate in
evaluation order (ascending index, or sampled order for working sets).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adf import SiteParams, compute_delta, moment_match_many
from .errors import CandidateExhaustedError, DegenerateSiteError, NoCandidateError
from .losses import mean_nlp
from .numerics import normal_sf
from .siteopt import DEFAULT_BUDGET, optimize_site
from .state import SgpcState

STRATEGIES = ("entropy", "infogain", "validation", "adaptive", "uniform")
SITE_ESTIMATORS = ("moment", "optimize")
DEFAULT_KAPPA = {"validation": 59, "adaptive": 2, "uniform": 2}
MIN_MASS = 1e-300


@dataclass
class SelectionOutcome:
    j: int
    site: SiteParams
    score: float
    candidates: np.ndarray = field(default=None, repr=False)
    scores: np.ndarray = field(default=None, repr=False)


@dataclass
class SamplingWeights:
    indices: np.ndarray
    chi: np.ndarray


def _check_nonempty(state: SgpcState) -> np.ndarray:
    cand = state.candidates()
    if cand.size == 0:
        raise NoCandidateError("the non-active set is empty")
    return cand


def _pick(cand, scores, sites) -> SelectionOutcome:
    scores = np.asarray(scores, dtype=float)
    ok = np.isfinite(scores)
    if not ok.any():
        raise NoCandidateError("every candidate was degenerate")
    k = int(np.argmin(np.where(ok, scores, np.inf)))
    return SelectionOutcome(j=int(cand[k]), site=sites[k], score=float(scores[k]),
                            candidates=np.asarray(cand), scores=scores)


def entropy_scores(state: SgpcState, cand=None):
    cand = _check_nonempty(state) if cand is None else cand
    mm = moment_match_many(state, cand)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(mm.valid, np.log(mm.lam_bar), np.nan)
    return mm, scores


def select_entropy(state: SgpcState) -> SelectionOutcome:
    """Largest entropy reduction, i.e. smallest ``1 - nu_i A_ii``."""
    mm, scores = entropy_scores(state)
    k = _first_finite_argmin(scores)
    return _outcome_from_batch(mm, scores, k)


def info_gain_scores(state: SgpcState, cand=None):
    cand = _check_nonempty(state) if cand is None else cand
    mm = moment_match_many(state, cand)
    A = state.diagA[cand]
    # the trial mean moves by alpha_tilde * A_ii at the candidate itself,
    # and alpha_tilde = alpha under moment matching
    shift = mm.alpha * A
    ok = mm.valid & (A > 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(ok, -np.log(mm.lam_bar) + 1.0 / mm.lam_bar + shift * shift / A, np.nan)
    return mm, scores


def select_info_gain(state: SgpcState) -> SelectionOutcome:
    mm, scores = info_gain_scores(state)
    k = _first_finite_argmin(scores)
    return _outcome_from_batch(mm, scores, k)


def _first_finite_argmin(scores) -> int:
    ok = np.isfinite(scores)
    if not ok.any():
        raise NoCandidateError("every candidate was degenerate")
    return int(np.argmin(np.where(ok, scores, np.inf)))


def _outcome_from_batch(mm, scores, k) -> SelectionOutcome:
    return SelectionOutcome(
        j=int(mm.idx[k]),
        site=SiteParams(p=float(mm.p[k]), m=float(mm.m[k])),
        score=float(scores[k]),
        candidates=mm.idx,
        scores=scores,
    )


def adaptive_weights(state: SgpcState) -> SamplingWeights:
    """``chi_j ~ 1 - Phi(y_j (fhat_j + b) / sqrt(1 + A_jj))`` over the non-active set.

    Falls back to uniform weights if every example is predicted perfectly.
    """
    cand = _check_nonempty(state)
    z = state.y[cand] * (state.fhat[cand] + state.hp.b) / np.sqrt(1.0 + np.maximum(state.diagA[cand], 0.0))
    mass = normal_sf(z)
    total = mass.sum()
    if not total >= MIN_MASS:
        return uniform_weights(state)
    return SamplingWeights(indices=cand, chi=mass / total)


def uniform_weights(state: SgpcState) -> SamplingWeights:
    cand = _check_nonempty(state)
    return SamplingWeights(indices=cand, chi=np.full(cand.size, 1.0 / cand.size))


def sample_working_set(weights: SamplingWeights, kappa: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``min(kappa, |u^c|)`` distinct indices proportionally to ``weights``.

    When ``kappa`` covers the whole non-active set it is returned in ascending
    order and the generator is not consumed.
    """
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    idx, chi = weights.indices, weights.chi
    k = min(kappa, idx.size)
    if k == idx.size:
        return np.sort(idx)
    nz = np.flatnonzero(chi > 0)
    if nz.size >= k:
        p = chi / chi.sum()
        return idx[rng.choice(idx.size, size=k, replace=False, p=p)]
    # fewer positive-weight entries than requested: take them all, pad uniformly
    rest = np.flatnonzero(chi <= 0)
    pad = rng.choice(rest, size=k - nz.size, replace=False)
    return idx[np.concatenate([rng.permutation(nz), pad])]


def _trial_scores(state: SgpcState, J, sites, holdout: bool):
    """NLP of the trial posterior for each ``J[k]`` with site ``sites[k]`` (``None`` skips it)."""
    scores = np.full(len(J), np.nan)
    for k, i in enumerate(J):
        i = int(i)
        if sites[k] is None:
            continue
        try:
            delta = compute_delta(state, i, sites[k])
        except DegenerateSiteError:
            sites[k] = None
            continue
        mask = None
        if holdout:
            mask = ~state.active
            mask[i] = False
            if not mask.any():
                sites[k] = None
                continue
        scores[k] = mean_nlp(delta.trial_fhat(state), delta.trial_diagA(state), state.y, state.hp.b, mask)
    return scores, sites


def _moment_sites(state: SgpcState, J) -> list:
    mm = moment_match_many(state, J)
    return [SiteParams(p=float(p), m=float(m)) if ok else None
            for p, m, ok in zip(mm.p, mm.m, mm.valid)]


def _optimized_sites(state: SgpcState, J, budget: int) -> list:
    sites = []
    for i in J:
        try:
            sites.append(optimize_site(state, int(i), budget))
        except CandidateExhaustedError:
            sites.append(None)
    return sites


def select_validation(state: SgpcState, kappa: int, rng: np.random.Generator) -> SelectionOutcome:
    """Uniform working set scored by the holdout NLP of each trial posterior.

    With a single remaining candidate the holdout set after inclusion is
    empty; the all-example NLP is used for that last step instead.
    """
    J = sample_working_set(uniform_weights(state), kappa, rng)
    holdout = state.candidates().size > 1
    scores, sites = _trial_scores(state, J, _moment_sites(state, J), holdout=holdout)
    return _pick(J, scores, sites)


def select_proposed(
    state: SgpcState,
    kappa: int,
    rng: np.random.Generator,
    site_estimator: str = "moment",
    sampling: str = "adaptive",
    site_budget: int = DEFAULT_BUDGET,
) -> SelectionOutcome:
    """Sampled working set scored by the all-example NLP after trial inclusion."""
    if sampling == "adaptive":
        weights = adaptive_weights(state)
    elif sampling == "uniform":
        weights = uniform_weights(state)
    else:
        raise ValueError(f"unknown sampling scheme {sampling!r}")
    J = sample_working_set(weights, kappa, rng)
    if site_estimator == "moment":
        sites = _moment_sites(state, J)
    elif site_estimator == "optimize":
        sites = _optimized_sites(state, J, site_budget)
    else:
        raise ValueError(f"unknown site estimator {site_estimator!r}")
    scores, sites = _trial_scores(state, J, sites, holdout=False)
    return _pick(J, scores, sites)


Selector = Callable[[SgpcState, np.random.Generator], SelectionOutcome]


def make_selector(
    name: str,
    kappa: int | None = None,
    site_estimator: str = "moment",
    site_budget: int = DEFAULT_BUDGET,
) -> Selector:
    """Bind a strategy name and its options into ``selector(state, rng)``."""
    if name not in STRATEGIES:
        raise ValueError(f"unknown selector {name!r}; choose from {STRATEGIES}")
    if site_estimator not in SITE_ESTIMATORS:
        raise ValueError(f"unknown site estimator {site_estimator!r}")
    if kappa is None:
        kappa = DEFAULT_KAPPA.get(name, 1)
    if name == "entropy":
        return lambda state, rng: select_entropy(state)
    if name == "infogain":
        return lambda state, rng: select_info_gain(state)
    if name == "validation":
        return lambda state, rng: select_validation(state, kappa, rng)
    sampling = "adaptive" if name == "adaptive" else "uniform"
    return lambda state, rng: select_proposed(
        state, kappa, rng, site_estimator=site_estimator, sampling=sampling, site_budget=site_budget
    )
