"""Probit likelihood primitives that stay finite far into the tails.

Both functions accept scalars or arrays and return the same shape.  Below
``z = -5`` they switch to a scaled complementary error function,
``Phi(z) = erfcx(-z / sqrt 2) * exp(-z^2 / 2) / 2``, which keeps full relative
accuracy where ``Phi`` itself would underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

SWITCH = -5.0
CLAMP = 700.0

_SQRT2 = math.sqrt(2.0)
_LOG2 = math.log(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _prepare(z):
    z = np.asarray(z, dtype=float)
    if np.isnan(z).any():
        raise ValueError("NaN margin passed to a probit primitive")
    return np.clip(z, -CLAMP, CLAMP)


def _out(res, like):
    return float(res) if np.ndim(like) == 0 else res


def log_phi_stable(z):
    """``log Phi(z)``, never ``-inf`` for finite input."""
    zc = _prepare(z)
    out = np.empty_like(zc)
    lo = zc < SWITCH
    mid = (~lo) & (zc <= 0)
    hi = zc > 0
    t = -zc[lo] / _SQRT2
    out[lo] = np.log(0.5 * erfcx(t)) - t * t
    out[mid] = np.log(ndtr(zc[mid]))
    # log1p keeps the tiny negative value for large positive margins
    out[hi] = np.log1p(-ndtr(-zc[hi]))
    return _out(out, z)


def inverse_mills(z):
    """``N(z; 0, 1) / Phi(z)``; behaves like ``-z`` as ``z -> -inf``."""
    zc = _prepare(z)
    out = np.empty_like(zc)
    lo = zc < SWITCH
    hi = ~lo
    out[lo] = _SQRT_2_OVER_PI / erfcx(-zc[lo] / _SQRT2)
    zh = zc[hi]
    out[hi] = np.exp(-0.5 * zh * zh - _LOG_SQRT_2PI) / ndtr(zh)
    return _out(out, z)


def normal_sf(z):
    """``1 - Phi(z)`` without cancellation."""
    return ndtr(-np.asarray(z, dtype=float))


@dataclass(frozen=True)
class ProbitTerms:
    z: float
    log_phi: float
    mills: float

    @classmethod
    def at(cls, z: float) -> "ProbitTerms":
        return cls(z=float(z), log_phi=log_phi_stable(z), mills=inverse_mills(z))


# Reference curves for comparing the probit loss with boosting losses.
# None of these are used for training.

def exponential_loss(margin):
    return np.exp(-np.asarray(margin, dtype=float))


def binomial_loss(margin):
    """``log(1 + exp(-2 margin))``."""
    return np.logaddexp(0.0, -2.0 * np.asarray(margin, dtype=float))


def scaled_probit_loss(margin, variance: float = 0.0):
    """``-log Phi(margin / sqrt(1 + variance)) / log 2``; equals one at zero margin."""
    margin = np.asarray(margin, dtype=float)
    return -log_phi_stable(margin / math.sqrt(1.0 + variance)) / _LOG2
