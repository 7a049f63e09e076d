import math

import numpy as np
import pytest

from helpers import grown_state
from oracles import mp_log_phi, nlp_terms
from sgpc.errors import SGPCError
from sgpc.kernel import HyperParams
from sgpc.losses import (
    LOG2,
    error_bound_check,
    mean_nlp,
    moderated_margins,
    nlp_all,
    nlp_holdout,
    training_error,
)
from sgpc.state import init_state


def test_fresh_state_costs_log_two(rng):
    st = init_state(rng.normal(size=(10, 2)), np.ones(10), HyperParams())
    assert nlp_all(st) == pytest.approx(math.log(2), abs=1e-12)
    assert nlp_holdout(st) == pytest.approx(math.log(2), abs=1e-12)


def test_moderation_hand_value():
    # margin 1 with unit variance: -log Phi(1 / sqrt 2)
    val = mean_nlp(np.array([1.0]), np.array([1.0]), np.array([1.0]), 0.0)
    assert val == pytest.approx(-mp_log_phi(1 / math.sqrt(2)), abs=1e-12)
    assert val == pytest.approx(0.27411, abs=1e-5)
    assert moderated_margins(np.array([1.0]), np.array([3.0]), np.array([-1.0]), 1.0)[0] == pytest.approx(-1.0)


def test_against_extended_precision(rng):
    st = grown_state(rng, n=40, d=2, steps=10)
    ref = nlp_terms(st.fhat, st.diagA, st.y, st.hp.b)
    assert nlp_all(st) == pytest.approx(ref.mean(), abs=1e-12)
    assert nlp_holdout(st) == pytest.approx(ref[~st.active].mean(), abs=1e-12)


def test_zero_latent_is_an_error():
    assert training_error(np.array([0.0, 0.0]), np.array([1.0, -1.0]), 0.0) == 1.0
    assert training_error(np.array([0.5, -0.5]), np.array([1.0, -1.0]), 0.0) == 0.0


@pytest.mark.parametrize("seed", range(50))
def test_error_bound(seed):
    rng = np.random.default_rng(1000 + seed)
    st = grown_state(rng, n=int(rng.integers(20, 80)), d=2, steps=int(rng.integers(0, 15)))
    rep = error_bound_check(st)
    assert rep.train_error <= rep.nlp_all / LOG2 + 1e-12
    assert rep.bound_holds


def test_permutation_invariance(rng):
    st = grown_state(rng, n=30, d=2, steps=6)
    perm = rng.permutation(30)
    a = mean_nlp(st.fhat, st.diagA, st.y, st.hp.b)
    b = mean_nlp(st.fhat[perm], st.diagA[perm], st.y[perm], st.hp.b)
    assert a == pytest.approx(b, abs=1e-14)


def test_empty_set_rejected():
    with pytest.raises(SGPCError):
        mean_nlp(np.zeros(2), np.ones(2), np.ones(2), 0.0, mask=np.zeros(2, dtype=bool))


def test_holdout_undefined_when_everything_is_active():
    st = grown_state(np.random.default_rng(3), n=5, d=1, steps=5)
    assert math.isnan(error_bound_check(st).nlp_holdout)
