import math

import numpy as np
import pytest

from helpers import grown_state, random_problem
from sgpc.adf import moment_match
from sgpc.dataio import make_gaussian_mixture
from sgpc.errors import SGPCError
from sgpc.kernel import HyperParams, kernel_matrix
from sgpc.losses import mean_nlp
from sgpc.state import dense_oracle, init_state
from sgpc.trainer import (
    FD_STEP,
    FrozenSiteObjective,
    TrainConfig,
    fd_gradient,
    inner_loop,
    load_model,
    optimize_hyperparameters,
    rebuild_posterior,
    save_model,
    train,
)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"d_max": 0}, {"d_max": 5, "kappa": 0}, {"d_max": 5, "iter_max": 0},
        {"d_max": 5, "tol": 0.0}, {"d_max": 5, "selector": "random"},
        {"d_max": 5, "site_estimator": "exact"},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestInnerLoop:
    def test_full_budget_is_a_permutation(self, rng):
        X, y, hp = random_problem(rng, n=25, d=2)
        st = inner_loop(X, y, hp, TrainConfig(d_max=25, selector="entropy"), rng)
        assert sorted(st.u.tolist()) == list(range(25))
        assert len(st.trace) == 25

    def test_single_inclusion(self, rng):
        X, y, hp = random_problem(rng, n=30, d=2)
        st = inner_loop(X, y, hp, TrainConfig(d_max=1, selector="entropy"), rng)
        assert st.size == 1
        j = int(st.u[0])
        ref = init_state(X, y, hp)
        site = moment_match(ref, j).site
        assert st.p_u[0] == pytest.approx(site.p, rel=1e-12)
        o = dense_oracle([j], [site.m], [site.p], X, hp)
        np.testing.assert_allclose(st.fhat, o.fhat_full, atol=1e-10)
        np.testing.assert_allclose(st.diagA, np.diag(o.A_full), atol=1e-10)

    @pytest.mark.parametrize("selector", ["adaptive", "validation", "uniform"])
    def test_deterministic(self, selector, rng):
        X, y, hp = random_problem(rng, n=60, d=3)
        cfg = TrainConfig(d_max=15, selector=selector, kappa=4)
        a = inner_loop(X, y, hp, cfg, np.random.default_rng(3))
        b = inner_loop(X, y, hp, cfg, np.random.default_rng(3))
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(a.fhat, b.fhat)

    def test_budget_larger_than_n(self, rng):
        X, y, hp = random_problem(rng, n=10, d=2)
        with pytest.raises(ValueError):
            inner_loop(X, y, hp, TrainConfig(d_max=11), rng)

    def test_exhaustion_is_a_warning(self):
        # a huge bias predicts every label perfectly, so no site is defined
        X = np.arange(4.0)[:, None]
        with pytest.warns(RuntimeWarning):
            st = inner_loop(X, np.ones(4), HyperParams(b=60.0), TrainConfig(d_max=4, selector="entropy"),
                            np.random.default_rng(0))
        assert st.exhausted and st.size == 0

    def test_hyperparameters_untouched(self, rng):
        X, y, hp = random_problem(rng, n=40, d=2)
        st = inner_loop(X, y, hp, TrainConfig(d_max=10), rng)
        assert st.hp is hp


class TestRebuild:
    def test_matches_incremental(self, rng):
        st = grown_state(rng, n=80, d=3, steps=20)
        fhat, diagA, L, M = rebuild_posterior(st.u, st.m_u, st.p_u, st.hp, st.X)
        np.testing.assert_allclose(fhat, st.fhat, atol=1e-8)
        np.testing.assert_allclose(diagA, st.diagA, atol=1e-8)
        np.testing.assert_allclose(L, st.L, atol=1e-8)

    def test_matches_dense_oracle(self, rng):
        st = grown_state(rng, n=50, d=2, steps=10)
        hp = HyperParams(v0=0.6, sigma2=2.5, b=0.2)
        fhat, diagA, _, _ = rebuild_posterior(st.u, st.m_u, st.p_u, hp, st.X)
        o = dense_oracle(st.u, st.m_u, st.p_u, st.X, hp)
        np.testing.assert_allclose(fhat, o.fhat_full, atol=1e-8)
        np.testing.assert_allclose(diagA, np.diag(o.A_full), atol=1e-8)

    def test_empty(self, rng):
        X = rng.normal(size=(5, 2))
        fhat, diagA, _, _ = rebuild_posterior([], [], [], HyperParams(v0=3.0), X)
        np.testing.assert_array_equal(fhat, 0.0)
        np.testing.assert_array_equal(diagA, 3.0)

    def test_vanishing_prior(self, rng):
        st = grown_state(rng, n=30, d=2, steps=5)
        fhat, diagA, _, _ = rebuild_posterior(st.u, st.m_u, st.p_u, HyperParams(v0=1e-12), st.X)
        assert np.abs(fhat).max() < 1e-9 and np.abs(diagA).max() < 1e-9


def _frozen_problem(seed):
    rng = np.random.default_rng(seed)
    data = make_gaussian_mixture(200, rng)
    hp = HyperParams(v0=1.0, sigma2=2.0)
    st = inner_loop(data.X, data.y, hp, TrainConfig(d_max=20), rng)
    return st, data


class TestHyperparameters:
    def test_never_worse_than_start(self):
        st, data = _frozen_problem(1)
        obj = FrozenSiteObjective(st.u, st.m_u, st.p_u, data.X, data.y)
        start = obj(st.hp.to_vector())
        hp, nlp = optimize_hyperparameters(st.u, st.m_u, st.p_u, data.X, data.y, st.hp, budget=60)
        assert nlp <= start + 1e-12
        assert obj(hp.to_vector()) == pytest.approx(nlp, abs=1e-14)

    def test_objective_is_holdout_nlp(self):
        st, data = _frozen_problem(2)
        obj = FrozenSiteObjective(st.u, st.m_u, st.p_u, data.X, data.y)
        fhat, diagA, _, _ = rebuild_posterior(st.u, st.m_u, st.p_u, st.hp, data.X)
        assert obj(st.hp.to_vector()) == pytest.approx(
            mean_nlp(fhat, diagA, data.y, st.hp.b, ~st.active), abs=1e-12)

    def test_budget(self):
        st, data = _frozen_problem(3)
        calls = []
        orig = FrozenSiteObjective.__call__

        def counting(self, theta):
            calls.append(1)
            return orig(self, theta)

        FrozenSiteObjective.__call__ = counting
        try:
            optimize_hyperparameters(st.u, st.m_u, st.p_u, data.X, data.y, st.hp, budget=25)
        finally:
            FrozenSiteObjective.__call__ = orig
        assert len(calls) <= 25

    def test_richardson(self):
        st, data = _frozen_problem(4)
        obj = FrozenSiteObjective(st.u, st.m_u, st.p_u, data.X, data.y)
        theta = st.hp.to_vector()
        g1 = fd_gradient(obj, theta, FD_STEP)
        g2 = fd_gradient(obj, theta, FD_STEP / 10)
        assert np.linalg.norm(g1 - g2) / np.linalg.norm(g1) < 1e-3

    def test_stationary_start_stays_put(self):
        st, data = _frozen_problem(5)
        hp1, _ = optimize_hyperparameters(st.u, st.m_u, st.p_u, data.X, data.y, st.hp, budget=600)
        hp2, _ = optimize_hyperparameters(st.u, st.m_u, st.p_u, data.X, data.y, hp1, budget=100)
        np.testing.assert_allclose(hp2.to_vector(), hp1.to_vector(), atol=1e-4)

    def test_width_recovery(self):
        # labels drawn from a GP with sigma2 = 1; start 3x too wide
        errs_start, errs_fit = [], []
        for seed in range(10):
            rng = np.random.default_rng(40 + seed)
            X = rng.uniform(-4, 4, size=(160, 1))
            K = kernel_matrix(X, X, HyperParams(v0=4.0, sigma2=1.0)) + 1e-8 * np.eye(160)
            f = np.linalg.cholesky(K) @ rng.normal(size=160)
            y = np.where(f + 0.1 * rng.normal(size=160) > 0, 1.0, -1.0)
            hp0 = HyperParams(v0=4.0, sigma2=3.0)
            st = inner_loop(X, y, hp0, TrainConfig(d_max=40), rng)
            hp, _ = optimize_hyperparameters(st.u, st.m_u, st.p_u, X, y, hp0, budget=100)
            errs_start.append(abs(math.log(3.0)))
            errs_fit.append(abs(math.log(hp.sigma2)))
        assert np.median(errs_fit) < np.median(errs_start)

    def test_singular_start_returns_hp0(self):
        X = np.zeros((3, 1))
        with pytest.warns(RuntimeWarning):
            hp, nlp = optimize_hyperparameters([0], [1.0], [1.0], X, np.ones(3),
                                               HyperParams(v0=math.exp(25.0)))
        assert hp.v0 == math.exp(25.0) and math.isinf(nlp)


class TestTrain:
    def _data(self, seed=0, n=150):
        return make_gaussian_mixture(n, np.random.default_rng(seed))

    def test_best_model_is_tracked(self):
        d = self._data()
        m = train(d.X, d.y, TrainConfig(d_max=15, iter_max=5, seed=1))
        first = m.outer_trace[0]["nlp"]
        assert m.nlp <= first
        best = [r["best_nlp"] for r in m.outer_trace]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
        assert m.nlp == min(r["nlp"] for r in m.outer_trace)
        assert m.outer_trace[m.best_outer_iter - 1]["nlp"] == m.nlp

    def test_single_outer_iteration(self):
        d = self._data(1)
        cfg = TrainConfig(d_max=12, iter_max=1, seed=4)
        m = train(d.X, d.y, cfg)
        assert len(m.outer_trace) == 1 and m.best_outer_iter == 1
        rng = np.random.default_rng(4)
        from sgpc.trainer import initial_hyperparameters
        hp0 = initial_hyperparameters(d.X, rng)
        st = inner_loop(d.X, d.y, hp0, cfg, rng)
        hp, nlp = optimize_hyperparameters(st.u, st.m_u, st.p_u, d.X, d.y, hp0, cfg.hyper_budget)
        np.testing.assert_array_equal(m.u, st.u)
        assert m.hp == hp and m.nlp == nlp

    def test_deterministic(self):
        d = self._data(2)
        cfg = TrainConfig(d_max=10, iter_max=3, seed=7, selector="validation", kappa=5)
        a, b = train(d.X, d.y, cfg), train(d.X, d.y, cfg)
        np.testing.assert_array_equal(a.u, b.u)
        assert a.hp == b.hp and a.nlp == b.nlp

    def test_trace_lengths(self):
        d = self._data(3)
        m = train(d.X, d.y, TrainConfig(d_max=9, iter_max=2))
        assert len(m.trace) == m.size == 9
        assert m.size <= 9

    def test_save_load_roundtrip(self, tmp_path):
        d = self._data(4)
        m = train(d.X, d.y, TrainConfig(d_max=8, iter_max=2))
        path = tmp_path / "model.sgpc"
        save_model(m, path)
        assert path.read_text().splitlines()[0] == "SGPC1"
        back = load_model(path)
        np.testing.assert_array_equal(back.u, m.u)
        np.testing.assert_array_equal(back.X_u, m.X_u)
        np.testing.assert_array_equal(back.p_u, m.p_u)
        assert back.hp == m.hp

    def test_bad_model_file(self, tmp_path):
        path = tmp_path / "x"
        path.write_text("nope\n{}\n")
        with pytest.raises(SGPCError):
            load_model(path)
