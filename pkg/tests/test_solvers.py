import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, special

from bayesmask import (
    BMState,
    Dataset,
    EG,
    EM,
    HYBRID,
    ModelDomainError,
    EmptyModelError,
    SolverConfig,
    fab_e_step,
    fab_g_step,
    fab_m_step,
    fic_lower_bound,
    fit,
    learning_coefficient,
    prune,
)
from bayesmask.model import grad_beta_pi, initial_state_from
from bayesmask.solvers import g_step_direction, initialize, reparam_direction_matrix

from conftest import random_state


class TestEStep:
    def test_zero_beta_is_data_independent(self, rng):
        data, state = random_state(rng, n=6, k=2)
        s = fab_e_step(state.replace(beta=[0.0, 1.0]), data)
        p = state.pi[0]
        want = special.expit(math.log(p / (1 - p)) - 1 / (2 * 6 * p))
        np.testing.assert_allclose(s.mu[:, 0], want, rtol=1e-14)

    def test_single_sample_value_maximizes_bound(self):
        data = Dataset(x=np.array([[1.0]]), y=np.array([0.0]))
        state = BMState(beta=[0.0], lam=1.0, pi=[0.5], mu=[[0.9]], active=(0,))
        got = fab_e_step(state, data, sweeps=1).mu[0, 0]
        assert got == pytest.approx(1 / (1 + math.e), abs=1e-12)
        res = optimize.minimize_scalar(
            lambda m: -fic_lower_bound(state.replace(mu=[[m]]), data),
            bounds=(1e-9, 1 - 1e-9),
            method="bounded",
            options={"xatol": 1e-10},
        )
        assert got == pytest.approx(res.x, abs=1e-6)

    def test_each_coordinate_update_does_not_decrease_bound(self, rng):
        data, state = random_state(rng, n=8, k=3)
        # one coordinate at a time: copy the updated value into a state that
        # differs from the previous one in that coordinate only
        mu = np.array(state.mu)
        current = fic_lower_bound(state, data)
        full = np.array(fab_e_step(state, data, sweeps=1).mu)
        for n in range(8):
            for k in range(3):
                mu[n, k] = full[n, k]
                new = fic_lower_bound(state.replace(mu=mu), data)
                assert new >= current - 1e-10
                current = new

    def test_coordinate_value_is_argmax(self, rng):
        data, state = random_state(rng, n=5, k=2)
        after = np.array(fab_e_step(state, data, sweeps=1).mu)
        # the last coordinate visited sees every other coordinate at its final value
        def neg(m):
            mu = after.copy()
            mu[4, 1] = m
            return -fic_lower_bound(state.replace(mu=mu), data)

        res = optimize.minimize_scalar(neg, bounds=(1e-12, 1 - 1e-12), method="bounded", options={"xatol": 1e-12})
        assert after[4, 1] == pytest.approx(res.x, abs=1e-6)

    def test_strict_domain(self, rng):
        data, state = random_state(rng, n=4, k=2)
        with pytest.raises(ModelDomainError):
            fab_e_step(state.replace(pi=[1.0, 0.5]), data)
        s = fab_e_step(state.replace(pi=[1.0, 0.5]), data, clip_pi=True)
        assert np.all(s.mu[:, 0] == 1.0)

    def test_leaves_parameters(self, rng):
        data, state = random_state(rng, n=4, k=2)
        s = fab_e_step(state, data)
        assert s.lam == state.lam
        np.testing.assert_array_equal(s.beta, state.beta)
        np.testing.assert_array_equal(s.pi, state.pi)


class TestMStep:
    def test_all_ones_is_least_squares(self, rng):
        data, state = random_state(rng, n=30, k=4)
        s = fab_m_step(state.replace(mu=np.ones((30, 4))), data)
        ls, *_ = np.linalg.lstsq(data.x, data.y, rcond=None)
        np.testing.assert_allclose(s.beta, ls, rtol=1e-10, atol=1e-12)
        assert 1 / s.lam == pytest.approx(np.mean((data.y - data.x @ ls) ** 2), rel=1e-10)

    def test_pi_is_column_mean(self):
        data = Dataset(x=np.ones((3, 1)), y=np.array([1.0, 2.0, 3.0]))
        s = BMState(beta=[1.0], lam=1.0, pi=[0.5], mu=[[0.2], [0.4], [0.6]], active=(0,))
        assert fab_m_step(s, data).pi[0] == pytest.approx(0.4)

    def test_local_maximum(self, rng):
        data, state = random_state(rng, n=6, k=2)
        s = fab_m_step(state, data)
        best = fic_lower_bound(s, data)
        for field in ("beta", "pi"):
            for i in range(2):
                for sign in (1, -1):
                    v = np.array(getattr(s, field))
                    v[i] += sign * 1e-3
                    assert fic_lower_bound(s.replace(**{field: v}), data) < best
        for sign in (1, -1):
            assert fic_lower_bound(s.replace(lam=s.lam + sign * 1e-3), data) < best


class TestGStep:
    def test_zero_gradient_fixed_point(self, rng):
        data, state = random_state(rng, n=10, k=2)
        s = fab_m_step(state, data)
        s = s.replace(lam=s.lam * 1.7)
        t = fab_g_step(s, data, eta_t=0.1)
        np.testing.assert_allclose(t.beta, s.beta, atol=1e-12)
        np.testing.assert_allclose(t.pi, s.pi, atol=1e-12)
        assert t.lam == pytest.approx(fab_m_step(s, data).lam)

    def test_identity_metric_at_unit_beta_zero_pi(self):
        a_bb, a_bp, a_pp = reparam_direction_matrix(np.array([1.0]), np.array([0.0]))
        assert (a_bb[0], a_bp[0], a_pp[0]) == (1.0, 0.0, 1.0)

    def test_direction_matrix_is_inverse_jacobian_product(self, rng):
        for _ in range(20):
            b, p = rng.uniform(-3, 3), rng.uniform(0, 1)
            jac = np.array([[1.0, 0.0], [p, b]])
            a_bb, a_bp, a_pp = reparam_direction_matrix(np.array([b]), np.array([p]))
            np.testing.assert_allclose([[a_bb[0], a_bp[0]], [a_bp[0], a_pp[0]]], np.linalg.inv(jac.T @ jac), rtol=1e-9)

    def test_plain_gradient_without_reparametrization(self, rng):
        data, state = random_state(rng, n=10, k=2)
        d_b, d_p = g_step_direction(state, data, reparametrize=False)
        g_b, g_p = grad_beta_pi(state, data)
        np.testing.assert_array_equal(d_b, g_b)
        np.testing.assert_array_equal(d_p, g_p)

    def test_pi_clamped(self, rng):
        data, state = random_state(rng, n=10, k=2)
        t = fab_g_step(state, data, eta_t=1e3)
        assert np.all((t.pi >= 1e-12) & (t.pi <= 1.0))

    def test_pi_one_moves_beta_only(self, rng):
        data, state = random_state(rng, n=10, k=2)
        mu = np.array(state.mu)
        mu[:, 0] = 1.0
        s = state.replace(pi=[1.0, 0.5], mu=mu)
        d_b, d_p = g_step_direction(s, data)
        assert d_p[0] == 0.0
        assert d_b[0] == pytest.approx(grad_beta_pi(s, data)[0][0])


class TestLearningCoefficient:
    def test_cap(self):
        assert learning_coefficient([0.02, -0.10], 1e-3) == pytest.approx(5e-4)

    def test_under_cap(self):
        assert learning_coefficient([0.01], 1e-3) == 1e-3

    def test_zero(self):
        assert learning_coefficient([0.0, 0.0], 1e-3) == 1e-3

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(1e-8, 1.0))
    def test_scaled_step_respects_cap(self, delta, eta):
        eta_t = learning_coefficient(delta, eta)
        assert 0 < eta_t <= eta
        assert np.max(np.abs(np.array(delta) * eta_t / eta)) <= 0.05 * (1 + 1e-12)


class TestPrune:
    def _state(self, means):
        means = np.asarray(means)
        return BMState(
            beta=np.ones(len(means)), lam=1.0, pi=np.full(len(means), 0.5), mu=np.tile(means, (4, 1)),
            active=tuple(range(len(means))),
        )

    def test_zero_mean_pruned(self):
        s, dropped = prune(self._state([0.0, 0.5]), np.finfo(float).eps)
        assert dropped == [0] and s.active == (1,)

    def test_noop(self):
        st0 = self._state([0.3, 0.5])
        s, dropped = prune(st0, np.finfo(float).eps)
        assert s is st0 and dropped == []

    def test_keeps_original_indices(self):
        s, dropped = prune(self._state([0.9, 1e-20, 0.8]), np.finfo(float).eps)
        assert s.active == (0, 2) and dropped == [1] and s.mu.shape == (4, 2)
        s2, dropped2 = prune(s.replace(mu=np.tile([0.9, 0.0], (4, 1))), 1e-3)
        assert s2.active == (0,) and dropped2 == [2]

    def test_empty(self):
        with pytest.raises(EmptyModelError):
            prune(self._state([0.0, 0.0]), 1e-3)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(variant="X"), dict(delta=1.0), dict(eta=0.0), dict(pi_step_cap=0.0), dict(switch_iteration=-1),
         dict(max_iterations=0), dict(init="zeros")],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_default_eta(self):
        assert SolverConfig().eta_for(200) == pytest.approx(1e-4)


def _uniform(seed, k=5, n=100):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, k))
    beta = rng.uniform(size=k)
    beta[rng.choice(k, k // 2, replace=False)] = 0.0
    return Dataset(x=x, y=x @ beta + rng.normal(0, math.sqrt(0.2), n), true_beta=beta)


class TestFit:
    def test_noiseless_single_feature(self):
        x = np.random.default_rng(0).uniform(0.5, 1.5, size=(200, 1))
        res = fit(Dataset(x=x, y=2 * x[:, 0]))
        assert res.status == "converged"
        assert res.beta[0] == pytest.approx(2.0, abs=1e-6)
        assert res.pi[0] == pytest.approx(1.0, abs=1e-6)

    def test_em_monotone_within_epochs(self):
        res = fit(_uniform(3), SolverConfig(variant=EM, max_iterations=300))
        hist = res.history
        for a, b in zip(hist, hist[1:]):
            if a.n_active == b.n_active:
                assert b.objective >= a.objective - 1e-10

    def test_deterministic(self):
        d = _uniform(4)
        cfg = SolverConfig(variant=HYBRID, switch_iteration=20, max_iterations=200, init="random", seed=9)
        a, b = fit(d, cfg), fit(d, cfg)
        np.testing.assert_array_equal(a.beta, b.beta)
        assert [h.objective for h in a.history] == [h.objective for h in b.history]

    def test_hybrid_without_switch_equals_em(self):
        d = _uniform(5)
        a = fit(d, SolverConfig(variant=EM, max_iterations=150))
        b = fit(d, SolverConfig(variant=HYBRID, switch_iteration=150, max_iterations=150))
        assert [h.objective for h in a.history] == [h.objective for h in b.history]

    def test_callback_stops(self):
        res = fit(_uniform(6), SolverConfig(max_iterations=100), callback=lambda rec: rec.iteration >= 3)
        assert res.status == "stopped" and res.n_iterations == 3

    def test_max_iterations(self):
        res = fit(_uniform(6), SolverConfig(variant=EG, max_iterations=5))
        assert res.status == "max_iterations" and len(res.history) == 6

    def test_empty_model(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(50, 2))
        d = Dataset(x=x, y=rng.normal(size=50))
        init = initial_state_from(d, beta=[0.0, 0.0], pi=[1e-6, 1e-6])
        res = fit(d, SolverConfig(delta=0.5), init_state=init)
        assert res.status == "empty_model"
        assert set(res.pruned_at) == {0, 1}
        assert res.beta.tolist() == [0.0, 0.0]

    def test_failure_is_reported(self, monkeypatch):
        from bayesmask import solvers
        from bayesmask.errors import SingularSystemError

        def boom(*a, **k):
            raise SingularSystemError("forced")

        monkeypatch.setattr(solvers, "fab_m_step", boom)
        res = fit(_uniform(7), SolverConfig(max_iterations=10))
        assert res.status == "failed" and "forced" in res.error
        assert len(res.history) == 1

    def test_pruned_at_records_iteration(self):
        res = fit(_uniform(8, k=6, n=120), SolverConfig(variant=HYBRID, switch_iteration=50, delta=1e-3))
        for k, t in res.pruned_at.items():
            assert k not in res.history[t].active
            assert k in res.history[t - 1].active

    def test_random_init_in_range(self):
        s = initialize(_uniform(1), SolverConfig(init="random", seed=3))
        assert np.all((s.mu >= 0.9) & (s.mu < 1.0))
