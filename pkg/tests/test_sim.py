from pathlib import Path

import numpy as np
import pytest

from bayesctl.errors import InvalidInputError
from bayesctl.policy import BayesPolicyFactory, ZeroPolicyFactory
from bayesctl.scenario import HorizonDist, PriorSpec, Scenario, StageData, load_scenario, scalar_scenario
from bayesctl.sim import (
    SimReport,
    draw_lambda,
    estimate_risk,
    pooled_se,
    replication_rng,
    rollout,
    simulate_losses,
)

from helpers import one_step_scenario, random_scalar

SCENARIOS = Path(__file__).parent.parent / "scenarios"


def zero_cost():
    return scalar_scenario(1.0, 1.0, 1.0, np.zeros((2, 2)), 0.0, [0.2, 0.3, 0.5], 4.0, 1.0, 0.5)


def same_traj(a, b):
    for f in ("states", "controls", "disturbances", "lam", "step_residuals"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert a.horizon == b.horizon and a.loss == b.loss


class TestRollout:
    def test_zero_cost_loss(self):
        sc = zero_cost()
        f = BayesPolicyFactory(sc)
        for i in range(20):
            assert rollout(sc, f(), replication_rng(1, i)).loss == 0.0

    def test_degenerate_lambda(self):
        sc = one_step_scenario(probs=[0.0, 0.0, 1.0], x0=1.0)
        f = BayesPolicyFactory(sc)
        a = rollout(sc, ZeroPolicyFactory(1)(), replication_rng(0, 0), lam=[0.0])
        b = rollout(sc, ZeroPolicyFactory(1)(), replication_rng(9, 3), lam=[0.0])
        assert np.all(a.disturbances == 0)
        same_traj(a, b)
        np.testing.assert_array_equal(a.states[:, 0], [1.0, 1.0, 1.0])
        # The Bayes filter also copes: every observed v is 0 so r stays at r0
        c = rollout(sc, f(), replication_rng(0, 0), lam=[0.0])
        assert np.all(c.disturbances == 0)

    def test_fixed_seed_bitwise(self):
        sc = load_scenario(SCENARIOS / "two_dim.json")
        f = BayesPolicyFactory(sc)
        for i in range(5):
            same_traj(rollout(sc, f(), replication_rng(42, i)), rollout(sc, f(), replication_rng(42, i)))

    def test_transitions_exact(self):
        sc = load_scenario(SCENARIOS / "two_dim.json")
        f = BayesPolicyFactory(sc)
        for i in range(10):
            tr = rollout(sc, f(), replication_rng(3, i))
            assert tr.states.shape == (tr.horizon + 1, 2)
            assert tr.controls.shape == (tr.horizon + 1, 2)
            loss = 0.0
            for n in range(tr.horizon + 1):
                st = sc.stages[n]
                x, u = tr.states[n], tr.controls[n]
                y = np.r_[x, tr.lam]
                loss += y @ st.s @ y + u @ st.kmat @ u
                if n < tr.horizon:
                    v = tr.disturbances[n]
                    assert np.all(v >= 0) and np.all(v <= tr.lam)
                    np.testing.assert_array_equal(tr.states[n + 1], st.alpha @ x + st.b @ u + st.c @ v)
            assert tr.loss == pytest.approx(loss, rel=1e-14)
            assert tr.loss >= 0

    def test_lambda_length_checked(self):
        sc = one_step_scenario()
        with pytest.raises(InvalidInputError):
            rollout(sc, ZeroPolicyFactory(1)(), replication_rng(0, 0), lam=[1.0, 2.0])

    def test_prior_draws(self):
        rng = np.random.default_rng(0)
        prior = PriorSpec([6.0, 0.0], [2.0, 0.0], 1)
        lam = np.array([draw_lambda(prior, rng) for _ in range(50_000)])
        assert np.all(lam[:, 0] >= 2.0) and np.all(lam[:, 1] == 0.0)
        se = lam[:, 0].std() / np.sqrt(len(lam))
        assert abs(lam[:, 0].mean() - 2.0 * 6 / 5) < 4 * se


class TestGeneralized:
    def build(self, r, m):
        rng = np.random.default_rng(r * 10 + m)
        st = StageData(rng.normal(size=(r, m)) * 0.5, rng.normal(size=(r, m)),
                       np.abs(rng.normal(size=(r, m))), np.eye(2 * m), np.eye(m))
        return Scenario(m, r, (st, st, st), HorizonDist([0.0, 0.0, 1.0]),
                        PriorSpec([5.0] * m, [1.0] * m, m), np.ones(m))

    @pytest.mark.parametrize("r, m", [(3, 2), (1, 2), (4, 1)])
    def test_step_is_minimum_norm_least_squares(self, r, m):
        sc = self.build(r, m)
        lead = sc.lead
        f = BayesPolicyFactory(sc)
        for i in range(5):
            tr = rollout(sc, f(), replication_rng(0, i))
            for n in range(tr.horizon):
                st = sc.stages[n]
                rhs = st.alpha @ tr.states[n] + st.b @ tr.controls[n] + st.c @ tr.disturbances[n]
                x_ls, *_ = np.linalg.lstsq(lead, rhs, rcond=None)
                np.testing.assert_allclose(tr.states[n + 1], x_ls, atol=1e-12)
                best = np.linalg.norm(lead @ x_ls - rhs)
                assert tr.step_residuals[n] == pytest.approx(best, abs=1e-12)
                if r > m:
                    assert tr.step_residuals[n] == pytest.approx(np.linalg.norm(rhs[m:]), abs=1e-12)
                else:
                    assert tr.step_residuals[n] <= 1e-12

    def test_wide_case_pads_with_zeros(self):
        sc = self.build(1, 2)
        tr = rollout(sc, BayesPolicyFactory(sc)(), replication_rng(5, 0))
        assert np.all(tr.states[1:, 1] == 0.0)


class TestEstimate:
    def test_zero_cost(self):
        rep = estimate_risk(zero_cost(), ZeroPolicyFactory(1), 100, seed=3)
        assert rep.mean_loss == 0.0 and rep.std_error == 0.0

    def test_reps_validated(self):
        with pytest.raises(InvalidInputError):
            estimate_risk(zero_cost(), ZeroPolicyFactory(1), 1, seed=0)
        with pytest.raises(InvalidInputError):
            simulate_losses(zero_cost(), ZeroPolicyFactory(1), 10, seed=0, workers=0)

    def test_repeatable(self):
        sc = one_step_scenario(beta=5.0)
        f = BayesPolicyFactory(sc)
        a = estimate_risk(sc, f, 500, seed=8)
        b = estimate_risk(sc, f, 500, seed=8)
        assert a == b
        assert isinstance(a, SimReport) and a.replications == 500 and a.seed == 8
        assert estimate_risk(sc, f, 500, seed=9) != a

    def test_worker_count_does_not_matter(self):
        sc = one_step_scenario(probs=[0.3, 0.7], beta=5.0)
        f = BayesPolicyFactory(sc)
        base, _ = simulate_losses(sc, f, 301, seed=5, workers=1)
        for w in (2, 3):
            other, _ = simulate_losses(sc, f, 301, seed=5, workers=w)
            np.testing.assert_array_equal(base, other)

    def test_prior_second_moment(self):
        # loss is lambda^2, whose prior mean is beta r^2 / (beta - 2) = 3
        sc = scalar_scenario(1.0, 1.0, 1.0, np.diag([0.0, 1.0]), 1.0, [1.0], 3.0, 1.0, 0.0)
        rep = estimate_risk(sc, ZeroPolicyFactory(1), 100_000, seed=2026)
        assert abs(rep.mean_loss - 3.0) <= 4 * rep.std_error

    def test_std_error_definition(self):
        sc = one_step_scenario(beta=6.0)
        f = BayesPolicyFactory(sc)
        losses, _ = simulate_losses(sc, f, 200, seed=1)
        rep = estimate_risk(sc, f, 200, seed=1)
        assert rep.mean_loss == np.mean(losses)
        assert rep.std_error == pytest.approx(np.std(losses, ddof=1) / np.sqrt(200), rel=1e-15)
        assert len(rep.samples) == 3

    def test_pooled_se(self):
        a = SimReport(1.0, 0.3, 10, 0)
        b = SimReport(1.0, 0.4, 10, 0)
        assert pooled_se(a, b) == pytest.approx(0.5)


@pytest.mark.slow
class TestBayesBeatsZero:
    def check(self, sc, reps=6000):
        bayes = estimate_risk(sc, BayesPolicyFactory(sc), reps, seed=77)
        zero = estimate_risk(sc, ZeroPolicyFactory(sc.m), reps, seed=77)
        assert bayes.mean_loss <= zero.mean_loss + 3 * pooled_se(bayes, zero)

    def test_shipped(self):
        self.check(one_step_scenario(beta=5.0))
        self.check(load_scenario(SCENARIOS / "two_dim.json"))

    @pytest.mark.parametrize("seed", range(3))
    def test_random_scalar(self, seed):
        self.check(random_scalar(np.random.default_rng(seed)))
