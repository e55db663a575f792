import numpy as np
import pytest
from scipy.linalg import null_space

from bayesctl.controller import CaseTag, bayes_control, classify_case, solve_operator
from bayesctl.errors import InvalidInputError
from bayesctl.linalg import pinv
from bayesctl.policy import BayesPolicy, BayesPolicyFactory, make_policy
from bayesctl.recursion import backward_coefficients, stage_gain
from bayesctl.scenario import scalar_scenario

from helpers import one_step_scenario, rank_deficient

TAGS = CaseTag


class TestClassify:
    def test_examples(self):
        col = np.array([[1.0], [1.0]])
        assert classify_case(np.eye(2), [5.0, -1.0]) is TAGS.FULL_RANK_SQUARE
        assert classify_case(col, [1.0, 1.0]) is TAGS.TALL_FULL_RANK_CONSISTENT
        assert classify_case(col, [1.0, -1.0]) is TAGS.TALL_FULL_RANK_INCONSISTENT
        assert classify_case(np.diag([1.0, 0.0]), [1.0, 1.0]) is TAGS.RANK_DEFICIENT_REGULARIZED
        assert classify_case(np.diag([1.0, 0.0]), [1.0, 0.0]) is TAGS.RANK_DEFICIENT_REGULARIZED
        assert classify_case([[1.0, 1.0]], [2.0]) is TAGS.WIDE_FULL_RANK_MINNORM

    def test_rank_deficient_wide_and_tall(self):
        assert classify_case(np.ones((2, 3)), [1.0, 1.0]) is TAGS.RANK_DEFICIENT_REGULARIZED
        assert classify_case(np.ones((3, 2)), [1.0, 1.0, 1.0]) is TAGS.RANK_DEFICIENT_REGULARIZED

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            classify_case(np.eye(2), [1.0])


class TestBayesControl:
    def test_scalar(self):
        d = bayes_control([[2.0]], [-3.0])
        assert d.u.tolist() == [-1.5]
        assert d.tag is TAGS.FULL_RANK_SQUARE
        assert d.theta_used is None and d.residual == 0.0

    def test_tall_orthogonal(self):
        d = bayes_control([[1.0], [1.0]], [1.0, -1.0])
        assert d.tag is TAGS.TALL_FULL_RANK_INCONSISTENT
        np.testing.assert_allclose(d.u, [0.0], atol=1e-15)
        assert d.residual == pytest.approx(np.sqrt(2))

    def test_tall_consistent(self):
        d = bayes_control([[1.0], [2.0]], [3.0, 6.0])
        assert d.tag is TAGS.TALL_FULL_RANK_CONSISTENT
        np.testing.assert_allclose(d.u, [3.0], rtol=1e-14)
        assert d.residual <= 1e-9

    def test_wide(self):
        d = bayes_control([[1.0, 1.0]], [2.0])
        assert d.tag is TAGS.WIDE_FULL_RANK_MINNORM
        np.testing.assert_allclose(d.u, [1.0, 1.0], rtol=1e-15)

    def test_regularized(self):
        d = bayes_control(np.diag([1.0, 0.0]), [1.0, 1.0], theta=1e-6)
        assert d.tag is TAGS.RANK_DEFICIENT_REGULARIZED
        assert d.theta_used == 1e-6
        np.testing.assert_allclose(d.u, [1.0 / (1.0 + 1e-12), 0.0], rtol=1e-15, atol=0)

    def test_default_theta_recorded(self):
        d = bayes_control(np.diag([3.0, 0.0]), [1.0, 1.0])
        assert d.theta_used == pytest.approx(4e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_residual_minimality(self, seed):
        rng = np.random.default_rng(seed)
        rows = int(rng.integers(3, 7))
        cols = int(rng.integers(1, rows))
        K = rng.normal(size=(rows, cols))
        L = rng.normal(size=rows)
        d = bayes_control(K, L)
        assert d.tag is TAGS.TALL_FULL_RANK_INCONSISTENT
        W = rng.normal(size=(1000, cols)) * 3 + d.u
        others = np.linalg.norm(W @ K.T - L, axis=1)
        assert np.all(d.residual <= others + 1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_minimum_norm(self, seed):
        rng = np.random.default_rng(50 + seed)
        cols = int(rng.integers(2, 7))
        rows = int(rng.integers(1, cols))
        K = rng.normal(size=(rows, cols))
        L = rng.normal(size=rows)
        d = bayes_control(K, L)
        assert d.tag is TAGS.WIDE_FULL_RANK_MINNORM
        assert d.residual <= 1e-9
        N = null_space(K)
        W = d.u + rng.normal(size=(1000, N.shape[1])) @ N.T
        np.testing.assert_allclose(W @ K.T, np.broadcast_to(L, (1000, rows)), atol=1e-9)
        assert np.all(np.linalg.norm(d.u) <= np.linalg.norm(W, axis=1) + 1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_regularized_limit(self, seed):
        rng = np.random.default_rng(80 + seed)
        K = rank_deficient(rng)
        L = rng.normal(size=K.shape[0])
        target = pinv(K) @ L
        errs = [np.linalg.norm(bayes_control(K, L, theta=th).u - target) for th in (1e-1, 1e-2, 1e-3)]
        assert errs[1] < errs[0] and errs[2] < errs[1]

    @pytest.mark.parametrize("seed", range(10))
    def test_formulas_agree_on_square_nonsingular(self, seed):
        rng = np.random.default_rng(120 + seed)
        n = int(rng.integers(1, 7))
        K = rng.normal(size=(n, n)) + n * np.eye(n)
        L = rng.normal(size=n)
        ref = np.linalg.solve(K, L)
        scale = np.linalg.norm(ref)
        for tag in (TAGS.FULL_RANK_SQUARE, TAGS.TALL_FULL_RANK_CONSISTENT,
                    TAGS.TALL_FULL_RANK_INCONSISTENT, TAGS.WIDE_FULL_RANK_MINNORM):
            u = solve_operator(K, tag) @ L
            assert np.linalg.norm(u - ref) <= 1e-9 * scale, tag
        u = solve_operator(K, TAGS.RANK_DEFICIENT_REGULARIZED, theta=1e-9) @ L
        assert np.linalg.norm(u - ref) <= 1e-9 * scale * np.linalg.cond(K) ** 2


class TestPolicy:
    def test_zero_cost_emits_zero(self):
        sc = scalar_scenario(1.0, 1.0, 1.0, np.zeros((2, 2)), 1.0, [0.2, 0.3, 0.5], 5.0, 1.0, 0.7)
        pol = BayesPolicyFactory(sc)()
        x = sc.x0
        for n in range(sc.M + 1):
            assert np.all(pol.act(n, x) == 0.0)
            if n < sc.M:
                x = x + 0.3
                pol.observe(x)

    def test_one_step_first_action(self):
        sc = one_step_scenario()
        rc = backward_coefficients(sc)
        u = make_policy(sc, rc).act(0, sc.x0)
        assert u[0] == pytest.approx(-0.375, abs=1e-12)

    def test_determinism(self):
        sc = one_step_scenario(probs=[0.1, 0.2, 0.7], beta=5.0)
        rc = backward_coefficients(sc)
        path = [0.4, 1.9]
        seqs = []
        for _ in range(2):
            pol = BayesPolicy(sc, rc)
            x, us = sc.x0, []
            for n in range(sc.M + 1):
                u = pol.act(n, x)
                us.append(u.copy())
                if n < sc.M:
                    x = x + u + path[n]
                    pol.observe(x)
            seqs.append(np.array(us))
        np.testing.assert_array_equal(seqs[0], seqs[1])

    def test_gain_matches_stage_gain(self):
        sc = one_step_scenario(probs=[0.1, 0.2, 0.7], beta=5.0, x0=0.4)
        rc = backward_coefficients(sc)
        pol = BayesPolicy(sc, rc)
        x = sc.x0
        for n in range(sc.M + 1):
            g1, g2 = pol.gain(n, x), stage_gain(sc, rc, n, x, pol.state)
            np.testing.assert_array_equal(g1.K, g2.K)
            np.testing.assert_array_equal(g1.L, g2.L)
            u = pol.act(n, x)
            np.testing.assert_allclose(u, np.linalg.solve(g1.K, g1.L), rtol=1e-14)
            if n < sc.M:
                x = x + u + 1.7
                pol.observe(x)
        assert pol.state.r[0] == pytest.approx(1.7, rel=1e-14)
        assert pol.state.beta[0] == 7.0

    def test_decisions_recorded(self):
        sc = one_step_scenario()
        pol = BayesPolicyFactory(sc)()
        pol.act(0, sc.x0)
        d = pol.decisions[0]
        assert d.tag is TAGS.FULL_RANK_SQUARE and d.residual <= 1e-12

    def test_observe_before_act(self):
        sc = one_step_scenario()
        with pytest.raises(RuntimeError):
            BayesPolicyFactory(sc)().observe([1.0])
