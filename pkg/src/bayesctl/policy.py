"""Closed-loop policies.

A policy is driven by a simulator through three calls::

    policy.reset()
    u = policy.act(n, x)        # control for stage n at state x
    policy.observe(x_next)      # state reached after applying u

Factories are small picklable callables returning fresh policies, so the
Monte Carlo harness can ship them to worker processes.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .controller import CaseTag, ControlDecision, classify_case, classify_shape, solve_operator
from .filtering import disturbance_operator, init_filter, recover_disturbance, update_posterior
from .linalg import DEFAULT_TOL, Tolerance, default_theta
from .recursion import StageGain, backward_coefficients, gain_maps


class BayesPolicy:
    """Bayes controller: filter the disturbance scale, then solve ``K_n u = L_n``.

    ``K_n`` and the maps giving ``L_n`` depend only on the stage and the
    filter's shape parameters, so the solve operator is cached per
    ``(n, beta)`` and reused across ``reset()`` calls.
    """

    def __init__(self, sc, rc, theta=None, tol=DEFAULT_TOL):
        self.sc = sc
        self.rc = rc
        self.theta = theta
        self.tol = tol
        self._stages = {}
        self._c_inv = {}
        self.reset()

    @property
    def mode(self):
        return self.rc.mode

    def reset(self):
        self.state = init_filter(self.sc.prior)
        self.decisions = []
        self._last = None

    def _solver(self, n):
        key = (n, self.state.beta.tobytes())
        ent = self._stages.get(key)
        if ent is None:
            K, Lx, Lr = gain_maps(self.sc, self.rc, n, self.state.beta)
            tag = classify_shape(K, self.tol)
            theta = None
            if tag is CaseTag.RANK_DEFICIENT_REGULARIZED:
                theta = default_theta(K) if self.theta is None else float(self.theta)
            S = solve_operator(K, tag, theta, self.tol)
            ent = self._stages[key] = (K, Lx, Lr, tag, theta, S)
        return ent

    def gain(self, n, x):
        """Current ``StageGain``; same values as ``recursion.stage_gain``."""
        K, Lx, Lr, *_ = self._solver(n)
        return StageGain(K, -(Lx @ x + Lr @ self.state.r))

    def act(self, n, x):
        x = np.asarray(x, dtype=float)
        K, Lx, Lr, tag, theta, S = self._solver(n)
        L = -(Lx @ x + Lr @ self.state.r)
        if tag is CaseTag.TALL_FULL_RANK_CONSISTENT:
            tag = classify_case(K, L, self.tol)
        u = S @ L
        dec = ControlDecision(u, tag, theta, float(np.linalg.norm(K @ u - L)))
        self.decisions.append(dec)
        self._last = (n, x, u)
        return u

    def observe(self, x_next):
        if self._last is None:
            raise RuntimeError("observe() called before act()")
        n, x, u = self._last
        st = self.sc.effective_stage(n)
        c_inv = self._c_inv.get(n)
        if c_inv is None:
            c_inv = self._c_inv[n] = disturbance_operator(st.c, self.tol)
        v = recover_disturbance(x_next, x, u, st, self.sc.k, self.tol, c_inv)
        self.state = update_posterior(self.state, v, self.tol)
        self._last = None
        return v


def make_policy(sc, rc, theta=None, tol=DEFAULT_TOL):
    return BayesPolicy(sc, rc, theta, tol)


class ZeroPolicy:
    """Always applies u = 0; the baseline every controller must beat."""

    def __init__(self, m):
        self.m = m

    def reset(self):
        pass

    def act(self, n, x):
        return np.zeros(self.m)

    def observe(self, x_next):
        pass


@dataclass(frozen=True)
class BayesPolicyFactory:
    """Builds ``BayesPolicy`` objects, computing coefficients once.

    Rank-deficient stages are always allowed here (``regularize=True``).
    """

    sc: object
    mode: str = "derived"
    theta: Optional[float] = None
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        rc = backward_coefficients(
            self.sc, self.mode, self.theta, regularize=True, tol=self.tol
        )
        object.__setattr__(self, "rc", rc)

    def __call__(self):
        return BayesPolicy(self.sc, self.rc, self.theta, self.tol)


@dataclass(frozen=True)
class ZeroPolicyFactory:
    m: int

    def __call__(self):
        return ZeroPolicy(self.m)
