"""Conjugate Pareto-uniform filtering.

Each active disturbance coordinate is U[0, lambda_i] with a Pareto(beta_i, r_i)
prior on lambda_i. Observing v_i moves the posterior to
Pareto(beta_i + 1, max(r_i, v_i)), so ``(beta_n, r_n)`` is a sufficient
statistic. Inactive coordinates carry ``beta = r = 0`` throughout.

Moment constants come in two flavours:

``derived``
    closed forms obtained by integrating against the predictive density
    ``h(v) = beta r^beta / ((beta + 1) max(r, v)^(beta + 1))``; the default.
``printed``
    the formulas as they were originally typeset, which disagree with the
    derived values for Q, Q3 and Q4. Kept for comparison only.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentTransitionError, InvalidInputError, MomentUndefinedError
from .linalg import DEFAULT_TOL, as_vector, pinv

MODES = ("derived", "printed")

# Each stage adds 2 q_i with q_i = E[v]/lambda = 1/2.
BETA_INCREMENT = 1.0


@dataclass(frozen=True, eq=False)
class FilterState:
    beta: np.ndarray
    r: np.ndarray
    n: int = 0

    def __post_init__(self):
        for name in ("beta", "r"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def active(self):
        return self.beta > 0

    def __eq__(self, other):
        return (
            isinstance(other, FilterState)
            and self.n == other.n
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.r, other.r)
        )

    def __repr__(self):
        return f"FilterState(beta={self.beta.tolist()}, r={self.r.tolist()}, n={self.n})"


@dataclass(frozen=True)
class PosteriorMoments:
    lambda_mean: np.ndarray
    lambda_second: np.ndarray


@dataclass(frozen=True)
class MomentConstants:
    """Per-coordinate constants with ``E[v] = Q r``, ``E[v^2] = Q1 r^2``,
    ``E[r'] = Q2 r``, ``E[r'^2] = Q3 r^2`` and ``E[v r'] = Q4 r^2`` where
    ``r' = max(r, v)``. Zero on inactive coordinates."""

    Q: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray
    Q4: np.ndarray
    mode: str


def init_filter(prior):
    return FilterState(prior.beta.copy(), prior.rbar.copy(), 0)


def disturbance_operator(c, tol=DEFAULT_TOL):
    """``c^{-1}`` for square nonsingular c, else the pseudoinverse ``c^+``."""
    c = np.asarray(c, dtype=float)
    if c.shape[0] == c.shape[1] and np.linalg.matrix_rank(c) == c.shape[0]:
        return np.linalg.inv(c)
    return pinv(c, tol)


def recover_disturbance(x_next, x, u, stage, k, tol=DEFAULT_TOL, c_inv=None):
    """Disturbance that explains the transition ``x -> x_next`` under ``u``.

    Uses ``c^{-1}`` when c is square and nonsingular and the minimum-norm
    ``c^+`` otherwise (``c_inv`` may pass a precomputed
    ``disturbance_operator(c)``). Coordinates beyond ``k`` are set to zero.

    Raises
    ------
    InconsistentTransitionError
        if ``c v`` cannot reproduce the innovation or an active coordinate
        is negative (outside the uniform support).
    """
    x_next = as_vector(x_next, "x_next")
    x = as_vector(x, "x")
    u = as_vector(u, "u")
    c = stage.c
    if x_next.shape[0] != c.shape[0] or x.shape[0] != stage.alpha.shape[1]:
        raise InvalidInputError("state dimensions do not match the stage matrices")
    innov = x_next - stage.alpha @ x - stage.b @ u
    if c_inv is None:
        c_inv = disturbance_operator(c, tol)
    v = c_inv @ innov
    scale = 1.0 + np.linalg.norm(innov)
    resid = np.linalg.norm(c @ v - innov)
    if resid > tol.residual_tol * scale:
        raise InconsistentTransitionError(
            f"transition not reproducible by c v (residual {resid:.3e})"
        )
    v[k:] = 0.0
    if np.any(v[:k] < -tol.residual_tol * scale):
        raise InconsistentTransitionError(
            f"recovered disturbance {v[:k].tolist()} has a negative active coordinate"
        )
    v[:k] = np.maximum(v[:k], 0.0)
    return v


def update_posterior(state, v, tol=DEFAULT_TOL):
    v = as_vector(v, "v")
    act = state.active
    if v.shape != state.r.shape:
        raise InvalidInputError("disturbance length does not match the filter state")
    if np.any(v[act] < -tol.residual_tol):
        raise InconsistentTransitionError("negative active disturbance coordinate")
    beta = np.where(act, state.beta + BETA_INCREMENT, 0.0)
    r = np.where(act, np.maximum(state.r, v), 0.0)
    return FilterState(beta, r, state.n + 1)


def _check_beta(beta, act):
    if np.any(beta[act] <= 2):
        raise MomentUndefinedError(f"moments need beta > 2, got {beta[act].tolist()}")


def posterior_moments(state):
    """Posterior mean and second moment of every lambda_i."""
    act = state.active
    beta = state.beta
    _check_beta(beta, act)
    b = np.where(act, beta, 3.0)
    T = np.where(act, b / (b - 1.0), 0.0)
    T1 = np.where(act, b / (b - 2.0), 0.0)
    return PosteriorMoments(T * state.r, T1 * state.r**2)


def lambda_factors(beta):
    """``(T, T1)`` with ``E[lambda] = T r`` and ``E[lambda^2] = T1 r^2``."""
    beta = np.asarray(beta, dtype=float)
    act = beta > 0
    _check_beta(np.atleast_1d(beta), np.atleast_1d(act))
    b = np.where(act, beta, 3.0)
    return np.where(act, b / (b - 1.0), 0.0), np.where(act, b / (b - 2.0), 0.0)


def moment_constants(beta, mode="derived"):
    """Moment constants for an array of posterior shape parameters.

    Entries with ``beta == 0`` are inactive and yield zeros.
    """
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}, got {mode!r}")
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    act = beta > 0
    _check_beta(beta, act)
    b = np.where(act, beta, 3.0)
    Q1 = b / (3.0 * (b - 2.0))
    Q2 = b**2 / (b**2 - 1.0)
    if mode == "derived":
        Q = b / (2.0 * (b - 1.0))
        Q3 = b * (b - 1.0) / ((b + 1.0) * (b - 2.0))
        Q4 = b**2 / (2.0 * (b + 1.0) * (b - 2.0))
    else:
        Q = 0.5 * b / (b + 1.0)
        Q3 = b * (b - 1.0) / ((b + 1.0) * (b + 2.0))
        Q4 = b**2 / ((b + 1.0) * (b - 2.0))
    z = lambda a: np.where(act, a, 0.0)  # noqa: E731
    return MomentConstants(z(Q), z(Q1), z(Q2), z(Q3), z(Q4), mode)


def predictive_density(v, beta, r):
    """Density of the next disturbance coordinate with lambda integrated out."""
    if not beta > 2:
        raise MomentUndefinedError("beta must exceed 2")
    if not r > 0:
        raise InvalidInputError("r must be positive")
    v = np.asarray(v, dtype=float)
    top = np.maximum(v, r)
    dens = beta / (beta + 1.0) * r**beta / top ** (beta + 1.0)
    return np.where(v >= 0, dens, 0.0)


def pareto_density(lam, beta, r):
    lam = np.asarray(lam, dtype=float)
    safe = np.where(lam >= r, lam, r)
    return np.where(lam >= r, beta * r**beta / safe ** (beta + 1.0), 0.0)
