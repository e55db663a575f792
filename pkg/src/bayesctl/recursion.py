"""Backward recursion for the quadratic Bayes risk.

The optimal truncated risk has the form

    W_n(x, r) = x^T A_n x + 2 r^T B_n x + 2 r^T C_n r

where r is the running-maximum statistic of the filter. Coefficients are
stored multiplied by the tail mass phi_n = P(N >= n) and divided out on
query. See ``docs/derivation.md`` for the recursion.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .controller import CaseTag, classify_shape, solve_operator
from .errors import InvalidInputError, SingularSolveError
from .filtering import BETA_INCREMENT, lambda_factors, moment_constants
from .linalg import DEFAULT_TOL, as_vector, default_theta


@dataclass(frozen=True)
class StageGain:
    K: np.ndarray
    L: np.ndarray


@dataclass(frozen=True, eq=False)
class RiskCoeffs:
    """Value-function coefficients for stages 0..M (+ a zero stage M+1).

    ``A``, ``B``, ``C`` hold phi_n-weighted coefficients of shape
    ``(M + 2, m, m)``. ``F``, ``H`` hold the control law ``u_n = F_n x + H_n r``
    used at each stage and ``tags`` the solve case. ``exact`` is False when a
    regularized stage was evaluated instead of minimized.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    phi: np.ndarray
    F: np.ndarray
    H: np.ndarray
    K: np.ndarray
    tags: Tuple[CaseTag, ...]
    thetas: Tuple[Optional[float], ...]
    mode: str
    exact: bool

    @property
    def M(self):
        return self.phi.size - 1

    def _check(self, n, upto):
        if not 0 <= n <= upto:
            raise InvalidInputError(f"stage {n} outside 0..{upto}")

    def coefficients(self, n):
        """Normalized ``(A_n, B_n, C_n)``."""
        self._check(n, self.M)
        p = self.phi[n]
        return self.A[n] / p, self.B[n] / p, self.C[n] / p

    def continuation(self, n):
        """Coefficients of stage n+1 weighted relative to stage n.

        These are ``(phi_{n+1} / phi_n) * (A_{n+1}, B_{n+1}, C_{n+1})``,
        i.e. what enters the stage-n gain.
        """
        self._check(n, self.M)
        p = self.phi[n]
        return self.A[n + 1] / p, self.B[n + 1] / p, self.C[n + 1] / p


def stage_betas(beta0, n):
    beta0 = np.asarray(beta0, dtype=float)
    return np.where(beta0 > 0, beta0 + BETA_INCREMENT * n, 0.0)


def moment_matrices(beta, mode="derived"):
    """Diagonal factors and pairwise moment tables for one stage.

    Returns ``(q, q2, t, Mvv, Mrv, Mrr, Mll)`` where, with ``r' = max(r, v)``,
    ``E[v] = q*r``, ``E[r'] = q2*r``, ``E[lambda] = t*r`` and
    ``E[v_i v_j] = Mvv[i, j] r_i r_j``, ``E[r'_i v_j] = Mrv[i, j] r_i r_j``,
    ``E[r'_i r'_j] = Mrr[i, j] r_i r_j``,
    ``E[lambda_i lambda_j] = Mll[i, j] r_i r_j``.
    Off-diagonal entries factor by independence across coordinates.
    """
    mc = moment_constants(beta, mode)
    T, T1 = lambda_factors(beta)

    def table(a, b, diag):
        out = np.outer(a, b)
        np.fill_diagonal(out, diag)
        return out

    Mvv = table(mc.Q, mc.Q, mc.Q1)
    Mrv = table(mc.Q2, mc.Q, mc.Q4)
    Mrr = table(mc.Q2, mc.Q2, mc.Q3)
    Mll = table(T, T, T1)
    return mc.Q, mc.Q2, T, Mvv, Mrv, Mrr, Mll


def _sym(a):
    return 0.5 * (a + a.T)


def _gain_parts(st, A1, B1, q, q2):
    """K and the two maps with ``L = -(Lx x + Lr r)``."""
    b = st.b
    K = st.kmat + b.T @ A1 @ b
    G = A1 @ st.c @ np.diag(q) + B1.T @ np.diag(q2)
    return K, b.T @ A1 @ st.alpha, b.T @ G, G


def backward_coefficients(
    sc, mode="derived", theta=None, regularize=False, weighted=True, tol=DEFAULT_TOL
):
    """Run the backward pass over stages M..0.

    Parameters
    ----------
    sc : Scenario
        Generalized scenarios (r != m) are reduced with ``Scenario.effective_stage``.
    mode : {"derived", "printed"}
        Which moment constants to use.
    theta : float, optional
        Regularization for rank-deficient stages (default per stage).
    regularize : bool
        If False a rank-deficient K_n with a nonzero gain raises
        ``SingularSolveError``. If True the regularized control is used and the
        coefficients give the exact risk of that control law (``exact=False``
        flags that it is no longer a minimum).
    weighted : bool
        Carry phi-weighted coefficients. ``False`` ignores the horizon law and
        treats M as a fixed horizon.
    """
    m, M = sc.m, sc.M
    phi = sc.horizon.phi.copy() if weighted else np.ones(M + 1)
    A = np.zeros((M + 2, m, m))
    B = np.zeros((M + 2, m, m))
    C = np.zeros((M + 2, m, m))
    F = np.zeros((M + 1, m, m))
    H = np.zeros((M + 1, m, m))
    Ks = np.zeros((M + 1, m, m))
    tags = [None] * (M + 1)
    thetas = [None] * (M + 1)
    exact = True

    for n in range(M, -1, -1):
        st = sc.effective_stage(n)
        beta = stage_betas(sc.prior.beta, n)
        q, q2, t, Mvv, Mrv, Mrr, Mll = moment_matrices(beta, mode)
        p = phi[n]
        A1, B1, C1 = A[n + 1] / p, B[n + 1] / p, C[n + 1] / p

        K, Lx, Lr, G = _gain_parts(st, A1, B1, q, q2)
        tag = classify_shape(K, tol)
        zero_gain = not np.any(Lx) and not np.any(Lr)
        th = None
        if tag is CaseTag.FULL_RANK_SQUARE:
            S = solve_operator(K, tag, tol=tol)
        elif zero_gain:
            # L == 0 for every state: u = 0 minimizes and every case returns it.
            S = np.zeros((m, m))
            if tag is CaseTag.RANK_DEFICIENT_REGULARIZED:
                th = default_theta(K) if theta is None else float(theta)
        elif regularize:
            th = default_theta(K) if theta is None else float(theta)
            S = solve_operator(K, tag, th, tol)
            exact = False
        else:
            raise SingularSolveError(
                f"K_{n} is rank deficient; use the regularized controller", stage=n, tag=tag
            )
        Fn, Hn = -S @ Lx, -S @ Lr

        kmat = st.kmat
        Sxx, Sxl, Sll = st.blocks()
        P = st.alpha + st.b @ Fn
        Hb = st.b @ Hn
        c = st.c

        An = Sxx + Fn.T @ kmat @ Fn + P.T @ A1 @ P
        Bn = np.diag(t) @ Sxl.T + Hn.T @ kmat @ Fn + Hb.T @ A1 @ P + G.T @ P
        Cn2 = (
            Sll * Mll
            + Hn.T @ kmat @ Hn
            + Hb.T @ A1 @ Hb
            + Hb.T @ G
            + G.T @ Hb
            + (c.T @ A1 @ c) * Mvv
            + 2.0 * (B1 @ c) * Mrv
            + 2.0 * C1 * Mrr
        )
        A[n] = p * _sym(An)
        B[n] = p * Bn
        C[n] = p * 0.5 * _sym(Cn2)
        F[n], H[n], Ks[n] = Fn, Hn, K
        tags[n], thetas[n] = tag, th

    return RiskCoeffs(A, B, C, phi, F, H, Ks, tuple(tags), tuple(thetas), mode, exact)


def gain_maps(sc, rc, n, beta):
    """``(K_n, Lx, Lr)`` with ``L_n = -(Lx x + Lr r)``; none depend on the state."""
    if not 0 <= n <= rc.M:
        raise InvalidInputError(f"no coefficients for stage {n}")
    st = sc.effective_stage(n)
    mc = moment_constants(beta, rc.mode)
    A1, B1, _ = rc.continuation(n)
    K, Lx, Lr, _ = _gain_parts(st, A1, B1, mc.Q, mc.Q2)
    return K, Lx, Lr


def stage_gain(sc, rc, n, x, state):
    """``K_n`` and ``L_n`` at the current state and filter statistic.

    Uses the filter's own ``beta`` (equal to ``beta_0 + n`` on a consistent
    trajectory) and the constants of ``rc.mode``.
    """
    x = as_vector(x, "x")
    K, Lx, Lr = gain_maps(sc, rc, n, state.beta)
    return StageGain(K, -(Lx @ x + Lr @ np.asarray(state.r, dtype=float)))


def bayes_risk_value(rc, n, x, r):
    """Evaluate ``x^T A_n x + 2 r^T B_n x + 2 r^T C_n r``."""
    A, B, C = rc.coefficients(n)
    x = as_vector(x, "x")
    r = as_vector(r, "r")
    return float(x @ A @ x + 2.0 * r @ B @ x + 2.0 * r @ C @ r)


def quadratic_value(A, B, C, x, r):
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    return float(x @ A @ x + 2.0 * r @ B @ x + 2.0 * r @ C @ r)
