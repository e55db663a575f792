"""Dense matrix primitives: SVD-based pseudoinverse, numerical rank,
column-space membership and Tikhonov-regularized solves.

All functions accept array-likes, validate them (2-D, nonempty, finite) and
return fresh numpy arrays. Vectors are 1-D arrays.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError

DEFAULT_RANK_TOL_FACTOR = 1e-12
DEFAULT_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class Tolerance:
    """Numerical tolerances.

    ``rank_tol`` is relative to the largest singular value; ``None`` means
    ``1e-12 * max(rows, cols)`` for the matrix at hand.
    """

    rank_tol: Optional[float] = None
    residual_tol: float = DEFAULT_RESIDUAL_TOL

    def __post_init__(self):
        if self.rank_tol is not None and not self.rank_tol >= 0:
            raise InvalidInputError("rank_tol must be nonnegative")
        if not self.residual_tol >= 0:
            raise InvalidInputError("residual_tol must be nonnegative")

    def rank_cutoff(self, shape):
        if self.rank_tol is not None:
            return self.rank_tol
        return DEFAULT_RANK_TOL_FACTOR * max(shape)


DEFAULT_TOL = Tolerance()


def as_matrix(M, name="matrix"):
    A = np.array(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] == 0 or A.shape[1] == 0:
        raise InvalidInputError(f"{name} has a zero dimension {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


def as_vector(v, name="vector"):
    x = np.array(v, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return x


def svd(M):
    """Thin SVD ``M = U diag(s) Vt`` with ``s`` in descending order."""
    A = as_matrix(M)
    return np.linalg.svd(A, full_matrices=False)


def _kept(s, shape, tol):
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(s.shape, dtype=bool)
    return s > tol.rank_cutoff(shape) * s[0]


def pinv(M, tol=DEFAULT_TOL):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``rank_tol * sigma_max`` are treated as zero.

    >>> pinv([[2.0, 0.0], [0.0, 0.0]])
    array([[0.5, 0. ],
           [0. , 0. ]])
    """
    A = as_matrix(M)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = _kept(s, A.shape, tol)
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (Vt.T * inv_s) @ U.T


def rank_of(M, tol=DEFAULT_TOL):
    A = as_matrix(M)
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.count_nonzero(_kept(s, A.shape, tol)))


def in_colspan(M, v, tol=DEFAULT_TOL):
    """True iff ``v`` lies in the column space of ``M`` up to ``residual_tol``.

    The test is ``||M pinv(M) v - v|| <= residual_tol * (1 + ||v||)``.
    """
    A = as_matrix(M)
    x = as_vector(v)
    if x.shape[0] != A.shape[0]:
        raise InvalidInputError(
            f"vector length {x.shape[0]} does not match {A.shape[0]} rows"
        )
    resid = A @ (pinv(A, tol) @ x) - x
    return bool(np.linalg.norm(resid) <= tol.residual_tol * (1.0 + np.linalg.norm(x)))


def default_theta(K):
    """Default regularization strength ``1e-6 * (1 + sigma_max(K))``."""
    A = as_matrix(K)
    return 1e-6 * (1.0 + float(np.linalg.norm(A, 2)))


def tikhonov_operator(K, theta, tol=DEFAULT_TOL):
    """Matrix ``(K^T K + theta^2 I)^{-1} K^T`` evaluated through the SVD of K.

    Singular values that are numerically zero (below the rank cutoff)
    contribute exactly zero, as they would in exact arithmetic.
    """
    A = as_matrix(K)
    if not theta > 0 or not np.isfinite(theta):
        raise InvalidInputError(f"theta must be positive and finite, got {theta}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = _kept(s, A.shape, tol)
    filt = np.zeros_like(s)
    filt[keep] = s[keep] / (s[keep] ** 2 + theta**2)
    return (Vt.T * filt) @ U.T


def tikhonov_solve(K, L, theta, tol=DEFAULT_TOL):
    """Regularized solve ``(K^T K + theta^2 I)^{-1} K^T L``.

    This is the perturbed normal-equation solution with perturbation
    ``E = theta * I``. As ``theta -> 0`` it converges to ``pinv(K) @ L``.
    """
    A = as_matrix(K)
    b = as_vector(L)
    if b.shape[0] != A.shape[0]:
        raise InvalidInputError(
            f"right-hand side length {b.shape[0]} does not match {A.shape[0]} rows"
        )
    return tikhonov_operator(A, theta, tol) @ b


def identity_rm(r, m):
    """Leading coefficient ``I_{r,m}`` of the generalized system.

    ``I_m`` when ``r == m``, ``[I_m; 0]`` when ``r > m`` and ``[I_r, 0]`` when
    ``r < m``.
    """
    if r <= 0 or m <= 0:
        raise InvalidInputError("dimensions must be positive")
    return np.eye(r, m)
