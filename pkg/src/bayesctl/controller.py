"""Solving ``K u = L`` in every rank/shape regime.

==============================  ==========================  =====================
case                            condition                   control
==============================  ==========================  =====================
FULL_RANK_SQUARE                square, rank = m            ``K^{-1} L``
TALL_FULL_RANK_CONSISTENT       rows > cols = rank, L in    ``(K^T K)^{-1} K^T L``
                                col(K)
TALL_FULL_RANK_INCONSISTENT     rows > cols = rank, L not   ``(K^T K)^{-1} K^T L``
                                in col(K)
RANK_DEFICIENT_REGULARIZED      rank < min(rows, cols)      ``(K^T K + θ² I)^{-1} K^T L``
WIDE_FULL_RANK_MINNORM          rows = rank < cols          ``K^T (K K^T)^{-1} L``
==============================  ==========================  =====================
"""
import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError, SingularSolveError
from .linalg import (
    DEFAULT_TOL,
    as_matrix,
    as_vector,
    default_theta,
    in_colspan,
    rank_of,
    tikhonov_operator,
)


class CaseTag(enum.Enum):
    FULL_RANK_SQUARE = "full_rank_square"
    TALL_FULL_RANK_CONSISTENT = "tall_full_rank_consistent"
    TALL_FULL_RANK_INCONSISTENT = "tall_full_rank_inconsistent"
    RANK_DEFICIENT_REGULARIZED = "rank_deficient_regularized"
    WIDE_FULL_RANK_MINNORM = "wide_full_rank_minnorm"

    @property
    def consistent(self):
        """Whether the case guarantees ``K u = L`` up to round-off."""
        return self in (
            CaseTag.FULL_RANK_SQUARE,
            CaseTag.TALL_FULL_RANK_CONSISTENT,
            CaseTag.WIDE_FULL_RANK_MINNORM,
        )


@dataclass(frozen=True)
class ControlDecision:
    u: np.ndarray
    tag: CaseTag
    theta_used: Optional[float]
    residual: float


def _check_pair(K, L):
    K = as_matrix(K, "K")
    L = as_vector(L, "L")
    if L.shape[0] != K.shape[0]:
        raise InvalidInputError(f"L has length {L.shape[0]}, K has {K.shape[0]} rows")
    return K, L


def classify_shape(K, tol=DEFAULT_TOL):
    """Case tag for K alone; tall full-rank matrices report the consistent tag."""
    K = as_matrix(K, "K")
    rows, cols = K.shape
    rank = rank_of(K, tol)
    if rank < min(rows, cols):
        return CaseTag.RANK_DEFICIENT_REGULARIZED
    if rows == cols:
        return CaseTag.FULL_RANK_SQUARE
    if rows < cols:
        return CaseTag.WIDE_FULL_RANK_MINNORM
    return CaseTag.TALL_FULL_RANK_CONSISTENT


def classify_case(K, L, tol=DEFAULT_TOL):
    K, L = _check_pair(K, L)
    tag = classify_shape(K, tol)
    if tag is CaseTag.TALL_FULL_RANK_CONSISTENT and not in_colspan(K, L, tol):
        return CaseTag.TALL_FULL_RANK_INCONSISTENT
    return tag


def solve_operator(K, tag, theta=None, tol=DEFAULT_TOL):
    """Matrix S with ``u = S L`` for the given case.

    Every case is linear in L, which lets the backward recursion push the
    control law through the value function in closed form.
    """
    K = as_matrix(K, "K")
    try:
        if tag is CaseTag.FULL_RANK_SQUARE:
            return np.linalg.inv(K)
        if tag in (CaseTag.TALL_FULL_RANK_CONSISTENT, CaseTag.TALL_FULL_RANK_INCONSISTENT):
            return np.linalg.solve(K.T @ K, K.T)
        if tag is CaseTag.WIDE_FULL_RANK_MINNORM:
            return K.T @ np.linalg.inv(K @ K.T)
    except np.linalg.LinAlgError as exc:
        raise SingularSolveError(f"{tag.name}: {exc}", tag=tag) from None
    if tag is CaseTag.RANK_DEFICIENT_REGULARIZED:
        if theta is None:
            theta = default_theta(K)
        return tikhonov_operator(K, theta, tol)
    raise InvalidInputError(f"unknown case {tag!r}")


def bayes_control(K, L, tol=DEFAULT_TOL, theta=None):
    """Control for the stage equation ``K u = L``.

    ``theta`` is only used in the rank-deficient case; ``None`` selects
    ``1e-6 * (1 + sigma_max(K))``.

    >>> bayes_control([[2.0]], [-3.0]).u
    array([-1.5])
    """
    K, L = _check_pair(K, L)
    tag = classify_case(K, L, tol)
    theta_used = None
    if tag is CaseTag.RANK_DEFICIENT_REGULARIZED:
        theta_used = default_theta(K) if theta is None else float(theta)
    u = solve_operator(K, tag, theta_used, tol) @ L
    if not np.all(np.isfinite(u)):
        raise SingularSolveError(f"{tag.name}: non-finite control", tag=tag)
    residual = float(np.linalg.norm(K @ u - L))
    return ControlDecision(u, tag, theta_used, residual)
