"""Problem instances: stage matrices, loss weights, random horizon, prior.

Scenarios are stored as JSON documents::

    {
      "m": 1, "r": 1, "M": 1,
      "stages": [{"alpha": [[1]], "b": [[1]], "c": [[1]],
                  "s": [[1, 0], [0, 0]], "k": [[1]]}, ...],
      "horizon": {"probs": [0.0, 1.0]},
      "prior": {"beta": [3.0], "r": [1.0]},
      "x0": [0.0]
    }

``stages`` holds M+1 entries (a single object is broadcast to every stage).
``prior.beta`` / ``prior.r`` list the active disturbance coordinates only,
unless ``prior.k`` is given, in which case they have length m and entries
beyond k must be zero.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .errors import InvalidInputError, ScenarioError
from .linalg import identity_rm, pinv

SUM_TOL = 1e-12
SYM_TOL = 1e-12
PSD_TOL = 1e-10


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HorizonDist:
    """Distribution of the random horizon N over {0, ..., M}."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0:
            raise ScenarioError("horizon.probs", "must be nonempty")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ScenarioError("horizon.probs", "entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ScenarioError("horizon.probs", f"must sum to 1, got {p.sum()!r}")
        if not p[-1] > 0:
            raise ScenarioError("horizon.probs", "last entry p_M must be positive")
        object.__setattr__(self, "probs", _freeze(p))
        # Reverse cumulative sum; phi_0 pinned to exactly 1.
        phi = np.cumsum(p[::-1])[::-1].copy()
        phi[0] = 1.0
        phi = np.minimum.accumulate(phi)
        object.__setattr__(self, "_phi", _freeze(phi))

    @property
    def M(self):
        return self.probs.size - 1

    @property
    def phi(self):
        return self._phi

    def tail_mass(self, n):
        """P(N >= n)."""
        if not 0 <= n <= self.M:
            raise InvalidInputError(f"stage {n} outside 0..{self.M}")
        return float(self._phi[n])

    def sample(self, rng):
        # Inverse-CDF on a single uniform so the stream consumption is fixed.
        u = rng.random()
        cdf = np.cumsum(self.probs)
        n = int(np.searchsorted(cdf, u, side="right"))
        return min(n, self.M)

    def __eq__(self, other):
        return isinstance(other, HorizonDist) and np.array_equal(self.probs, other.probs)


def tail_mass(h, n):
    return h.tail_mass(n)


def sample_horizon(h, rng):
    return h.sample(rng)


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Independent Pareto priors on the first ``k`` disturbance scales.

    ``beta`` and ``rbar`` have length m with zeros beyond ``k``.
    """

    beta: np.ndarray
    rbar: np.ndarray
    k: int

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        rbar = np.array(self.rbar, dtype=float).ravel()
        k = int(self.k)
        if beta.shape != rbar.shape:
            raise ScenarioError("prior", "beta and r must have the same length")
        if not 0 <= k <= beta.size:
            raise ScenarioError("prior.k", f"must lie in 0..{beta.size}")
        if not np.all(np.isfinite(beta)) or not np.all(np.isfinite(rbar)):
            raise ScenarioError("prior", "entries must be finite")
        if np.any(beta[:k] <= 2):
            raise ScenarioError("prior.beta", "beta must exceed 2")
        if np.any(rbar[:k] <= 0):
            raise ScenarioError("prior.r", "r must be positive")
        if np.any(beta[k:] != 0) or np.any(rbar[k:] != 0):
            raise ScenarioError("prior", "entries beyond k must be zero")
        object.__setattr__(self, "beta", _freeze(beta))
        object.__setattr__(self, "rbar", _freeze(rbar))
        object.__setattr__(self, "k", k)

    @property
    def active(self):
        mask = np.zeros(self.beta.size, dtype=bool)
        mask[: self.k] = True
        return mask

    def __eq__(self, other):
        return (
            isinstance(other, PriorSpec)
            and self.k == other.k
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.rbar, other.rbar)
        )


def _check_psd(name, a, n):
    if a.shape != (n, n):
        raise ScenarioError(name, f"expected shape {(n, n)}, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL:
        raise ScenarioError(name, "must be symmetric")
    if np.linalg.eigvalsh(0.5 * (a + a.T)).min() < -PSD_TOL:
        raise ScenarioError(name, "must be positive semidefinite")


@dataclass(frozen=True, eq=False)
class StageData:
    """Matrices of one stage: dynamics (alpha, b, c) and loss weights (s, kmat)."""

    alpha: np.ndarray
    b: np.ndarray
    c: np.ndarray
    s: np.ndarray
    kmat: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "b", "c", "s", "kmat"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim == 0:
                a = a.reshape(1, 1)
            if a.ndim != 2 or not np.all(np.isfinite(a)):
                raise ScenarioError(name, "must be a finite 2-D matrix")
            object.__setattr__(self, name, _freeze(a))

    def validate(self, r, m, where="stage"):
        for name in ("alpha", "b", "c"):
            a = getattr(self, name)
            if a.shape != (r, m):
                raise ScenarioError(f"{where}.{name}", f"expected shape {(r, m)}, got {a.shape}")
        _check_psd(f"{where}.s", self.s, 2 * m)
        _check_psd(f"{where}.k", self.kmat, m)

    def blocks(self):
        """``(s_xx, s_xl, s_ll)`` blocks of the 2m x 2m loss weight."""
        m = self.kmat.shape[0]
        return self.s[:m, :m], self.s[:m, m:], self.s[m:, m:]

    def __eq__(self, other):
        return isinstance(other, StageData) and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("alpha", "b", "c", "s", "kmat")
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    m: int
    r: int
    stages: Tuple[StageData, ...]
    horizon: HorizonDist
    prior: PriorSpec
    x0: np.ndarray

    def __post_init__(self):
        if int(self.m) <= 0:
            raise ScenarioError("m", "must be a positive integer")
        if int(self.r) <= 0:
            raise ScenarioError("r", "must be a positive integer")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "stages", tuple(self.stages))
        if len(self.stages) != self.horizon.M + 1:
            raise ScenarioError(
                "stages", f"expected M+1 = {self.horizon.M + 1} stages, got {len(self.stages)}"
            )
        for n, st in enumerate(self.stages):
            st.validate(self.r, self.m, where=f"stages[{n}]")
        if self.prior.beta.size != self.m:
            raise ScenarioError("prior", f"expected length m = {self.m}")
        x0 = np.array(self.x0, dtype=float).ravel()
        if x0.shape != (self.m,) or not np.all(np.isfinite(x0)):
            raise ScenarioError("x0", f"expected {self.m} finite entries")
        object.__setattr__(self, "x0", _freeze(x0))
        lead = identity_rm(self.r, self.m)
        object.__setattr__(self, "_lead_pinv", _freeze(pinv(lead)))

    @property
    def M(self):
        return self.horizon.M

    @property
    def k(self):
        return self.prior.k

    @property
    def generalized(self):
        return self.r != self.m

    @property
    def lead(self):
        """Leading coefficient ``I_{r,m}`` of the state update."""
        return identity_rm(self.r, self.m)

    def effective_stage(self, n):
        """Stage n reduced to an m x m system ``x' = I^+ (alpha x + b u + c v)``.

        Identical to ``stages[n]`` when r == m.
        """
        st = self.stages[n]
        if not self.generalized:
            return st
        P = self._lead_pinv
        return StageData(P @ st.alpha, P @ st.b, P @ st.c, st.s, st.kmat)

    def __eq__(self, other):
        return (
            isinstance(other, Scenario)
            and self.m == other.m
            and self.r == other.r
            and self.stages == other.stages
            and self.horizon == other.horizon
            and self.prior == other.prior
            and np.array_equal(self.x0, other.x0)
        )


def _matrix(doc, key, where):
    if key not in doc:
        raise ScenarioError(f"{where}.{key}", "missing")
    try:
        a = np.array(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}.{key}", f"not numeric: {exc}") from None
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ScenarioError(f"{where}.{key}", "must be a matrix (list of rows)")
    return a


def scenario_from_dict(doc):
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "expected a mapping")
    for key in ("m", "stages", "horizon", "prior", "x0"):
        if key not in doc:
            raise ScenarioError(key, "missing")
    m = doc["m"]
    r = doc.get("r", m)
    if not isinstance(m, int) or isinstance(m, bool) or m <= 0:
        raise ScenarioError("m", "must be a positive integer")
    if not isinstance(r, int) or isinstance(r, bool) or r <= 0:
        raise ScenarioError("r", "must be a positive integer")

    hz = doc["horizon"]
    if not isinstance(hz, dict) or "probs" not in hz:
        raise ScenarioError("horizon.probs", "missing")
    try:
        horizon = HorizonDist(np.array(hz["probs"], dtype=float))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("horizon.probs", f"not numeric: {exc}") from None
    if "M" in doc and doc["M"] != horizon.M:
        raise ScenarioError("M", f"M = {doc['M']} but horizon.probs has {horizon.M + 1} entries")

    raw_stages = doc["stages"]
    if isinstance(raw_stages, dict):
        raw_stages = [raw_stages] * (horizon.M + 1)
    if not isinstance(raw_stages, list):
        raise ScenarioError("stages", "expected a list or a single stage object")
    stages = []
    for n, st in enumerate(raw_stages):
        where = f"stages[{n}]"
        if not isinstance(st, dict):
            raise ScenarioError(where, "expected a mapping")
        stages.append(
            StageData(
                _matrix(st, "alpha", where),
                _matrix(st, "b", where),
                _matrix(st, "c", where),
                _matrix(st, "s", where),
                _matrix(st, "k", where),
            )
        )

    pr = doc["prior"]
    if not isinstance(pr, dict) or "beta" not in pr or "r" not in pr:
        raise ScenarioError("prior", "needs beta and r")
    try:
        beta = np.array(pr["beta"], dtype=float).ravel()
        rbar = np.array(pr["r"], dtype=float).ravel()
    except (TypeError, ValueError) as exc:
        raise ScenarioError("prior", f"not numeric: {exc}") from None
    if "k" in pr:
        k = pr["k"]
        if not isinstance(k, int) or isinstance(k, bool):
            raise ScenarioError("prior.k", "must be an integer")
        if beta.size != m:
            raise ScenarioError("prior.beta", f"expected length m = {m} when k is given")
    else:
        k = beta.size
        if k > m:
            raise ScenarioError("prior.beta", f"more than m = {m} active coordinates")
        beta = np.concatenate([beta, np.zeros(m - k)])
        rbar = np.concatenate([rbar, np.zeros(m - rbar.size)]) if rbar.size <= m else rbar
    prior = PriorSpec(beta, rbar, k)

    try:
        x0 = np.array(doc["x0"], dtype=float).ravel()
    except (TypeError, ValueError) as exc:
        raise ScenarioError("x0", f"not numeric: {exc}") from None
    return Scenario(m, r, tuple(stages), horizon, prior, x0)


def scenario_to_dict(sc):
    return {
        "m": sc.m,
        "r": sc.r,
        "M": sc.M,
        "stages": [
            {
                "alpha": st.alpha.tolist(),
                "b": st.b.tolist(),
                "c": st.c.tolist(),
                "s": st.s.tolist(),
                "k": st.kmat.tolist(),
            }
            for st in sc.stages
        ],
        "horizon": {"probs": sc.horizon.probs.tolist()},
        "prior": {"k": sc.k, "beta": sc.prior.beta.tolist(), "r": sc.prior.rbar.tolist()},
        "x0": sc.x0.tolist(),
    }


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"parse failure: {exc}") from None
    return scenario_from_dict(doc)


def save_scenario(sc, path):
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


def scalar_scenario(alpha, b, c, s, k, probs, beta, r0, x0=0.0):
    """Build an m = r = k = 1 scenario.

    Each of ``alpha, b, c, k`` is a scalar (used at every stage) or a
    sequence with one entry per stage. ``s`` is the 2x2 loss weight on
    ``(x, lambda)``, or a stack of them.
    """
    probs = np.atleast_1d(np.array(probs, dtype=float))
    n_stages = probs.size

    def per_stage(v):
        arr = np.array(v, dtype=float)
        if arr.ndim == 0 or arr.shape == (2, 2):
            return [arr] * n_stages
        return list(arr)

    s_list = per_stage(s)
    stages = []
    for n, (a_, b_, c_, k_) in enumerate(zip(*(per_stage(v) for v in (alpha, b, c, k)))):
        stages.append(
            StageData(
                np.reshape(a_, (1, 1)),
                np.reshape(b_, (1, 1)),
                np.reshape(c_, (1, 1)),
                np.reshape(s_list[n], (2, 2)),
                np.reshape(k_, (1, 1)),
            )
        )
    return Scenario(1, 1, tuple(stages), HorizonDist(probs), PriorSpec([beta], [r0], 1), [x0])
