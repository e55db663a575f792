"""Closed-loop Monte Carlo.

Replication ``i`` of a run with seed ``s`` draws from
``default_rng(SeedSequence(s, spawn_key=(i,)))``, so results do not depend on
how replications are split across worker processes.
"""
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray          # (N+1, m)
    controls: np.ndarray        # (N+1, m)
    disturbances: np.ndarray    # (N, m)
    horizon: int
    loss: float
    lam: np.ndarray
    step_residuals: np.ndarray  # ||I x' - (alpha x + b u + c v)|| per step


@dataclass(frozen=True)
class SimReport:
    mean_loss: float
    std_error: float
    replications: int
    seed: int
    samples: Tuple[Trajectory, ...] = field(default=(), compare=False, repr=False)


def replication_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def draw_lambda(prior, rng):
    """Disturbance scales from the Pareto prior (inverse CDF)."""
    k = prior.k
    lam = np.zeros(prior.beta.size)
    u = 1.0 - rng.random(k)  # in (0, 1]
    lam[:k] = prior.rbar[:k] * u ** (-1.0 / prior.beta[:k])
    return lam


def stage_loss(st, x, lam, u):
    y = np.concatenate([x, lam])
    return float(y @ st.s @ y + u @ st.kmat @ u)


def rollout(sc, policy, rng, lam=None):
    """Simulate one closed-loop path.

    ``lam=None`` draws the disturbance scales from the prior (Bayes risk);
    a fixed vector gives the risk at that parameter. The draw order is
    lambda, N, then one uniform vector per transition.
    """
    m, k = sc.m, sc.k
    if lam is None:
        lam = draw_lambda(sc.prior, rng)
    else:
        lam = np.array(lam, dtype=float).ravel()
        if lam.shape != (m,):
            raise InvalidInputError(f"lambda must have length {m}")
    N = sc.horizon.sample(rng)
    lead_pinv = sc._lead_pinv
    lead = sc.lead

    policy.reset()
    x = sc.x0.copy()
    states = [x]
    controls = []
    dist = []
    resid = []
    loss = 0.0
    for n in range(N + 1):
        st = sc.stages[n]
        u = np.asarray(policy.act(n, x), dtype=float)
        controls.append(u)
        loss += stage_loss(st, x, lam, u)
        if n == N:
            break
        v = np.zeros(m)
        v[:k] = rng.random(k) * lam[:k]
        rhs = st.alpha @ x + st.b @ u + st.c @ v
        x = lead_pinv @ rhs if sc.generalized else rhs
        resid.append(float(np.linalg.norm(lead @ x - rhs)))
        dist.append(v)
        states.append(x)
        policy.observe(x)
    return Trajectory(
        np.array(states),
        np.array(controls),
        np.array(dist).reshape(len(dist), m),
        N,
        loss,
        lam,
        np.array(resid),
    )


def _run_chunk(sc, factory, seed, start, stop, lam, keep):
    policy = factory()
    losses = np.empty(stop - start)
    kept = []
    for j, i in enumerate(range(start, stop)):
        tr = rollout(sc, policy, replication_rng(seed, i), lam)
        losses[j] = tr.loss
        if i < keep:
            kept.append(tr)
    return losses, kept


def _chunks(reps, workers):
    bounds = np.linspace(0, reps, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def simulate_losses(sc, factory, reps, seed, workers=1, lam=None, keep=0):
    """Realized losses of ``reps`` rollouts in replication order."""
    if reps < 1:
        raise InvalidInputError("reps must be at least 1")
    if workers < 1:
        raise InvalidInputError("workers must be at least 1")
    if workers == 1:
        return _run_chunk(sc, factory, seed, 0, reps, lam, keep)
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        futs = [
            ex.submit(_run_chunk, sc, factory, seed, a, b, lam, keep)
            for a, b in _chunks(reps, workers)
        ]
        parts = [f.result() for f in futs]
    losses = np.concatenate([p[0] for p in parts])
    kept = [t for p in parts for t in p[1]]
    return losses, kept


def estimate_risk(sc, factory, reps, seed, workers=1, lam=None, keep=3):
    """Mean realized loss and its standard error over independent rollouts."""
    if reps < 2:
        raise InvalidInputError("reps must be at least 2")
    losses, kept = simulate_losses(sc, factory, reps, seed, workers, lam, keep)
    mean = float(np.mean(losses))
    se = float(np.std(losses, ddof=1) / np.sqrt(reps))
    return SimReport(mean, se, int(reps), int(seed), tuple(kept))


def pooled_se(*reports):
    return float(np.sqrt(sum(r.std_error**2 for r in reports)))
