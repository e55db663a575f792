"""Shared builders for the test suite."""
import numpy as np

from bayesctl.scenario import scalar_scenario

ONE_STEP = dict(alpha=1.0, b=1.0, c=1.0, s=np.diag([1.0, 0.0]), k=1.0,
                probs=[0.0, 1.0], beta=3.0, r0=1.0, x0=0.0)


def one_step_scenario(**over):
    kw = dict(ONE_STEP)
    kw.update(over)
    return scalar_scenario(**kw)


def random_matrix(rng, rows=None, cols=None, rank=None, max_dim=6):
    """Gaussian matrix, optionally of prescribed rank, entries scaled randomly."""
    rows = rows or int(rng.integers(1, max_dim + 1))
    cols = cols or int(rng.integers(1, max_dim + 1))
    if rank is None:
        M = rng.normal(size=(rows, cols))
    else:
        M = rng.normal(size=(rows, rank)) @ rng.normal(size=(rank, cols))
    return M * 10.0 ** rng.uniform(-2, 2)


def rank_deficient(rng, max_dim=6):
    n = int(rng.integers(2, max_dim + 1))
    p = int(rng.integers(2, max_dim + 1))
    rank = int(rng.integers(1, min(n, p)))
    return random_matrix(rng, n, p, rank)


def random_psd_block(rng, x_weight=0.3):
    L = rng.normal(size=(2, 2))
    return L @ L.T / 2 + np.diag([x_weight, 0.0])


def random_scalar(rng, max_M=3, beta=(4.5, 8.0)):
    """Random regular scalar scenario with a random horizon law.

    beta > 4 keeps the realized loss square integrable so Monte Carlo
    standard errors are meaningful.
    """
    M = int(rng.integers(1, max_M + 1))
    probs = rng.dirichlet(np.ones(M + 1))
    probs[-1] += 0.2
    probs /= probs.sum()
    probs[-1] = 1.0 - probs[:-1].sum()
    return scalar_scenario(
        alpha=rng.uniform(0.5, 1.1, M + 1),
        b=rng.uniform(0.5, 1.5, M + 1),
        c=rng.uniform(0.5, 1.5, M + 1),
        s=np.array([random_psd_block(rng) for _ in range(M + 1)]),
        k=rng.uniform(0.2, 2.0, M + 1),
        probs=probs,
        beta=rng.uniform(*beta),
        r0=rng.uniform(0.5, 2.0),
        x0=rng.uniform(-1.0, 1.0),
    )
