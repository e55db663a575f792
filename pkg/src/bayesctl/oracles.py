"""Independent numerical oracles.

Nothing here uses the closed-form moment constants or the quadratic value
function; every expectation is computed by quadrature against the
predictive density, and the grid oracle minimizes by brute force.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ExtrapolationError, InvalidInputError, MomentUndefinedError
from .filtering import init_filter, recover_disturbance, update_posterior
from .linalg import DEFAULT_TOL

SELECTORS = ("one", "v", "v2", "max", "max2", "vmax", "lambda", "lambda2")

# Power of v (for v >= r) of each predictive integrand; used for the tail.
_TAIL_POWER = {"one": 0, "v": 1, "v2": 2, "max": 1, "max2": 2, "vmax": 2}


def _h(v, beta, r):
    # Predictive density: int_0^inf lambda^-1 1[v <= lambda] Pareto(lambda | beta, r) dlambda.
    return beta * r**beta / ((beta + 1.0) * max(r, v) ** (beta + 1.0))


def _integrand(which, r):
    return {
        "one": lambda v: 1.0,
        "v": lambda v: v,
        "v2": lambda v: v * v,
        "max": lambda v: max(r, v),
        "max2": lambda v: max(r, v) ** 2,
        "vmax": lambda v: v * max(r, v),
    }[which]


def quadrature_moment(beta, r, which):
    """Predictive (or posterior, for ``lambda``/``lambda2``) moment by quadrature.

    Adaptive quadrature on ``[0, 10 r]`` plus the closed-form integral of
    the power-law tail beyond ``10 r``.
    """
    if which not in SELECTORS:
        raise InvalidInputError(f"unknown integrand {which!r}; pick from {SELECTORS}")
    if not beta > 2:
        raise MomentUndefinedError("beta must exceed 2")
    if not r > 0:
        raise InvalidInputError("r must be positive")
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    cut = 10.0 * r
    if which in ("lambda", "lambda2"):
        p = 1 if which == "lambda" else 2
        dens = lambda lam: beta * r**beta / lam ** (beta + 1.0)  # noqa: E731
        body, _ = integrate.quad(lambda lam: lam**p * dens(lam), r, cut, **opts)
        tail = beta * r**beta * cut ** (p - beta) / (beta - p)
        return body + tail
    f = _integrand(which, r)
    low, _ = integrate.quad(lambda v: f(v) * _h(v, beta, r), 0.0, r, **opts)
    mid, _ = integrate.quad(lambda v: f(v) * _h(v, beta, r), r, cut, **opts)
    p = _TAIL_POWER[which]
    tail = beta * r**beta / (beta + 1.0) * cut ** (p - beta) / (beta - p)
    return low + mid + tail


def marginal_density(v, beta, r):
    """``h(v)`` computed by integrating the likelihood against the prior."""
    lo = max(r, v)
    val, _ = integrate.quad(
        lambda lam: (1.0 / lam) * beta * r**beta / lam ** (beta + 1.0),
        lo,
        np.inf,
        epsabs=0.0,
        epsrel=1e-13,
    )
    return val


def _gauss_panels(edges, order):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def brute_force_posterior(beta, r, v, panels=60, order=20):
    """Posterior of lambda after one observation, by normalizing
    ``p(v | lambda) g(lambda | beta, r)`` numerically on a log-lambda grid.

    Returns ``(nodes, density)``. Breakpoints sit at ``r`` and ``v`` where the
    two indicator functions jump.
    """
    lo = 0.5 * min(r, v) if v > 0 else 0.5 * r
    hi = max(r, v) * np.exp(60.0 / beta)
    cuts = sorted({np.log(lo), np.log(hi), np.log(r)} | ({np.log(v)} if v > 0 else set()))
    edges = np.unique(np.concatenate([np.linspace(a, b, panels + 1) for a, b in zip(cuts[:-1], cuts[1:])]))
    s, w = _gauss_panels(edges, order)
    lam = np.exp(s)
    like = np.where(lam >= v, 1.0 / lam, 0.0)
    prior = np.where(lam >= r, beta * r**beta / lam ** (beta + 1.0), 0.0)
    unnorm = like * prior
    Z = np.sum(w * lam * unnorm)
    return lam, unnorm / Z


def predictive_rule(beta, r, order=24, tail_panels=30):
    """Nodes and weights with ``sum(w * f(v)) ~ E_h[f(v)]``.

    Exact on ``[0, r]`` for polynomials; on ``[r, inf)`` the substitution
    ``v = r e^y`` turns the tail into exponentially decaying integrands, which
    composite Gauss-Legendre handles for any ``f`` growing at most like
    ``v^2``. The tail is cut where ``e^{-(beta - 2) y} < e^{-40}``.
    """
    if not beta > 2:
        raise MomentUndefinedError("beta must exceed 2")
    x, w = np.polynomial.legendre.leggauss(order)
    body_v = 0.5 * r * (x + 1.0)
    body_w = 0.5 * r * w * beta / ((beta + 1.0) * r)
    y_fast = 12.0 / beta
    y_end = max(40.0 / (beta - 2.0), y_fast + 1.0)
    edges = np.unique(
        np.concatenate([np.linspace(0.0, y_fast, 7), np.linspace(y_fast, y_end, tail_panels + 1)])
    )
    y, wy = _gauss_panels(edges, order)
    tail_v = r * np.exp(y)
    tail_w = wy * beta / (beta + 1.0) * np.exp(-beta * y)
    return np.concatenate([body_v, tail_v]), np.concatenate([body_w, tail_w])


def predictive_expectation(func, beta, r, k, order=24, tail_panels=30):
    """``E[func(v)]`` under the product predictive of the first ``k`` coordinates.

    ``func`` maps an ``(n_nodes, m)`` array of disturbance vectors to
    ``n_nodes`` values. Tensor-product rule; intended for k <= 2.
    """
    beta = np.asarray(beta, dtype=float)
    r = np.asarray(r, dtype=float)
    m = beta.size
    rules = [predictive_rule(beta[i], r[i], order, tail_panels) for i in range(k)]
    if k == 0:
        return float(func(np.zeros((1, m)))[0])
    grids = np.meshgrid(*[nv for nv, _ in rules], indexing="ij")
    wgrid = np.ones_like(grids[0])
    for i, (_, wv) in enumerate(rules):
        shape = [1] * k
        shape[i] = wv.size
        wgrid = wgrid * wv.reshape(shape)
    V = np.zeros((grids[0].size, m))
    for i in range(k):
        V[:, i] = grids[i].ravel()
    return float(np.sum(wgrid.ravel() * func(V)))


def posterior_lambda_moments(beta, r, k):
    """Mean vector and second-moment matrix of lambda under independent Pareto posteriors."""
    m = len(beta)
    mean = np.zeros(m)
    second = np.zeros((m, m))
    for i in range(k):
        mean[i] = quadrature_moment(beta[i], r[i], "lambda")
        second[i, i] = quadrature_moment(beta[i], r[i], "lambda2")
    for i in range(k):
        for j in range(k):
            if i != j:
                second[i, j] = mean[i] * mean[j]
    return mean, second


def bellman_objective(sc, rc, n, x, r, u, order=24, tail_panels=30):
    """Stage-n objective ``u'k u + E[y's y] + E[W_{n+1}(x', r')] (phi-weighted)``
    computed by quadrature, for any value-function coefficients ``rc``."""
    from .recursion import quadratic_value, stage_betas

    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    st = sc.effective_stage(n)
    m, k = sc.m, sc.k
    beta = stage_betas(sc.prior.beta, n)
    mean, second = posterior_lambda_moments(beta, r, k)
    Sxx, Sxl, Sll = st.blocks()
    stage = x @ Sxx @ x + 2.0 * x @ Sxl @ mean + np.sum(Sll * second)
    A1, B1, C1 = rc.continuation(n)
    z = st.alpha @ x + st.b @ u

    def cont(V):
        xs = z[None, :] + V @ st.c.T
        rs = np.maximum(r[None, :], V)
        rs[:, k:] = 0.0
        return np.einsum("ni,ij,nj->n", xs, A1, xs) + 2 * np.einsum(
            "ni,ij,nj->n", rs, B1, xs
        ) + 2 * np.einsum("ni,ij,nj->n", rs, C1, rs)

    future = predictive_expectation(cont, beta, r, k, order, tail_panels)
    return float(u @ st.kmat @ u + stage + future)


def mc_predictive_moments(beta, r, draws, rng):
    """Sample ``lambda ~ Pareto(beta, r)``, ``v ~ U[0, lambda]``.

    Returns ``{name: (mean, standard_error)}`` for v, v^2, max(r, v),
    max(r, v)^2 and v max(r, v).
    """
    lam = r * (1.0 - rng.random(draws)) ** (-1.0 / beta)
    v = rng.random(draws) * lam
    top = np.maximum(r, v)
    samples = {"v": v, "v2": v * v, "max": top, "max2": top * top, "vmax": v * top}
    return {
        k: (float(s.mean()), float(s.std(ddof=1) / np.sqrt(draws))) for k, s in samples.items()
    }


def _grid(spec):
    lo, hi, step = spec
    count = int(round((hi - lo) / step))
    return lo + step * np.arange(count + 1)


class GridOracle:
    """Brute-force dynamic program for scalar scenarios (m = k = 1, M <= 3).

    Uses the scale invariance ``W_n(x, r) = r^2 w_n(x / r)`` (costs and
    disturbances scale together with r), so the state grid is over the
    normalized state ``xi = x / r`` and controls are ``u = r * omega``. The
    r-dimension needs no grid and the beta-dimension is deterministic.
    Successor states beyond the xi-grid take the value at the nearest edge,
    so results are only trusted well inside the grid; lookups outside it
    raise ``ExtrapolationError``.
    """

    def __init__(self, sc, u_grid=(-4.0, 4.0, 0.01), x_grid=(-8.0, 8.0, 0.02), order=16, tail_panels=10):
        if sc.m != 1 or sc.k != 1 or sc.M > 3:
            raise InvalidInputError("grid oracle needs m = 1, k = 1 and M <= 3")
        self.sc = sc
        self.xi = _grid(x_grid)
        self.x_step = x_grid[2]
        omega = _grid(u_grid)
        self.omega = omega[np.argsort(np.abs(omega), kind="stable")]
        self.u_step = u_grid[2]
        probs = sc.horizon.probs
        self.phi = np.array([probs[n:].sum() for n in range(sc.M + 1)])
        self.rules = []
        self.stage_means = []
        for n in range(sc.M + 1):
            beta = sc.prior.beta[0] + n
            self.rules.append(predictive_rule(beta, 1.0, order, tail_panels))
            self.stage_means.append(
                (quadrature_moment(beta, 1.0, "lambda"), quadrature_moment(beta, 1.0, "lambda2"))
            )
        self.values = [None] * (sc.M + 2)
        self.values[sc.M + 1] = np.zeros_like(self.xi)
        self.actions = [None] * (sc.M + 1)
        for n in range(sc.M, -1, -1):
            self._solve_stage(n)

    def _scalars(self, n):
        st = self.sc.effective_stage(n)
        return st.alpha[0, 0], st.b[0, 0], st.c[0, 0], st.s, st.kmat[0, 0]

    def _expect_next(self, n, z):
        """``E[r'^2 w_{n+1}(x' / r')]`` at r = 1 for an array of ``z = alpha xi + b omega``."""
        if n == self.sc.M:
            return np.zeros_like(z)
        _, _, c, _, _ = self._scalars(n)
        nodes, weights = self.rules[n]
        top = np.maximum(1.0, nodes)
        arg = (z[..., None] + c * nodes) / top
        w_next = np.interp(arg, self.xi, self.values[n + 1])
        return np.sum(w_next * (weights * top**2), axis=-1)

    def q_values(self, n, xi, omega):
        """phi-weighted objective on a (len(xi), len(omega)) table at r = 1."""
        alpha, b, _, s, kk = self._scalars(n)
        mean, second = self.stage_means[n]
        xi = np.asarray(xi, dtype=float)[:, None]
        stage = s[0, 0] * xi**2 + 2.0 * s[0, 1] * xi * mean + s[1, 1] * second
        z = alpha * xi + b * omega[None, :]
        return self.phi[n] * (kk * omega[None, :] ** 2 + stage) + self._expect_next(n, z)

    def _solve_stage(self, n, chunk=8):
        vals = np.empty_like(self.xi)
        acts = np.empty_like(self.xi)
        for start in range(0, self.xi.size, chunk):
            q = self.q_values(n, self.xi[start : start + chunk], self.omega)
            idx = np.argmin(q, axis=1)
            rows = np.arange(q.shape[0])
            vals[start : start + chunk] = q[rows, idx]
            acts[start : start + chunk] = self.omega[idx]
        self.values[n] = vals
        self.actions[n] = acts

    def value(self, n, x, r):
        """Oracle estimate of the normalized Bayes risk ``W_n(x, r)``."""
        xi = x / r
        self._check(xi)
        return r**2 * float(np.interp(xi, self.xi, self.values[n])) / self.phi[n]

    def action(self, n, x, r):
        """Minimize over the control grid at the exact state (no state lookup)."""
        xi = float(x) / float(r)
        self._check(xi)
        q = self.q_values(n, np.array([xi]), self.omega)[0]
        return float(r) * float(self.omega[np.argmin(q)])

    def table_action(self, n, x, r):
        xi = float(x) / float(r)
        self._check(xi)
        idx = int(np.argmin(np.abs(self.xi - xi)))
        return float(r) * float(self.actions[n][idx])

    def _check(self, xi):
        if not self.xi[0] <= xi <= self.xi[-1]:
            raise ExtrapolationError(
                f"normalized state {xi:.4g} outside [{self.xi[0]}, {self.xi[-1]}]; widen x_grid"
            )


class GridOraclePolicy:
    """Closed-loop policy reading actions from a ``GridOracle`` table."""

    def __init__(self, oracle, tol=DEFAULT_TOL):
        self.oracle = oracle
        self.sc = oracle.sc
        self.tol = tol
        self.reset()

    def reset(self):
        self.state = init_filter(self.sc.prior)
        self._last = None

    def act(self, n, x):
        x = np.asarray(x, dtype=float)
        u = np.array([self.oracle.table_action(n, x[0], self.state.r[0])])
        self._last = (n, x, u)
        return u

    def observe(self, x_next):
        n, x, u = self._last
        st = self.sc.effective_stage(n)
        v = recover_disturbance(x_next, x, u, st, self.sc.k, self.tol)
        self.state = update_posterior(self.state, v, self.tol)


@dataclass(frozen=True)
class GridOraclePolicyFactory:
    oracle: GridOracle

    def __call__(self):
        return GridOraclePolicy(self.oracle)


def grid_oracle_policy(sc, u_grid=(-4.0, 4.0, 0.01), x_grid=(-8.0, 8.0, 0.02), **kw):
    return GridOraclePolicy(GridOracle(sc, u_grid, x_grid, **kw))
