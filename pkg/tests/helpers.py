"""Independent oracles and generators shared by the test modules.

Everything here is deliberately implemented differently from the
package (golden-section instead of zoomed grids, explicit polytope
enumeration instead of LP, quadrature instead of closed forms) so that
agreement is evidence, not tautology.
"""

import numpy as np
from scipy.integrate import quad

from wflow.measures import DiscreteMeasure, GaussianMeasure

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_min(f, lo, hi, iters=200):
    """Golden-section minimization of a unimodal scalar function."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
        if b - a < 1e-14:
            break
    x = (a + b) / 2.0
    return x, f(x)


def grid_then_golden(f, lo, hi, coarse=2001):
    """Coarse scan to bracket the minimum, then golden-section refine.

    Safe for non-unimodal but well-behaved objectives on [lo, hi].
    """
    xs = np.linspace(lo, hi, coarse)
    vals = np.array([f(x) for x in xs])
    k = int(np.argmin(vals))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, coarse - 1)]
    return golden_min(f, a, b)


def transport_cost_2x2(w, v, cost):
    """Exact optimum of a 2x2 transportation problem by vertex enumeration.

    The feasible polytope is the segment gamma_11 = t for
    t in [max(0, w1 - v2), min(w1, v1)]; a linear objective attains its
    minimum at an endpoint.
    """
    w1, w2 = w
    v1, v2 = v
    lo = max(0.0, w1 - v2)
    hi = min(w1, v1)
    best = np.inf
    for t in (lo, hi):
        plan = np.array([[t, w1 - t], [v1 - t, w2 - (v1 - t)]])
        best = min(best, float(np.sum(plan * cost)))
    return best


def fd_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function of R^d."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


def entropy_by_quadrature(sigma, mean=0.0):
    """int rho log rho for N(mean, sigma^2) by adaptive quadrature."""

    def integrand(x):
        rho = np.exp(-((x - mean) ** 2) / (2.0 * sigma**2)) / (
            sigma * np.sqrt(2.0 * np.pi)
        )
        return rho * np.log(rho) if rho > 0 else 0.0

    val, _ = quad(integrand, mean - 40 * sigma, mean + 40 * sigma, limit=400)
    return val


def random_discrete(rng, n, d=1, spread=2.0, uniform_weights=False):
    pts = rng.normal(scale=spread, size=(n, d))
    if uniform_weights:
        return DiscreteMeasure(pts)
    return DiscreteMeasure(pts, rng.dirichlet(np.ones(n)))


def random_gaussian(rng, d=1, spread=1.0, min_eig=0.1):
    mean = rng.normal(scale=spread, size=d)
    a = rng.normal(size=(d, d))
    cov = a @ a.T / d + min_eig * np.eye(d)
    return GaussianMeasure(mean, cov)


def quantile_w2sq_bruteforce(mu, nu, grid=200_001):
    """Riemann-sum W_2^2 between 1D discrete measures on a fine t-grid.

    Slow midpoint evaluation of the quantile integral, independent of
    the package's merged-partition computation.
    """
    ts = (np.arange(grid) + 0.5) / grid
    qa = _quantile_eval(mu, ts)
    qb = _quantile_eval(nu, ts)
    return float(np.mean((qa - qb) ** 2))


def _quantile_eval(mu, ts):
    order = np.argsort(mu.points[:, 0], kind="stable")
    xs = mu.points[order, 0]
    cum = np.cumsum(mu.weights[order])
    cum[-1] = 1.0
    return xs[np.searchsorted(cum, ts, side="left")]
