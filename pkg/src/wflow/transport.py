"""Exact Wasserstein distances, optimal plans and maps on the supported families.

The exact LP solver is the ground-truth coupling solver in every
certificate; the entropic solver exists only as a labeled diagnostic.
One-dimensional distances use the quantile-function coupling computed
exactly on the merged cumulative partition, Gaussian distances use the
closed Bures form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import ndtri

from .errors import (
    DimensionMismatch,
    EvalUnsupported,
    NotConverged,
    SingularCovariance,
    SizeCapExceeded,
    WflowError,
)
from .measures import (
    SQRT_EIG_CLAMP,
    AffineMap,
    DiscreteMeasure,
    GaussianMeasure,
    Measure,
    pushforward,
)

DEFAULT_SIZE_CAP = 10**6
PLAN_FEASIBILITY_TOL = 1e-10


@dataclass
class TransportPlan:
    """Coupling between two discrete measures together with its cost.

    ``coupling[i, j]`` is the mass moved from atom i of ``row`` to atom j
    of ``col``; ``cost`` is ``sum coupling * ||x_i - y_j||**p``.
    """

    row: DiscreteMeasure
    col: DiscreteMeasure
    coupling: np.ndarray
    cost: float
    p: float = 2.0

    def validate(self, tol: float = PLAN_FEASIBILITY_TOL):
        if np.any(self.coupling < -tol):
            raise ValueError("coupling has negative entries")
        row_err = float(np.max(np.abs(self.coupling.sum(axis=1) - self.row.weights)))
        col_err = float(np.max(np.abs(self.coupling.sum(axis=0) - self.col.weights)))
        if row_err > tol or col_err > tol:
            raise ValueError(f"marginal violation row={row_err:.2e} col={col_err:.2e}")
        recomputed = float(np.sum(self.coupling * _cost_matrix(self.row, self.col, self.p)))
        if abs(recomputed - self.cost) > tol:
            raise ValueError(f"cost inconsistent by {abs(recomputed - self.cost):.2e}")

    def to_json(self) -> dict:
        from .measures import measure_to_json

        return {
            "row": measure_to_json(self.row),
            "col": measure_to_json(self.col),
            "coupling": self.coupling.tolist(),
            "cost": self.cost,
            "p": self.p,
        }


@dataclass
class SinkhornResult:
    """Entropic approximation of a coupling; diagnostic only."""

    cost: float
    coupling: np.ndarray
    row_residual: float
    col_residual: float
    iterations: int
    converged: bool


def _cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> np.ndarray:
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    if p == 2.0:
        return sq
    return np.sqrt(sq) ** p


def _quantile_partition(mu: DiscreteMeasure):
    """Sorted support and cumulative weights; ties broken by stable sort."""
    xs = mu.points[:, 0]
    order = np.argsort(xs, kind="stable")
    cum = np.cumsum(mu.weights[order])
    cum[-1] = 1.0
    return xs[order], cum


def quantile_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Exact value of ``int_0^1 |F_mu^-1(t) - F_nu^-1(t)|^p dt``.

    Computed by merging the two cumulative-weight partitions; every
    quantile function is piecewise constant on the merged intervals so
    the integral is a finite sum.
    """
    xa, ca = _quantile_partition(mu)
    xb, cb = _quantile_partition(nu)
    edges = np.unique(np.concatenate([[0.0], ca, cb]))
    edges[-1] = 1.0
    lengths = np.diff(edges)
    mids = (edges[:-1] + edges[1:]) / 2.0
    ia = np.searchsorted(ca, mids, side="left")
    ib = np.searchsorted(cb, mids, side="left")
    diffs = np.abs(xa[ia] - xb[ib])
    keep = lengths > 0.0
    return float(np.sum(lengths[keep] * diffs[keep] ** p))


def wp_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """W_p distance between one-dimensional discrete measures.

    Parameters
    ----------
    mu, nu : DiscreteMeasure
        One-dimensional measures.
    p : float
        Exponent in [1, 2].

    Returns
    -------
    float
        ``(int_0^1 |F_mu^-1 - F_nu^-1|^p dt)^(1/p)``, exact up to
        floating point.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionMismatch("wp_1d requires one-dimensional measures")
    if not 1.0 <= p <= 2.0:
        raise ValueError("p must lie in [1, 2]")
    return quantile_cost(mu, nu, p) ** (1.0 / p)


def w2_discrete(
    mu: DiscreteMeasure, nu: DiscreteMeasure, size_cap: int = DEFAULT_SIZE_CAP
) -> TransportPlan:
    """Optimal coupling for squared-Euclidean cost via an exact LP solve.

    The transportation problem is solved to exact optimality with the
    HiGHS simplex; the returned ``cost`` is the squared distance W_2^2.

    Raises
    ------
    DimensionMismatch
        If the supports live in different dimensions.
    SizeCapExceeded
        If ``n * m`` exceeds ``size_cap``.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dim {mu.dim} vs {nu.dim}")
    n, m = mu.n, nu.n
    if n * m > size_cap:
        raise SizeCapExceeded(f"{n}x{m} coupling exceeds cap {size_cap}")
    cost_mat = _cost_matrix(mu, nu, 2.0)

    # Row-sum constraints for all rows, column sums for all but the last
    # column (redundant given equal total mass).
    idx = np.arange(n * m)
    row_of = idx // m
    col_of = idx % m
    con_rows = [row_of]
    var_cols = [idx]
    keep = col_of < m - 1
    con_rows.append(n + col_of[keep])
    var_cols.append(idx[keep])
    entries = np.concatenate(con_rows)
    a_eq = sparse.coo_matrix(
        (np.ones(entries.shape[0]), (entries, np.concatenate(var_cols))),
        shape=(n + m - 1, n * m),
    ).tocsr()
    b_eq = np.concatenate([mu.weights, nu.weights[:-1]])
    res = linprog(
        cost_mat.reshape(-1),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise WflowError(f"exact transport LP failed: {res.message}")
    coupling = res.x.reshape(n, m)
    plan = TransportPlan(mu, nu, coupling, float(np.sum(coupling * cost_mat)), 2.0)
    plan.validate()
    return plan


def w2_sinkhorn(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    reg: float,
    max_iter: int = 200_000,
    tol: float = 1e-9,
) -> SinkhornResult:
    """Entropic approximation of the squared-cost coupling (diagnostic).

    Log-domain scaling iterations; reports marginal-constraint residuals
    and is excluded from every certificate.

    Raises
    ------
    NotConverged
        If the marginal residual is still above ``tol`` after
        ``max_iter`` iterations; the exception carries the residual.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dim {mu.dim} vs {nu.dim}")
    if reg <= 0:
        raise ValueError("reg must be positive")
    cost_mat = _cost_matrix(mu, nu, 2.0)
    with np.errstate(divide="ignore"):
        log_a = np.log(mu.weights)
        log_b = np.log(nu.weights)
    log_k = -cost_mat / reg
    f = np.zeros(mu.n)
    g = np.zeros(nu.n)
    row_res = col_res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = log_a - _logsumexp(log_k + g[None, :], axis=1)
        g = log_b - _logsumexp(log_k + f[:, None], axis=0)
        log_plan = f[:, None] + log_k + g[None, :]
        row_res = float(np.max(np.abs(np.exp(_logsumexp(log_plan, axis=1)) - mu.weights)))
        col_res = float(np.max(np.abs(np.exp(_logsumexp(log_plan, axis=0)) - nu.weights)))
        if max(row_res, col_res) < tol:
            coupling = np.exp(log_plan)
            return SinkhornResult(
                cost=float(np.sum(coupling * cost_mat)),
                coupling=coupling,
                row_residual=row_res,
                col_residual=col_res,
                iterations=it,
                converged=True,
            )
    raise NotConverged(
        f"sinkhorn residual {max(row_res, col_res):.3e} > {tol} after {max_iter} iterations",
        residual=max(row_res, col_res),
    )


def _logsumexp(a, axis):
    amax = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root with eigenvalue clamp at SQRT_EIG_CLAMP."""
    mat = (mat + mat.T) / 2.0
    w, v = np.linalg.eigh(mat)
    w = np.maximum(w, SQRT_EIG_CLAMP)
    return (v * np.sqrt(w)) @ v.T


def bures_cost_squared(g1: GaussianMeasure, g2: GaussianMeasure) -> float:
    """Squared Bures-Wasserstein distance between two Gaussians."""
    if g1.dim != g2.dim:
        raise DimensionMismatch(f"dim {g1.dim} vs {g2.dim}")
    dm = g1.mean_vec - g2.mean_vec
    s1 = g1.sqrt_cov()
    cross = _sqrtm_psd(s1 @ g2.cov @ s1)
    val = float(dm @ dm + np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross))
    return max(val, 0.0)


def w2_gaussian(g1: GaussianMeasure, g2: GaussianMeasure, with_map: bool = True):
    """Bures-Wasserstein distance and the optimal affine map.

    ``cost**2 = ||m1 - m2||^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2})``
    and the map is ``T(x) = m2 + A (x - m1)`` with
    ``A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2}``.

    Returns
    -------
    (float, AffineMap | None)
        The distance and, when ``with_map``, the optimal map.

    Raises
    ------
    SingularCovariance
        When the map is requested with a singular source covariance.
    """
    cost = np.sqrt(bures_cost_squared(g1, g2))
    if not with_map:
        return cost, None
    if not g1.is_positive_definite:
        raise SingularCovariance("optimal map needs strictly PD source covariance")
    w, v = np.linalg.eigh(g1.cov)
    w = np.maximum(w, SQRT_EIG_CLAMP)
    s1 = (v * np.sqrt(w)) @ v.T
    s1_inv = (v / np.sqrt(w)) @ v.T
    cross = _sqrtm_psd(s1 @ g2.cov @ s1)
    a_mat = s1_inv @ cross @ s1_inv
    a_mat = (a_mat + a_mat.T) / 2.0
    offset = g2.mean_vec - a_mat @ g1.mean_vec
    return cost, AffineMap(a_mat, offset)


def barycenter_1d(measures, weights) -> DiscreteMeasure:
    """Quantile-average barycenter of one-dimensional discrete measures.

    The output's quantile function is the weighted average of the input
    quantile functions on the merged cumulative partition.
    """
    if len(measures) == 0:
        raise ValueError("need at least one measure")
    for m in measures:
        if m.dim != 1:
            raise DimensionMismatch("barycenter_1d requires one-dimensional measures")
    lam = np.array(weights, dtype=float).reshape(-1)
    if lam.shape[0] != len(measures) or np.any(lam < 0):
        raise ValueError("weights must be nonnegative, one per measure")
    total = float(lam.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError("barycenter weights must sum to 1")
    lam = lam / total

    parts = [_quantile_partition(m) for m in measures]
    edges = np.unique(np.concatenate([[0.0]] + [c for _, c in parts]))
    edges[-1] = 1.0
    lengths = np.diff(edges)
    mids = (edges[:-1] + edges[1:]) / 2.0
    points = np.zeros_like(mids)
    for lk, (xs, cum) in zip(lam, parts):
        points += lk * xs[np.searchsorted(cum, mids, side="left")]
    keep = lengths > 0
    points, lengths = points[keep], lengths[keep]
    # Coalesce exactly-equal adjacent atoms created by partition splits.
    out_pts = [points[0]]
    out_wts = [lengths[0]]
    for x, w in zip(points[1:], lengths[1:]):
        if x == out_pts[-1]:
            out_wts[-1] += w
        else:
            out_pts.append(x)
            out_wts.append(w)
    return DiscreteMeasure(np.array(out_pts).reshape(-1, 1), np.array(out_wts))


def gaussian_quantile_discretization(g: GaussianMeasure, n: int) -> DiscreteMeasure:
    """Equal-weight n-point quantile discretization of a 1D Gaussian."""
    if g.dim != 1:
        raise DimensionMismatch("quantile discretization is one-dimensional")
    std = float(np.sqrt(max(g.cov[0, 0], 0.0)))
    qs = (np.arange(n) + 0.5) / n
    pts = g.mean_vec[0] + std * ndtri(qs)
    return DiscreteMeasure(pts.reshape(-1, 1))


def w2_squared(a: Measure, b: Measure) -> float:
    """Exact squared W_2 on supported pairs.

    Gaussian/Gaussian uses the Bures form, 1D discrete pairs the quantile
    coupling, higher-dimensional discrete pairs the exact LP.
    """
    if isinstance(a, GaussianMeasure) and isinstance(b, GaussianMeasure):
        return bures_cost_squared(a, b)
    if isinstance(a, DiscreteMeasure) and isinstance(b, DiscreteMeasure):
        if a.dim != b.dim:
            raise DimensionMismatch(f"dim {a.dim} vs {b.dim}")
        if a.dim == 1:
            return quantile_cost(a, b, 2.0)
        return w2_discrete(a, b).cost
    raise EvalUnsupported("exact W_2 between discrete and Gaussian is not supported")


def w2(a: Measure, b: Measure) -> float:
    return float(np.sqrt(max(w2_squared(a, b), 0.0)))


def wp_distance(a: Measure, b: Measure, p: float, grid: int = 10_000) -> float:
    """W_p on the supported families, exact where possible.

    For ``p == 2`` on exact pairs this delegates to :func:`w2`.  Other
    exponents (and Gaussian/discrete pairs) are one-dimensional only and
    use the quantile method, with Gaussians discretized on ``grid``
    quantile midpoints.
    """
    if not 1.0 <= p <= 2.0:
        raise ValueError("p must lie in [1, 2]")
    if p == 2.0 and (
        isinstance(a, GaussianMeasure) == isinstance(b, GaussianMeasure)
    ):
        return w2(a, b)
    da = a.dim
    if da != b.dim:
        raise DimensionMismatch(f"dim {da} vs {b.dim}")
    if da != 1:
        raise EvalUnsupported("W_p for p != 2 is supported in one dimension only")
    ad = a if isinstance(a, DiscreteMeasure) else gaussian_quantile_discretization(a, grid)
    bd = b if isinstance(b, DiscreteMeasure) else gaussian_quantile_discretization(b, grid)
    return wp_1d(ad, bd, p)


def optimal_assignment(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """Optimal permutation between equal-size, equal-weight supports.

    Returns ``perm`` such that atom i of ``mu`` is matched to atom
    ``perm[i]`` of ``nu``; the induced coupling is an optimal plan for
    squared cost.
    """
    if mu.n != nu.n:
        raise DimensionMismatch("assignment needs equal support sizes")
    if not (
        np.allclose(mu.weights, 1.0 / mu.n, atol=1e-12)
        and np.allclose(nu.weights, 1.0 / nu.n, atol=1e-12)
    ):
        raise ValueError("assignment requires uniform weights on both sides")
    rows, cols = linear_sum_assignment(_cost_matrix(mu, nu, 2.0))
    perm = np.empty(mu.n, dtype=int)
    perm[rows] = cols
    return perm


def translate(mu: Measure, offset) -> Measure:
    """Pushforward by a translation; W_2 displacement equals ``||offset||``."""
    offset = np.atleast_1d(np.asarray(offset, dtype=float))
    return pushforward(mu, AffineMap.translation(offset))
