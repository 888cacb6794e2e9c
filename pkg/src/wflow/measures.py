"""Probability measures with finite second moments.

Two closed-form families are supported: weighted particle clouds
(``DiscreteMeasure``) and Gaussians (``GaussianMeasure``).  Both are
immutable after construction and safe to share across threads; every
operation in this module is pure.
"""

from __future__ import annotations

import numpy as np

from .errors import NonAffineOnGaussian

# Construction tolerances.  Weights are renormalized when they sum to 1
# within WEIGHT_SUM_TOL, otherwise construction fails; covariance
# eigenvalues below -PSD_TOL are rejected, small negatives are clamped.
WEIGHT_SUM_TOL = 1e-9
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-12
SQRT_EIG_CLAMP = 1e-14


class AffineMap:
    """Pointwise map ``x -> A @ x + b``.

    Affine maps are the only pushforwards that keep the Gaussian family
    closed, and translations realize exact Wasserstein displacements.
    """

    def __init__(self, matrix, offset):
        self.matrix = np.array(matrix, dtype=float)
        self.offset = np.array(offset, dtype=float).reshape(-1)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("matrix must be square")
        if self.matrix.shape[0] != self.offset.shape[0]:
            raise ValueError("matrix and offset dimensions differ")
        self.matrix.flags.writeable = False
        self.offset.flags.writeable = False

    @classmethod
    def translation(cls, offset):
        offset = np.array(offset, dtype=float).reshape(-1)
        return cls(np.eye(offset.shape[0]), offset)

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self):
        return self.offset.shape[0]

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.matrix.T + self.offset


class DiscreteMeasure:
    """Weighted particle cloud ``sum_i w_i delta_{x_i}`` in R^d.

    Parameters
    ----------
    points : array_like, shape (n, d) or (n,)
        Support locations; a 1-d array is treated as n points in R^1.
    weights : array_like, shape (n,), optional
        Nonnegative weights.  Defaults to uniform.  Weights must sum to 1
        within ``WEIGHT_SUM_TOL``; they are renormalized to machine
        precision, which tolerates I/O rounding without masking bugs.
    """

    def __init__(self, points, weights=None):
        points = np.array(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("points must be a nonempty (n, d) array")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must be finite")
        n = points.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.array(weights, dtype=float).reshape(-1)
        if weights.shape[0] != n:
            raise ValueError("weights length does not match number of points")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1 within {WEIGHT_SUM_TOL}")
        if total != 1.0:
            weights = weights / total
            # Absorb the remaining ulps into the largest weight so stored
            # vectors sum to exactly 1.0 and pass through weight-preserving
            # operations bit-for-bit.
            residual = 1.0 - float(weights.sum())
            if residual != 0.0:
                weights = weights.copy()
                weights[int(np.argmax(weights))] += residual
        points.flags.writeable = False
        weights.flags.writeable = False
        self.points = points
        self.weights = weights

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def mean(self):
        return self.weights @ self.points

    def second_moment(self):
        return float(self.weights @ np.sum(self.points**2, axis=1))

    def __repr__(self):
        return f"DiscreteMeasure(n={self.n}, dim={self.dim})"


class GaussianMeasure:
    """Gaussian measure N(mean, cov) with symmetric PSD covariance.

    The eigendecomposition is computed once and cached; eigenvalues in
    ``[-PSD_TOL, 0)`` are clamped to zero, more negative ones are
    rejected.  Strict positive definiteness (``is_positive_definite``)
    is required wherever membership among regular measures matters,
    e.g. the entropy domain.
    """

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError("cov must be (d, d) matching the mean")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("mean and cov must be finite")
        asym = float(np.max(np.abs(cov - cov.T))) if d else 0.0
        if asym > SYMMETRY_TOL:
            raise ValueError(f"cov asymmetric by {asym:.3e} (> {SYMMETRY_TOL})")
        cov = (cov + cov.T) / 2.0
        evals, evecs = np.linalg.eigh(cov)
        if evals.min() < -PSD_TOL:
            raise ValueError(f"cov has eigenvalue {evals.min():.3e} < -{PSD_TOL}")
        evals = np.maximum(evals, 0.0)
        for arr in (mean, cov, evals, evecs):
            arr.flags.writeable = False
        self.mean_vec = mean
        self.cov = cov
        self._evals = evals
        self._evecs = evecs

    @property
    def dim(self):
        return self.mean_vec.shape[0]

    @property
    def eigenvalues(self):
        return self._evals

    @property
    def eigenvectors(self):
        return self._evecs

    @property
    def is_positive_definite(self):
        return bool(self._evals.min() > 0.0)

    def sqrt_cov(self):
        """Symmetric square root of the covariance.

        Near-zero eigenvalues are clamped at ``SQRT_EIG_CLAMP`` so that
        downstream Bures formulas stay finite near singularity.
        """
        w = np.maximum(self._evals, SQRT_EIG_CLAMP)
        return (self._evecs * np.sqrt(w)) @ self._evecs.T

    def mean(self):
        return self.mean_vec

    def second_moment(self):
        return float(self.mean_vec @ self.mean_vec + np.trace(self.cov))

    def __repr__(self):
        return f"GaussianMeasure(dim={self.dim})"


Measure = DiscreteMeasure | GaussianMeasure


def dirac(point):
    """Point mass at ``point`` as a one-atom DiscreteMeasure."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    return DiscreteMeasure(point.reshape(1, -1), np.array([1.0]))


def second_moment(mu: Measure) -> float:
    """Integral of ||x||^2 against ``mu``; always finite on both families."""
    return mu.second_moment()


def pushforward(mu: Measure, mapping) -> Measure:
    """Image measure of ``mu`` under a pointwise map.

    Discrete measures accept any callable on (n, d) point arrays and keep
    their weight vector.  Gaussian measures require an :class:`AffineMap`
    ``x -> Ax + b`` and map to ``N(A m + b, A cov A^T)``.

    Raises
    ------
    NonAffineOnGaussian
        If ``mu`` is Gaussian and ``mapping`` is not an AffineMap.
    """
    if isinstance(mu, DiscreteMeasure):
        new_points = np.asarray(mapping(mu.points), dtype=float)
        if new_points.ndim == 1:
            new_points = new_points.reshape(-1, 1)
        return DiscreteMeasure(new_points, mu.weights)
    if isinstance(mu, GaussianMeasure):
        if not isinstance(mapping, AffineMap):
            raise NonAffineOnGaussian(
                "pushforward of a Gaussian requires an affine map"
            )
        new_mean = mapping.matrix @ mu.mean_vec + mapping.offset
        new_cov = mapping.matrix @ mu.cov @ mapping.matrix.T
        new_cov = (new_cov + new_cov.T) / 2.0
        return GaussianMeasure(new_mean, new_cov)
    raise TypeError(f"not a measure: {mu!r}")


def measure_to_json(mu: Measure) -> dict:
    """JSON-ready dict; round-trips bit-faithfully for finite doubles."""
    if isinstance(mu, DiscreteMeasure):
        return {
            "type": "discrete",
            "points": mu.points.tolist(),
            "weights": mu.weights.tolist(),
        }
    if isinstance(mu, GaussianMeasure):
        return {
            "type": "gaussian",
            "mean": mu.mean_vec.tolist(),
            "cov": mu.cov.tolist(),
        }
    raise TypeError(f"not a measure: {mu!r}")


def measure_from_json(obj: dict) -> Measure:
    kind = obj.get("type")
    if kind == "discrete":
        return DiscreteMeasure(obj["points"], obj["weights"])
    if kind == "gaussian":
        return GaussianMeasure(obj["mean"], obj["cov"])
    raise ValueError(f"unknown measure type: {kind!r}")
