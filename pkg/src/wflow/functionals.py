"""Energy functionals on the supported measure families.

A functional is one of: a potential energy ``mu -> int g dmu``, an
interaction energy with a displacement kernel, the Gaussian-only
(negative) entropy, or a sum of those.  Evaluation returns ``+inf``
outside the domain rather than raising; unsupported variant/measure
pairs raise :class:`EvalUnsupported`.

Sign convention: entropy is ``Ent(mu) = int rho log rho`` (negative
differential entropy), so the free energy is ``int F dmu + Ent(mu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    EvalUnsupported,
    GradientUnavailable,
    NoClosedFormMinimizer,
    ProxUnavailable,
)
from .measures import DiscreteMeasure, GaussianMeasure, Measure, dirac

LOG_2PI_E = math.log(2.0 * math.pi) + 1.0

_PROX_CHECK_SAMPLES = 20
_PROX_CHECK_TOL = 1e-6


def _grid_refine_min(fun, lo: float, hi: float, rounds: int = 24, pts: int = 65):
    """Iteratively zoomed grid minimization of a scalar function."""
    best_x, best_f = lo, float(fun(np.array([lo]))[0])
    for _ in range(rounds):
        xs = np.linspace(lo, hi, pts)
        vals = np.asarray(fun(xs), dtype=float)
        k = int(np.argmin(vals))
        if vals[k] < best_f:
            best_f, best_x = float(vals[k]), float(xs[k])
        step = (hi - lo) / (pts - 1)
        lo, hi = best_x - step, best_x + step
        if step < 1e-15:
            break
    return best_x, best_f


class PotentialSpec:
    """Pointwise potential g with optional gradient and proximity operator.

    All callables are vectorized over point arrays: ``value`` maps
    ``(n, d) -> (n,)``, ``grad`` maps ``(n, d) -> (n, d)`` and ``prox``
    maps ``((n, d), tau) -> (n, d)``.

    A user-supplied prox must pass a randomized spot-check at
    construction (sampled scalar inputs against a grid-refinement
    minimization of ``g(y) + (y - x)^2 / (2 tau)``); this prevents
    silently wrong-prox experiments.  Pass ``check_prox=False`` for
    potentials undefined in one dimension.
    """

    def __init__(
        self,
        value,
        grad=None,
        prox=None,
        strong_convexity: float = 0.0,
        grad_lipschitz: float | None = None,
        quadratic: tuple[float, np.ndarray] | None = None,
        argmin_point=None,
        name: str = "potential",
        check_prox: bool = True,
    ):
        if strong_convexity < 0.0:
            raise ValueError("strong_convexity must be >= 0")
        if grad_lipschitz is not None:
            if grad_lipschitz <= 0.0:
                raise ValueError("grad_lipschitz must be > 0")
            if strong_convexity > grad_lipschitz + 1e-12:
                raise ValueError("strong_convexity cannot exceed grad_lipschitz")
        self._value = value
        self._grad = grad
        self._prox = prox
        self.strong_convexity = float(strong_convexity)
        self.grad_lipschitz = None if grad_lipschitz is None else float(grad_lipschitz)
        self.quadratic = quadratic
        self.argmin_point = (
            None if argmin_point is None else np.atleast_1d(np.asarray(argmin_point, float))
        )
        self.name = name
        if prox is not None and check_prox:
            self._spot_check_prox()

    @property
    def has_grad(self):
        return self._grad is not None

    @property
    def has_prox(self):
        return self._prox is not None

    def value_at(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self._value(np.asarray(points, float)), dtype=float)

    def grad_at(self, points: np.ndarray) -> np.ndarray:
        if self._grad is None:
            raise GradientUnavailable(f"{self.name} has no gradient")
        return np.asarray(self._grad(np.asarray(points, float)), dtype=float)

    def prox_at(self, points: np.ndarray, tau: float) -> np.ndarray:
        if self._prox is None:
            raise ProxUnavailable(f"{self.name} has no prox")
        return np.asarray(self._prox(np.asarray(points, float), float(tau)), dtype=float)

    def _ambient_dim(self) -> int:
        if self.quadratic is not None:
            return self.quadratic[1].shape[0]
        if self.argmin_point is not None:
            return self.argmin_point.shape[0]
        return 1

    def _spot_check_prox(self):
        rng = np.random.default_rng(20240917)
        d = self._ambient_dim()
        for _ in range(_PROX_CHECK_SAMPLES):
            x = rng.uniform(-5.0, 5.0, size=d)
            tau = float(rng.uniform(0.1, 3.0))
            y = self.prox_at(x[None, :], tau)[0]

            def objective(pts):
                return self.value_at(pts) + np.sum((pts - x) ** 2, axis=1) / (2.0 * tau)

            got = float(objective(y[None, :])[0])
            # Coordinate-wise optimality: the prox output must match the
            # grid minimum along every axis through it.
            span = 10.0 + 3.0 * tau
            for k in range(d):

                def line(ts):
                    pts = np.tile(y, (len(ts), 1))
                    pts[:, k] = ts
                    return objective(pts)

                _, ref = _grid_refine_min(line, y[k] - span, y[k] + span)
                if got > ref + _PROX_CHECK_TOL:
                    raise ValueError(
                        f"prox of {self.name} failed spot-check at x={x}, tau={tau:.4f}: "
                        f"objective {got:.9f} > coordinate minimum {ref:.9f}"
                    )


def grad_potential(spec: PotentialSpec, x) -> np.ndarray:
    """Gradient of the potential at a single point."""
    x = np.atleast_1d(np.asarray(x, float))
    return spec.grad_at(x.reshape(1, -1))[0]


class Functional:
    """Base class; subclasses implement ``value_on``."""

    def __call__(self, mu: Measure) -> float:
        return self.value_on(mu)

    def value_on(self, mu: Measure) -> float:
        raise NotImplementedError


class Potential(Functional):
    """Potential energy ``mu -> int g dmu``."""

    def __init__(self, spec: PotentialSpec):
        self.spec = spec

    def value_on(self, mu: Measure) -> float:
        if isinstance(mu, DiscreteMeasure):
            return float(mu.weights @ self.spec.value_at(mu.points))
        if isinstance(mu, GaussianMeasure):
            if self.spec.quadratic is None:
                raise EvalUnsupported(
                    "potential energy on a Gaussian needs a quadratic potential"
                )
            scale, center = self.spec.quadratic
            dm = mu.mean_vec - center
            return 0.5 * scale * (float(dm @ dm) + float(np.trace(mu.cov)))
        raise EvalUnsupported(f"potential energy undefined on {type(mu).__name__}")


class Interaction(Functional):
    """Interaction energy with displacement kernel V(x - y), V convex."""

    def __init__(self, kernel, name: str = "interaction"):
        self.kernel = kernel
        self.name = name

    def value_on(self, mu: Measure) -> float:
        if not isinstance(mu, DiscreteMeasure):
            raise EvalUnsupported("interaction energy is evaluated on discrete measures")
        diffs = mu.points[:, None, :] - mu.points[None, :, :]
        vals = np.asarray(self.kernel(diffs.reshape(-1, mu.dim)), dtype=float)
        vals = vals.reshape(mu.n, mu.n)
        return float(mu.weights @ vals @ mu.weights)


class EntropyGaussian(Functional):
    """Negative differential entropy, finite on nondegenerate Gaussians only.

    ``Ent(N(m, S)) = -1/2 log((2 pi e)^d det S)``; ``+inf`` on every
    discrete measure and on singular Gaussians.
    """

    def value_on(self, mu: Measure) -> float:
        if isinstance(mu, DiscreteMeasure):
            return math.inf
        if isinstance(mu, GaussianMeasure):
            if not mu.is_positive_definite:
                return math.inf
            log_det = float(np.sum(np.log(mu.eigenvalues)))
            return -0.5 * (mu.dim * LOG_2PI_E + log_det)
        raise EvalUnsupported(f"entropy undefined on {type(mu).__name__}")


class SumFunctional(Functional):
    """Sum of functionals with +inf absorbing."""

    def __init__(self, parts):
        self.parts = list(parts)
        if not self.parts:
            raise ValueError("sum of zero functionals")

    def value_on(self, mu: Measure) -> float:
        total = 0.0
        for part in self.parts:
            v = part.value_on(mu)
            if math.isinf(v) and v > 0:
                return math.inf
            total += v
        return total


def evaluate(f: Functional, mu: Measure) -> float:
    """Extended-real value of the functional at the measure."""
    return f.value_on(mu)


@dataclass
class MinimizerOracle:
    """Closed-form argmin measure and minimal value of a functional."""

    measure: Measure
    value: float


def minimizer(f: Functional) -> MinimizerOracle:
    """Closed-form minimizer where one is known.

    Supported: a pure potential whose pointwise argmin is recorded, and
    the free energy ``(scale/2)||x - b||^2 potential + Gaussian entropy``
    whose minimizer is the Gibbs measure ``N(b, I/scale)``.

    Raises
    ------
    NoClosedFormMinimizer
        For every other shape.
    """
    if isinstance(f, Potential):
        if f.spec.argmin_point is None:
            raise NoClosedFormMinimizer(f"{f.spec.name} has no recorded argmin")
        m = dirac(f.spec.argmin_point)
        return MinimizerOracle(m, f.value_on(m))
    if isinstance(f, SumFunctional) and len(f.parts) == 2:
        pot = next((p for p in f.parts if isinstance(p, Potential)), None)
        ent = next((p for p in f.parts if isinstance(p, EntropyGaussian)), None)
        if pot is not None and ent is not None and pot.spec.quadratic is not None:
            scale, center = pot.spec.quadratic
            if scale > 0:
                gibbs = GaussianMeasure(center, np.eye(center.shape[0]) / scale)
                return MinimizerOracle(gibbs, f.value_on(gibbs))
    raise NoClosedFormMinimizer(f"no closed-form minimizer for {type(f).__name__}")


def quadratic_potential(scale: float = 1.0, center=(0.0,)) -> PotentialSpec:
    """g(x) = (scale/2) ||x - center||^2 with closed-form prox."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    center = np.atleast_1d(np.asarray(center, dtype=float))

    def value(pts):
        return 0.5 * scale * np.sum((pts - center) ** 2, axis=1)

    def grad(pts):
        return scale * (pts - center)

    def prox(pts, tau):
        return (pts + tau * scale * center) / (1.0 + tau * scale)

    return PotentialSpec(
        value,
        grad=grad,
        prox=prox,
        strong_convexity=scale,
        grad_lipschitz=scale,
        quadratic=(scale, center),
        argmin_point=center,
        name=f"quadratic(scale={scale})",
    )


def abs_potential(dim: int = 1) -> PotentialSpec:
    """g(x) = sum_i |x_i| with the soft-threshold prox; no gradient."""

    def value(pts):
        return np.sum(np.abs(pts), axis=1)

    def prox(pts, tau):
        return np.sign(pts) * np.maximum(np.abs(pts) - tau, 0.0)

    return PotentialSpec(
        value,
        prox=prox,
        strong_convexity=0.0,
        argmin_point=np.zeros(dim),
        name="abs",
    )


def quadratic_interaction(scale: float = 1.0) -> Interaction:
    """V(z) = (scale/2) ||z||^2, convex displacement kernel."""

    def kernel(z):
        return 0.5 * scale * np.sum(z * z, axis=1)

    return Interaction(kernel, name=f"quadratic_interaction(scale={scale})")


def free_energy(lam: float, b) -> SumFunctional:
    """(lam/2)||x - b||^2 potential plus Gaussian entropy."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return SumFunctional([Potential(quadratic_potential(lam, b)), EntropyGaussian()])


def make_potential(config: dict) -> PotentialSpec:
    """Potential spec from a config mapping (name + parameters)."""
    kind = config.get("functional")
    if kind == "quadratic_potential":
        return quadratic_potential(
            float(config.get("scale", 1.0)), config.get("center", (0.0,))
        )
    if kind == "abs_potential":
        return abs_potential(int(config.get("dim", 1)))
    raise ConfigError(f"unknown potential: {kind!r}")


def make_functional(config: dict) -> Functional:
    """Functional from a config mapping, e.g. built by experiment files.

    Built-in registry: ``quadratic_potential``, ``abs_potential``,
    ``quadratic_interaction``, ``entropy_gaussian``, ``free_energy``.
    """
    if isinstance(config, str):
        config = {"functional": config}
    kind = config.get("functional")
    if kind in ("quadratic_potential", "abs_potential"):
        return Potential(make_potential(config))
    if kind == "quadratic_interaction":
        return quadratic_interaction(float(config.get("scale", 1.0)))
    if kind == "entropy_gaussian":
        return EntropyGaussian()
    if kind == "free_energy":
        return free_energy(float(config.get("lambda", 1.0)), config.get("b", (0.0,)))
    raise ConfigError(f"unknown functional: {kind!r}")
