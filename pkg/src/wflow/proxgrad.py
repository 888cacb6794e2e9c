"""Forward-backward splitting in the Wasserstein space, plus ULA.

The operator is ``T_tau = J_{tau,H} o (I - tau grad F)_#``: a gradient
(forward) pushforward for the smooth potential part followed by a
proximal (backward) step for the nonsmooth part.  The stepsize bound
``tau < 1/L`` is a hard precondition, not a warning.  The unadjusted
Langevin update is provided as a sampled, seeded realization of an
inexact step of the same scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonAffineOnGaussian, StepTooLarge
from .functionals import (
    EntropyGaussian,
    Functional,
    Potential,
    PotentialSpec,
    SumFunctional,
)
from .jko import JkoStepResult, StepMode, exact_jko, jko_step
from .measures import AffineMap, DiscreteMeasure, GaussianMeasure, Measure, pushforward


@dataclass
class PgProblem:
    """Composite objective ``G = E_F + H``.

    ``forward`` must carry a gradient and a Lipschitz constant L > 0;
    its strong convexity lambda (possibly 0) enters the refined
    per-step inequality.  ``backward`` is the proximal part, either the
    Gaussian entropy or a prox-equipped potential.
    """

    forward: PotentialSpec
    backward: Functional
    objective: SumFunctional = field(init=False)

    def __post_init__(self):
        if not self.forward.has_grad:
            raise ValueError("forward potential needs a gradient")
        if self.forward.grad_lipschitz is None:
            raise ValueError("forward potential needs a Lipschitz constant")
        if not isinstance(self.backward, (EntropyGaussian, Potential)):
            raise ValueError("backward part must be entropy or a potential")
        if isinstance(self.backward, Potential) and not self.backward.spec.has_prox:
            raise ValueError("backward potential needs a prox")
        self.objective = SumFunctional([Potential(self.forward), self.backward])

    @property
    def lam(self) -> float:
        return self.forward.strong_convexity

    @property
    def lips(self) -> float:
        return self.forward.grad_lipschitz


@dataclass
class PgStepResult:
    """Forward image and (possibly inexact) backward output."""

    eta: Measure
    output: Measure
    exact_output: Measure | None
    mode: str
    epsilon: float
    certified_w2_error: float | None
    certified_energy_gap: float | None
    inner_iterations: int = 0


def _check_tau(tau: float, lips: float | None):
    if tau <= 0:
        raise ValueError("tau must be positive")
    if lips is None:
        raise StepTooLarge("forward step requires a known Lipschitz constant")
    if tau >= 1.0 / lips:
        raise StepTooLarge(f"tau={tau} >= 1/L={1.0 / lips}")


def forward_step(mu: Measure, tau: float, F: PotentialSpec) -> Measure:
    """Pushforward by ``x -> x - tau grad F(x)`` under ``tau < 1/L``.

    Gaussian inputs require an affine gradient (quadratic potential) and
    stay Gaussian.
    """
    _check_tau(tau, F.grad_lipschitz)
    if isinstance(mu, DiscreteMeasure):
        return DiscreteMeasure(mu.points - tau * F.grad_at(mu.points), mu.weights)
    if isinstance(mu, GaussianMeasure):
        if F.quadratic is None:
            raise NonAffineOnGaussian(
                "forward step on a Gaussian needs a quadratic potential"
            )
        scale, center = F.quadratic
        d = mu.dim
        amat = (1.0 - tau * scale) * np.eye(d)
        offset = tau * scale * center
        return pushforward(mu, AffineMap(amat, offset))
    raise TypeError(f"not a measure: {mu!r}")


def exact_pg(mu: Measure, tau: float, prob: PgProblem):
    """Exact forward-backward step; returns (eta, output)."""
    eta = forward_step(mu, tau, prob.forward)
    return eta, exact_jko(eta, tau, prob.backward)


def pg_step(
    mu: Measure,
    tau: float,
    prob: PgProblem,
    mode: StepMode,
    rng: np.random.Generator | None = None,
) -> PgStepResult:
    """One forward-backward step with the backward stage run in ``mode``.

    The inexactness (distance injection or variational inner descent
    with its energy-gap certificate) applies to the backward proximal
    problem with the forward image as input.
    """
    _check_tau(tau, prob.lips)
    eta = forward_step(mu, tau, prob.forward)
    inner: JkoStepResult = jko_step(eta, tau, prob.backward, mode, rng)
    return PgStepResult(
        eta=eta,
        output=inner.output,
        exact_output=inner.exact_output,
        mode=inner.mode,
        epsilon=inner.epsilon,
        certified_w2_error=inner.certified_w2_error,
        certified_energy_gap=inner.certified_energy_gap,
        inner_iterations=inner.inner_iterations,
    )


def ula_step(
    particles: DiscreteMeasure,
    tau: float,
    F: PotentialSpec,
    rng: np.random.Generator,
    noise: bool = True,
) -> DiscreteMeasure:
    """Unadjusted Langevin update on an equal-weight particle cloud.

    Each point moves by ``-tau grad F(x) + sqrt(2 tau) xi`` with
    standard Gaussian ``xi``; fully determined by the generator state.
    The ``noise`` flag exists as a diagnostic to recover the pure
    forward step.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not np.allclose(particles.weights, 1.0 / particles.n, atol=1e-12):
        raise ValueError("ULA needs equal particle weights")
    pts = particles.points - tau * F.grad_at(particles.points)
    if noise:
        pts = pts + np.sqrt(2.0 * tau) * rng.standard_normal(particles.points.shape)
    return DiscreteMeasure(pts, particles.weights)
