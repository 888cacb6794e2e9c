import math

import numpy as np
import pytest

from helpers import entropy_by_quadrature, fd_gradient, random_discrete
from wflow.errors import (
    ConfigError,
    EvalUnsupported,
    GradientUnavailable,
    NoClosedFormMinimizer,
    ProxUnavailable,
)
from wflow.functionals import (
    EntropyGaussian,
    Interaction,
    Potential,
    PotentialSpec,
    SumFunctional,
    abs_potential,
    evaluate,
    free_energy,
    grad_potential,
    make_functional,
    make_potential,
    minimizer,
    quadratic_interaction,
    quadratic_potential,
)
from wflow.measures import DiscreteMeasure, GaussianMeasure, dirac
from wflow.transport import barycenter_1d, optimal_assignment


def test_quadratic_potential_at_point_mass():
    f = Potential(quadratic_potential(1.0, [0.0]))
    assert evaluate(f, dirac(2.0)) == pytest.approx(2.0, abs=1e-15)


def test_quadratic_potential_on_gaussian_moments():
    f = Potential(quadratic_potential(2.0, [1.0, 0.0]))
    g = GaussianMeasure([0.0, 3.0], [[2.0, 0.0], [0.0, 1.0]])
    # (scale/2) (||m - b||^2 + tr cov) = 1 * (1 + 9 + 3)
    assert evaluate(f, g) == pytest.approx(13.0, abs=1e-12)


def test_entropy_on_standard_gaussian_matches_quadrature():
    ent = EntropyGaussian()
    got = evaluate(ent, GaussianMeasure([0.0], [[1.0]]))
    assert got == pytest.approx(entropy_by_quadrature(1.0), abs=1e-6)
    assert got == pytest.approx(-1.418939, abs=1e-6)


def test_entropy_matches_quadrature_other_scales():
    ent = EntropyGaussian()
    for sigma in (0.4, 2.5):
        got = evaluate(ent, GaussianMeasure([0.7], [[sigma**2]]))
        assert got == pytest.approx(entropy_by_quadrature(sigma), abs=1e-6)


def test_entropy_on_discrete_is_infinite():
    assert evaluate(EntropyGaussian(), dirac(0.0)) == math.inf
    rng = np.random.default_rng(0)
    assert evaluate(EntropyGaussian(), random_discrete(rng, 5)) == math.inf


def test_entropy_on_singular_gaussian_is_infinite():
    g = GaussianMeasure([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]])
    assert evaluate(EntropyGaussian(), g) == math.inf


def test_entropy_translation_invariant_exactly():
    ent = EntropyGaussian()
    cov = [[1.3, 0.2], [0.2, 0.8]]
    vals = {evaluate(ent, GaussianMeasure(m, cov)) for m in ([0.0, 0.0], [5.0, -2.0], [100.0, 3.0])}
    assert len(vals) == 1


def test_interaction_quadratic_against_double_loop():
    rng = np.random.default_rng(1)
    mu = random_discrete(rng, 9, d=2)
    f = quadratic_interaction(1.0)
    expected = 0.0
    for i in range(mu.n):
        for j in range(mu.n):
            z = mu.points[i] - mu.points[j]
            expected += mu.weights[i] * mu.weights[j] * 0.5 * float(z @ z)
    assert evaluate(f, mu) == pytest.approx(expected, rel=1e-12)


def test_interaction_on_gaussian_unsupported():
    with pytest.raises(EvalUnsupported):
        evaluate(quadratic_interaction(), GaussianMeasure([0.0], [[1.0]]))


def test_sum_is_sum_when_finite_and_absorbs_infinity():
    pot = Potential(quadratic_potential(1.0, [0.0]))
    ent = EntropyGaussian()
    g = GaussianMeasure([1.0], [[2.0]])
    s = SumFunctional([pot, ent])
    assert evaluate(s, g) == evaluate(pot, g) + evaluate(ent, g)
    assert evaluate(s, dirac(1.0)) == math.inf


def test_gradient_quadratic():
    spec = quadratic_potential(1.0, [0.0, 0.0])
    assert np.allclose(grad_potential(spec, [3.0, 4.0]), [3.0, 4.0], atol=0)


def test_gradient_with_linear_term():
    b = np.array([1.0, 0.0])
    spec = PotentialSpec(
        lambda pts: 0.5 * np.sum(pts**2, axis=1) + pts @ b,
        grad=lambda pts: pts + b,
        name="tilted",
    )
    assert np.allclose(grad_potential(spec, [0.0, 0.0]), b, atol=0)


def test_gradient_matches_finite_differences():
    spec = quadratic_potential(1.7, [0.3, -0.6])
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.normal(size=2)
        g = grad_potential(spec, x)
        fd = fd_gradient(lambda y: float(spec.value_at(y.reshape(1, -1))[0]), x)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_gradient_unavailable():
    with pytest.raises(GradientUnavailable):
        grad_potential(abs_potential(), [1.0])


def test_prox_unavailable():
    spec = PotentialSpec(lambda pts: np.sum(pts**2, axis=1))
    with pytest.raises(ProxUnavailable):
        spec.prox_at(np.zeros((1, 1)), 1.0)


def test_wrong_prox_rejected_at_construction():
    with pytest.raises(ValueError, match="spot-check"):
        PotentialSpec(
            lambda pts: 0.5 * np.sum(pts**2, axis=1),
            prox=lambda pts, tau: pts,  # ignores tau: wrong
            name="broken",
        )


def test_lambda_exceeding_lipschitz_rejected():
    with pytest.raises(ValueError):
        PotentialSpec(
            lambda pts: np.sum(pts**2, axis=1), strong_convexity=3.0, grad_lipschitz=1.0
        )


def test_minimizer_quadratic_potential():
    orc = minimizer(Potential(quadratic_potential(1.0, [0.0])))
    assert orc.value == 0.0
    assert orc.measure.points[0, 0] == 0.0


def test_minimizer_free_energy_standard():
    orc = minimizer(free_energy(1.0, [0.0]))
    assert isinstance(orc.measure, GaussianMeasure)
    assert orc.measure.cov[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert orc.value == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)

    # Independent oracle: minimize over Gaussian (mean, std) by nested
    # grid refinement of the two-parameter free energy.
    fe = free_energy(1.0, [0.0])

    def energy(m, s):
        return evaluate(fe, GaussianMeasure([m], [[s**2]]))

    best = math.inf
    m_grid = np.linspace(-1.0, 1.0, 81)
    s_grid = np.linspace(0.3, 2.0, 171)
    for _ in range(6):
        vals = np.array([[energy(m, s) for s in s_grid] for m in m_grid])
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = vals[i, j]
        dm = m_grid[1] - m_grid[0]
        ds = s_grid[1] - s_grid[0]
        m_grid = np.linspace(m_grid[i] - dm, m_grid[i] + dm, 21)
        s_grid = np.linspace(max(s_grid[j] - ds, 1e-3), s_grid[j] + ds, 21)
    assert orc.value == pytest.approx(best, abs=1e-8)


def test_minimizer_free_energy_scaled():
    orc = minimizer(free_energy(4.0, [1.0]))
    assert orc.measure.mean_vec[0] == pytest.approx(1.0, abs=1e-15)
    assert orc.measure.cov[0, 0] == pytest.approx(0.25, abs=1e-15)

    fe = free_energy(4.0, [1.0])

    def energy(m, s):
        return evaluate(fe, GaussianMeasure([m], [[s**2]]))

    m_grid = np.linspace(0.0, 2.0, 81)
    s_grid = np.linspace(0.1, 1.5, 141)
    best = math.inf
    for _ in range(6):
        vals = np.array([[energy(m, s) for s in s_grid] for m in m_grid])
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = vals[i, j]
        dm = m_grid[1] - m_grid[0]
        ds = s_grid[1] - s_grid[0]
        m_grid = np.linspace(m_grid[i] - dm, m_grid[i] + dm, 21)
        s_grid = np.linspace(max(s_grid[j] - ds, 1e-3), s_grid[j] + ds, 21)
    assert orc.value == pytest.approx(best, abs=1e-8)


def test_minimizer_oracle_value_consistent():
    for f in (free_energy(2.0, [0.5, -0.5]), Potential(quadratic_potential(3.0, [1.0]))):
        orc = minimizer(f)
        assert evaluate(f, orc.measure) == pytest.approx(orc.value, abs=1e-9)


def test_minimizer_unavailable_cases():
    with pytest.raises(NoClosedFormMinimizer):
        minimizer(EntropyGaussian())
    with pytest.raises(NoClosedFormMinimizer):
        minimizer(quadratic_interaction())


def test_convexity_along_matched_interpolation():
    # Generalized geodesic with a discrete base on equal-size,
    # equal-weight supports: pointwise linear interpolation of matched
    # atoms; potential energies with convex g are convex along it.
    rng = np.random.default_rng(3)
    f = Potential(quadratic_potential(1.0, [0.0, 0.0]))
    for _ in range(20):
        a = DiscreteMeasure(rng.normal(size=(6, 2)))
        b = DiscreteMeasure(rng.normal(size=(6, 2)))
        perm = optimal_assignment(a, b)
        mid = DiscreteMeasure((a.points + b.points[perm]) / 2.0)
        avg = 0.5 * evaluate(f, a) + 0.5 * evaluate(f, b)
        assert evaluate(f, mid) <= avg + 1e-9


def test_convexity_along_1d_barycenters():
    # Quantile-average barycenters: int g d(bar) <= sum_k lam_k int g dmu_k
    # for convex g, by convexity under the shared quantile parametrization.
    rng = np.random.default_rng(4)
    f = Potential(quadratic_potential(1.0, [0.0]))
    for _ in range(20):
        measures = [random_discrete(rng, int(rng.integers(1, 7))) for _ in range(3)]
        lam = rng.dirichlet(np.ones(3))
        bar = barycenter_1d(measures, lam)
        bound = sum(l * evaluate(f, m) for l, m in zip(lam, measures))
        assert evaluate(f, bar) <= bound + 1e-9


def test_registry_builds_all_functionals():
    assert isinstance(make_functional({"functional": "quadratic_potential"}), Potential)
    assert isinstance(make_functional({"functional": "abs_potential"}), Potential)
    assert isinstance(make_functional({"functional": "quadratic_interaction"}), Interaction)
    assert isinstance(make_functional("entropy_gaussian"), EntropyGaussian)
    f = make_functional({"functional": "free_energy", "lambda": 1.0, "b": [0.0]})
    assert isinstance(f, SumFunctional)


def test_registry_unknown_name():
    with pytest.raises(ConfigError):
        make_functional({"functional": "renyi_entropy"})
    with pytest.raises(ConfigError):
        make_potential({"functional": "entropy_gaussian"})


def test_abs_potential_prox_is_soft_threshold():
    spec = abs_potential()
    pts = np.array([[2.0], [-2.0], [0.3]])
    out = spec.prox_at(pts, 1.0)
    assert np.allclose(out, [[1.0], [-1.0], [0.0]], atol=0)
