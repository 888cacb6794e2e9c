import copy
import math

import numpy as np
import pytest

from helpers import random_discrete
from wflow.certificates import (
    asymptotic_regularity,
    best_iterate_trajectory,
    certify,
    decrease_check,
    evi_residual_jko,
    fejer_check,
    rate_certificate,
    run_objective,
    run_oracle,
    weak_convergence_surrogate,
)
from wflow.errors import NegativeGap, OracleUnavailable
from wflow.functionals import Potential, quadratic_potential
from wflow.harness import run
from wflow.jko import jko_potential
from wflow.measures import dirac, measure_from_json
from wflow.trace import Trace
from wflow.transport import w2


def quadratic_jko_config(**overrides):
    cfg = {
        "algorithm": "jko",
        "functional": {"functional": "quadratic_potential", "scale": 1.0, "center": [0.0]},
        "initial": {"type": "discrete", "points": [[1.0]], "weights": [1.0]},
        "steps": {"family": "constant", "tau": 1.0},
        "errors": {"family": "zero"},
        "mode": "exact",
        "iterations": 20,
        "seed": 7,
    }
    cfg.update(overrides)
    return cfg


def free_energy_pg_config(**overrides):
    cfg = {
        "algorithm": "proxgrad",
        "F": {"functional": "quadratic_potential", "scale": 1.0, "center": [0.0]},
        "H": "entropy_gaussian",
        "initial": {"type": "gaussian", "mean": [0.0], "cov": [[4.0]]},
        "steps": {"family": "constant", "tau": 0.5},
        "errors": {"family": "zero"},
        "mode": "exact",
        "iterations": 30,
        "seed": 3,
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture(scope="module")
def exact_jko_trace():
    return run(quadratic_jko_config())


@pytest.fixture(scope="module")
def distance_jko_trace():
    return run(
        quadratic_jko_config(
            mode="distance",
            errors={"family": "power", "c": 0.1, "beta": 1.5},
            iterations=60,
        )
    )


@pytest.fixture(scope="module")
def exact_pg_trace():
    return run(free_energy_pg_config())


@pytest.fixture(scope="module")
def variational_pg_trace():
    # First-power error sums: the forward-backward hypotheses need a
    # steeper decay than the squared proximal-point ones.
    return run(
        free_energy_pg_config(
            mode="variational",
            errors={"family": "power", "c": 0.1, "beta": 2.5},
            iterations=25,
        )
    )


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------


def test_evi_residual_cancels_at_step_output():
    rng = np.random.default_rng(0)
    spec = quadratic_potential(1.0, [0.0])
    mu = random_discrete(rng, 5)
    step = jko_potential(mu, 0.7, spec)
    assert evi_residual_jko(mu, step, step, 0.7, Potential(spec)) == 0.0


def test_evi_residual_flags_far_translation():
    spec = quadratic_potential(1.0, [0.0])
    mu = dirac(1.0)
    corrupted = dirac(3.0)  # far from the exact step at 1/2
    nu = dirac(0.0)
    # Direct arithmetic: W2^2(c, nu) - W2^2(mu, nu) - 2 tau (G(nu) - G(c)) + W2^2(c, mu)
    expected = 9.0 - 1.0 - 2.0 * (0.0 - 4.5) + 4.0
    res = evi_residual_jko(mu, corrupted, nu, 1.0, Potential(spec))
    assert res == pytest.approx(expected, abs=1e-12)
    assert res > 0


# ---------------------------------------------------------------------------
# Trace-level checks
# ---------------------------------------------------------------------------


def test_fejer_exact_run_monotone(exact_jko_trace):
    upper, contraction = fejer_check(exact_jko_trace)
    assert np.min(upper) >= -1e-9
    assert np.min(contraction) >= -1e-9
    dists = [rec.w2_to_minimizer for rec in exact_jko_trace.records]
    assert all(a >= b - 1e-12 for a, b in zip(dists, dists[1:]))


def test_fejer_distance_run_margins(distance_jko_trace):
    upper, contraction = fejer_check(distance_jko_trace)
    assert np.min(upper) >= -1e-9
    assert np.min(contraction) >= -1e-9


def test_fejer_single_step_hand_values():
    trace = run(quadratic_jko_config(iterations=1))
    rec = trace.records[0]
    assert rec.w2_exact_to_minimizer == pytest.approx(0.5, abs=1e-12)
    upper, contraction = fejer_check(trace)
    assert upper[0] == pytest.approx(0.0, abs=1e-12)
    assert contraction[0] == pytest.approx(0.5, abs=1e-12)


def test_asymptotic_regularity_stationary_start():
    orc_cfg = quadratic_jko_config(
        initial={"type": "discrete", "points": [[0.0]], "weights": [1.0]}, iterations=10
    )
    sums, verdict = asymptotic_regularity(run(orc_cfg))
    assert verdict
    assert np.allclose(sums, 0.0, atol=1e-24)


def test_asymptotic_regularity_geometric_displacements(exact_jko_trace):
    sums, verdict = asymptotic_regularity(exact_jko_trace)
    assert verdict
    # Iterates 2^-n: displacement at step n is 2^-(n+1), so the running
    # sum of squares is (1 - 4^-(n+1)) / 3.
    n = np.arange(len(sums))
    expected = (1.0 - 4.0 ** -(n + 1)) / 3.0
    assert np.allclose(sums, expected, atol=1e-12)


def test_asymptotic_regularity_plateau_on_summable_run(distance_jko_trace):
    _, verdict = asymptotic_regularity(distance_jko_trace)
    assert verdict


def test_rate_certificate_exact_run(exact_jko_trace):
    sup, series = rate_certificate(exact_jko_trace, "exact_step_values")
    # sigma_{n+1} * G(step_n) = (n+1) * 4^-(n+1) / 2, maximized at n=0.
    n = np.arange(len(series))
    expected = (n + 1) * 4.0 ** -(n + 1) / 2.0
    assert np.allclose(series, expected, atol=1e-12)
    assert sup == pytest.approx(0.125, abs=1e-12)
    assert sup <= 0.5 + 1e-9  # the exact-case constant W2^2(mu_0, mu*)/2


def test_rate_certificate_from_minimizer_start():
    trace = run(
        quadratic_jko_config(
            initial={"type": "discrete", "points": [[0.0]], "weights": [1.0]}, iterations=5
        )
    )
    sup, series = rate_certificate(trace, "best_iterate")
    assert sup == 0.0
    assert np.allclose(series, 0.0, atol=1e-15)


def test_rate_certificate_negative_gap_detection(exact_jko_trace):
    trace = Trace.from_json_dict(copy.deepcopy(exact_jko_trace.to_json_dict()))
    trace.records[3].G_exact_step_value = -1.0  # below inf G = 0
    with pytest.raises(NegativeGap):
        rate_certificate(trace, "exact_step_values")


def test_rate_certificate_variational_targets(variational_pg_trace):
    for target in ("best_iterate", "exact_step_values", "iterate_values"):
        sup, series = rate_certificate(variational_pg_trace, target)
        assert math.isfinite(sup)
        assert np.all(series >= -1e-12)


def test_best_iterate_trajectory_is_monotone(distance_jko_trace):
    traj = best_iterate_trajectory(distance_jko_trace)
    values = [distance_jko_trace.records[j].G_exact_step_value for j in traj]
    assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


def test_weak_convergence_surrogate_stationary():
    trace = run(
        quadratic_jko_config(
            initial={"type": "discrete", "points": [[0.0]], "weights": [1.0]}, iterations=5
        )
    )
    series = weak_convergence_surrogate(trace)
    for p, (_, vals) in series.items():
        assert np.allclose(vals, 0.0, atol=1e-12), p


def test_weak_convergence_surrogate_pg_recursion(exact_pg_trace):
    series = weak_convergence_surrogate(exact_pg_trace, p_list=(2.0,))
    _, vals = series[2.0]
    # Scalar recursion for the standard-deviation iterates.
    tau = 0.5
    s = 2.0
    expected = []
    for _ in range(len(vals)):
        s = ((1 - tau) * s + math.sqrt((1 - tau) ** 2 * s**2 + 4 * tau)) / 2.0
        expected.append(abs(s - 1.0))
    # The Bures form cancels near coincidence, flooring tiny distances.
    assert np.allclose(vals, expected, atol=1e-6)
    assert all(a >= b - 1e-12 for a, b in zip(expected, expected[1:]))
    assert vals[-1] < 1e-6


def test_weak_convergence_needs_oracle():
    trace = run(
        {
            "algorithm": "jko",
            "functional": "entropy_gaussian",
            "initial": {"type": "gaussian", "mean": [0.0], "cov": [[1.0]]},
            "steps": {"family": "constant", "tau": 1.0},
            "errors": {"family": "zero"},
            "mode": "exact",
            "iterations": 3,
            "seed": 0,
        }
    )
    with pytest.raises(OracleUnavailable):
        weak_convergence_surrogate(trace)
    with pytest.raises(OracleUnavailable):
        run_oracle(trace)


def test_decrease_check_exact_run(exact_jko_trace):
    margins = decrease_check(exact_jko_trace)
    assert np.min(margins) >= -1e-9
    vals = [rec.G_exact_step_value for rec in exact_jko_trace.records]
    assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))


def test_decrease_check_single_step_arithmetic():
    trace = run(quadratic_jko_config(iterations=2))
    margins = decrease_check(trace)
    # Step values G(step_n) = 4^-(n+1)/2 and displacement 2^-(n+1) at
    # step n: margin = (1/8 + 0) - (1/32 + (1/4)^2 / 2) = 1/16.
    expected = 0.125 - (0.03125 + 0.25**2 / 2.0)
    got = (trace.records[0].G_exact_step_value) - (
        trace.records[1].G_exact_step_value
        + trace.records[1].w2_step_displacement ** 2 / 2.0
    )
    assert margins[0] == pytest.approx(got, abs=1e-15)
    assert margins[0] == pytest.approx(expected, abs=1e-12)
    assert expected == 0.0625


def test_decrease_check_distance_run(distance_jko_trace):
    assert np.min(decrease_check(distance_jko_trace)) >= -1e-9


def test_decrease_check_pg_sandwich(exact_pg_trace, variational_pg_trace):
    assert np.min(decrease_check(exact_pg_trace)) >= -1e-9
    assert np.min(decrease_check(variational_pg_trace)) >= -1e-9


# ---------------------------------------------------------------------------
# certify() end to end
# ---------------------------------------------------------------------------


def test_certify_passes_on_clean_runs(exact_jko_trace, distance_jko_trace, exact_pg_trace):
    for trace in (exact_jko_trace, distance_jko_trace, exact_pg_trace):
        report = certify(trace)
        assert report.passed(), report.table()


def test_certify_variational_run(variational_pg_trace):
    report = certify(variational_pg_trace)
    assert report.passed(), report.table()
    assert "iterate_values" in report.rate_constants


def test_certify_reports_exact_rate_bound(exact_jko_trace):
    report = certify(exact_jko_trace)
    names = [c.name for c in report.checks]
    assert "rate_constant_exact" in names


def test_certify_is_pure_function_of_trace(exact_pg_trace, tmp_path):
    path = exact_pg_trace.save(tmp_path / "t.json")
    loaded = Trace.load(path)
    a = certify(exact_pg_trace).to_json()
    b = certify(loaded).to_json()
    assert a == b


def test_certify_detects_tampered_certificate(distance_jko_trace):
    trace = Trace.from_json_dict(copy.deepcopy(distance_jko_trace.to_json_dict()))
    trace.records[5].certified_w2_error = trace.records[5].eps * 10
    report = certify(trace)
    assert not report.passed()
    failing = {c.name for c in report.checks if not c.passed}
    assert "error_certificates" in failing


def test_certify_detects_schedule_violation():
    trace = run(
        quadratic_jko_config(
            mode="distance",
            errors={"family": "power", "c": 0.1, "beta": 1.0},
            iterations=10,
        )
    )
    report = certify(trace)
    failing = {c.name for c in report.checks if not c.passed}
    assert "schedule_conditions" in failing
    assert not report.passed()


def test_certify_entropy_run_without_oracle():
    trace = run(
        {
            "algorithm": "jko",
            "functional": "entropy_gaussian",
            "initial": {"type": "gaussian", "mean": [0.0], "cov": [[1.0]]},
            "steps": {"family": "constant", "tau": 1.0},
            "errors": {"family": "power", "c": 0.1, "beta": 1.5},
            "mode": "variational",
            "iterations": 10,
            "seed": 1,
        }
    )
    report = certify(trace)
    assert report.passed(), report.table()
    names = {c.name for c in report.checks}
    assert "error_certificates" in names
    assert "fejer_upper" not in names  # no oracle for pure entropy


def test_run_objective_and_oracle_reconstruction(exact_pg_trace):
    g = run_objective(exact_pg_trace)
    orc = run_oracle(exact_pg_trace)
    assert w2(orc.measure, measure_from_json(exact_pg_trace.initial_measure)) > 0
    assert orc.value == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    final = measure_from_json(exact_pg_trace.final_measure)
    assert g.value_on(final) >= orc.value - 1e-12
