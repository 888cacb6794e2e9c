"""Inequality checks and rate certificates computed from trace files.

Every check here is a pure function of the trace: re-running
certification on the same file gives identical verdicts.  Margins are
reported raw; a check passes when its worst margin stays above minus
the tolerance (1e-9 on closed-form families, 1e-6 when an LP transport
solve is in the loop).  Plateau verdicts for infinite-sum claims are
labeled heuristics and never authoritative; the analytic schedule
verdicts are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EvalUnsupported,
    NegativeGap,
    OracleUnavailable,
    StepTooLarge,
)
from .functionals import (
    Functional,
    MinimizerOracle,
    NoClosedFormMinimizer,
    Potential,
    SumFunctional,
    evaluate,
    make_functional,
    make_potential,
    minimizer,
)
from .measures import measure_from_json
from .schedules import ErrorSchedule, StepSchedule, check_conditions
from .trace import Trace
from .transport import w2, w2_squared, wp_distance

TOL_CLOSED_FORM = 1e-9
TOL_LP = 1e-6
TOL_W2_IMPLIED = 1e-6
RATE_TARGETS = ("best_iterate", "exact_step_values", "iterate_values")


def evi_residual_jko(mu, j_mu, nu, tau: float, g: Functional) -> float:
    """Residual of the per-step inequality for the proximal-point step.

    ``W2^2(j_mu, nu) - W2^2(mu, nu) - 2 tau (G(nu) - G(j_mu)) + W2^2(j_mu, mu)``;
    nonpositive (up to tolerance) when ``j_mu`` is the exact step.
    """
    return (
        w2_squared(j_mu, nu)
        - w2_squared(mu, nu)
        - 2.0 * tau * (evaluate(g, nu) - evaluate(g, j_mu))
        + w2_squared(j_mu, mu)
    )


def evi_residual_pg(mu, t_mu, nu, tau: float, lam: float, lips: float, g: Functional) -> float:
    """Residual of the refined forward-backward inequality.

    Includes the ``(1 - tau L) W2^2(mu, t_mu)`` term; requires
    ``tau < 1/L``.
    """
    if tau >= 1.0 / lips:
        raise StepTooLarge(f"tau={tau} >= 1/L={1.0 / lips}")
    return (
        w2_squared(t_mu, nu)
        - (1.0 - tau * lam) * w2_squared(mu, nu)
        + 2.0 * tau * (evaluate(g, t_mu) - evaluate(g, nu))
        + (1.0 - tau * lips) * w2_squared(mu, t_mu)
    )


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float | None = None
    worst_n: int | None = None
    heuristic: bool = False
    detail: str = ""

    def to_json(self):
        return {
            "pass": self.passed,
            "worst_margin": self.worst_margin,
            "worst_n": self.worst_n,
            "heuristic": self.heuristic,
            "detail": self.detail,
        }


@dataclass
class RunReport:
    """All inequality verdicts plus rate constants for one trace."""

    algorithm: str
    checks: list = field(default_factory=list)
    rate_constants: dict = field(default_factory=dict)
    wp_final: dict = field(default_factory=dict)
    best_iterate_indices: list = field(default_factory=list)
    conditions: dict | None = None

    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.heuristic)

    def to_json(self):
        return {
            "passed": self.passed(),
            "algorithm": self.algorithm,
            "checks": {c.name: c.to_json() for c in self.checks},
            "rate_constants": self.rate_constants,
            "wp_final": self.wp_final,
            "best_iterate_indices": self.best_iterate_indices,
            "conditions": self.conditions,
        }

    def table(self) -> str:
        lines = [f"{'check':34s} {'verdict':8s} {'worst margin':>14s} {'at n':>6s}"]
        for c in self.checks:
            verdict = "pass" if c.passed else "FAIL"
            if c.heuristic:
                verdict += "*"
            margin = "" if c.worst_margin is None else f"{c.worst_margin:.3e}"
            at_n = "" if c.worst_n is None else str(c.worst_n)
            lines.append(f"{c.name:34s} {verdict:8s} {margin:>14s} {at_n:>6s}")
        for target, sup in self.rate_constants.items():
            lines.append(f"rate sup sigma*gap [{target}] = {sup:.6g}")
        for p, val in self.wp_final.items():
            lines.append(f"final W_{p} to minimizer = {val:.6g}")
        lines.append("(*) heuristic, not authoritative")
        return "\n".join(lines)


def run_objective(trace: Trace) -> Functional:
    """The functional the traced run minimizes, rebuilt from the config."""
    cfg = trace.config
    if trace.algorithm == "jko":
        return make_functional(cfg["functional"])
    if trace.algorithm == "proxgrad":
        fwd = make_potential(cfg["F"])
        return SumFunctional([Potential(fwd), make_functional(cfg["H"])])
    if trace.algorithm == "ula":
        fwd = make_potential(cfg["F"])
        return SumFunctional([Potential(fwd), make_functional("entropy_gaussian")])
    raise ValueError(f"unknown algorithm {trace.algorithm!r}")


def run_oracle(trace: Trace) -> MinimizerOracle:
    try:
        return minimizer(run_objective(trace))
    except NoClosedFormMinimizer as exc:
        raise OracleUnavailable(str(exc)) from exc


def condition_algorithm(trace: Trace) -> str:
    mode = trace.config.get("mode", "exact")
    if trace.algorithm == "jko":
        return "jko_variational" if mode == "variational" else "jko_distance"
    if trace.algorithm == "proxgrad":
        return "pg_variational" if mode == "variational" else "pg_distance"
    return "pg_distance"  # ULA reads as an inexact forward-backward run


def _tolerance(trace: Trace) -> float:
    init = trace.initial_measure
    if init.get("type") == "discrete" and len(init["points"][0]) > 1:
        return TOL_LP
    return TOL_CLOSED_FORM


def _worst(margins):
    if len(margins) == 0:
        return None, None
    idx = int(np.argmin(margins))
    return float(margins[idx]), idx


def fejer_check(trace: Trace):
    """Quasi-Fejer margins with respect to the minimizer.

    Returns two arrays over n: slack in
    ``W2(mu_{n+1}, nu*) <= W2(step_n, nu*) + eps_n`` and slack in the
    exact-step contraction ``W2(step_n, nu*) <= W2(mu_n, nu*)``.
    """
    oracle = run_oracle(trace)
    prev = w2(measure_from_json(trace.initial_measure), oracle.measure)
    upper, contraction = [], []
    for rec in trace.records:
        if rec.w2_to_minimizer is None or rec.w2_exact_to_minimizer is None:
            raise OracleUnavailable("trace lacks recorded minimizer distances")
        upper.append(rec.w2_exact_to_minimizer + rec.eps - rec.w2_to_minimizer)
        contraction.append(prev - rec.w2_exact_to_minimizer)
        prev = rec.w2_to_minimizer
    return np.array(upper), np.array(contraction)


def asymptotic_regularity(trace: Trace):
    """Running sum of squared step displacements and a plateau verdict.

    The verdict (last-quarter increment below 5% of the total) is a
    heuristic stand-in for summability; finite traces cannot prove it.
    """
    disp = np.array(
        [rec.w2_step_displacement for rec in trace.records if rec.w2_step_displacement is not None]
    )
    sums = np.cumsum(disp**2)
    if len(sums) == 0 or sums[-1] <= 1e-12:
        return sums, True
    tail_start = max(len(sums) - len(sums) // 4, 1)
    tail = sums[-1] - sums[tail_start - 1]
    return sums, bool(tail < 0.05 * sums[-1])


def best_iterate_trajectory(trace: Trace) -> list:
    """Index of the best iterate among the first n, per n."""
    best, best_val, out = 0, math.inf, []
    for i, rec in enumerate(trace.records):
        val = rec.G_exact_step_value if rec.G_exact_step_value is not None else rec.G_value
        if val is not None and val < best_val:
            best, best_val = i, val
        out.append(best)
    return out


def rate_certificate(trace: Trace, target: str = "exact_step_values"):
    """Running series ``sigma_{n+1} * (gap at step n)`` and its supremum.

    Targets: ``best_iterate`` (running minimum of exact-step values),
    ``exact_step_values`` and ``iterate_values``.  Gaps are measured
    against the minimizer oracle's value; a gap below -1e-9 raises
    :class:`NegativeGap` since it signals an evaluation bug.
    """
    if target not in RATE_TARGETS:
        raise ValueError(f"unknown rate target {target!r}")
    oracle = run_oracle(trace)
    if target == "iterate_values":
        vals = [rec.G_value for rec in trace.records]
    else:
        vals = [rec.G_exact_step_value for rec in trace.records]
        if target == "best_iterate":
            vals = list(np.minimum.accumulate([math.inf if v is None else v for v in vals]))
    if any(v is None for v in vals):
        raise OracleUnavailable("trace lacks recorded objective values")
    gaps = np.array(vals, dtype=float) - oracle.value
    if len(gaps) and float(gaps.min()) < -TOL_CLOSED_FORM:
        raise NegativeGap(f"objective gap {gaps.min():.3e} below -{TOL_CLOSED_FORM}")
    gaps = np.maximum(gaps, 0.0)
    sig_next = np.array([rec.sigma + rec.tau for rec in trace.records])
    series = sig_next * gaps
    sup = float(series.max()) if len(series) else 0.0
    return sup, series


def weak_convergence_surrogate(trace: Trace, p_list=(1.0, 1.5, 2.0), grid: int = 10_000):
    """W_p(mu_n, mu*) series for each requested exponent.

    Computed at rows with a stored measure; Gaussian targets use the
    Bures form for p = 2 and fine quantile discretizations otherwise.
    Returns ``{p: (indices, values)}``.
    """
    oracle = run_oracle(trace)
    out = {}
    for p in p_list:
        ns, vals = [], []
        try:
            for rec in trace.records:
                if rec.measure is None:
                    continue
                mu = measure_from_json(rec.measure)
                vals.append(wp_distance(mu, oracle.measure, p, grid))
                ns.append(rec.n)
        except EvalUnsupported:
            continue
        out[p] = (np.array(ns), np.array(vals))
    return out


def decrease_check(trace: Trace) -> np.ndarray:
    """Margins of the per-step objective decrease, n >= 1.

    Proximal-point runs check
    ``G(step_n) + W2^2(step_n, mu_n)/(2 tau_n) <=
    G(step_{n-1}) + eps_{n-1}^2/(2 tau_n)``; forward-backward runs use
    the sandwich bound with first-power errors and the recorded
    forward-image distances.
    """
    recs = trace.records
    margins = []
    for prev, rec in zip(recs[:-1], recs[1:]):
        if rec.G_exact_step_value is None or prev.G_exact_step_value is None:
            continue
        if trace.algorithm == "proxgrad":
            if rec.w2_eta_to_prev_exact is None or rec.w2_eta_to_exact is None:
                continue
            bound = (prev.eps / rec.tau) * (
                rec.w2_eta_to_prev_exact + rec.w2_eta_to_exact + prev.eps
            )
            margins.append(bound - (rec.G_exact_step_value - prev.G_exact_step_value))
        else:
            lhs = rec.G_exact_step_value + rec.w2_step_displacement**2 / (2.0 * rec.tau)
            rhs = prev.G_exact_step_value + prev.eps**2 / (2.0 * rec.tau)
            margins.append(rhs - lhs)
    return np.array(margins)


def _schedules_from_config(cfg: dict):
    return (
        StepSchedule.from_config(cfg["steps"]),
        ErrorSchedule.from_config(cfg["errors"]),
    )


def _error_certificate_margins(trace: Trace):
    """Mode-specific certificate margins, worst first component."""
    margins = []
    for rec in trace.records:
        if rec.mode == "exact":
            margins.append(-abs(rec.certified_w2_error or 0.0))
        elif rec.mode == "distance":
            m = rec.eps - (rec.certified_w2_error if rec.certified_w2_error is not None else math.inf)
            if rec.w2_output_to_exact is not None and rec.certified_w2_error is not None:
                m = min(m, TOL_CLOSED_FORM - abs(rec.w2_output_to_exact - rec.certified_w2_error))
                m = min(m, rec.eps + TOL_CLOSED_FORM - rec.w2_output_to_exact)
            margins.append(m)
        elif rec.mode == "variational":
            budget = rec.eps**2 / (2.0 * rec.tau)
            gap = rec.certified_energy_gap if rec.certified_energy_gap is not None else math.inf
            m = budget - gap + 1e-15
            if rec.w2_output_to_exact is not None:
                m = min(m, rec.eps + TOL_W2_IMPLIED - rec.w2_output_to_exact)
            margins.append(m)
    return np.array(margins)


def _consistency_margins(trace: Trace, g: Functional, oracle, tol: float):
    """Negative of reproduction errors for rows with stored measures."""
    margins = []
    steps, _ = _schedules_from_config(trace.config)
    sigmas = steps.sigmas(len(trace.records))
    prev = measure_from_json(trace.initial_measure)
    for i, rec in enumerate(trace.records):
        margins.append(1e-12 - abs(rec.sigma - sigmas[i]))
        cur = measure_from_json(rec.measure) if rec.measure is not None else None
        exact = measure_from_json(rec.exact_step) if rec.exact_step is not None else None
        if cur is not None:
            if rec.G_value is not None and math.isfinite(rec.G_value):
                margins.append(tol - abs(evaluate(g, cur) - rec.G_value))
            if oracle is not None and rec.w2_to_minimizer is not None:
                margins.append(tol - abs(w2(cur, oracle.measure) - rec.w2_to_minimizer))
        if exact is not None:
            if prev is not None and rec.w2_step_displacement is not None:
                margins.append(tol - abs(w2(exact, prev) - rec.w2_step_displacement))
            if cur is not None and rec.w2_output_to_exact is not None:
                margins.append(tol - abs(w2(cur, exact) - rec.w2_output_to_exact))
        prev = cur
    return np.array(margins)


def certify(trace: Trace, wp_grid: int = 10_000) -> RunReport:
    """Run every applicable check on a trace and assemble the report.

    Authoritative checks are the per-iteration inequalities, the error
    certificates, trace consistency, the negative-gap guard and the
    analytic schedule conditions; the asymptotic-regularity plateau is
    reported as a heuristic.  Exit-code policy lives in the CLI:
    ``RunReport.passed()`` is True iff all authoritative checks pass.
    """
    report = RunReport(algorithm=trace.algorithm)
    tol = _tolerance(trace)
    g = run_objective(trace)
    try:
        oracle = run_oracle(trace)
    except OracleUnavailable:
        oracle = None

    worst, at_n = _worst(_consistency_margins(trace, g, oracle, tol))
    report.checks.append(
        CheckResult("trace_consistency", worst is None or worst >= 0.0, worst, at_n,
                    detail="recorded scalars reproducible from stored measures")
    )

    if trace.algorithm in ("jko", "proxgrad"):
        worst, at_n = _worst(_error_certificate_margins(trace))
        report.checks.append(
            CheckResult("error_certificates", worst is None or worst >= 0.0, worst, at_n,
                        detail="mode-specific certified error bounds")
        )

        residuals = np.array([r.evi_residual for r in trace.records if r.evi_residual is not None])
        if len(residuals):
            margins = tol - residuals
            worst, at_n = _worst(margins)
            report.checks.append(
                CheckResult("evi", worst >= 0.0, worst, at_n,
                            detail=f"per-step inequality residuals <= {tol}")
            )

        if oracle is not None:
            upper, contraction = fejer_check(trace)
            for name, margins in (("fejer_upper", upper), ("fejer_contraction", contraction)):
                worst, at_n = _worst(margins + tol)
                if worst is not None:
                    report.checks.append(
                        CheckResult(name, worst >= 0.0, worst, at_n,
                                    detail="quasi-Fejer monotonicity toward the minimizer")
                    )

        margins = decrease_check(trace)
        worst, at_n = _worst(margins + tol)
        if worst is not None:
            report.checks.append(
                CheckResult("decrease", worst >= 0.0, worst, at_n,
                            detail="per-step objective decrease up to error terms")
            )

        _, plateau = asymptotic_regularity(trace)
        report.checks.append(
            CheckResult("asymptotic_regularity_plateau", plateau, None, None, heuristic=True,
                        detail="last-quarter increment < 5% of displacement sum")
        )

        if oracle is not None:
            mode = trace.config.get("mode", "exact")
            targets = ["best_iterate", "exact_step_values"]
            if mode == "variational":
                targets.append("iterate_values")
            try:
                for target in targets:
                    sup, _ = rate_certificate(trace, target)
                    report.rate_constants[target] = sup
                report.checks.append(
                    CheckResult("rate_gaps_nonnegative", True, None, None,
                                detail="objective gaps >= -1e-9 and sup sigma*gap finite")
                )
            except NegativeGap as exc:
                report.checks.append(
                    CheckResult("rate_gaps_nonnegative", False, None, None, detail=str(exc))
                )
            if _is_exact_run(trace) and "exact_step_values" in report.rate_constants:
                bound = w2_squared(measure_from_json(trace.initial_measure), oracle.measure) / 2.0
                margin = bound + TOL_CLOSED_FORM - report.rate_constants["exact_step_values"]
                report.checks.append(
                    CheckResult("rate_constant_exact", margin >= 0.0, margin, None,
                                detail="exact runs: sup sigma*gap <= W2^2(mu_0, mu*)/2")
                )
            report.best_iterate_indices = best_iterate_trajectory(trace)

    if oracle is not None:
        series = weak_convergence_surrogate(trace, grid=wp_grid)
        for p, (_, vals) in series.items():
            if len(vals):
                report.wp_final[str(p)] = float(vals[-1])
        wp_tol = trace.config.get("wp_tolerance") or {}
        for p_str, bound in wp_tol.items():
            if str(float(p_str)) in report.wp_final:
                final = report.wp_final[str(float(p_str))]
                report.checks.append(
                    CheckResult(f"wp_final_p={p_str}", final <= bound, bound - final, None,
                                detail=f"final W_{p_str} <= {bound}")
                )

    steps, errors = _schedules_from_config(trace.config)
    cond = check_conditions(steps, errors, condition_algorithm(trace), L=trace.lips)
    report.conditions = cond.to_json()
    report.checks.append(
        CheckResult("schedule_conditions", not cond.any_required_fails(), None, None,
                    detail="analytic summability verdicts for the run's hypotheses")
    )
    return report


def _is_exact_run(trace: Trace) -> bool:
    return all(rec.eps == 0.0 for rec in trace.records)
