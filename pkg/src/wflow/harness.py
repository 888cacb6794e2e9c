"""Experiment driver: parse configs, run flows, persist traces.

A config is a plain JSON mapping; see README for the schema.  Runs are
deterministic: the per-step generator is split from ``(seed, n)`` and
never shared, so (config, seed) fully determine every output byte.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certificates import certify, evi_residual_jko, evi_residual_pg, run_oracle
from .errors import ConfigError, EvalUnsupported, OracleUnavailable, WflowError
from .functionals import (
    EntropyGaussian,
    NoClosedFormMinimizer,
    Potential,
    PotentialSpec,
    evaluate,
    make_functional,
    make_potential,
    minimizer,
)
from .jko import StepMode, jko_step
from .measures import (
    DiscreteMeasure,
    GaussianMeasure,
    Measure,
    measure_from_json,
    measure_to_json,
)
from .proxgrad import PgProblem, pg_step, ula_step
from .schedules import ErrorSchedule, StepSchedule
from .trace import IterationRecord, Trace
from .transport import w2, wp_distance

ALGORITHMS = ("jko", "proxgrad", "ula")
PLOT_COLUMNS = ("n", "sigma_n", "gap", "sigma_times_gap", "w1", "w2", "evi_margin", "eps")


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    algorithm: str
    mode: str
    iterations: int
    seed: int
    store_every: int
    steps: StepSchedule
    errors: ErrorSchedule
    initial: Measure
    wp_tolerance: dict | None
    functional: Functional | None = None  # jko objective
    problem: PgProblem | None = None  # proxgrad problem
    forward: PotentialSpec | None = None  # ula / proxgrad forward part
    normalized: dict | None = None


def _initial_measure(spec: dict) -> Measure:
    if spec.get("type") == "particles":
        n = int(spec["n"])
        point = np.atleast_1d(np.asarray(spec.get("point", [0.0]), dtype=float))
        return DiscreteMeasure(np.tile(point, (n, 1)))
    return measure_from_json(spec)


def parse_config(cfg: dict) -> ExperimentConfig:
    """Validate a config mapping against every module precondition.

    Raises
    ------
    ConfigError
        On any violated precondition (tau cap, domain compatibility,
        missing prox/gradient, exhausted explicit schedules, ...).
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    algorithm = cfg.get("algorithm")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    iterations = int(cfg.get("iterations", 0))
    if iterations < 0:
        raise ConfigError("iterations must be >= 0")
    seed = int(cfg.get("seed", 0))

    mode_cfg = cfg.get("mode", "exact")
    errors_cfg = cfg.get("errors", {"family": "zero"})
    if isinstance(mode_cfg, dict):
        errors_cfg = mode_cfg.get("epsilon_schedule", errors_cfg)
        mode_cfg = mode_cfg.get("mode", "exact")
    mode = str(mode_cfg)
    if mode not in ("exact", "distance", "variational"):
        raise ConfigError(f"unknown mode {mode!r}")

    try:
        steps = StepSchedule.from_config(cfg.get("steps", {"family": "constant", "tau": 1.0}))
        errors = ErrorSchedule.from_config(errors_cfg)
    except KeyError as exc:
        raise ConfigError(f"schedule config missing key {exc}") from exc
    if mode == "exact" and not errors.is_zero:
        raise ConfigError("exact mode requires a zero error schedule")

    for sched, label in ((steps, "steps"), (errors, "errors")):
        length = sched.length()
        if length is not None and length < iterations:
            raise ConfigError(f"explicit {label} schedule shorter than iterations")

    if "initial" not in cfg:
        raise ConfigError("config needs an initial measure")
    try:
        initial = _initial_measure(cfg["initial"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad initial measure: {exc}") from exc

    store_default = 1 if iterations <= 1000 else max(1, iterations // 100)
    store_every = int(cfg.get("store_every", store_default))
    if store_every < 1:
        raise ConfigError("store_every must be >= 1")
    wp_tolerance = cfg.get("wp_tolerance")

    out = ExperimentConfig(
        algorithm=algorithm,
        mode=mode,
        iterations=iterations,
        seed=seed,
        store_every=store_every,
        steps=steps,
        errors=errors,
        initial=initial,
        wp_tolerance=wp_tolerance,
    )

    if algorithm == "jko":
        if "functional" not in cfg:
            raise ConfigError("jko config needs a functional")
        f = make_functional(cfg["functional"])
        if isinstance(f, Potential):
            if not isinstance(initial, DiscreteMeasure):
                raise ConfigError("potential flows need a discrete initial measure")
            if not f.spec.has_prox:
                raise ConfigError("jko on a potential needs its prox")
            if mode == "variational" and not f.spec.has_grad:
                raise ConfigError("variational mode needs the potential's gradient")
        elif isinstance(f, EntropyGaussian):
            if not isinstance(initial, GaussianMeasure):
                raise ConfigError("entropy flows need a Gaussian initial measure")
        else:
            raise ConfigError(
                f"no exact proximal solver for {type(f).__name__}; use proxgrad for sums"
            )
        out.functional = f
    elif algorithm == "proxgrad":
        if "F" not in cfg or "H" not in cfg:
            raise ConfigError("proxgrad config needs F and H")
        fwd = make_potential(cfg["F"])
        h = make_functional(cfg["H"])
        try:
            out.problem = PgProblem(fwd, h)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        out.forward = fwd
        if isinstance(h, EntropyGaussian) and not isinstance(initial, GaussianMeasure):
            raise ConfigError("entropy backward step needs a Gaussian initial measure")
        if isinstance(h, Potential) and not isinstance(initial, DiscreteMeasure):
            raise ConfigError("potential backward step needs a discrete initial measure")
        if steps.sup() >= 1.0 / fwd.grad_lipschitz:
            raise ConfigError(
                f"sup tau = {steps.sup()} must stay below 1/L = {1.0 / fwd.grad_lipschitz}"
            )
    else:  # ula
        if "F" not in cfg:
            raise ConfigError("ula config needs F")
        fwd = make_potential(cfg["F"])
        if not fwd.has_grad:
            raise ConfigError("ula needs the potential's gradient")
        out.forward = fwd
        if not isinstance(initial, DiscreteMeasure):
            raise ConfigError("ula needs a discrete initial measure")
        if not np.allclose(initial.weights, 1.0 / initial.n, atol=1e-12):
            raise ConfigError("ula needs equal particle weights")

    out.normalized = _normalize(cfg, out)
    return out


def _normalize(cfg: dict, parsed: ExperimentConfig) -> dict:
    out = {"algorithm": parsed.algorithm}
    if parsed.algorithm == "jko":
        out["functional"] = _as_functional_cfg(cfg["functional"])
    elif parsed.algorithm == "proxgrad":
        out["F"] = _as_functional_cfg(cfg["F"])
        out["H"] = _as_functional_cfg(cfg["H"])
    else:
        out["F"] = _as_functional_cfg(cfg["F"])
    out["initial"] = cfg["initial"]
    out["steps"] = parsed.steps.to_config()
    out["errors"] = parsed.errors.to_config()
    out["mode"] = parsed.mode
    out["iterations"] = parsed.iterations
    out["seed"] = parsed.seed
    out["store_every"] = parsed.store_every
    if parsed.wp_tolerance is not None:
        out["wp_tolerance"] = parsed.wp_tolerance
    return out


def _as_functional_cfg(spec) -> dict:
    return {"functional": spec} if isinstance(spec, str) else spec


def run(config: ExperimentConfig | dict) -> Trace:
    """Execute the configured flow and return its trace.

    Deterministic given (config, seed); any module error aborts the run
    with the iteration index attached and the partial trace preserved on
    the raised exception (``partial_trace`` attribute).
    """
    if isinstance(config, dict):
        config = parse_config(config)
    n_iter = config.iterations
    lam = lips = None
    if config.algorithm == "proxgrad":
        lam, lips = config.problem.lam, config.problem.lips
    elif config.algorithm == "ula":
        lam = config.forward.strong_convexity
        lips = config.forward.grad_lipschitz
    elif isinstance(config.functional, Potential):
        lam = config.functional.spec.strong_convexity
        lips = config.functional.spec.grad_lipschitz

    trace = Trace(
        algorithm=config.algorithm,
        config=config.normalized,
        seed=config.seed,
        initial_measure=measure_to_json(config.initial),
        lam=lam,
        lips=lips,
    )
    if n_iter == 0:
        trace.final_measure = measure_to_json(config.initial)
        return trace

    taus = config.steps.taus(n_iter)
    sigmas = config.steps.sigmas(n_iter)
    epss = config.errors.epss(n_iter)

    objective = None
    oracle = None
    if config.algorithm == "jko":
        objective = config.functional
    elif config.algorithm == "proxgrad":
        objective = config.problem.objective
    if objective is not None:
        try:
            oracle = minimizer(objective)
        except NoClosedFormMinimizer:
            oracle = None

    mu = config.initial
    prev_exact = None
    try:
        for n in range(n_iter):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, n]))
            tau = float(taus[n])
            eps = float(epss[n]) if config.mode != "exact" else 0.0
            store = (n % config.store_every == 0) or (n == n_iter - 1)
            if config.algorithm == "ula":
                out = ula_step(mu, tau, config.forward, rng)
                rec = IterationRecord(
                    n=n,
                    tau=tau,
                    sigma=float(sigmas[n]),
                    mode="ula",
                    potential_value=float(out.weights @ config.forward.value_at(out.points)),
                    second_moment=out.second_moment(),
                    measure=measure_to_json(out) if store else None,
                )
            else:
                step_mode = StepMode(config.mode, eps)
                if config.algorithm == "jko":
                    res = jko_step(mu, tau, config.functional, step_mode, rng)
                    eta = None
                else:
                    res = pg_step(mu, tau, config.problem, step_mode, rng)
                    eta = res.eta
                out, exact = res.output, res.exact_output
                rec = IterationRecord(
                    n=n,
                    tau=tau,
                    sigma=float(sigmas[n]),
                    eps=eps,
                    mode=res.mode,
                    certified_w2_error=res.certified_w2_error,
                    certified_energy_gap=res.certified_energy_gap,
                    inner_iterations=res.inner_iterations,
                    G_value=evaluate(objective, out),
                    G_exact_step_value=evaluate(objective, exact),
                    w2_step_displacement=w2(exact, mu),
                    w2_output_to_exact=w2(out, exact),
                    measure=measure_to_json(out) if store else None,
                    exact_step=measure_to_json(exact) if store else None,
                )
                if oracle is not None:
                    rec.w2_to_minimizer = w2(out, oracle.measure)
                    rec.w2_exact_to_minimizer = w2(exact, oracle.measure)
                    if config.algorithm == "jko":
                        rec.evi_residual = evi_residual_jko(
                            mu, exact, oracle.measure, tau, objective
                        )
                    else:
                        rec.evi_residual = evi_residual_pg(
                            mu, exact, oracle.measure, tau, lam, lips, objective
                        )
                if eta is not None:
                    rec.eta_mean_norm = float(np.linalg.norm(eta.mean()))
                    rec.eta_second_moment = eta.second_moment()
                    rec.w2_eta_to_exact = w2(exact, eta)
                    if prev_exact is not None:
                        rec.w2_eta_to_prev_exact = w2(prev_exact, eta)
                    if store:
                        rec.eta = measure_to_json(eta)
                prev_exact = exact
            trace.append(rec)
            mu = out
    except WflowError as exc:
        exc.iteration = len(trace.records)
        exc.partial_trace = trace
        raise
    trace.final_measure = measure_to_json(mu)
    return trace


def emit_plot_data(trace: Trace) -> list[dict]:
    """Plot-ready long-format rows; no plotting is performed here.

    Columns: n, sigma_n, gap, sigma_times_gap, w1, w2, evi_margin, eps.
    ``gap`` is the run's primary rate gap (exact-step values, or iterate
    values for variational runs); blank where unavailable.
    """
    try:
        oracle = run_oracle(trace)
    except (OracleUnavailable, ConfigError, KeyError):
        oracle = None
    variational = trace.config.get("mode") == "variational"
    rows = []
    for rec in trace.records:
        gap = ""
        sig_gap = ""
        if oracle is not None:
            base = rec.G_value if variational else rec.G_exact_step_value
            if base is not None and math.isfinite(base):
                gap = base - oracle.value
                sig_gap = (rec.sigma + rec.tau) * gap
        w1 = ""
        if oracle is not None and rec.measure is not None:
            try:
                w1 = wp_distance(measure_from_json(rec.measure), oracle.measure, 1.0)
            except (EvalUnsupported, WflowError):
                w1 = ""
        rows.append(
            {
                "n": rec.n,
                "sigma_n": rec.sigma,
                "gap": gap,
                "sigma_times_gap": sig_gap,
                "w1": w1,
                "w2": rec.w2_to_minimizer if rec.w2_to_minimizer is not None else "",
                "evi_margin": -rec.evi_residual if rec.evi_residual is not None else "",
                "eps": rec.eps,
            }
        )
    return rows


def write_plot_csv(trace: Trace, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(PLOT_COLUMNS))
        writer.writeheader()
        for row in emit_plot_data(trace):
            writer.writerow(row)
    return path


@dataclass
class SweepPoint:
    params: dict
    trace: Trace | None
    report: object | None
    error: str | None = None


def _set_path(cfg: dict, dotted: str, value):
    parts = dotted.split(".")
    node = cfg
    for key in parts[:-1]:
        node = node.setdefault(key, {})
    node[parts[-1]] = value


def sweep(base_config: dict, grid: dict) -> list[SweepPoint]:
    """Run one experiment per grid point over dotted config paths.

    ``grid`` maps dotted paths (e.g. ``steps.tau``, ``errors.beta``) to
    value lists; the Cartesian product is traversed in sorted-key order.
    Per-point failures are recorded and the sweep continues.
    """
    keys = sorted(grid)
    points = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        cfg = copy.deepcopy(base_config)
        for key, value in params.items():
            _set_path(cfg, key, value)
        try:
            trace = run(cfg)
            report = certify(trace)
            points.append(SweepPoint(params, trace, report))
        except WflowError as exc:
            points.append(SweepPoint(params, None, None, error=str(exc)))
    return points


def sweep_summary_rows(points: list[SweepPoint]) -> tuple[list[str], list[list]]:
    """Header and rows for the sweep summary CSV."""
    keys = sorted({k for p in points for k in p.params})
    header = keys + [
        "status",
        "certified",
        "rate_sup_exact_step",
        "rate_sup_iterates",
        "final_w1",
        "final_w2",
        "error",
    ]
    rows = []
    for p in points:
        row = [p.params.get(k, "") for k in keys]
        if p.report is None:
            row += ["error", "", "", "", "", "", p.error or ""]
        else:
            rates = p.report.rate_constants
            row += [
                "ok",
                p.report.passed(),
                rates.get("exact_step_values", ""),
                rates.get("iterate_values", ""),
                p.report.wp_final.get("1.0", ""),
                p.report.wp_final.get("2.0", ""),
                "",
            ]
        rows.append(row)
    return header, rows


def load_config_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
