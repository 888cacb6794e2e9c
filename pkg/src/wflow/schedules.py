"""Stepsize and error schedules with summability verdicts.

Symbolic families (constant, power-law) get analytic verdicts by the
comparison test; explicit numeric lists only ever report partial sums
with verdict ``unknown`` -- finitely many terms cannot certify an
asymptotic hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_HORIZON = 100_000

HOLDS = "holds"
FAILS = "fails"
UNKNOWN = "unknown"

# Algorithm-keyed error-sum conditions.  The proximal-gradient theorems
# need first-power sums where the proximal-point ones need squares; the
# report always lists all four to prevent hypothesis mix-ups.
SERIES_CONDITIONS = {
    "jko_distance": ("sq", 1),
    "jko_variational": ("sq", 0),
    "pg_distance": ("lin", 1),
    "pg_variational": ("lin", 0),
}
ALGORITHMS = tuple(SERIES_CONDITIONS)


@dataclass(frozen=True)
class StepSchedule:
    """Stepsize family: constant tau, power c/(n+1)^alpha, or a list."""

    kind: str
    c: float = 0.0
    alpha: float = 0.0
    values: tuple = ()
    cap: float | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.c <= 0:
                raise ConfigError("constant stepsize must be positive")
        elif self.kind == "power":
            if self.c <= 0:
                raise ConfigError("power stepsize coefficient must be positive")
            if not 0.0 <= self.alpha <= 1.0:
                raise ConfigError("power stepsize exponent must lie in [0, 1]")
        elif self.kind == "explicit":
            if len(self.values) == 0 or any(v <= 0 for v in self.values):
                raise ConfigError("explicit stepsizes must be positive")
        else:
            raise ConfigError(f"unknown step family {self.kind!r}")
        if self.cap is not None and self.sup() >= self.cap:
            raise ConfigError(f"sup tau = {self.sup()} must stay below cap {self.cap}")

    @classmethod
    def constant(cls, tau: float, cap: float | None = None):
        return cls("constant", c=float(tau), cap=cap)

    @classmethod
    def power(cls, c: float, alpha: float, cap: float | None = None):
        return cls("power", c=float(c), alpha=float(alpha), cap=cap)

    @classmethod
    def explicit(cls, values, cap: float | None = None):
        return cls("explicit", values=tuple(float(v) for v in values), cap=cap)

    @property
    def symbolic(self) -> bool:
        return self.kind != "explicit"

    def sup(self) -> float:
        if self.kind == "explicit":
            return max(self.values)
        return self.c  # tau_0 is the largest term for alpha >= 0

    def length(self) -> int | None:
        return len(self.values) if self.kind == "explicit" else None

    def tau(self, n: int) -> float:
        return float(self.taus(n + 1)[n])

    def taus(self, count: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(count, self.c)
        if self.kind == "power":
            return self.c / (np.arange(count) + 1.0) ** self.alpha
        if count > len(self.values):
            raise ConfigError(
                f"explicit step schedule has {len(self.values)} terms, {count} needed"
            )
        return np.array(self.values[:count])

    def sigmas(self, count: int) -> np.ndarray:
        """Partial sums sigma_0..sigma_count (length count + 1, sigma_0 = 0)."""
        if self.kind == "constant":
            return self.c * np.arange(count + 1)
        out = np.zeros(count + 1)
        out[1:] = np.cumsum(self.taus(count))
        return out

    def sigma(self, n: int) -> float:
        if n < 0:
            raise ValueError("n must be >= 0")
        return float(self.sigmas(n)[n])

    def to_config(self) -> dict:
        if self.kind == "constant":
            out = {"family": "constant", "tau": self.c}
        elif self.kind == "power":
            out = {"family": "power", "c": self.c, "alpha": self.alpha}
        else:
            out = {"family": "explicit", "values": list(self.values)}
        if self.cap is not None:
            out["cap"] = self.cap
        return out

    @classmethod
    def from_config(cls, cfg: dict):
        fam = cfg.get("family")
        cap = cfg.get("cap")
        if fam == "constant":
            return cls.constant(cfg["tau"], cap)
        if fam == "power":
            return cls.power(cfg["c"], cfg["alpha"], cap)
        if fam == "explicit":
            return cls.explicit(cfg["values"], cap)
        raise ConfigError(f"unknown step family {fam!r}")


@dataclass(frozen=True)
class ErrorSchedule:
    """Error-budget family: identically zero, power c/(n+1)^beta, or a list."""

    kind: str
    c: float = 0.0
    beta: float = 0.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind == "zero":
            return
        if self.kind == "power":
            if self.c < 0:
                raise ConfigError("error coefficient must be nonnegative")
            if self.beta < 0:
                raise ConfigError("error exponent must be nonnegative")
        elif self.kind == "explicit":
            if any(v < 0 for v in self.values):
                raise ConfigError("explicit errors must be nonnegative")
        else:
            raise ConfigError(f"unknown error family {self.kind!r}")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def power(cls, c: float, beta: float):
        return cls("power", c=float(c), beta=float(beta))

    @classmethod
    def explicit(cls, values):
        return cls("explicit", values=tuple(float(v) for v in values))

    @property
    def symbolic(self) -> bool:
        return self.kind != "explicit"

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "power" and self.c == 0.0)

    def length(self) -> int | None:
        return len(self.values) if self.kind == "explicit" else None

    def eps(self, n: int) -> float:
        return float(self.epss(n + 1)[n])

    def epss(self, count: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(count)
        if self.kind == "power":
            return self.c / (np.arange(count) + 1.0) ** self.beta
        if count > len(self.values):
            raise ConfigError(
                f"explicit error schedule has {len(self.values)} terms, {count} needed"
            )
        return np.array(self.values[:count])

    def to_config(self) -> dict:
        if self.kind == "zero":
            return {"family": "zero"}
        if self.kind == "power":
            return {"family": "power", "c": self.c, "beta": self.beta}
        return {"family": "explicit", "values": list(self.values)}

    @classmethod
    def from_config(cls, cfg: dict):
        fam = cfg.get("family")
        if fam == "zero":
            return cls.zero()
        if fam == "power":
            return cls.power(cfg["c"], cfg["beta"])
        if fam == "explicit":
            return cls.explicit(cfg["values"])
        raise ConfigError(f"unknown error family {fam!r}")


def sigma(schedule: StepSchedule, n: int) -> float:
    """Partial stepsize sum sigma_n = sum_{i<n} tau_i, sigma_0 = 0."""
    return schedule.sigma(n)


@dataclass
class ConditionVerdict:
    status: str
    partial_sum: float
    horizon: int
    detail: str = ""

    def to_json(self):
        return {
            "status": self.status,
            "partial_sum": self.partial_sum,
            "horizon": self.horizon,
            "detail": self.detail,
        }


@dataclass
class ConditionReport:
    """Per-condition verdicts with partial sums up to a horizon."""

    algorithm: str
    conditions: dict[str, ConditionVerdict] = field(default_factory=dict)
    required: tuple = ()

    def all_required_hold(self) -> bool:
        return all(self.conditions[name].status == HOLDS for name in self.required)

    def any_required_fails(self) -> bool:
        return any(self.conditions[name].status == FAILS for name in self.required)

    def to_json(self):
        return {
            "algorithm": self.algorithm,
            "required": list(self.required),
            "conditions": {k: v.to_json() for k, v in self.conditions.items()},
        }


def _series_verdict(steps, errors, flavor, shift) -> str:
    """Classify sum (sigma_n / tau_n) * eps_{n-shift}^k by comparison test.

    With tau_n = c (n+1)^-alpha we have sigma_n / tau_n of order n (times
    log n at alpha = 1) and eps terms of order n^-k*beta, so the series
    behaves like n^(1 - k*beta): summable iff the exponent is < -1.
    The index shift does not change the asymptotics.
    """
    if errors.is_zero:
        return HOLDS
    if not (steps.symbolic and errors.symbolic):
        return UNKNOWN
    k = 2 if flavor == "sq" else 1
    exponent = 1.0 - k * errors.beta
    return HOLDS if exponent < -1.0 else FAILS


def check_conditions(
    steps: StepSchedule,
    errors: ErrorSchedule,
    algorithm: str,
    L: float | None = None,
    horizon: int = DEFAULT_HORIZON,
) -> ConditionReport:
    """Classify every theorem hypothesis for the given schedules.

    Parameters
    ----------
    steps, errors : schedules
    algorithm : str
        One of ``jko_distance``, ``jko_variational``, ``pg_distance``,
        ``pg_variational``; selects which error-sum condition is
        required (the others are still reported).
    L : float, optional
        Gradient Lipschitz constant; enables the ``sup tau < 1/L`` check
        (required for the pg algorithms).
    horizon : int
        Number of terms in the reported partial sums.

    Returns
    -------
    ConditionReport
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    for n in (steps.length(), errors.length()):
        if n is not None:
            horizon = min(horizon, n)
    taus = steps.taus(horizon)
    sigmas = steps.sigmas(horizon)[:-1]  # sigma_0..sigma_{horizon-1}
    epss = errors.epss(horizon)
    ratio = sigmas / taus  # entry n is sigma_n / tau_n; zero at n=0

    report = ConditionReport(algorithm=algorithm)

    if errors.is_zero:
        eps_status = HOLDS
    elif errors.symbolic:
        eps_status = HOLDS if errors.beta > 1.0 else FAILS
    else:
        eps_status = UNKNOWN
    report.conditions["sum_eps"] = ConditionVerdict(
        eps_status, float(epss.sum()), horizon, "sum eps_n < inf"
    )

    tau_status = HOLDS if steps.symbolic else UNKNOWN
    report.conditions["sum_tau_diverges"] = ConditionVerdict(
        tau_status, float(taus.sum()), horizon, "sum tau_n = inf"
    )

    for name, (flavor, shift) in SERIES_CONDITIONS.items():
        eps_shifted = epss[: horizon - shift] if shift else epss
        terms = ratio[shift:] * (
            eps_shifted**2 if flavor == "sq" else eps_shifted
        )
        power = "^2" if flavor == "sq" else ""
        idx = "n-1" if shift else "n"
        report.conditions[name] = ConditionVerdict(
            _series_verdict(steps, errors, flavor, shift),
            float(terms.sum()),
            horizon,
            f"sum (sigma_n/tau_n) eps_{idx}{power} < inf",
        )

    required = ["sum_eps", "sum_tau_diverges", algorithm]
    if algorithm.startswith("pg"):
        # The stepsize cap is a forward-backward hypothesis only; the
        # proximal-point theorems place no upper bound on tau.
        if L is None:
            status, sup_val = UNKNOWN, steps.sup()
            detail = "sup tau_n < 1/L (L not provided)"
        else:
            sup_val = steps.sup()
            status = HOLDS if sup_val < 1.0 / L else FAILS
            detail = f"sup tau_n = {sup_val} < 1/L = {1.0 / L}"
        report.conditions["sup_tau_lt_inv_L"] = ConditionVerdict(
            status, sup_val, horizon, detail
        )
        required.append("sup_tau_lt_inv_L")
    report.required = tuple(required)
    return report
