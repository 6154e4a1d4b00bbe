"""Scenario parameterization for the two-class priority ED queue.

A scenario is a single immutable :class:`ModelParams` record holding every
exogenous rate, capacity, threshold, price, cost, and objective weight.
Everything else in the package (QBD solver, metrics, optimizers, baseline
model, simulator) consumes these records and never mutates them.

State convention used throughout: ``i`` counts urgent patients in the system,
``j`` counts non-urgent patients, and the total occupancy is ``N = i + j``.
Non-urgent arrivals join freely below the redirection threshold ``theta``,
are offered an alternative-care referral while ``theta <= N < k`` (accepted
with probability ``p_a``), and balk once ``N >= k``. Urgent patients always
join and preempt non-urgent service when beds are contested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

__all__ = [
    "ModelParams",
    "DerivedParams",
    "StabilityVerdict",
    "ParamError",
    "PRESETS",
    "preset",
    "derive",
    "check_stability",
    "alpha",
    "servers_urgent",
    "servers_nonurgent",
    "round_half_up",
]

WAITING_COST_BASES = ("headcount", "per_patient_delay")

# JSON configs use "lambda" for the total arrival rate; the attribute is
# `lam` because `lambda` is a Python keyword.
_JSON_ALIASES = {"lambda": "lam"}
_ATTR_TO_JSON = {"lam": "lambda"}


class ParamError(ValueError):
    """Invalid scenario parameter; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


def round_half_up(x: float) -> int:
    """Round to the nearest integer with .5 going up (3.5 -> 4, 4.5 -> 5)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ModelParams:
    """All exogenous inputs of one scenario.

    Rates are per hour, capacities are bed counts, money fields are currency
    per patient (revenues, balking cost) or per patient-hour (waiting costs).
    """

    lam: float          # total arrival rate, patients/hour
    p_u: float          # urgent fraction of arrivals, in [0, 1]
    mu_u: float         # per-bed urgent service rate
    mu_n: float         # per-bed non-urgent service rate
    c_u: int            # urgent bed count
    c_n: int            # non-urgent bed count
    k: int              # balking cutoff on total occupancy
    theta: int          # redirection threshold, in [0, k-1]
    p_a: float          # probability an offered referral is accepted
    r_u_ed: float       # revenue per completed urgent ED patient
    r_n_ed: float       # revenue per completed non-urgent ED patient
    r_alt: float        # revenue per accepted alternative-care referral
    c_b: float          # cost per balking patient
    cw_u: float         # urgent waiting cost rate, currency/patient-hour
    cw_n: float         # non-urgent waiting cost rate, currency/patient-hour
    w_rev: float = 1.0  # objective weight on revenue
    w_balk: float = 1.0  # objective weight on balking cost
    w_wait: float = 1.0  # objective weight on waiting cost
    waiting_cost_basis: str = "headcount"

    def __post_init__(self):
        def bad(name, msg):
            raise ParamError(name, msg)

        if not (isinstance(self.c_u, int) and isinstance(self.c_n, int)):
            bad("c_u" if not isinstance(self.c_u, int) else "c_n",
                "bed counts must be integers")
        if not (isinstance(self.k, int) and isinstance(self.theta, int)):
            bad("k" if not isinstance(self.k, int) else "theta",
                "thresholds must be integers")
        if not (math.isfinite(self.lam) and self.lam > 0):
            bad("lam", f"arrival rate must be positive and finite, got {self.lam}")
        if not (0.0 <= self.p_u <= 1.0):
            bad("p_u", f"urgent fraction must lie in [0, 1], got {self.p_u}")
        if not (math.isfinite(self.mu_u) and self.mu_u > 0):
            bad("mu_u", f"service rate must be positive, got {self.mu_u}")
        if not (math.isfinite(self.mu_n) and self.mu_n > 0):
            bad("mu_n", f"service rate must be positive, got {self.mu_n}")
        if self.c_u < 0:
            bad("c_u", f"bed count must be nonnegative, got {self.c_u}")
        if self.c_n < 0:
            bad("c_n", f"bed count must be nonnegative, got {self.c_n}")
        if self.c_u + self.c_n < 1:
            bad("c_u", "total capacity c_u + c_n must be at least 1")
        if self.k < 1:
            bad("k", f"balking cutoff must be a positive integer, got {self.k}")
        if not (0 <= self.theta <= self.k - 1):
            bad("theta", f"threshold must lie in [0, k-1] = [0, {self.k - 1}], got {self.theta}")
        if not (0.0 <= self.p_a <= 1.0):
            bad("p_a", f"acceptance probability must lie in [0, 1], got {self.p_a}")
        for name in ("r_u_ed", "r_n_ed", "r_alt", "c_b", "cw_u", "cw_n"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                bad(name, f"must be finite and nonnegative, got {v}")
        for name in ("w_rev", "w_balk", "w_wait"):
            v = getattr(self, name)
            if not math.isfinite(v):
                bad(name, f"weight must be finite, got {v}")
        if self.waiting_cost_basis not in WAITING_COST_BASES:
            bad("waiting_cost_basis",
                f"must be one of {WAITING_COST_BASES}, got {self.waiting_cost_basis!r}")

    def to_dict(self) -> dict:
        """Flat JSON-ready dict; the arrival rate is emitted as "lambda"."""
        out = {}
        for f in fields(self):
            out[_ATTR_TO_JSON.get(f.name, f.name)] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        """Build from a flat dict, rejecting unknown keys."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            name = _JSON_ALIASES.get(key, key)
            if name not in known:
                raise ParamError(key, "unknown parameter field")
            if name in ("c_u", "c_n", "k", "theta"):
                if isinstance(value, float) and not value.is_integer():
                    raise ParamError(key, f"must be an integer, got {value}")
                value = int(value)
            kwargs[name] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ParamError("scenario", str(exc)) from None


@dataclass(frozen=True)
class DerivedParams:
    """Quantities computed once from a scenario and reused everywhere."""

    lambda_u: float  # urgent arrival rate lam * p_u
    lambda_n: float  # non-urgent arrival rate lam * (1 - p_u)
    c_total: int     # total bed count
    rho_u: float     # urgent traffic intensity lambda_u / (c_total * mu_u)
    h: int           # boundary level count, max(k, c_total)


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    mode: str        # "nested" or "fixed"
    intensity: float  # computed traffic intensity for the mode

    def __str__(self):
        word = "stable" if self.stable else "UNSTABLE"
        return f"{self.mode} mode {word} (intensity {self.intensity:.6g})"


def derive(params: ModelParams) -> DerivedParams:
    """Compute class arrival rates, total capacity, intensity, and level count."""
    lambda_u = params.lam * params.p_u
    lambda_n = params.lam * (1.0 - params.p_u)
    c_total = params.c_u + params.c_n
    rho_u = lambda_u / (c_total * params.mu_u)
    h = max(params.k, c_total)
    return DerivedParams(lambda_u=lambda_u, lambda_n=lambda_n,
                         c_total=c_total, rho_u=rho_u, h=h)


def check_stability(params: ModelParams, mode: str = "nested") -> StabilityVerdict:
    """Stability verdict for the shared-bed ("nested") or partitioned ("fixed") model.

    Nested: urgent load over the whole bed pool must satisfy
    lambda_u / (c_total * mu_u) < 1. Fixed: the urgent queue only sees its own
    beds, so lambda_u / (c_u * mu_u) < 1 and c_u >= 1 are required. An
    unstable scenario is a legitimate verdict, not an error.
    """
    d = derive(params)
    if mode == "nested":
        return StabilityVerdict(stable=d.rho_u < 1.0, mode="nested", intensity=d.rho_u)
    if mode == "fixed":
        if params.c_u < 1:
            return StabilityVerdict(stable=False, mode="fixed", intensity=math.inf)
        intensity = d.lambda_u / (params.c_u * params.mu_u)
        return StabilityVerdict(stable=intensity < 1.0, mode="fixed", intensity=intensity)
    raise ValueError(f"unknown mode {mode!r}, expected 'nested' or 'fixed'")


def alpha(i: int, j: int, params: ModelParams) -> float:
    """Probability that a non-urgent arrival seen in state (i, j) joins the ED.

    Below theta everyone joins; in the band [theta, k) the referral offer is
    accepted with probability p_a, so the join probability is 1 - p_a; at or
    above the balking cutoff nobody joins.
    """
    n = i + j
    if n < params.theta:
        return 1.0
    if n < params.k:
        return 1.0 - params.p_a
    return 0.0


def servers_urgent(i: int, params: ModelParams) -> int:
    """Busy urgent-class beds: urgent patients may use the entire pool."""
    return min(i, params.c_u + params.c_n)


def servers_nonurgent(i: int, j: int, params: ModelParams) -> int:
    """Busy non-urgent beds: capped by demand, non-preempted beds, and c_n."""
    c = params.c_u + params.c_n
    return min(j, max(0, c - i), params.c_n)


# Named presets. Bed splits use c_u = round_half_up(0.4 * c_total); the
# redirection threshold in each preset is the optimal one for that scenario
# so that sensitivity baselines run at the optimized operating point.
PRESETS: dict[str, dict] = {
    "rural": dict(
        lam=2.0, p_u=0.39, mu_u=0.15, mu_n=0.32,
        c_u=4, c_n=5, k=37, theta=5, p_a=0.52,
        r_u_ed=2221.00, r_n_ed=675.50, r_alt=436.00,
        c_b=550.96, cw_u=5531.61, cw_n=53.21,
    ),
    "urban": dict(
        lam=5.0, p_u=0.85, mu_u=0.15, mu_n=0.32,
        c_u=14, c_n=20, k=39, theta=27, p_a=0.52,
        r_u_ed=2221.00, r_n_ed=675.50, r_alt=436.00,
        c_b=550.96, cw_u=5531.61, cw_n=53.21,
    ),
    "nested-vs-fixed": dict(
        lam=20.0, p_u=0.8, mu_u=4.0, mu_n=6.0,
        c_u=8, c_n=10, k=25, theta=20, p_a=0.5,
        r_u_ed=200.0, r_n_ed=100.0, r_alt=40.0,
        c_b=30.0, cw_u=30.0, cw_n=20.0,
    ),
}


def preset(name: str, **overrides) -> ModelParams:
    """Load a named preset, optionally overriding individual fields."""
    if name not in PRESETS:
        raise ParamError("preset", f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    base = dict(PRESETS[name])
    for key, value in overrides.items():
        base[_JSON_ALIASES.get(key, key)] = value
    return ModelParams.from_dict(base)


def disabled_variant(params: ModelParams) -> ModelParams:
    """Referral-disabled counterpart of a scenario.

    Non-urgent arrivals face a binary join-or-balk rule: p_a = 0 removes the
    referral branch, and the balking cost defaults to the full non-urgent ED
    revenue (balking-cost ratio 1.0) since no cheaper fallback exists.
    """
    return replace(params, p_a=0.0, c_b=params.r_n_ed)
