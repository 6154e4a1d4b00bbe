"""Ratio-based sensitivity studies: tornado, scenario grid, proportional sweeps.

Sensitivity is expressed through operational ratios rather than raw
parameters. Economic ratio perturbations move the numerator parameter and
hold the non-urgent denominator fixed, so the non-urgent economy stays the
reference frame:

    bed_ratio          c_u / c        (re-splits the same total bed count)
    service_ratio      mu_u / mu_n    (moves mu_n; the urgent queue is the
                                       fixed reference for service speed)
    revenue_ratio      r_u_ed / r_n_ed
    waiting_ratio      cw_u / cw_n
    alt_revenue_ratio  r_alt / r_n_ed
    balking_ratio      c_b / r_n_ed
    threshold_ratio    theta / k      (integer-rounded, realized value kept)

The tornado analysis perturbs one ratio at a time around a fixed operating
point (the baseline optimal threshold); the proportional analysis is the
re-optimizing counterpart that lets the threshold adapt at every grid point.
The scenario grid applies +/-20% single-parameter shifts, re-optimizes, runs
a tornado per case, and tabulates the referral-enabled versus
referral-disabled economics side by side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .params import ModelParams, check_stability, disabled_variant, round_half_up
from .optimize import evaluate_nested, optimize_theta

__all__ = [
    "RATIO_NAMES",
    "DISABLED_RATIO_NAMES",
    "SensitivityError",
    "AppliedRatio",
    "TornadoRow",
    "TornadoReport",
    "ScenarioRow",
    "ScenarioTable",
    "SweepRow",
    "SweepTable",
    "ratio_base_values",
    "apply_ratio",
    "tornado",
    "scenario_grid",
    "proportional_sweep",
    "ENABLED_CASES",
    "DISABLED_CASES",
]

RATIO_NAMES = (
    "bed_ratio",
    "service_ratio",
    "revenue_ratio",
    "waiting_ratio",
    "alt_revenue_ratio",
    "balking_ratio",
    "threshold_ratio",
)

# Without referrals there is no alternative revenue and the threshold is
# inert, leaving the five core ratios.
DISABLED_RATIO_NAMES = (
    "bed_ratio",
    "service_ratio",
    "revenue_ratio",
    "waiting_ratio",
    "balking_ratio",
)


class SensitivityError(ValueError):
    """Infeasible ratio value; the message names the nearest feasible one."""


def ratio_base_values(params: ModelParams, theta: int | None = None) -> dict:
    """Base value of every ratio, recomputed from the scenario record."""
    if theta is None:
        theta = params.theta
    c = params.c_u + params.c_n
    return {
        "bed_ratio": params.c_u / c,
        "service_ratio": params.mu_u / params.mu_n,
        "revenue_ratio": params.r_u_ed / params.r_n_ed,
        "waiting_ratio": params.cw_u / params.cw_n,
        "alt_revenue_ratio": params.r_alt / params.r_n_ed,
        "balking_ratio": params.c_b / params.r_n_ed,
        "threshold_ratio": theta / params.k,
    }


@dataclass(frozen=True)
class AppliedRatio:
    params: ModelParams
    requested: float
    realized: float
    note: str = ""


def apply_ratio(params: ModelParams, ratio_name: str,
                new_value: float) -> AppliedRatio:
    """Set one ratio to ``new_value`` by moving its numerator parameter.

    Bed and threshold ratios land on integer grids: the numerator rounds
    half-up and the realized ratio is reported alongside the request.
    Values outside the feasible region raise :class:`SensitivityError`
    naming the nearest feasible alternative.
    """
    if ratio_name not in RATIO_NAMES:
        raise SensitivityError(f"unknown ratio {ratio_name!r}; known: {RATIO_NAMES}")
    if ratio_name != "threshold_ratio" and new_value <= 0:
        raise SensitivityError(
            f"{ratio_name} must be positive, got {new_value}")

    if ratio_name == "bed_ratio":
        c = params.c_u + params.c_n
        c_u = round_half_up(new_value * c)
        if not 1 <= c_u <= c - 1:
            nearest = max(1, min(c - 1, c_u)) / c
            raise SensitivityError(
                f"bed_ratio {new_value:.6g} yields c_u={c_u} outside [1, {c - 1}]; "
                f"nearest feasible ratio is {nearest:.6g}")
        out = replace(params, c_u=c_u, c_n=c - c_u)
        return AppliedRatio(out, new_value, c_u / c)
    if ratio_name == "service_ratio":
        # moves the non-urgent rate: mu_n = mu_u / ratio. Moving mu_u instead
        # would let the urgent-delay cost dwarf every policy-relevant effect
        # (and change stability); holding the urgent queue fixed matches the
        # published sensitivity rankings.
        out = replace(params, mu_n=params.mu_u / new_value)
        return AppliedRatio(out, new_value, new_value)
    if ratio_name == "revenue_ratio":
        out = replace(params, r_u_ed=new_value * params.r_n_ed)
        return AppliedRatio(out, new_value, new_value)
    if ratio_name == "waiting_ratio":
        out = replace(params, cw_u=new_value * params.cw_n)
        return AppliedRatio(out, new_value, new_value)
    if ratio_name == "alt_revenue_ratio":
        out = replace(params, r_alt=new_value * params.r_n_ed)
        return AppliedRatio(out, new_value, new_value)
    if ratio_name == "balking_ratio":
        out = replace(params, c_b=new_value * params.r_n_ed)
        return AppliedRatio(out, new_value, new_value)
    # threshold_ratio
    if new_value < 0:
        raise SensitivityError(
            f"threshold_ratio must be nonnegative, got {new_value}")
    theta = round_half_up(new_value * params.k)
    if theta > params.k - 1:
        nearest = (params.k - 1) / params.k
        raise SensitivityError(
            f"threshold_ratio {new_value:.6g} yields theta={theta} beyond "
            f"k-1={params.k - 1}; nearest feasible ratio is {nearest:.6g}")
    out = replace(params, theta=theta)
    return AppliedRatio(out, new_value, theta / params.k)


@dataclass(frozen=True)
class TornadoRow:
    ratio: str
    base_value: float
    low_value: float        # realized perturbed ratio values
    high_value: float
    delta_low: float        # Z(low) - Z_0
    delta_high: float       # Z(high) - Z_0
    impact: float           # |Z(high) - Z(low)|
    rel_impact_pct: float   # 100 * impact / |Z_0|
    rank: int = 0
    error: str = ""


@dataclass(frozen=True)
class TornadoReport:
    params: ModelParams
    theta: int
    baseline_Z: float
    variation: float
    rows: tuple  # ranked by impact descending, name-lexicographic on ties

    def top(self) -> TornadoRow:
        return self.rows[0]

    def row(self, ratio: str) -> TornadoRow:
        for r in self.rows:
            if r.ratio == ratio:
                return r
        raise KeyError(ratio)


def tornado(params: ModelParams, variation: float = 0.05,
            theta: int | None = None, ratios=None) -> TornadoReport:
    """One-at-a-time ratio perturbation around a fixed operating point.

    The operating threshold is the baseline optimum unless given explicitly;
    every non-threshold perturbation is evaluated at that same fixed theta.
    The threshold ratio itself perturbs theta (that is the knob), and
    perturbations that round back to the same integer produce impact zero.
    Per-ratio failures are recorded on their row so the report completes.
    """
    if theta is None:
        theta = optimize_theta(params).theta_star
    base_params = replace(params, theta=theta)
    if ratios is None:
        ratios = RATIO_NAMES if params.p_a > 0 else DISABLED_RATIO_NAMES

    Z_0 = evaluate_nested(base_params).objective.Z
    bases = ratio_base_values(base_params)
    rows = []
    for name in ratios:
        base = bases[name]
        try:
            lo = apply_ratio(base_params, name, base * (1.0 - variation))
            hi = apply_ratio(base_params, name, base * (1.0 + variation))
            Z_lo = evaluate_nested(lo.params).objective.Z
            Z_hi = evaluate_nested(hi.params).objective.Z
        except Exception as exc:
            rows.append(TornadoRow(ratio=name, base_value=base,
                                   low_value=math.nan, high_value=math.nan,
                                   delta_low=math.nan, delta_high=math.nan,
                                   impact=math.nan, rel_impact_pct=math.nan,
                                   error=str(exc)))
            continue
        impact = abs(Z_hi - Z_lo)
        if Z_0 != 0.0:
            rel = 100.0 * impact / abs(Z_0)
        else:
            rel = 0.0 if impact == 0.0 else math.inf
        rows.append(TornadoRow(ratio=name, base_value=base,
                               low_value=lo.realized, high_value=hi.realized,
                               delta_low=Z_lo - Z_0, delta_high=Z_hi - Z_0,
                               impact=impact, rel_impact_pct=rel))

    ok = [r for r in rows if not r.error]
    failed = [r for r in rows if r.error]
    ok.sort(key=lambda r: (-r.impact, r.ratio))
    ranked = [replace(r, rank=i + 1) for i, r in enumerate(ok)] + failed
    return TornadoReport(params=base_params, theta=theta, baseline_Z=Z_0,
                         variation=variation, rows=tuple(ranked))


@dataclass(frozen=True)
class ScenarioCase:
    key: str
    description: str
    field: str | None   # None for the baseline case
    factor: float = 1.0


ENABLED_CASES = (
    ScenarioCase("baseline", "Original parameters", None),
    ScenarioCase("low_urgent_proportion", "p_u -20%", "p_u", 0.8),
    ScenarioCase("high_urgent_proportion", "p_u +20%", "p_u", 1.2),
    ScenarioCase("low_arrival_rate", "lambda -20%", "lam", 0.8),
    ScenarioCase("high_arrival_rate", "lambda +20%", "lam", 1.2),
    ScenarioCase("low_urgent_service", "mu_u -20%", "mu_u", 0.8),
    ScenarioCase("high_urgent_service", "mu_u +20%", "mu_u", 1.2),
    ScenarioCase("low_capacity", "c -20%", "c_total", 0.8),
    ScenarioCase("high_capacity", "c +20%", "c_total", 1.2),
    ScenarioCase("low_acceptance", "p_a -20%", "p_a", 0.8),
    ScenarioCase("high_acceptance", "p_a +20%", "p_a", 1.2),
    ScenarioCase("low_balking_threshold", "k -20%", "k", 0.8),
    ScenarioCase("high_balking_threshold", "k +20%", "k", 1.2),
    ScenarioCase("low_theta", "theta -20%", "theta", 0.8),
    ScenarioCase("high_theta", "theta +20%", "theta", 1.2),
)

DISABLED_CASES = tuple(c for c in ENABLED_CASES
                       if c.field not in ("p_a", "theta"))


def _apply_case(params: ModelParams, case: ScenarioCase):
    """Shifted scenario for one case, with feasibility notes.

    Integer fields round half-up, probabilities clip to [0, 1], and an
    arrival-rate shift that breaks stability falls back to the baseline rate
    (the convention used by the published scenario tables, which cap the
    arrival rate at its base value). Other destabilizing shifts are returned
    as-is so the caller can record an unstable verdict row.
    """
    notes = []
    if case.field is None:
        return params, notes
    if case.field == "c_total":
        # integer shifts truncate; the bed split keeps the scenario's ratio
        c = params.c_u + params.c_n
        c_new = max(1, int(case.factor * c))
        c_u = min(max(round_half_up(params.c_u / c * c_new), 0), c_new)
        out = replace(params, c_u=c_u, c_n=c_new - c_u)
        notes.append(f"c_total {c} -> {c_new} (c_u {params.c_u} -> {c_u})")
    elif case.field in ("k", "theta"):
        value = int(case.factor * getattr(params, case.field))
        if case.field == "k":
            value = max(value, 1)
            theta = min(params.theta, value - 1)
            if theta != params.theta:
                notes.append(f"theta clamped to {theta} for k={value}")
            out = replace(params, k=value, theta=theta)
        else:
            value = min(max(value, 0), params.k - 1)
            out = replace(params, theta=value)
    elif case.field in ("p_u", "p_a"):
        raw = case.factor * getattr(params, case.field)
        value = min(max(raw, 0.0), 1.0)
        if value != raw:
            notes.append(f"{case.field} {raw:.4g} clipped to {value:.4g}")
        out = replace(params, **{case.field: value})
    else:
        out = replace(params, **{case.field: case.factor * getattr(params, case.field)})

    if case.field == "lam" and not check_stability(out).stable:
        notes.append(f"lam {out.lam:.4g} unstable; capped at baseline {params.lam:.4g}")
        out = replace(out, lam=params.lam)
    return out, notes


@dataclass(frozen=True)
class ScenarioRow:
    key: str
    description: str
    stable: bool
    baseline_obj: float | None      # objective of the given model at its theta*
    theta_star: int | None
    theta_over_k: float | None
    top_ratio: str | None
    top_rel_impact_pct: float | None
    enabled_Z: float | None
    disabled_Z: float | None
    benefit: float | None           # enabled - disabled
    gain_pct: float | None          # 100 * benefit / |disabled|
    notes: tuple = ()


@dataclass(frozen=True)
class ScenarioTable:
    params: ModelParams
    variation: float
    rows: tuple

    def row(self, key: str) -> ScenarioRow:
        for r in self.rows:
            if r.key == key:
                return r
        raise KeyError(key)


def scenario_grid(params: ModelParams, cases=None,
                  variation: float = 0.05) -> ScenarioTable:
    """Tornado-and-comparison table across +/-20% single-parameter shifts.

    Each stable case re-optimizes the threshold, runs a tornado at the case
    optimum, and reports the referral-disabled counterpart economics for the
    benefit/gain columns. Unstable cases become verdict rows and the run
    continues.
    """
    if cases is None:
        cases = ENABLED_CASES if params.p_a > 0 else DISABLED_CASES
    rows = []
    for case in cases:
        case_params, notes = _apply_case(params, case)
        if not check_stability(case_params).stable:
            rows.append(ScenarioRow(
                key=case.key, description=case.description, stable=False,
                baseline_obj=None, theta_star=None, theta_over_k=None,
                top_ratio=None, top_rel_impact_pct=None, enabled_Z=None,
                disabled_Z=None, benefit=None, gain_pct=None,
                notes=tuple(notes + ["unstable"])))
            continue
        curve = optimize_theta(case_params)
        report = tornado(case_params, variation=variation,
                         theta=curve.theta_star)
        dis = disabled_variant(case_params)
        # theta is inert without referrals: evaluate once at zero.
        dis_Z = evaluate_nested(replace(dis, theta=0)).objective.Z
        enabled_Z = curve.Z_star
        benefit = enabled_Z - dis_Z
        gain = 100.0 * benefit / abs(dis_Z) if dis_Z != 0 else math.inf
        top = report.top()
        rows.append(ScenarioRow(
            key=case.key, description=case.description, stable=True,
            baseline_obj=report.baseline_Z, theta_star=curve.theta_star,
            theta_over_k=curve.theta_star / case_params.k,
            top_ratio=top.ratio, top_rel_impact_pct=top.rel_impact_pct,
            enabled_Z=enabled_Z, disabled_Z=dis_Z, benefit=benefit,
            gain_pct=gain, notes=tuple(notes)))
    return ScenarioTable(params=params, variation=variation, rows=tuple(rows))


@dataclass(frozen=True)
class SweepRow:
    requested: float
    realized: float | None
    theta_star: int | None
    Z: float | None
    error: str = ""


@dataclass(frozen=True)
class SweepTable:
    ratio: str
    params: ModelParams
    rows: tuple


def default_sweep_values(params: ModelParams, ratio_name: str) -> list:
    """Practical default grid for each ratio's feasible operating range."""
    bases = ratio_base_values(params)
    if ratio_name == "bed_ratio":
        c = params.c_u + params.c_n
        return [c_u / c for c_u in range(1, c)]
    if ratio_name == "threshold_ratio":
        return list(np.linspace(0.0, 0.9, 19))
    lo, hi, n = 0.5, 2.0, 16
    return list(np.linspace(lo, hi, n) * bases[ratio_name])


def proportional_sweep(params: ModelParams, ratio_name: str,
                       values=None) -> SweepTable:
    """Optimal-performance envelope across one ratio's operating range.

    Every grid point re-optimizes the threshold, except for the threshold
    ratio itself, where the policy is the thing being swept and theta is
    forced to the grid value. Infeasible or failing points become error rows
    and the sweep continues.
    """
    if values is None:
        values = default_sweep_values(params, ratio_name)
    rows = []
    for value in values:
        try:
            applied = apply_ratio(params, ratio_name, float(value))
            if ratio_name == "threshold_ratio":
                res = evaluate_nested(applied.params)
                rows.append(SweepRow(requested=float(value),
                                     realized=applied.realized,
                                     theta_star=applied.params.theta,
                                     Z=res.objective.Z))
            else:
                curve = optimize_theta(applied.params)
                rows.append(SweepRow(requested=float(value),
                                     realized=applied.realized,
                                     theta_star=curve.theta_star,
                                     Z=curve.Z_star))
        except Exception as exc:
            rows.append(SweepRow(requested=float(value), realized=None,
                                 theta_star=None, Z=None, error=str(exc)))
    return SweepTable(ratio=ratio_name, params=params, rows=tuple(rows))
