"""Steady-state performance measures and the economic objective.

All quantities are long-run time averages computed exactly from a stationary
distribution: finite sums over the boundary rows plus closed-form geometric
tail sums for the infinitely many levels above ``h``. Nothing here truncates
the level space.

The waiting-cost component supports two conventions. The default
("headcount") charges ``cw * E[N]`` per hour, i.e. the time-integral of the
instantaneous census weighted by the per-patient-hour rate. The alternative
("per_patient_delay") charges ``cw * E[W]`` using the expected sojourn time.
The headcount convention is what the saturation economics of the bundled
comparison preset reproduce exactly, so it is the default everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .params import ModelParams, derive, servers_nonurgent

__all__ = [
    "PerformanceMetrics",
    "ObjectiveBreakdown",
    "compute_metrics",
    "compute_objective",
]


@dataclass(frozen=True)
class PerformanceMetrics:
    """Steady-state expectations for one scenario.

    ``lambda_n_eff`` is the rate at which non-urgent patients actually enter
    the ED (joins below theta plus declined referrals that still fit), and it
    balances the non-urgent service throughput ``mu_n * E_Nn_s`` exactly.
    ``p_balk`` is the probability an arriving non-urgent patient leaves
    without care: total occupancy at or above k, plus the boundary case of a
    declined referral arriving when the non-urgent space is already full.
    """

    E_Nn: float          # expected non-urgent patients in system
    E_Nu: float          # expected urgent patients in system
    E_Nn_s: float        # expected non-urgent patients in service
    E_Nu_s: float        # expected urgent patients in service
    lambda_n_eff: float  # effective non-urgent admission rate
    E_Wn: float          # non-urgent sojourn time (Little); NaN if no admissions
    E_Wu: float          # urgent sojourn time
    p_balk: float        # P(arriving non-urgent patient is lost)
    p_band: float        # P(theta <= N < k)
    p_below: float       # P(N < theta)
    wn_defined: bool = True

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Per-component revenue and cost rates plus the weighted net benefit."""

    R_u: float        # urgent ED revenue rate
    R_n_ed: float     # non-urgent ED revenue rate
    R_alt_rev: float  # accepted-referral revenue rate
    B_cost: float     # balking cost rate
    W_n_cost: float   # non-urgent waiting cost rate
    W_u_cost: float   # urgent waiting cost rate
    Z: float          # weighted net benefit rate

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def compute_metrics(dist, params: ModelParams) -> PerformanceMetrics:
    """Performance measures from a solved joint stationary distribution.

    ``dist`` carries boundary rows ``x_rows`` (h+1 of them, length k) and the
    geometric ratio ``rho_u``; levels above h contribute through closed-form
    geometric sums. Sums that vanish beyond a finite level (in-service counts,
    band and below-threshold probabilities) stay finite by construction.
    """
    d = derive(params)
    k, h, c = params.k, dist.h, d.c_total
    rho = dist.rho_u
    x = dist.x_rows
    phases = np.arange(k)

    level_mass = x.sum(axis=1)
    tail_count = 1.0 / (1.0 - rho)
    tail_index = h / (1.0 - rho) + rho / (1.0 - rho) ** 2

    levels_below_h = np.arange(h)
    E_Nu = float(levels_below_h @ level_mass[:h] + level_mass[h] * tail_index)
    E_Nu_s = float(np.minimum(levels_below_h, c) @ level_mass[:h]
                   + c * level_mass[h] * tail_count)
    E_Nn = float((x[:h] * phases).sum() + (x[h] * phases).sum() * tail_count)

    E_Nn_s = 0.0
    for i in range(min(c, h + 1)):
        s_n = np.array([servers_nonurgent(i, j, params) for j in range(k)], dtype=float)
        E_Nn_s += float(s_n @ x[i])

    p_below = 0.0
    for i in range(min(params.theta, h + 1)):
        p_below += float(x[i, : params.theta - i].sum())

    p_band = 0.0
    for i in range(min(k, h + 1)):
        lo = max(0, params.theta - i)
        hi = k - i  # exclusive; phases j with i + j < k
        if hi > lo:
            p_band += float(x[i, lo:hi].sum())

    # P(N >= k): boundary part plus the whole geometric tail (h >= k, so
    # every state at levels >= h is at or above the cutoff).
    p_at_or_above = 0.0
    for i in range(h):
        lo = max(0, k - i)
        p_at_or_above += float(x[i, lo:].sum())
    p_at_or_above += float(level_mass[h] * tail_count)

    # Full-buffer boundary state (0, k-1): an arriving non-urgent patient is
    # in the offer band there, but a decline cannot join (phase space ends at
    # k-1), so that flow counts as lost rather than admitted.
    corner = float(x[0, k - 1])
    join_band = p_band - corner
    lambda_n_eff = d.lambda_n * (p_below + (1.0 - params.p_a) * join_band)
    p_balk = p_at_or_above + (1.0 - params.p_a) * corner

    wn_defined = lambda_n_eff > 0.0
    E_Wn = E_Nn / lambda_n_eff if wn_defined else math.nan
    E_Wu = E_Nu / d.lambda_u if d.lambda_u > 0.0 else math.nan

    return PerformanceMetrics(
        E_Nn=E_Nn, E_Nu=E_Nu, E_Nn_s=E_Nn_s, E_Nu_s=E_Nu_s,
        lambda_n_eff=lambda_n_eff, E_Wn=E_Wn, E_Wu=E_Wu,
        p_balk=p_balk, p_band=p_band, p_below=p_below,
        wn_defined=wn_defined)


def compute_objective(metrics: PerformanceMetrics,
                      params: ModelParams) -> ObjectiveBreakdown:
    """Weighted net benefit rate from already-computed performance measures.

    Revenue flows follow completion/acceptance rates: urgent and non-urgent
    ED revenue at ``r * mu * E[in service]``, referral revenue at
    ``r_alt * lambda_n * p_a * P(band)`` (arrivals see time averages), and
    balking cost at ``c_b * lambda_n * p_balk``.
    """
    d = derive(params)
    R_u = params.r_u_ed * params.mu_u * metrics.E_Nu_s
    R_n_ed = params.r_n_ed * params.mu_n * metrics.E_Nn_s
    R_alt_rev = params.r_alt * d.lambda_n * params.p_a * metrics.p_band
    B_cost = params.c_b * d.lambda_n * metrics.p_balk

    if params.waiting_cost_basis == "headcount":
        W_n_cost = params.cw_n * metrics.E_Nn
        W_u_cost = params.cw_u * metrics.E_Nu
    else:  # per_patient_delay
        if metrics.wn_defined:
            W_n_cost = params.cw_n * metrics.E_Wn
        else:
            W_n_cost = 0.0  # nobody is admitted, nobody waits
        W_u_cost = params.cw_u * (metrics.E_Wu if math.isfinite(metrics.E_Wu) else 0.0)

    Z = (params.w_rev * (R_u + R_n_ed + R_alt_rev)
         - params.w_balk * B_cost
         - params.w_wait * (W_n_cost + W_u_cost))
    return ObjectiveBreakdown(R_u=R_u, R_n_ed=R_n_ed, R_alt_rev=R_alt_rev,
                              B_cost=B_cost, W_n_cost=W_n_cost,
                              W_u_cost=W_u_cost, Z=Z)
