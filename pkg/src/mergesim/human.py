"""Intelligent-driver-model control for human-driven vehicles.

Acceleration combines a free-flow term pulling toward the desired speed and
a spacing term built from the desired gap

    s* = d_stop + v_k*T - v_k*(v_j - v_k) / (2*sqrt(a*b)),

    u_k = a * (1 - (v_k / v_desired)^4 - (s* / gap)^2).

Per-driver heterogeneity comes from an independent multiplicative
perturbation of every parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ConstraintParams, VehicleRegistry


class NonpositiveGapError(RuntimeError):
    """Car-following breakdown: the leader is not ahead of the follower."""


@dataclass(frozen=True)
class IdmParams:
    """v_desired [m/s], d_stop [m], time_gap [s], accel_max and
    decel_comfort [m/s^2]; all strictly positive."""

    v_desired: float
    d_stop: float
    time_gap: float
    accel_max: float
    decel_comfort: float

    def __post_init__(self) -> None:
        for name in ("v_desired", "d_stop", "time_gap", "accel_max", "decel_comfort"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class DriverProfile:
    """Perturbed parameter set assigned to one driver."""

    vehicle_id: int
    params: IdmParams
    seed: int


def idm_accel(
    v_k: float,
    v_j: float,
    gap: float,
    params: IdmParams,
    limits: ConstraintParams | None = None,
) -> float:
    """Car-following acceleration for follower speed v_k, leader speed v_j
    and bumper gap p_j - p_k > 0. The desired-gap approach term is floored
    at zero before squaring; the result is clamped to the control bounds
    when limits are given."""
    if gap <= 0.0:
        raise NonpositiveGapError(f"nonpositive gap {gap:.3f} m")
    p = params
    s_star = p.d_stop + v_k * p.time_gap - v_k * (v_j - v_k) / (
        2.0 * math.sqrt(p.accel_max * p.decel_comfort)
    )
    s_star = max(0.0, s_star)
    u = p.accel_max * (1.0 - (v_k / p.v_desired) ** 4 - (s_star / gap) ** 2)
    if limits is not None:
        u = min(max(u, limits.u_min), limits.u_max)
    return u


def free_road_accel(v_k: float, params: IdmParams, limits: ConstraintParams | None = None) -> float:
    """Leaderless acceleration: the spacing term is dropped."""
    u = params.accel_max * (1.0 - (v_k / params.v_desired) ** 4)
    if limits is not None:
        u = min(max(u, limits.u_min), limits.u_max)
    return u


def perturb_params(base: IdmParams, seed, width: float = 0.3, law: str = "triangular") -> IdmParams:
    """Independent multiplicative perturbation of every field.

    Each parameter is scaled by its own factor drawn from [1 - width,
    1 + width]; width=0 returns the base exactly. Deterministic for a given
    seed (any value acceptable to numpy's SeedSequence). The default
    symmetric triangular law concentrates drivers near the base values;
    "uniform" spreads them evenly, which at the highest studied volume makes
    the slow-driver tail heavy enough to destabilize the merge.
    """
    if not 0.0 <= width < 1.0:
        raise ValueError("perturbation width must be in [0, 1)")
    rng = np.random.default_rng(seed)
    if width == 0.0:
        f = np.ones(5)
    elif law == "triangular":
        f = rng.triangular(1.0 - width, 1.0, 1.0 + width, size=5)
    elif law == "uniform":
        f = rng.uniform(1.0 - width, 1.0 + width, size=5)
    else:
        raise ValueError(f"unknown perturbation law: {law!r}")
    return IdmParams(
        v_desired=base.v_desired * f[0],
        d_stop=base.d_stop * f[1],
        time_gap=base.time_gap * f[2],
        accel_max=base.accel_max * f[3],
        decel_comfort=base.decel_comfort * f[4],
    )


def hdv_control(
    k: int,
    registry: VehicleRegistry,
    params: IdmParams,
    limits: ConstraintParams | None = None,
) -> float:
    """Control input for in-zone HDV k.

    Inside the merging zone the leader is the projected predecessor over
    both roads, outside it the same-road one; the gap is measured between
    the (possibly projected) longitudinal positions. Raises
    NonpositiveGapError on breakdown, which the caller turns into a logged
    violation with maximum braking applied.
    """
    me = registry.state(k)
    leader = registry.predecessor(k, projected=registry.geometry.in_merging_zone(me.p))
    if leader is None:
        return free_road_accel(me.v, params, limits)
    ls = registry.state(leader)
    return idm_accel(me.v, ls.v, ls.p - me.p, params, limits)
