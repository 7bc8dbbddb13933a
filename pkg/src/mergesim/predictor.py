"""Prediction of human-driven vehicles from a time-shifted car-following model.

A follower's position is its leader's trajectory shifted by tau in time and
w*tau in space, where w > 0 is the backward wave speed:

    p_k(t) = p_j(t - tau_k) - w * tau_k

Since the leader does not move backward, the right-hand side is strictly
decreasing in tau, so the shift solving the identity at the current instant
is unique. Shifting a cubic keeps it cubic, which makes predicted exit times
roots of a cubic polynomial. Leaderless vehicles are assumed to keep their
current speed (affine position).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, MutableMapping

from .scenario import VehicleClass, VehicleRegistry
from .trajectory import CubicTrajectory

#: Roots are searched within this many seconds of the prediction instant;
#: beyond it a vehicle is reported as not exiting.
PREDICTION_HORIZON = 120.0

_TAU_RESIDUAL = 1e-10  # m, target residual for the time-shift solve
_EXIT_RESIDUAL = 1e-9  # m, target residual for exit-time roots
_MAX_BISECT = 200


class LeaderOrderingError(ValueError):
    """Follower is not strictly behind its leader at the prediction instant."""


@dataclass(frozen=True)
class NewellParams:
    """Backward wave speed w [m/s], constant."""

    w: float

    def __post_init__(self) -> None:
        if self.w <= 0.0:
            raise ValueError("wave speed w must be positive")


@dataclass(frozen=True)
class PredictionRecord:
    """Predicted motion of one human-driven vehicle.

    trajectory: cubic (shifted from a leader) or degenerate affine (a=b=0)
    for free flow. tau is absent for free-flow predictions. predicted_exit
    is the first conflict-point crossing, absent when none occurs within
    the horizon.
    """

    vehicle_id: int
    trajectory: CubicTrajectory
    tau: float | None
    predicted_exit: float | None
    made_at: float


def solve_time_shift(
    p_k_now: float,
    leader_traj: CubicTrajectory,
    t_now: float,
    params: NewellParams,
) -> float:
    """Unique tau > 0 with p_j(t_now - tau) - w*tau = p_k_now.

    An affine leader admits the closed form tau = (p_j(t_now) - p_k)/(v_j + w);
    otherwise the strictly decreasing map is bisected after growing the
    bracket geometrically from [0, 1] s. Residual below 1e-9 m.
    """
    w = params.w
    gap0 = leader_traj.position(t_now) - p_k_now
    if gap0 <= 0.0:
        raise LeaderOrderingError(
            f"follower at {p_k_now:.3f} m is not behind its leader"
        )
    if leader_traj.a == 0.0 and leader_traj.b == 0.0:
        return gap0 / (leader_traj.c + w)

    def shortfall(tau: float) -> float:
        return leader_traj.position(t_now - tau) - w * tau - p_k_now

    lo, hi = 0.0, 1.0
    while shortfall(hi) > 0.0:
        lo, hi = hi, hi * 2.0
        if hi > 1e7:
            raise LeaderOrderingError("time shift bracket could not be closed")
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        r = shortfall(mid)
        if abs(r) < _TAU_RESIDUAL:
            return mid
        if r > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shift_trajectory(leader: CubicTrajectory, tau: float, params: NewellParams) -> CubicTrajectory:
    """Coefficients of p_k(t) = p_j(t - tau) - w*tau, valid on the leader's
    interval delayed by tau."""
    w = params.w
    a, b, c, d = leader.a, leader.b, leader.c, leader.d
    return CubicTrajectory(
        a=a,
        b=b - 3.0 * a * tau,
        c=c + 3.0 * a * tau * tau - 2.0 * b * tau,
        d=d - a * tau**3 + b * tau * tau - c * tau - w * tau,
        t0=leader.t0 + tau,
        tf=leader.tf + tau,
    )


def predicted_exit_time(traj: CubicTrajectory, horizon: float = PREDICTION_HORIZON) -> float | None:
    """Smallest crossing time >= traj.t0 of the conflict point p = 0.

    The bracket grows geometrically from 1 s after the reference start and
    the sign change is bisected to a residual below 1e-6 m. None when the
    position stays negative over the whole horizon (no-exit marker).
    """
    t0 = traj.t0
    if traj.position(t0) >= 0.0:
        return t0
    lo = t0
    width = 1.0
    hi = None
    while True:
        cand = min(t0 + width, t0 + horizon)
        if traj.position(cand) >= 0.0:
            hi = cand
            break
        lo = cand
        if cand >= t0 + horizon:
            return None
        width *= 2.0
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        r = traj.position(mid)
        if abs(r) < _EXIT_RESIDUAL or hi - lo < 1e-13:
            return mid
        if r < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def free_flow_trajectory(p: float, v: float, t_now: float, horizon: float = PREDICTION_HORIZON) -> CubicTrajectory:
    """Affine constant-speed motion matching the current state."""
    return CubicTrajectory(a=0.0, b=0.0, c=v, d=p - v * t_now, t0=t_now, tf=t_now + horizon)


@dataclass
class WorldSnapshot:
    """Frozen view of the world used while building predictions and plans.

    plans holds the committed trajectories of planned CAVs; records
    accumulates HDV predictions front-to-back so a follower's leader is
    always resolved before the follower itself.
    """

    registry: VehicleRegistry
    plans: Mapping[int, CubicTrajectory]
    records: MutableMapping[int, PredictionRecord]

    def leader_trajectory(self, j: int, t_now: float) -> CubicTrajectory:
        """Best available motion model for vehicle j: committed plan for a
        planned CAV, most recent prediction for an HDV, else free flow."""
        traj = self.plans.get(j)
        if traj is not None:
            return traj
        rec = self.records.get(j)
        if rec is not None:
            return rec.trajectory
        st = self.registry.state(j)
        return free_flow_trajectory(st.p, st.v, t_now)


def predict_hdv(
    k: int,
    t_now: float,
    world: WorldSnapshot,
    params: NewellParams,
    horizon: float = PREDICTION_HORIZON,
) -> PredictionRecord:
    """Prediction record for in-zone HDV k from the current world snapshot.

    The leader is the same-road predecessor, or the projected one inside the
    merging zone. Without a leader (or when projection artifacts put the
    follower ahead, where the shift identity has no positive solution) the
    vehicle is assumed to keep its current speed.
    """
    reg = world.registry
    st = reg.state(k)
    leader = reg.predecessor(k, projected=reg.geometry.in_merging_zone(st.p))
    tau = None
    if leader is None:
        traj = free_flow_trajectory(st.p, st.v, t_now, horizon)
    else:
        leader_traj = world.leader_trajectory(leader, t_now)
        try:
            tau = solve_time_shift(st.p, leader_traj, t_now, params)
            shifted = shift_trajectory(leader_traj, tau, params)
            traj = CubicTrajectory(
                a=shifted.a, b=shifted.b, c=shifted.c, d=shifted.d,
                t0=t_now, tf=t_now + horizon,
            )
        except LeaderOrderingError:
            tau = None
            traj = free_flow_trajectory(st.p, st.v, t_now, horizon)
    exit_t = predicted_exit_time(traj, horizon)
    if exit_t is not None and exit_t > t_now:
        traj = replace(traj, tf=exit_t)
    return PredictionRecord(
        vehicle_id=k, trajectory=traj, tau=tau, predicted_exit=exit_t, made_at=t_now
    )


def predict_all(t_now: float, world: WorldSnapshot, params: NewellParams) -> dict[int, PredictionRecord]:
    """Predict every in-zone HDV, front to back, filling world.records."""
    reg = world.registry
    hdvs = [vid for vid in reg.in_zone_ids() if reg.state(vid).vclass is VehicleClass.HDV]
    hdvs.sort(key=lambda vid: (-reg.state(vid).p, vid))
    for vid in hdvs:
        world.records[vid] = predict_hdv(vid, t_now, world, params)
    return dict(world.records)
