"""Minimal-time exit scheduling over the cubic trajectory family.

The exit time is searched on a grid: starting from the kinematic minimum
travel time, candidates are increased by a fixed step; the first candidate
whose boundary cubic satisfies the control/speed bounds, keeps a minimum
crossing gap to every neighbor-road exit time, and stays outside the
rear-end envelope of the same-road predecessor is returned together with
its trajectory. When no candidate within the feasible range passes, the
result is infeasible and the caller engages the fallback controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ConstraintParams
from .trajectory import BoundaryConditions, CubicTrajectory, bounds_check, solve_boundary

#: Exit-time grid resolution [s].
DELTA_STEP = 0.1
#: Rear-end check grid resolution [s] (stationary points are always added).
DELTA_CHECK = 0.05
#: Upper end of the travel-time range: factor times the minimum, capped.
T_UPPER_FACTOR = 6.0
T_UPPER_CAP = 120.0

_GAP_EPS = 1e-9  # s, slack absorbing float dust in crossing-gap comparisons


@dataclass(frozen=True)
class PlanRequest:
    """Frozen snapshot a CAV plans against at its plan epoch.

    neighbor_exits holds (id, exit time) for every neighbor-road vehicle
    with a known or predicted crossing; predecessor is the same-road
    leader's committed or predicted trajectory, when one exists.
    """

    vehicle_id: int
    t_plan: float
    p: float
    v: float
    neighbor_exits: tuple[tuple[int, float], ...]
    predecessor: CubicTrajectory | None
    limits: ConstraintParams


@dataclass(frozen=True)
class PlanResult:
    """Outcome of a grid search: the chosen exit time and trajectory, or an
    infeasibility marker (tf is None). `blocked` reports the constraints
    active at the grid point immediately before the returned one."""

    tf: float | None
    trajectory: CubicTrajectory | None
    iterations: int
    blocked: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.tf is not None


def feasible_time_range(p: float, v: float, limits: ConstraintParams) -> tuple[float, float]:
    """Travel-time range [t_lower, t_upper] measured from the plan epoch.

    t_lower is the kinematic minimum: accelerate at u_max until v_max, then
    cruise. Above v_max no further acceleration is assumed (immediate cruise
    at the current speed). t_upper is T_UPPER_FACTOR * t_lower capped at
    T_UPPER_CAP, never below t_lower.
    """
    if p >= 0.0:
        raise ValueError("vehicle must be upstream of the conflict point")
    dist = -p
    if v >= limits.v_max:
        t_lower = dist / v
    else:
        t_acc = (limits.v_max - v) / limits.u_max
        d_acc = v * t_acc + 0.5 * limits.u_max * t_acc * t_acc
        if d_acc >= dist:
            t_lower = (-v + np.sqrt(v * v + 2.0 * limits.u_max * dist)) / limits.u_max
        else:
            t_lower = t_acc + (dist - d_acc) / limits.v_max
    t_upper = max(min(T_UPPER_FACTOR * t_lower, T_UPPER_CAP), t_lower)
    return t_lower, t_upper


def check_no_conflict(tf_i: float, neighbor_exits, t_min: float) -> bool:
    """True when |tf_i - t_k| >= t_min for every listed neighbor exit time."""
    return all(abs(tf_i - tk) >= t_min - _GAP_EPS for tk in neighbor_exits)


def check_rear_end(
    traj_i: CubicTrajectory,
    traj_pred: CubicTrajectory,
    d_min: float,
    t_h: float,
    t_a: float,
    t_b: float,
    grid: float = DELTA_CHECK,
) -> float | None:
    """Earliest time in [t_a, t_b] where the rear-end envelope is violated,
    or None when g(t) = p_pred - p_i - d_min - t_h*v_i stays nonnegative.

    g is cubic, so its interior extrema are the real roots of the quadratic
    g'; those are checked alongside the endpoints and a uniform grid, and a
    detected sign change is bisected to locate the violation onset.
    """
    g3 = traj_pred.a - traj_i.a
    g2 = traj_pred.b - traj_i.b - 3.0 * t_h * traj_i.a
    g1 = traj_pred.c - traj_i.c - 2.0 * t_h * traj_i.b
    g0 = traj_pred.d - traj_i.d - t_h * traj_i.c - d_min

    def g(t):
        return ((g3 * t + g2) * t + g1) * t + g0

    ts = list(np.arange(t_a, t_b, grid))
    ts.append(t_b)
    for r in np.roots([3.0 * g3, 2.0 * g2, g1]):
        if abs(r.imag) < 1e-9 and t_a < r.real < t_b:
            ts.append(float(r.real))
    ts = sorted(set(ts))
    vals = g(np.asarray(ts))
    bad = np.nonzero(vals < 0.0)[0]
    if bad.size == 0:
        return None
    i = int(bad[0])
    if i == 0:
        return ts[0]
    # refine the crossing between the last nonnegative and first negative point
    lo, hi = ts[i - 1], ts[i]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    return hi


def revalidate(traj: CubicTrajectory, req: PlanRequest) -> bool:
    """True when a committed trajectory still satisfies the crossing-gap and
    rear-end constraints against a fresh snapshot (its bounds hold by
    construction)."""
    if not check_no_conflict(traj.tf, [tk for _, tk in req.neighbor_exits], req.limits.t_min):
        return False
    if req.predecessor is not None:
        t_b = min(traj.tf, req.predecessor.tf)
        if t_b > req.t_plan and check_rear_end(
            traj, req.predecessor, req.limits.d_min, req.limits.t_h, req.t_plan, t_b
        ) is not None:
            return False
    return True


def plan(req: PlanRequest, step: float = DELTA_STEP) -> PlanResult:
    """Grid search for the smallest feasible exit time.

    Candidates are t_plan + t_lower + n*step for n >= 0 up to the range cap;
    each candidate's boundary cubic (pf=0, uf=0) is screened against the
    control/speed bounds, the crossing gaps, and the rear-end envelope over
    [t_plan, min(tf, predecessor tf)]. Deterministic in the request.
    """
    t_lower, t_upper = feasible_time_range(req.p, req.v, req.limits)
    exits = [tk for _, tk in req.neighbor_exits]
    limits = req.limits
    blocked_prev: tuple[str, ...] = ()
    n = 0
    while True:
        travel = t_lower + n * step
        if travel > t_upper + 1e-12:
            return PlanResult(None, None, n, blocked_prev)
        tf = req.t_plan + travel
        traj = solve_boundary(
            BoundaryConditions(t0=req.t_plan, tf=tf, p0=req.p, v0=req.v)
        )
        fails: list[str] = []
        violation = bounds_check(traj, limits)
        if violation is not None:
            fails.append(violation.kind)
        if not check_no_conflict(tf, exits, limits.t_min):
            fails.append("no_conflict")
        if req.predecessor is not None:
            t_b = min(tf, req.predecessor.tf)
            if t_b > req.t_plan and check_rear_end(
                traj, req.predecessor, limits.d_min, limits.t_h, req.t_plan, t_b
            ) is not None:
                fails.append("rear_end")
        if not fails:
            return PlanResult(tf, traj, n + 1, blocked_prev)
        blocked_prev = tuple(fails)
        n += 1
