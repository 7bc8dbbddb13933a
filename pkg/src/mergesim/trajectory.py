"""Energy-optimal cubic trajectory family.

Minimizing the integral of u^2/2 for a double integrator with free terminal
speed yields an affine control law u(t) = 6a*t + 2b, hence cubic position
p(t) = a*t^3 + b*t^2 + c*t + d with v(t) = 3a*t^2 + 2b*t + c. The four
coefficients follow from the boundary conditions p(t0)=p0, v(t0)=v0,
p(tf)=pf, u(tf)=uf by direct elimination.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scenario import ConstraintParams


@dataclass(frozen=True)
class CubicTrajectory:
    """Cubic position polynomial with validity interval [t0, tf].

    Coefficients are in absolute time and SI-consistent: p in meters for
    t in seconds. Evaluation outside [t0, tf] is permitted (extrapolation
    used by the prediction layer); callers are responsible for flagging it.
    """

    a: float
    b: float
    c: float
    d: float
    t0: float
    tf: float

    def __post_init__(self) -> None:
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")

    def position(self, t: float) -> float:
        return ((self.a * t + self.b) * t + self.c) * t + self.d

    def speed(self, t: float) -> float:
        return (3.0 * self.a * t + 2.0 * self.b) * t + self.c

    def accel(self, t: float) -> float:
        return 6.0 * self.a * t + 2.0 * self.b

    def eval(self, t: float) -> tuple[float, float, float]:
        """Exact polynomial evaluation of (p, v, u) at time t."""
        return self.position(t), self.speed(t), self.accel(t)


@dataclass(frozen=True)
class BoundaryConditions:
    """Entry/exit boundary data: position and speed at t0, position and
    control at tf. pf defaults to the conflict point, uf to the free-speed
    terminal condition."""

    t0: float
    tf: float
    p0: float
    v0: float
    pf: float = 0.0
    uf: float = 0.0

    def __post_init__(self) -> None:
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")


def solve_boundary(bc: BoundaryConditions) -> CubicTrajectory:
    """Coefficients of the cubic satisfying the four boundary conditions.

    Solved in shifted time s = t - t0, where the 4x4 system collapses to a
    single division, then expanded back to absolute time. For tf > t0 the
    system is nonsingular, so the solution is exact up to rounding.
    """
    T = bc.tf - bc.t0
    # p(0)=p0 and v(0)=v0 pin d', c'; u(T)=uf and p(T)=pf give a', b'.
    a_s = (bc.p0 - bc.pf + bc.v0 * T + 0.5 * bc.uf * T * T) / (2.0 * T**3)
    b_s = 0.5 * bc.uf - 3.0 * a_s * T
    c_s = bc.v0
    d_s = bc.p0
    t0 = bc.t0
    a = a_s
    b = b_s - 3.0 * a_s * t0
    c = c_s - 2.0 * b_s * t0 + 3.0 * a_s * t0 * t0
    d = d_s - c_s * t0 + b_s * t0 * t0 - a_s * t0**3
    return CubicTrajectory(a=a, b=b, c=c, d=d, t0=bc.t0, tf=bc.tf)


@dataclass(frozen=True)
class BoundsViolation:
    """First control/speed bound violation found on a trajectory."""

    kind: str  # "control" | "speed"
    t: float
    value: float
    limit: float


def bounds_check(traj: CubicTrajectory, limits: ConstraintParams) -> BoundsViolation | None:
    """Check u(t) and v(t) against the bounds over [t0, tf]; None when ok.

    u is affine, so its extremes sit at the interval endpoints. v is
    quadratic, so besides the endpoints only its stationary point
    t* = -b/(3a) (when a != 0 and t* is interior) can be extremal.
    The earliest violating check point is reported, control before speed
    at equal times.
    """
    times = [traj.t0, traj.tf]
    if traj.a != 0.0:
        t_star = -traj.b / (3.0 * traj.a)
        if traj.t0 < t_star < traj.tf:
            times.append(t_star)
    for t in sorted(times):
        u = traj.accel(t)
        if u < limits.u_min:
            return BoundsViolation("control", t, u, limits.u_min)
        if u > limits.u_max:
            return BoundsViolation("control", t, u, limits.u_max)
        v = traj.speed(t)
        if v < limits.v_min:
            return BoundsViolation("speed", t, v, limits.v_min)
        if v > limits.v_max:
            return BoundsViolation("speed", t, v, limits.v_max)
    return None
