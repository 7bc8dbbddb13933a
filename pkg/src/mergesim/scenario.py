"""Road geometry, the vehicle registry, and set/ordering queries.

Two single-lane roads (main and ramp) intersect at a conflict point located
at position 0. Positions are longitudinal distances to the conflict point,
so a vehicle inside the control zone has p in [-control_zone_length, 0].
The final stretch [-merging_zone_length, 0] is the merging zone, where
cross-road interactions are resolved by projecting vehicles from the
neighboring road onto the ego road ("virtual projection").
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Road(str, Enum):
    MAIN = "main"
    RAMP = "ramp"

    def other(self) -> "Road":
        return Road.RAMP if self is Road.MAIN else Road.MAIN


class VehicleClass(str, Enum):
    CAV = "CAV"
    HDV = "HDV"


@dataclass(frozen=True)
class Geometry:
    """Control-zone geometry, in meters. Entry is at p0 = -control_zone_length."""

    control_zone_length: float
    merging_zone_length: float

    def __post_init__(self) -> None:
        if self.control_zone_length <= 0.0:
            raise ValueError("control_zone_length must be positive")
        if not 0.0 < self.merging_zone_length <= self.control_zone_length:
            raise ValueError("merging_zone_length must be in (0, control_zone_length]")

    @property
    def p0(self) -> float:
        return -self.control_zone_length

    def in_control_zone(self, p: float) -> bool:
        return self.p0 <= p <= 0.0

    def in_merging_zone(self, p: float) -> bool:
        return -self.merging_zone_length <= p <= 0.0


@dataclass(frozen=True)
class ConstraintParams:
    """Bound symbols shared by the planner, the human model, and the audits.

    u_min/u_max: control bounds [m/s^2]; v_min/v_max: speed bounds [m/s];
    t_min: minimum conflict-point crossing gap [s]; d_min: minimum distance
    at standstill [m]; t_h: safe time headway [s].
    """

    u_min: float
    u_max: float
    v_min: float
    v_max: float
    t_min: float
    d_min: float
    t_h: float

    def __post_init__(self) -> None:
        if self.u_min >= 0.0:
            raise ValueError("u_min must be negative")
        if self.u_max <= 0.0:
            raise ValueError("u_max must be positive")
        if self.v_min < 0.0:
            raise ValueError("v_min must be nonnegative")
        if self.v_max <= self.v_min:
            raise ValueError("v_max must exceed v_min")
        if self.t_min <= 0.0:
            raise ValueError("t_min must be positive")
        if self.d_min <= 0.0:
            raise ValueError("d_min must be positive")
        if self.t_h <= 0.0:
            raise ValueError("t_h must be positive")


@dataclass(slots=True)
class VehicleState:
    """Kinematic state of one vehicle. `u` is the last applied control."""

    id: int
    vclass: VehicleClass
    road: Road
    p: float
    v: float
    u: float = 0.0
    t_entry: float = 0.0
    t_exit: float | None = None


class ArrivalBlocked(RuntimeError):
    """Entry at p0 would violate the rear-end envelope of the last entrant."""


class VehicleRegistry:
    """Single-writer registry of vehicles inside the control zone.

    The simulation loop owns all mutation; queries are pure reads of the
    current snapshot. Vehicles leave the active set once they cross the
    conflict point (p > 0); their exit record persists in `exited`.
    """

    def __init__(self, geometry: Geometry, limits: ConstraintParams) -> None:
        self.geometry = geometry
        self.limits = limits
        self.active: dict[int, VehicleState] = {}
        self.exited: dict[int, VehicleState] = {}
        self._next_id = 1
        self._last_arrival: dict[Road, float] = {}

    # -- entry / exit -----------------------------------------------------

    def entry_blocked(self, road: Road, v0: float) -> bool:
        """True when a new vehicle at p0 would sit inside the rear-end
        envelope d_min + t_h*v0 of the last same-road vehicle still in zone."""
        last = self._last_on_road(road)
        if last is None:
            return False
        envelope = self.limits.d_min + self.limits.t_h * v0
        return last.p - self.geometry.p0 < envelope

    def register_arrival(self, vclass: VehicleClass, road: Road, v0: float, t: float) -> int:
        """Add a vehicle at the entry point; ids follow entry order.

        Raises ArrivalBlocked when the entry envelope is violated (the caller
        defers the arrival to a later step).
        """
        if v0 < 0.0:
            raise ValueError("arrival speed must be nonnegative")
        prev_t = self._last_arrival.get(road)
        if prev_t is not None and t < prev_t:
            raise ValueError("arrival times on a road must be nondecreasing")
        if self.entry_blocked(road, v0):
            raise ArrivalBlocked(f"entry on {road.value} blocked at t={t:.3f}")
        vid = self._next_id
        self._next_id += 1
        self.active[vid] = VehicleState(
            id=vid, vclass=vclass, road=road, p=self.geometry.p0, v=v0, t_entry=t
        )
        self._last_arrival[road] = t
        return vid

    def record_exit(self, vid: int, t_exit: float) -> None:
        state = self.active.pop(vid)
        state.t_exit = t_exit
        self.exited[vid] = state

    # -- queries ----------------------------------------------------------

    def state(self, vid: int) -> VehicleState:
        return self.active[vid]

    def in_zone_ids(self) -> list[int]:
        return sorted(self.active)

    def in_merging_zone(self, vid: int) -> bool:
        return self.geometry.in_merging_zone(self.active[vid].p)

    def neighbors(self, vid: int) -> tuple[list[int], list[int]]:
        """Partition of the other in-zone vehicles into (same road, neighbor road)."""
        me = self.active[vid]
        same, other = [], []
        for j in sorted(self.active):
            if j == vid:
                continue
            (same if self.active[j].road is me.road else other).append(j)
        return same, other

    def predecessor(self, vid: int, projected: bool = False) -> int | None:
        """Immediate predecessor of `vid`, or None for the lead vehicle.

        projected=False: the same-road vehicle with the largest index below
        vid (entry order equals spatial order on a single lane).
        projected=True: the nearest vehicle strictly ahead by position over
        both roads, as seen after projecting the neighbor road onto the ego
        road; ties in position go to the lower id.
        """
        me = self.active[vid]
        if not projected:
            best = None
            for j, st in self.active.items():
                if j < vid and st.road is me.road and (best is None or j > best):
                    best = j
            return best
        best_key: tuple[float, int] | None = None
        for j, st in self.active.items():
            if j == vid or st.p <= me.p:
                continue
            key = (st.p, j)
            if best_key is None or key < best_key:
                best_key = key
        return None if best_key is None else best_key[1]

    def _last_on_road(self, road: Road) -> VehicleState | None:
        best = None
        for st in self.active.values():
            if st.road is road and (best is None or st.id > best.id):
                best = st
        return best
