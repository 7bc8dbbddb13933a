"""Deterministic closed-loop simulation of the merge scenario.

Each step processes, in fixed order: pending arrivals (deferred while the
entry envelope is occupied), risk monitoring and re-planning for CAVs,
control resolution for every vehicle, semi-implicit state integration, and
logging. CAVs track their committed cubic open loop by applying its control
law at the step midpoint; unplanned CAVs fall back to the car-following
controller until a later planning attempt succeeds. All randomness is drawn
from named substreams keyed by (seed, purpose, id), so runs are bit-identical
per seed regardless of what is logged.
"""

from __future__ import annotations

import zlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import human, planner, predictor, risk
from .human import DriverProfile, IdmParams, NonpositiveGapError
from .predictor import NewellParams, WorldSnapshot
from .risk import ConflictMetrics, RiskParams
from .scenario import (
    ConstraintParams,
    Geometry,
    Road,
    VehicleClass,
    VehicleRegistry,
)
from .trajectory import CubicTrajectory

#: Minimum time between risk-triggered re-plans of one vehicle [s].
REPLAN_COOLDOWN = 0.5
#: Interval between planning retries while a CAV runs the fallback controller [s].
FALLBACK_RETRY = 1.0
#: Inter-arrival draws are truncated from below at this value [s].
MIN_INTER_ARRIVAL = 0.1
#: Default inter-arrival standard deviation, as a fraction of the mean.
#: Larger values make arrivals bursty enough to tip the human-driven merge
#: into irreversible stop-and-go at the highest studied volume.
DEFAULT_STD_FRACTION = 0.1

#: Column order of SimLog.records tuples.
RECORD_FIELDS = ("t", "id", "vclass", "road", "p", "v", "u", "plan_epoch", "replanned")


class ConfigError(ValueError):
    """Invalid simulation configuration; `field` names the offending entry."""

    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def substream(seed: int, purpose: str, *ids: int) -> np.random.Generator:
    """Counter-based generator for one named stream.

    Streams are keyed by (seed, purpose, ids...), so adding consumers or log
    output never perturbs the draws of existing streams.
    """
    key = [seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(purpose.encode("ascii"))]
    key.extend(int(i) & 0xFFFFFFFFFFFFFFFF for i in ids)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True)
class ArrivalSpec:
    """One scheduled arrival: desired entry time, road, class, entry speed."""

    t: float
    road: Road
    vclass: VehicleClass
    v0: float


@dataclass
class SimConfig:
    """Full parameterization of one simulation run."""

    geometry: Geometry
    limits: ConstraintParams
    newell: NewellParams
    risk: RiskParams
    idm: IdmParams
    idm_perturbation: float = 0.3
    volume: float = 1200.0  # vehicles/hour, both roads combined
    penetration: float = 0.5  # fraction of CAVs
    arrival_speed_range: tuple[float, float] = (22.0, 24.0)
    inter_arrival_std: float | None = None  # s; default DEFAULT_STD_FRACTION * mean
    dt: float = 0.05
    total_vehicles: int = 100
    seed: int = 0
    replanning: bool = True
    arrival_schedule: tuple[ArrivalSpec, ...] | None = None

    def validate(self) -> None:
        if self.dt <= 0.0:
            raise ConfigError("dt", "must be positive")
        if not 0.0 <= self.penetration <= 1.0:
            raise ConfigError("penetration", "must be within [0, 1]")
        if self.volume <= 0.0:
            raise ConfigError("volume", "must be positive")
        if self.total_vehicles < 1:
            raise ConfigError("total_vehicles", "must be at least 1")
        if not 0.0 <= self.idm_perturbation < 1.0:
            raise ConfigError("idm_perturbation", "must be within [0, 1)")
        lo, hi = self.arrival_speed_range
        if not 0.0 <= lo <= hi:
            raise ConfigError("arrival_speed_range", "must satisfy 0 <= low <= high")
        if self.inter_arrival_std is not None and self.inter_arrival_std < 0.0:
            raise ConfigError("inter_arrival_std", "must be nonnegative")


@dataclass(frozen=True)
class SimEvent:
    """Engine-level event: plan failures, model breakdowns, replans."""

    kind: str
    t: float
    vehicle_id: int
    other_id: int | None = None
    value: float | None = None


@dataclass
class VehicleSummary:
    id: int
    vclass: VehicleClass
    road: Road
    t_entry: float
    t_exit: float
    travel_time: float
    energy: float  # integral of v * max(0, u) over the logged samples, (m/s)^2


@dataclass
class SimLog:
    """Time-indexed record of a run.

    records: tuples in RECORD_FIELDS order, strictly ordered by (t, id);
    plan_epoch is None for vehicles without a committed plan. summaries has
    one entry per exited vehicle. events collects engine-level incidents.
    """

    dt: float
    records: list[tuple] = field(default_factory=list)
    summaries: dict[int, VehicleSummary] = field(default_factory=dict)
    events: list[SimEvent] = field(default_factory=list)
    replan_count: int = 0
    arrivals: int = 0


def config_from_dict(doc: dict) -> SimConfig:
    """Build and validate a SimConfig from a plain JSON-style document.

    Errors are raised as ConfigError naming the offending field, including
    for invalid nested sections (e.g. "limits.u_min").
    """
    known = {
        "geometry", "limits", "newell", "risk", "idm", "idm_perturbation",
        "volume", "penetration", "arrival_speed_range", "inter_arrival_std",
        "dt", "total_vehicles", "seed", "replanning", "arrival_schedule",
    }
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown field")

    def section(name, builder):
        if name not in doc:
            raise ConfigError(name, "missing required section")
        try:
            return builder(**doc[name])
        except TypeError as e:
            raise ConfigError(name, str(e)) from e
        except ValueError as e:
            raise ConfigError(name, str(e)) from e

    schedule = None
    if doc.get("arrival_schedule") is not None:
        entries = []
        for i, row in enumerate(doc["arrival_schedule"]):
            try:
                entries.append(
                    ArrivalSpec(
                        t=float(row["t"]),
                        road=Road(row["road"]),
                        vclass=VehicleClass(row["vclass"]),
                        v0=float(row["v0"]),
                    )
                )
            except (KeyError, ValueError) as e:
                raise ConfigError(f"arrival_schedule[{i}]", str(e)) from e
        schedule = tuple(entries)

    cfg = SimConfig(
        geometry=section("geometry", Geometry),
        limits=section("limits", ConstraintParams),
        newell=section("newell", NewellParams),
        risk=section("risk", RiskParams),
        idm=section("idm", IdmParams),
        idm_perturbation=float(doc.get("idm_perturbation", 0.3)),
        volume=float(doc.get("volume", 1200.0)),
        penetration=float(doc.get("penetration", 0.5)),
        arrival_speed_range=tuple(doc.get("arrival_speed_range", (22.0, 24.0))),
        inter_arrival_std=(
            None if doc.get("inter_arrival_std") is None else float(doc["inter_arrival_std"])
        ),
        dt=float(doc.get("dt", 0.05)),
        total_vehicles=int(doc.get("total_vehicles", 100)),
        seed=int(doc.get("seed", 0)),
        replanning=bool(doc.get("replanning", True)),
        arrival_schedule=schedule,
    )
    cfg.validate()
    return cfg


def config_to_dict(cfg: SimConfig) -> dict:
    """Inverse of config_from_dict."""
    doc = {
        "geometry": {
            "control_zone_length": cfg.geometry.control_zone_length,
            "merging_zone_length": cfg.geometry.merging_zone_length,
        },
        "limits": {
            "u_min": cfg.limits.u_min, "u_max": cfg.limits.u_max,
            "v_min": cfg.limits.v_min, "v_max": cfg.limits.v_max,
            "t_min": cfg.limits.t_min, "d_min": cfg.limits.d_min,
            "t_h": cfg.limits.t_h,
        },
        "newell": {"w": cfg.newell.w},
        "risk": {
            "t_cr_same": cfg.risk.t_cr_same,
            "t_cr_neighbor": cfg.risk.t_cr_neighbor,
            "v_low": cfg.risk.v_low,
        },
        "idm": {
            "v_desired": cfg.idm.v_desired, "d_stop": cfg.idm.d_stop,
            "time_gap": cfg.idm.time_gap, "accel_max": cfg.idm.accel_max,
            "decel_comfort": cfg.idm.decel_comfort,
        },
        "idm_perturbation": cfg.idm_perturbation,
        "volume": cfg.volume,
        "penetration": cfg.penetration,
        "arrival_speed_range": list(cfg.arrival_speed_range),
        "inter_arrival_std": cfg.inter_arrival_std,
        "dt": cfg.dt,
        "total_vehicles": cfg.total_vehicles,
        "seed": cfg.seed,
        "replanning": cfg.replanning,
    }
    if cfg.arrival_schedule is not None:
        doc["arrival_schedule"] = [
            {"t": s.t, "road": s.road.value, "vclass": s.vclass.value, "v0": s.v0}
            for s in cfg.arrival_schedule
        ]
    else:
        doc["arrival_schedule"] = None
    return doc


def integrate_state(p: float, v: float, u: float, dt: float, floor_speed: bool = True) -> tuple[float, float]:
    """Semi-implicit update: v' = v + u*dt, then p' = p + v'*dt.

    The speed is floored at zero (vehicles do not go backward).
    """
    v_new = v + u * dt
    if floor_speed and v_new < 0.0:
        v_new = 0.0
    return p + v_new * dt, v_new


def build_arrival_schedule(cfg: SimConfig) -> dict[Road, deque[ArrivalSpec]]:
    """Per-road FIFO arrival queues.

    Arrivals form one stream with normal inter-arrival times (mean
    3600/volume, configured or default std, truncated at MIN_INTER_ARRIVAL)
    assigned to the two roads alternately, so each road carries half the
    volume. Entry speeds are uniform over the configured range and each
    vehicle is a CAV with probability `penetration`.
    """
    queues: dict[Road, deque[ArrivalSpec]] = {Road.MAIN: deque(), Road.RAMP: deque()}
    if cfg.arrival_schedule is not None:
        for spec in sorted(cfg.arrival_schedule, key=lambda s: (s.t, s.road.value)):
            queues[spec.road].append(spec)
        return queues
    mean = 3600.0 / cfg.volume
    std = cfg.inter_arrival_std if cfg.inter_arrival_std is not None else DEFAULT_STD_FRACTION * mean
    lo, hi = cfg.arrival_speed_range
    rng = substream(cfg.seed, "arrivals", 0)
    roads = (Road.MAIN, Road.RAMP)
    t = 0.0
    for i in range(cfg.total_vehicles):
        t += max(MIN_INTER_ARRIVAL, rng.normal(mean, std))
        v0 = rng.uniform(lo, hi)
        is_cav = rng.random() < cfg.penetration
        queues[roads[i % 2]].append(
            ArrivalSpec(
                t=t,
                road=roads[i % 2],
                vclass=VehicleClass.CAV if is_cav else VehicleClass.HDV,
                v0=v0,
            )
        )
    return queues


class Simulation:
    """Closed-loop run over one configuration; see module docstring."""

    def __init__(self, cfg: SimConfig) -> None:
        cfg.validate()
        self.cfg = cfg
        self.registry = VehicleRegistry(cfg.geometry, cfg.limits)
        self.pending = build_arrival_schedule(cfg)
        self.log = SimLog(dt=cfg.dt)
        self.plans: dict[int, CubicTrajectory] = {}
        self.plan_epoch: dict[int, float] = {}
        self.fallback: set[int] = set()
        self.next_retry: dict[int, float] = {}
        self.last_replan: dict[int, float] = {}
        self.profiles: dict[int, DriverProfile] = {}
        self._replanned_now: set[int] = set()
        self._energy: dict[int, float] = {}
        self._prev_power: dict[int, float] = {}
        self._k = 0
        schedule_end = max(
            (q[-1].t for q in self.pending.values() if q), default=0.0
        )
        self._deadline = schedule_end + 2.0 * cfg.total_vehicles + 600.0

    # -- time -------------------------------------------------------------

    @property
    def t(self) -> float:
        return self._k * self.cfg.dt

    # -- planning helpers ---------------------------------------------------

    def _snapshot(self) -> WorldSnapshot:
        world = WorldSnapshot(registry=self.registry, plans=dict(self.plans), records={})
        predictor.predict_all(self.t, world, self.cfg.newell)
        return world

    def _exit_estimate(self, vid: int, world: WorldSnapshot) -> float | None:
        """Known or predicted conflict-point crossing time of vehicle vid."""
        st = self.registry.state(vid)
        if st.vclass is VehicleClass.CAV:
            traj = self.plans.get(vid)
            if traj is not None:
                return traj.tf
            # unplanned CAV: constant-speed estimate, like a free-flow human
            return self.t + (-st.p) / st.v if st.v > 0.0 else None
        rec = world.records.get(vid)
        return rec.predicted_exit if rec is not None else None

    def _plan_request(self, vid: int, world: WorldSnapshot) -> planner.PlanRequest:
        st = self.registry.state(vid)
        _, neighbor_ids = self.registry.neighbors(vid)
        exits = []
        for j in neighbor_ids:
            tf = self._exit_estimate(j, world)
            if tf is not None:
                exits.append((j, tf))
        pred_id = self.registry.predecessor(vid)
        pred_traj = None if pred_id is None else world.leader_trajectory(pred_id, self.t)
        return planner.PlanRequest(
            vehicle_id=vid,
            t_plan=self.t,
            p=st.p,
            v=st.v,
            neighbor_exits=tuple(exits),
            predecessor=pred_traj,
            limits=self.cfg.limits,
        )

    def _attempt_plan(self, vid: int, reason: str) -> bool:
        """Solve the upper-level problem for vid from the current snapshot;
        commit on success, otherwise switch to the fallback controller.

        For risk-triggered re-plans the committed trajectory is first
        re-validated against the fresh snapshot: it is kept when it still
        satisfies every constraint and the re-solved plan is no faster.
        Without this, a compliant plan sitting at the critical
        time-to-conflict chases every prediction wobble and ratchets itself
        slower until it blocks the zone.
        """
        request = self._plan_request(vid, self._snapshot())
        incumbent = self.plans.get(vid)
        if reason == "risk" and incumbent is not None:
            still_valid = planner.revalidate(incumbent, request)
            result = planner.plan(request)
            if still_valid and (
                not result.feasible or result.tf >= incumbent.tf - 1e-9
            ):
                return True  # keep the committed plan
        else:
            result = planner.plan(request)
        if result.feasible:
            self.plans[vid] = result.trajectory
            self.plan_epoch[vid] = self.t
            self.fallback.discard(vid)
            self.next_retry.pop(vid, None)
            if reason != "entry":
                self.log.replan_count += 1
                self._replanned_now.add(vid)
                self.last_replan[vid] = self.t
                self.log.events.append(SimEvent("replan", self.t, vid))
            return True
        self.plans.pop(vid, None)
        self.fallback.add(vid)
        self.next_retry[vid] = self.t + FALLBACK_RETRY
        if reason != "retry":
            self.last_replan[vid] = self.t
            self.log.events.append(SimEvent(f"plan_infeasible_{reason}", self.t, vid))
        return False

    # -- risk monitoring ----------------------------------------------------

    def _risk_triggered(self, vid: int) -> bool:
        st = self.registry.state(vid)
        d_min = self.cfg.limits.d_min
        pred_id = self.registry.predecessor(vid)
        t_same = None
        if pred_id is not None:
            ps = self.registry.state(pred_id)
            t_same = risk.time_to_conflict_same(st.p, st.v, ps.p, ps.v, d_min)
        in_mz = self.cfg.geometry.in_merging_zone(st.p)
        t_neighbor = None
        if in_mz:
            _, neighbor_ids = self.registry.neighbors(vid)
            states = [
                (self.registry.state(j).p, self.registry.state(j).v)
                for j in neighbor_ids
            ]
            t_neighbor = risk.neighbor_time_to_conflict(st.p, st.v, states, d_min)
        return risk.should_replan(
            ConflictMetrics(t_same=t_same, t_neighbor=t_neighbor),
            st.v,
            in_mz,
            self.cfg.risk,
        )

    # -- one step -----------------------------------------------------------

    def step(self) -> None:
        t = self.t
        dt = self.cfg.dt
        self._replanned_now.clear()

        # arrivals (per-road FIFO; a blocked head defers the whole queue)
        for road in (Road.MAIN, Road.RAMP):
            q = self.pending[road]
            while q and q[0].t <= t + 1e-9:
                spec = q[0]
                if self.registry.entry_blocked(road, spec.v0):
                    break
                vid = self.registry.register_arrival(spec.vclass, road, spec.v0, t)
                q.popleft()
                self.log.arrivals += 1
                if spec.vclass is VehicleClass.HDV:
                    self.profiles[vid] = DriverProfile(
                        vehicle_id=vid,
                        params=human.perturb_params(
                            self.cfg.idm,
                            seed=[self.cfg.seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(b"idm"), vid],
                            width=self.cfg.idm_perturbation,
                        ),
                        seed=vid,
                    )
                else:
                    self._attempt_plan(vid, reason="entry")

        # risk monitoring, re-planning, and fallback retries (id order)
        if self.cfg.replanning:
            for vid in self.registry.in_zone_ids():
                if self.registry.state(vid).vclass is not VehicleClass.CAV:
                    continue
                if vid in self.fallback:
                    if t + 1e-9 >= self.next_retry.get(vid, 0.0):
                        self.next_retry[vid] = t + FALLBACK_RETRY
                        self._attempt_plan(vid, reason="retry")
                    continue
                cooled = t - self.last_replan.get(vid, -np.inf) >= REPLAN_COOLDOWN - 1e-9
                if cooled and self._risk_triggered(vid):
                    self._attempt_plan(vid, reason="risk")

        # control resolution from the common pre-integration state
        controls: dict[int, float] = {}
        limits = self.cfg.limits
        for vid in self.registry.in_zone_ids():
            st = self.registry.state(vid)
            traj = self.plans.get(vid)
            if traj is not None:
                controls[vid] = traj.accel(t + 0.5 * dt)
                continue
            params = (
                self.profiles[vid].params
                if st.vclass is VehicleClass.HDV
                else self.cfg.idm  # CAV fallback drives with the unperturbed base model
            )
            try:
                controls[vid] = human.hdv_control(vid, self.registry, params, limits)
            except NonpositiveGapError:
                leader = self.registry.predecessor(
                    vid, projected=self.cfg.geometry.in_merging_zone(st.p)
                )
                self.log.events.append(
                    SimEvent("idm_gap_collapse", t, vid, other_id=leader)
                )
                controls[vid] = limits.u_min

        # log, then integrate; exits are interpolated within the step
        for vid in self.registry.in_zone_ids():
            st = self.registry.state(vid)
            u = controls[vid]
            st.u = u
            self.log.records.append(
                (
                    t,
                    vid,
                    st.vclass.value,
                    st.road.value,
                    st.p,
                    st.v,
                    u,
                    self.plan_epoch.get(vid),
                    1 if vid in self._replanned_now else 0,
                )
            )
            power = st.v * max(0.0, u)
            prev = self._prev_power.get(vid)
            if prev is not None:
                self._energy[vid] = self._energy.get(vid, 0.0) + 0.5 * (prev + power) * dt
            self._prev_power[vid] = power

        exited: list[tuple[int, float]] = []
        for vid in self.registry.in_zone_ids():
            st = self.registry.state(vid)
            p_new, v_new = integrate_state(st.p, st.v, controls[vid], dt)
            if p_new > 0.0:
                frac = (0.0 - st.p) / (p_new - st.p) if p_new > st.p else 1.0
                exited.append((vid, t + frac * dt))
            st.p, st.v = p_new, v_new
        for vid, t_exit in exited:
            st = self.registry.state(vid)
            self.registry.record_exit(vid, t_exit)
            self.log.summaries[vid] = VehicleSummary(
                id=vid,
                vclass=st.vclass,
                road=st.road,
                t_entry=st.t_entry,
                t_exit=t_exit,
                travel_time=t_exit - st.t_entry,
                energy=self._energy.get(vid, 0.0),
            )
            self.plans.pop(vid, None)
            self.plan_epoch.pop(vid, None)
            self.fallback.discard(vid)
            self.next_retry.pop(vid, None)
            self._energy.pop(vid, None)
            self._prev_power.pop(vid, None)

        self._k += 1

    def run(self) -> SimLog:
        while self.registry.active or any(self.pending.values()):
            if self.t > self._deadline:
                self.log.events.append(SimEvent("timeout", self.t, 0))
                break
            self.step()
        return self.log


def run(cfg: SimConfig) -> SimLog:
    """Run one fully seeded simulation to completion."""
    return Simulation(cfg).run()
