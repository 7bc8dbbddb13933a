"""Evaluation metrics computed from a simulation log.

Average control-zone travel time and output flux quantify efficiency; the
energy surrogate integrates v * max(0, u) per unit mass; the safety audit
re-checks the rear-end envelope at every logged step and the crossing-gap
rule over every cross-road exit pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import SimLog
from .scenario import ConstraintParams


class MetricError(ValueError):
    """The requested metric is undefined for this log."""


@dataclass(frozen=True)
class AuditFinding:
    """One post-hoc safety deficit.

    kind "rear_end": same-road pair closer than d_min + t_h*v_follower at
    time t; gap and required are distances [m]. kind "crossing_gap":
    cross-road exit pair closer than t_min; gap and required are times [s].
    """

    kind: str
    t: float
    id_i: int
    id_k: int
    gap: float
    required: float

    @property
    def deficit(self) -> float:
        return self.required - self.gap


@dataclass
class RunMetrics:
    avg_travel_time: float
    output_flux: float
    mean_energy: float
    violations: dict[str, int] = field(default_factory=dict)
    replan_count: int = 0


def average_travel_time(log: SimLog) -> float:
    """Mean control-zone travel time over exited vehicles [s]."""
    if not log.summaries:
        raise MetricError("no exited vehicles")
    return float(np.mean([s.travel_time for s in log.summaries.values()]))


def output_flux(log: SimLog) -> float:
    """Exit rate over the first-to-last-exit window [vehicles/hour].

    With n exits spanning the window there are n-1 inter-exit intervals, so
    the rate is (n - 1) * 3600 / span; using the exit window rather than the
    wall-clock run removes warm-up bias. Undefined below two exits.
    """
    if len(log.summaries) < 2:
        raise MetricError("need at least two exits")
    exits = sorted(s.t_exit for s in log.summaries.values())
    span = exits[-1] - exits[0]
    if span <= 0.0:
        raise MetricError("exit window has zero length")
    return (len(exits) - 1) * 3600.0 / span


def energy_per_mass(samples) -> float:
    """Trapezoidal integral of v(t) * max(0, u(t)) over time-ordered samples.

    samples: iterable of (t, v, u) triples. Braking contributes nothing.
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.shape[0] < 2:
        return 0.0
    t, v, u = arr[:, 0], arr[:, 1], arr[:, 2]
    return float(np.trapezoid(v * np.maximum(u, 0.0), t))


def vehicle_samples(log: SimLog, vid: int) -> list[tuple[float, float, float]]:
    """(t, v, u) samples of one vehicle, in log order."""
    return [(r[0], r[5], r[6]) for r in log.records if r[1] == vid]


def safety_audit(log: SimLog, limits: ConstraintParams) -> list[AuditFinding]:
    """Scan the whole log for rear-end and crossing-gap deficits.

    Rear-end: at every step, each vehicle is checked against its same-road
    immediate predecessor (next-lower id on the road). Crossing gaps: all
    cross-road exit pairs within t_min of each other, found by a sliding
    window over the time-sorted exits.
    """
    findings: list[AuditFinding] = []
    eps = 1e-9

    # rear-end deficits, step by step (records are grouped by time already)
    i = 0
    records = log.records
    n = len(records)
    while i < n:
        t = records[i][0]
        j = i
        by_road: dict[str, list[tuple]] = {}
        while j < n and records[j][0] == t:
            by_road.setdefault(records[j][3], []).append(records[j])
            j += 1
        for rows in by_road.values():
            rows.sort(key=lambda r: r[1])
            for prev, cur in zip(rows, rows[1:]):
                gap = prev[4] - cur[4]
                required = limits.d_min + limits.t_h * cur[5]
                if gap < required - eps:
                    findings.append(
                        AuditFinding("rear_end", t, cur[1], prev[1], gap, required)
                    )
        i = j

    # crossing-gap deficits over cross-road exit pairs
    exits = sorted(
        (s.t_exit, s.id, s.road) for s in log.summaries.values()
    )
    for a in range(len(exits)):
        t_a, id_a, road_a = exits[a]
        for b in range(a + 1, len(exits)):
            t_b, id_b, road_b = exits[b]
            gap = t_b - t_a
            if gap >= limits.t_min - eps:
                break
            if road_a is not road_b:
                findings.append(
                    AuditFinding("crossing_gap", t_b, id_b, id_a, gap, limits.t_min)
                )
    findings.sort(key=lambda f: (f.t, f.id_i, f.id_k))
    return findings


def compute_run_metrics(log: SimLog, limits: ConstraintParams) -> RunMetrics:
    """All run-level metrics plus violation counts by kind."""
    energies = [s.energy for s in log.summaries.values()]
    violations: dict[str, int] = {}
    for f in safety_audit(log, limits):
        violations[f.kind] = violations.get(f.kind, 0) + 1
    for ev in log.events:
        if ev.kind in ("idm_gap_collapse", "timeout"):
            violations[ev.kind] = violations.get(ev.kind, 0) + 1
    return RunMetrics(
        avg_travel_time=average_travel_time(log),
        output_flux=output_flux(log),
        mean_energy=float(np.mean(energies)) if energies else 0.0,
        violations=violations,
        replan_count=log.replan_count,
    )
