"""Time-to-conflict metrics and the re-planning trigger.

Two scalar risk measures are monitored for each planned CAV: the time until
the same-road gap shrinks to the minimum distance,

    T_same = (p_k - p_i - d_min) / (v_i - v_k)   for v_i > v_k,

and, inside the merging zone, the gap between predicted conflict-point
crossings of the ego and a neighbor-road vehicle,

    T_neighbor = |(-p_i - d_min)/v_i - (-p_k - d_min)/v_k|.

A re-plan is requested when either metric drops below its critical value,
or when the ego speed drops below a low-speed threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class RiskParams:
    """Critical time-to-conflict values [s] and low-speed trigger [m/s]."""

    t_cr_same: float
    t_cr_neighbor: float
    v_low: float

    def __post_init__(self) -> None:
        if self.t_cr_same <= 0.0 or self.t_cr_neighbor <= 0.0:
            raise ValueError("critical time-to-conflict values must be positive")
        if self.v_low < 0.0:
            raise ValueError("v_low must be nonnegative")


@dataclass(frozen=True)
class ConflictMetrics:
    """Current time-to-conflict values; a field is None when undefined."""

    t_same: float | None = None
    t_neighbor: float | None = None


def time_to_conflict_same(p_i: float, v_i: float, p_k: float, v_k: float, d_min: float) -> float | None:
    """Time for follower i to close on leader k (p_k > p_i) down to d_min.

    Defined only while closing (v_i > v_k); floored at zero when the gap is
    already at or below the minimum distance.
    """
    dv = v_i - v_k
    if dv <= 0.0:
        return None
    return max(0.0, (p_k - p_i - d_min) / dv)


def time_to_conflict_neighbor(p_i: float, v_i: float, p_k: float, v_k: float, d_min: float) -> float | None:
    """Gap between predicted conflict-point crossings of two vehicles on
    neighboring roads, both upstream (p < 0). d_min is folded into the
    remaining distance for conservativeness. Undefined at zero speed."""
    if v_i <= 0.0 or v_k <= 0.0:
        return None
    return abs((-p_i - d_min) / v_i - (-p_k - d_min) / v_k)


def neighbor_time_to_conflict(
    p_i: float,
    v_i: float,
    neighbor_states: Iterable[tuple[float, float]],
    d_min: float,
) -> float | None:
    """Crossing-gap metric against the neighbor-road vehicle whose predicted
    crossing is nearest to the ego's, i.e. the minimum over vehicles."""
    best = None
    for p_k, v_k in neighbor_states:
        t = time_to_conflict_neighbor(p_i, v_i, p_k, v_k, d_min)
        if t is not None and (best is None or t < best):
            best = t
    return best


def should_replan(
    metrics: ConflictMetrics,
    v_i: float,
    in_merging_zone: bool,
    params: RiskParams,
) -> bool:
    """Trigger predicate. The crossing-gap metric only participates while
    the ego is inside the merging zone; a stopped or slow vehicle triggers
    through the low-speed branch regardless of the metrics."""
    if metrics.t_same is not None and metrics.t_same < params.t_cr_same:
        return True
    if (
        in_merging_zone
        and metrics.t_neighbor is not None
        and metrics.t_neighbor < params.t_cr_neighbor
    ):
        return True
    return v_i < params.v_low
