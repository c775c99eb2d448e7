"""Run metrics: availability, drift rates over own-clock segments, jump census."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .engine import NS_PER_S
from .protocol import NodeState


class SegmentError(Exception):
    """A drift-rate segment crosses an untaint or calibration event."""


@dataclass(frozen=True)
class Record:
    t_ns: int
    node: int
    state: str
    node_time_ns: int | None
    drift_ns: int | None
    cum_aex: int
    cum_ta_ref: int


@dataclass(frozen=True)
class Transition:
    t_ns: int
    node: int
    old: str
    new: str


@dataclass(frozen=True)
class Jump:
    """Anchor change: post-update timestamp minus pre-update extrapolation."""

    t_ns: int
    node: int
    source: str  # "peer:<id>" or "ta"
    adopted: bool
    magnitude_ns: int
    new_time_ns: int


def state_durations(transitions: list[Transition], initial_states: dict[int, str],
                    horizon_ns: int) -> dict[int, dict[str, int]]:
    """Exact nanoseconds spent per state per node; sums to the horizon."""
    durations: dict[int, dict[str, int]] = {
        node: {s.value: 0 for s in NodeState} for node in initial_states
    }
    cursor = {node: (0, state) for node, state in initial_states.items()}
    for tr in transitions:
        since, state = cursor[tr.node]
        durations[tr.node][state] += tr.t_ns - since
        cursor[tr.node] = (tr.t_ns, tr.new)
    for node, (since, state) in cursor.items():
        durations[node][state] += horizon_ns - since
    return durations


def availability(durations: dict[str, int], horizon_ns: int) -> float:
    return durations.get(NodeState.OK.value, 0) / horizon_ns


def anchor_times(jumps: list[Jump], node: int) -> list[int]:
    return [j.t_ns for j in jumps if j.node == node]


def own_clock_segments(jumps: list[Jump], node: int, horizon_ns: int) -> list[tuple[int, int]]:
    """Intervals between anchor updates, during which drift is a pure slope."""
    points = sorted(set(anchor_times(jumps, node)))
    edges = points + [horizon_ns]
    segments = []
    start = 0
    for edge in edges:
        if edge > start:
            segments.append((start, edge))
        start = edge
    return segments


def drift_rate_ppm(records: list[Record], node: int, t0_ns: int, t1_ns: int,
                   jumps: list[Jump] | None = None) -> float:
    """Least-squares slope of drift over [t0, t1), in parts per million.

    The window must not contain an anchor update; those reset drift and would
    corrupt the slope.  Only serving-state records enter the fit: a tainted
    node reports its frozen belief, which decays at -1 s/s regardless of the
    clock's own speed.
    """
    if jumps is not None:
        crossing = [j.t_ns for j in jumps if j.node == node and t0_ns < j.t_ns < t1_ns]
        if crossing:
            raise SegmentError(
                f"segment ({t0_ns}, {t1_ns}) crosses anchor updates at {crossing[:3]}")
    points = [(r.t_ns, r.drift_ns) for r in records
              if r.node == node and t0_ns <= r.t_ns < t1_ns
              and r.drift_ns is not None and r.state == "OK"]
    if len(points) < 2:
        raise SegmentError("need at least two drift records in the segment")
    n = len(points)
    mean_x = math.fsum(x for x, _ in points) / n
    mean_y = math.fsum(y for _, y in points) / n
    var = math.fsum((x - mean_x) ** 2 for x, _ in points)
    if var == 0:
        raise SegmentError("all records share one timestamp")
    cov = math.fsum((x - mean_x) * (y - mean_y) for x, y in points)
    return cov / var * 1e6


def longest_segment_rate_ppm(records: list[Record], jumps: list[Jump], node: int,
                             horizon_ns: int) -> float | None:
    """Drift rate over the longest own-clock segment with enough samples."""
    segments = sorted(own_clock_segments(jumps, node, horizon_ns),
                      key=lambda seg: seg[1] - seg[0], reverse=True)
    for t0, t1 in segments[:12]:
        try:
            return drift_rate_ppm(records, node, t0, t1)
        except SegmentError:
            continue
    return None


@dataclass
class MetricsSummary:
    scenario: str
    seed: int
    horizon_ns: int
    per_node: dict[int, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "horizon_ns": self.horizon_ns,
            "per_node": {str(node): body for node, body in sorted(self.per_node.items())},
        }


def build_summary(
    scenario_name: str,
    seed: int,
    horizon_ns: int,
    records: list[Record],
    transitions: list[Transition],
    jumps: list[Jump],
    initial_states: dict[int, str],
    calibrated_mhz: dict[int, float | None],
    unavailable_serves: dict[int, int],
) -> MetricsSummary:
    durations = state_durations(transitions, initial_states, horizon_ns)
    summary = MetricsSummary(scenario_name, seed, horizon_ns)
    final: dict[int, Record] = {}
    for rec in records:
        final[rec.node] = rec
    for node in sorted(initial_states):
        node_jumps = [j for j in jumps if j.node == node]
        peer_jumps = [j for j in node_jumps if j.source.startswith("peer:")]
        summary.per_node[node] = {
            "availability": availability(durations[node], horizon_ns),
            "calibrated_mhz": calibrated_mhz.get(node),
            "drift_rate_ppm": longest_segment_rate_ppm(records, node_jumps, node, horizon_ns),
            "state_duration_ns": durations[node],
            "jump_count": len(peer_jumps),
            "max_jump_ns": max((j.magnitude_ns for j in peer_jumps), default=None),
            "unavailable_serves": unavailable_serves.get(node, 0),
            "cum_aex": final[node].cum_aex if node in final else 0,
            "cum_ta_ref": final[node].cum_ta_ref if node in final else 0,
        }
    return summary
