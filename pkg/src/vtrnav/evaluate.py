"""Run scoring: turn detection, turn success rate, cross-track statistics.

Turns are detected on the taught trajectory as regions whose accumulated
heading change over a short arc-length window exceeds a threshold;
overlapping detections merge into one event anchored at the sharpest
point. A repeat run succeeds at a turn when it passes the turn's exit
gate within the corridor halfwidth without an intervention inside the
gate region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import normalize_angle
from .sim import (
    SimState,
    SimWorld,
    TrajectoryRow,
    cross_track_errors,
    in_collision,
    nearest_on_polyline,
    polyline_cumlengths,
)
from .core import Pose2

TURN_THRESHOLD_RAD = 0.52
TURN_WINDOW_M = 2.0
INTERVENTION_THRESHOLD_M = 1.5


@dataclass(frozen=True)
class TurnEvent:
    """One detected turn on the taught route."""

    s_position: float
    angle: float
    s_entry: float
    s_exit: float
    entry_point: tuple[float, float]
    exit_point: tuple[float, float]


@dataclass(frozen=True)
class RunReport:
    """Metrics of one repeat run scored against its teach run."""

    turns_total: int
    turns_passed: int
    collisions: int
    interventions: int
    duration_s: float
    distance_m: float
    max_cross_track_m: float
    mean_cross_track_m: float

    @property
    def tsr(self) -> float:
        return self.turns_passed / self.turns_total if self.turns_total else 1.0


def _positions(rows: list[TrajectoryRow]) -> np.ndarray:
    return np.array([[r.x, r.y] for r in rows])


def detect_turns(teach_rows: list[TrajectoryRow], *,
                 threshold: float = TURN_THRESHOLD_RAD,
                 window: float = TURN_WINDOW_M) -> list[TurnEvent]:
    """Find turn events on a taught trajectory.

    A sample starts a detection when the accumulated signed heading change
    over the next `window` meters of arc length reaches `threshold` in
    magnitude; overlapping detections merge into one event.
    """
    if len(teach_rows) < 2:
        raise ValueError("teach trajectory too short for turn detection")
    pts = _positions(teach_rows)
    cums = polyline_cumlengths(pts)
    headings = np.array([r.psi for r in teach_rows])
    dpsi = np.array([normalize_angle(b - a) for a, b in zip(headings, headings[1:])])
    n = len(dpsi)

    # For each sample i, sum heading deltas within [s_i, s_i + window].
    flagged = np.zeros(n, dtype=bool)
    totals = np.zeros(n)
    j_end = np.searchsorted(cums, cums[:-1] + window, side="right")
    cum_dpsi = np.concatenate([[0.0], np.cumsum(dpsi)])
    for i in range(n):
        j = min(int(j_end[i]) - 1, n)
        if j <= i:
            j = i + 1
        totals[i] = cum_dpsi[j] - cum_dpsi[i]
        flagged[i] = abs(totals[i]) >= threshold

    events: list[TurnEvent] = []
    i = 0
    while i < n:
        if not flagged[i]:
            i += 1
            continue
        start = i
        end = i
        while end + 1 < n and flagged[end + 1]:
            end += 1
        # Merged region spans the flagged windows: from the first flagged
        # sample to the end of the last flagged sample's window.
        s_entry = float(cums[start])
        last_j = min(int(j_end[end]) - 1, n)
        if last_j <= end:
            last_j = end + 1
        s_exit = float(cums[last_j])
        angle = float(cum_dpsi[last_j] - cum_dpsi[start])
        # Anchor at the sharpest heading change inside the region.
        seg = np.abs(dpsi[start:last_j])
        k = start + int(np.argmax(seg))
        events.append(
            TurnEvent(
                s_position=float(cums[k]),
                angle=angle,
                s_entry=s_entry,
                s_exit=s_exit,
                entry_point=(float(pts[start][0]), float(pts[start][1])),
                exit_point=(float(pts[last_j][0]), float(pts[last_j][1])),
            )
        )
        i = last_j + 1
    return events


def _rising_edges(values: np.ndarray, threshold: float) -> list[int]:
    """Indices where values cross above threshold from at-or-below."""
    edges = []
    prev_ok = True
    for i, v in enumerate(values):
        exceeded = v > threshold
        if exceeded and prev_ok:
            edges.append(i)
        prev_ok = not exceeded
    return edges


def score_run(teach_rows: list[TrajectoryRow], repeat_rows: list[TrajectoryRow],
              events: list[TurnEvent] | None, world: SimWorld, *,
              intervention_threshold: float = INTERVENTION_THRESHOLD_M) -> RunReport:
    """Score one repeat trajectory against the taught trajectory.

    Interventions are counted where the cross-track error first exceeds
    the threshold (matching the in-run supervisor's reset points).
    """
    if len(teach_rows) < 2:
        raise ValueError("teach trajectory too short to score against")
    if not repeat_rows:
        raise ValueError("repeat trajectory is empty")
    events = detect_turns(teach_rows) if events is None else events
    teach_pts = _positions(teach_rows)
    teach_cums = polyline_cumlengths(teach_pts)
    total = float(teach_cums[-1])
    for ev in events:
        if ev.s_exit > total + 1e-6:
            raise ValueError("turn events do not match the teach trajectory")
    repeat_pts = _positions(repeat_rows)

    cross = cross_track_errors(teach_pts, repeat_pts)
    edges = _rising_edges(cross, intervention_threshold)
    edge_s = []
    for i in edges:
        _d, s, _p = nearest_on_polyline(teach_pts, repeat_pts[i])
        edge_s.append(s)

    collisions = 0
    was = False
    for row in repeat_rows:
        hit = in_collision(SimState(Pose2(row.x, row.y, row.psi)), world)
        if hit and not was:
            collisions += 1
        was = hit

    passed = 0
    for ev in events:
        exit_pt = np.asarray(ev.exit_point)
        min_gate_dist = float(np.min(np.linalg.norm(repeat_pts - exit_pt, axis=1)))
        crossed = min_gate_dist <= world.corridor_halfwidth
        disturbed = any(ev.s_entry <= s <= ev.s_exit for s in edge_s)
        if crossed and not disturbed:
            passed += 1

    duration = repeat_rows[-1].t - repeat_rows[0].t
    distance = float(np.sum(np.linalg.norm(np.diff(repeat_pts, axis=0), axis=1)))
    return RunReport(
        turns_total=len(events),
        turns_passed=passed,
        collisions=collisions,
        interventions=len(edges),
        duration_s=float(duration),
        distance_m=distance,
        max_cross_track_m=float(np.max(cross)),
        mean_cross_track_m=float(np.mean(cross)),
    )


_COLUMNS = (
    ("turns", lambda r: f"{r.turns_passed}/{r.turns_total}"),
    ("tsr", lambda r: f"{r.tsr:.3f}"),
    ("collisions", lambda r: str(r.collisions)),
    ("interventions", lambda r: str(r.interventions)),
    ("duration_s", lambda r: f"{r.duration_s:.1f}"),
    ("distance_m", lambda r: f"{r.distance_m:.1f}"),
    ("max_cross_track_m", lambda r: f"{r.max_cross_track_m:.3f}"),
    ("mean_cross_track_m", lambda r: f"{r.mean_cross_track_m:.3f}"),
)


def compare(entries: list[tuple[str, RunReport]],
            extras: dict[str, dict] | None = None) -> tuple[str, str]:
    """Build (text table, CSV) comparing labeled run reports.

    `extras` adds per-label columns (e.g. map node counts) keyed by label.
    """
    if not entries:
        raise ValueError("nothing to compare")
    extras = extras or {}
    extra_keys: list[str] = []
    for label, _ in entries:
        for key in extras.get(label, {}):
            if key not in extra_keys:
                extra_keys.append(key)

    header = ["run"] + [name for name, _ in _COLUMNS] + extra_keys
    rows = []
    for label, report in entries:
        row = [label] + [fmt(report) for _name, fmt in _COLUMNS]
        row += [str(extras.get(label, {}).get(k, "")) for k in extra_keys]
        rows.append(row)

    widths = [max(len(header[c]), *(len(r[c]) for r in rows)) for c in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    text = "\n".join(lines) + "\n"
    csv_lines = [",".join(header)]
    csv_lines += [",".join(row) for row in rows]
    return text, "\n".join(csv_lines) + "\n"
