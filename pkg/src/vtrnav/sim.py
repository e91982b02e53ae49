"""2-D unicycle simulation: exact kinematics, worlds, teach recording, logs.

The simulator integrates constant twists exactly over each step (arc
segments), so logged trajectories have no integration drift. Worlds are
waypoint routes with optional circular obstacles. Teach runs follow the
route with pure pursuit while emitting camera frames at a fixed rate.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Pose2, Twist
from .perception import DescriptorField, Session
from .topomap import Frame

STRAIGHT_W_EPS = 1e-9

TRAJECTORY_HEADER = "t,x,y,psi,v,w,subgoal,mode"


@dataclass(frozen=True)
class SimState:
    """Simulation state: pose plus elapsed time and driven distance."""

    pose: Pose2
    time: float = 0.0
    odometer: float = 0.0


@dataclass(frozen=True)
class SimWorld:
    """Route waypoints, obstacles, and tolerances of one environment."""

    route: np.ndarray
    obstacles: tuple[tuple[float, float, float], ...] = ()
    corridor_halfwidth: float = 1.0
    robot_radius: float = 0.3

    def __post_init__(self) -> None:
        route = np.asarray(self.route, dtype=np.float64)
        if route.ndim != 2 or route.shape[1] != 2 or route.shape[0] < 2:
            raise ValueError("route must be an (N>=2, 2) waypoint array")
        if not np.all(np.isfinite(route)):
            raise ValueError("route waypoints must be finite")
        route = route.copy()
        route.setflags(write=False)
        object.__setattr__(self, "route", route)
        for cx, cy, r in self.obstacles:
            if r <= 0.0 or not all(map(math.isfinite, (cx, cy, r))):
                raise ValueError("obstacles must be finite with positive radius")
        if self.corridor_halfwidth <= 0.0 or self.robot_radius <= 0.0:
            raise ValueError("corridor halfwidth and robot radius must be positive")


def step(state: SimState, cmd: Twist, dt: float) -> SimState:
    """Integrate a constant twist exactly for dt seconds."""
    if dt <= 0.0 or not math.isfinite(dt):
        raise ValueError("dt must be positive and finite")
    x, y, psi = state.pose.x, state.pose.y, state.pose.psi
    if abs(cmd.w) < STRAIGHT_W_EPS:
        x += cmd.v * dt * math.cos(psi)
        y += cmd.v * dt * math.sin(psi)
        psi += cmd.w * dt
    else:
        radius = cmd.v / cmd.w
        x += radius * (math.sin(psi + cmd.w * dt) - math.sin(psi))
        y -= radius * (math.cos(psi + cmd.w * dt) - math.cos(psi))
        psi += cmd.w * dt
    return SimState(
        pose=Pose2(x, y, psi),
        time=state.time + dt,
        odometer=state.odometer + abs(cmd.v) * dt,
    )


def in_collision(state: SimState, world: SimWorld) -> bool:
    """True when the robot disc overlaps any obstacle (strict inequality)."""
    for cx, cy, r in world.obstacles:
        if math.hypot(state.pose.x - cx, state.pose.y - cy) < r + world.robot_radius:
            return True
    return False


# ---------------------------------------------------------------------------
# Polyline utilities shared with evaluation.

def polyline_cumlengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex, starting at 0."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def interpolate_polyline(points: np.ndarray, cumlengths: np.ndarray,
                         s: float) -> tuple[np.ndarray, float]:
    """Point and local segment heading at arc length s (clamped to ends)."""
    pts = np.asarray(points, dtype=np.float64)
    total = cumlengths[-1]
    s = min(max(s, 0.0), float(total))
    i = int(np.searchsorted(cumlengths, s, side="right") - 1)
    i = min(max(i, 0), len(pts) - 2)
    seg = pts[i + 1] - pts[i]
    seg_len = float(np.linalg.norm(seg))
    heading = math.atan2(seg[1], seg[0])
    if seg_len == 0.0:
        return pts[i].copy(), heading
    frac = (s - cumlengths[i]) / seg_len
    return pts[i] + frac * seg, heading


def nearest_on_polyline(points: np.ndarray, query) -> tuple[float, float, np.ndarray]:
    """Distance, arc length, and closest point from query to the polyline."""
    pts = np.asarray(points, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    a = pts[:-1]
    b = pts[1:]
    ab = b - a
    seg_len_sq = np.einsum("ij,ij->i", ab, ab)
    seg_len_sq = np.where(seg_len_sq == 0.0, 1.0, seg_len_sq)
    t = np.clip(np.einsum("ij,ij->i", q - a, ab) / seg_len_sq, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.linalg.norm(proj - q, axis=1)
    k = int(np.argmin(d))
    cums = polyline_cumlengths(pts)
    seg_len = math.sqrt(float(seg_len_sq[k])) if not np.array_equal(a[k], b[k]) else 0.0
    s = float(cums[k] + t[k] * seg_len)
    return float(d[k]), s, proj[k]


def cross_track_errors(points: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Distance from each query point to the polyline."""
    pts = np.asarray(points, dtype=np.float64)
    qs = np.asarray(queries, dtype=np.float64)
    a = pts[:-1]
    b = pts[1:]
    ab = b - a
    seg_len_sq = np.einsum("ij,ij->i", ab, ab)
    seg_len_sq = np.where(seg_len_sq == 0.0, 1.0, seg_len_sq)
    out = np.empty(len(qs))
    for i, q in enumerate(qs):
        t = np.clip(np.einsum("ij,ij->i", q - a, ab) / seg_len_sq, 0.0, 1.0)
        proj = a + t[:, None] * ab
        out[i] = np.min(np.linalg.norm(proj - q, axis=1))
    return out


# ---------------------------------------------------------------------------
# Route fixtures.

def _segment_distance(p1, p2, p3, p4) -> float:
    """Minimum distance between segments p1-p2 and p3-p4."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def point_seg(p, a, b):
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            return float(np.linalg.norm(p - a))
        t = min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
        return float(np.linalg.norm(a + t * ab - p))

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return 0.0
    return min(
        point_seg(p1, p3, p4), point_seg(p2, p3, p4),
        point_seg(p3, p1, p2), point_seg(p4, p1, p2),
    )


def _route_clearance_ok(points: np.ndarray, min_clearance: float) -> bool:
    """True when all non-adjacent segment pairs keep min_clearance apart."""
    n = len(points) - 1
    for i in range(n):
        for j in range(i + 2, n):
            d = _segment_distance(points[i], points[i + 1], points[j], points[j + 1])
            if d < min_clearance:
                return False
    return True


def _turn_route(seed: int, n_turns: int, total_length: float, min_leg: float,
                min_clearance: float, max_attempts: int = 5000) -> np.ndarray:
    """Axis-aligned route with n_turns right-angle turns of random sign."""
    n_legs = n_turns + 1
    directions = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        weights = rng.uniform(0.2, 1.0, n_legs)
        lengths = min_leg + (total_length - min_leg * n_legs) * weights / weights.sum()
        signs = rng.choice([-1, 1], n_turns)
        heading = 0
        pts = [np.zeros(2)]
        for i in range(n_legs):
            pts.append(pts[-1] + lengths[i] * directions[heading % 4])
            if i < n_turns:
                heading += int(signs[i])
        route = np.array(pts)
        if _route_clearance_ok(route, min_clearance):
            return route
    raise RuntimeError(f"no clear route found for seed {seed}")


@functools.lru_cache(maxsize=None)
def standard_route_1km() -> SimWorld:
    """1000 m route with 20 right-angle turns of fixed random signs."""
    route = _turn_route(seed=12, n_turns=20, total_length=1000.0,
                        min_leg=10.0, min_clearance=6.0)
    return SimWorld(route=route)


@functools.lru_cache(maxsize=None)
def standard_route_short() -> SimWorld:
    """100 m route with 7 turns, two of them sharper than 120 degrees."""
    legs = [14.0, 12.0, 13.0, 12.0, 12.0, 13.0, 12.0, 12.0]
    turns_deg = [50.0, -75.0, 125.0, -60.0, 45.0, -130.0, 70.0]
    heading = 0.0
    pts = [np.zeros(2)]
    for i, leg in enumerate(legs):
        pts.append(pts[-1] + leg * np.array([math.cos(heading), math.sin(heading)]))
        if i < len(turns_deg):
            heading += math.radians(turns_deg[i])
    route = np.array(pts)
    return SimWorld(route=route)


ROUTE_FIXTURE_NAMES = ("standard-1km", "standard-short")


def route_fixture(name: str) -> SimWorld:
    if name == "standard-1km":
        return standard_route_1km()
    if name == "standard-short":
        return standard_route_short()
    raise ValueError(f"unknown route fixture {name!r}")


# ---------------------------------------------------------------------------
# Trajectory logs.

@dataclass(frozen=True)
class TrajectoryRow:
    """One control cycle in a trajectory log."""

    t: float
    x: float
    y: float
    psi: float
    v: float
    w: float
    subgoal: int
    mode: str


def write_trajectory(path, rows: list[TrajectoryRow]) -> None:
    """Write rows as CSV with a fixed header; floats keep full precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.t!r},{r.x!r},{r.y!r},{r.psi!r},{r.v!r},{r.w!r},"
                f"{r.subgoal},{r.mode}\n"
            )


def read_trajectory(path) -> list[TrajectoryRow]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {header!r}")
        rows = []
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise ValueError(f"malformed trajectory row at line {line_no}")
            rows.append(
                TrajectoryRow(
                    t=float(parts[0]), x=float(parts[1]), y=float(parts[2]),
                    psi=float(parts[3]), v=float(parts[4]), w=float(parts[5]),
                    subgoal=int(parts[6]), mode=parts[7],
                )
            )
    return rows


def observation_token(pose: Pose2, t: float) -> bytes:
    """Opaque simulated camera payload; encodes the viewpoint for replay."""
    return json.dumps(
        {"pose": [pose.x, pose.y, pose.psi], "t": t}, separators=(",", ":")
    ).encode("utf-8")


# ---------------------------------------------------------------------------
# Teach recording.

def record_teach(world: SimWorld, field: DescriptorField, *, speed: float = 1.0,
                 camera_rate: float = 5.0, lookahead: float = 1.5,
                 rng: np.random.Generator | None = None,
                 ) -> tuple[list[Frame], list[TrajectoryRow]]:
    """Drive the route with pure pursuit, emitting frames at the camera rate.

    Returns the frame stream and the driven trajectory log. The teach
    descriptors use the TEACH session of the field; measurement noise, if
    configured, draws from rng.
    """
    if speed <= 0.0 or camera_rate <= 0.0 or lookahead <= 0.0:
        raise ValueError("speed, camera_rate, and lookahead must be positive")
    route = world.route
    cums = polyline_cumlengths(route)
    total = float(cums[-1])
    dt = 1.0 / camera_rate
    start_heading = math.atan2(route[1][1] - route[0][1], route[1][0] - route[0][0])
    state = SimState(Pose2(float(route[0][0]), float(route[0][1]), start_heading))
    frames: list[Frame] = []
    rows: list[TrajectoryRow] = []
    max_cycles = int(3.0 * total / speed * camera_rate) + 200
    for i in range(max_cycles):
        p = np.array([state.pose.x, state.pose.y])
        _dist, s_near, _pt = nearest_on_polyline(route, p)
        if s_near >= total - 0.05:
            break
        t = i / camera_rate
        pose = state.pose
        frames.append(
            Frame(
                timestamp=t,
                descriptor=field.embed(pose, Session.TEACH, rng),
                observation=observation_token(pose, t),
                teach_pose=pose,
            )
        )
        target, _ = interpolate_polyline(route, cums, s_near + lookahead)
        bearing = math.atan2(target[1] - pose.y, target[0] - pose.x) - pose.psi
        bearing = math.atan2(math.sin(bearing), math.cos(bearing))
        w = min(max(2.0 * bearing, -2.5), 2.5)
        v = speed * min(max(math.cos(bearing), 0.05), 1.0)
        rows.append(TrajectoryRow(t, pose.x, pose.y, pose.psi, v, w, -1, "teach"))
        state = step(state, Twist(v, w), dt)
    else:
        raise RuntimeError("teach recording did not reach the end of the route")
    return frames, rows
