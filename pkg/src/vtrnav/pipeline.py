"""Closed-loop repeat navigation: localize, estimate, control, step.

Each cycle at the control rate embeds the current view, advances the
node belief, picks a subgoal, estimates the relative pose to it, and
turns that into a limited velocity command for the simulator. Estimator
failures hold a scaled-down version of the previous command; too many in
a row abort the run. A supervisor resets the robot onto the taught path
when it drifts past the intervention threshold, with a bounded budget.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .controller import ControlGains, command
from .core import Pose2, Twist
from .localization import (
    LikelihoodConfig,
    MotionKernel,
    belief_mode,
    init_belief,
    measurement_likelihood,
    predict,
    select_subgoal,
    update,
)
from .relpose import NonPlanarPoseError, project_to_ground
from .sim import (
    SimState,
    SimWorld,
    TrajectoryRow,
    in_collision,
    interpolate_polyline,
    nearest_on_polyline,
    observation_token,
    polyline_cumlengths,
    step,
)
from .topomap import TopoMap


@dataclass(frozen=True)
class PipelineConfig:
    """Cycle-rate and termination parameters of the repeat loop."""

    rate: float = 5.0
    subgoal_reach_rho: float = 0.7
    goal_hold_cycles: int = 3
    failure_hold_speed_factor: float = 0.3
    max_consecutive_failures: int = 10
    max_sim_seconds: float = 1800.0

    def __post_init__(self) -> None:
        if self.rate <= 0.0:
            raise ValueError("rate must be positive")
        if self.subgoal_reach_rho <= 0.0:
            raise ValueError("subgoal reach radius must be positive")
        if self.goal_hold_cycles < 1:
            raise ValueError("goal hold needs at least one cycle")
        if not 0.0 <= self.failure_hold_speed_factor <= 1.0:
            raise ValueError("failure hold factor must lie in [0, 1]")
        if self.max_consecutive_failures < 1:
            raise ValueError("failure budget must be at least 1")
        if self.max_sim_seconds <= 0.0:
            raise ValueError("simulated time limit must be positive")


@dataclass(frozen=True)
class InterventionConfig:
    """Supervisor that rescues the robot when it leaves the corridor."""

    threshold: float = 1.5
    max_count: int = 20

    def __post_init__(self) -> None:
        if self.threshold <= 0.0:
            raise ValueError("intervention threshold must be positive")
        if self.max_count < 0:
            raise ValueError("intervention budget must be non-negative")


@dataclass
class CycleTrace:
    """Diagnostic record of one repeat cycle."""

    cycle: int
    t: float
    belief_mode: int
    subgoal: int
    status: str
    xi: tuple[float, float, float] | None
    polar: tuple[float, float, float] | None
    raw: tuple[float, float] | None
    shaped: tuple[float, float] | None
    limited: tuple[float, float]
    latency_ms: float

    def to_record(self) -> dict:
        return {
            "cycle": self.cycle,
            "t": self.t,
            "belief_mode": self.belief_mode,
            "subgoal": self.subgoal,
            "status": self.status,
            "xi": list(self.xi) if self.xi is not None else None,
            "polar": list(self.polar) if self.polar is not None else None,
            "raw": list(self.raw) if self.raw is not None else None,
            "shaped": list(self.shaped) if self.shaped is not None else None,
            "limited": list(self.limited),
            "latency_ms": self.latency_ms,
        }


def write_traces(path, traces: list[CycleTrace]) -> None:
    """Write cycle traces as newline-delimited JSON."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_record(), sort_keys=True) + "\n")


@dataclass
class RepeatResult:
    """Outcome of a repeat run plus its logs."""

    reached_goal: bool
    reason: str | None
    trajectory: list[TrajectoryRow]
    traces: list[CycleTrace]
    interventions: int
    collisions: int
    final_state: SimState

    @property
    def outcome(self) -> str:
        return "reached_goal" if self.reached_goal else "aborted"


class RepeatCamera:
    """Repeat-session view of the descriptor field bound to one rng."""

    def __init__(self, field, rng: np.random.Generator | None = None):
        self.field = field
        self.rng = rng

    def embed(self, pose: Pose2):
        from .perception import Session

        return self.field.embed(pose, Session.REPEAT, self.rng)


def run_repeat(topo_map: TopoMap, world: SimWorld, camera, estimator, *,
               gains: ControlGains | None = None,
               kernel: MotionKernel | None = None,
               likelihood_config: LikelihoodConfig | None = None,
               lookahead: int = 1,
               prior_start: int | None = 0,
               localization_mode: str = "filtered",
               config: PipelineConfig | None = None,
               intervention: InterventionConfig | None = None,
               start_pose: Pose2 | None = None) -> RepeatResult:
    """Run the repeat loop until the goal is reached or the run aborts.

    localization_mode "filtered" uses the Bayes filter; "raw" targets the
    per-frame likelihood argmax directly (ablation mode).
    """
    if localization_mode not in ("filtered", "raw"):
        raise ValueError(f"unknown localization mode {localization_mode!r}")
    gains = gains or ControlGains()
    kernel = kernel or MotionKernel()
    like_cfg = likelihood_config or LikelihoodConfig()
    cfg = config or PipelineConfig()
    guard = intervention or InterventionConfig()

    n = len(topo_map)
    if start_pose is None:
        if topo_map.nodes[0].teach_pose is None:
            raise ValueError("map has no teach poses; start_pose is required")
        start_pose = topo_map.nodes[0].teach_pose

    reference = None
    if all(node.teach_pose is not None for node in topo_map.nodes):
        reference = np.array(
            [[node.teach_pose.x, node.teach_pose.y] for node in topo_map.nodes]
        )
        reference_cums = polyline_cumlengths(reference)

    belief = init_belief(n, prior_start)
    state = SimState(start_pose)
    dt = 1.0 / cfg.rate
    max_cycles = int(cfg.max_sim_seconds * cfg.rate)
    prev_limited = Twist(0.0, 0.0)
    subgoal_floor = 0
    fail_streak = 0
    goal_hold = 0
    interventions = 0
    collisions = 0
    was_colliding = False
    trajectory: list[TrajectoryRow] = []
    traces: list[CycleTrace] = []
    reached = False
    reason: str | None = None

    for cycle in range(max_cycles):
        t0 = time.perf_counter()
        t = cycle / cfg.rate
        pose = state.pose

        if reference is not None:
            dist, s_near, _ = nearest_on_polyline(reference, (pose.x, pose.y))
            if dist > guard.threshold:
                interventions += 1
                trajectory.append(
                    TrajectoryRow(t, pose.x, pose.y, pose.psi, 0.0, 0.0,
                                  subgoal_floor, "intervention")
                )
                traces.append(
                    CycleTrace(cycle, t, belief_mode(belief), subgoal_floor,
                               "intervention", None, None, None, None,
                               (0.0, 0.0),
                               (time.perf_counter() - t0) * 1000.0)
                )
                if interventions > guard.max_count:
                    reason = "intervention budget"
                    break
                point, heading = interpolate_polyline(reference, reference_cums, s_near)
                state = SimState(Pose2(float(point[0]), float(point[1]), heading),
                                 time=state.time + dt, odometer=state.odometer)
                prev_limited = Twist(0.0, 0.0)
                subgoal_floor = 0
                fail_streak = 0
                goal_hold = 0
                continue

        query = camera.embed(pose)
        if localization_mode == "filtered":
            candidate = update(predict(belief, kernel),
                               measurement_likelihood(query, topo_map, like_cfg))
            mode_idx = belief_mode(candidate)
            subgoal = select_subgoal(candidate, lookahead)
        else:
            candidate = belief
            likelihood = measurement_likelihood(query, topo_map, like_cfg)
            mode_idx = belief_mode(likelihood)
            subgoal = min(mode_idx + lookahead, n - 1)
        subgoal = max(subgoal, subgoal_floor)
        node = topo_map.nodes[subgoal]

        needs_obs = getattr(estimator, "needs_observation", False)
        obs = observation_token(pose, t) if needs_obs else None
        transform = estimator.estimate(pose, obs, node)
        xi = None
        if transform is not None:
            try:
                xi = project_to_ground(transform, estimator.convention)
            except NonPlanarPoseError:
                xi = None

        if xi is not None:
            belief = candidate
            subgoal_floor = subgoal
            fail_streak = 0
            polar, raw, shaped, limited = command(xi, gains)
            status = "ok"
            if subgoal == n - 1 and polar.rho < cfg.subgoal_reach_rho:
                goal_hold += 1
            else:
                goal_hold = 0
        else:
            fail_streak += 1
            goal_hold = 0
            polar = raw = shaped = None
            limited = Twist(prev_limited.v * cfg.failure_hold_speed_factor,
                            prev_limited.w * cfg.failure_hold_speed_factor)
            failure = getattr(estimator, "last_failure", None) or "no estimate"
            status = f"failure: {failure}"

        mode_label = "repeat" if xi is not None else "hold"
        trajectory.append(
            TrajectoryRow(t, pose.x, pose.y, pose.psi, limited.v, limited.w,
                          subgoal, mode_label)
        )
        traces.append(
            CycleTrace(
                cycle, t, mode_idx, subgoal, status,
                (xi.dx, xi.dy, xi.dpsi) if xi is not None else None,
                (polar.rho, polar.alpha, polar.beta) if polar is not None else None,
                (raw.v, raw.w) if raw is not None else None,
                (shaped.v, shaped.w) if shaped is not None else None,
                (limited.v, limited.w),
                (time.perf_counter() - t0) * 1000.0,
            )
        )

        if goal_hold >= cfg.goal_hold_cycles:
            reached = True
            break
        if fail_streak >= cfg.max_consecutive_failures:
            reason = "estimator failures"
            break

        state = step(state, limited, dt)
        prev_limited = limited
        colliding = in_collision(state, world)
        if colliding and not was_colliding:
            collisions += 1
        was_colliding = colliding
    else:
        reason = "time limit"

    return RepeatResult(
        reached_goal=reached,
        reason=None if reached else reason,
        trajectory=trajectory,
        traces=traces,
        interventions=interventions,
        collisions=collisions,
        final_state=state,
    )
