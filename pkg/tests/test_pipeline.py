"""Closed-loop repeat behavior: goal detection, failure handling, rescue."""

from __future__ import annotations

import numpy as np
import pytest

from vtrnav.core import Pose2
from vtrnav.perception import DescriptorField, FieldConfig, Session
from vtrnav.pipeline import (
    InterventionConfig,
    PipelineConfig,
    RepeatCamera,
    RepeatResult,
    run_repeat,
    write_traces,
)
from vtrnav.relpose import FrameConvention, OracleConfig, OracleEstimator
from vtrnav.sim import SimWorld, write_trajectory
from vtrnav.topomap import TopoMap, TopoNode


class ScriptedOutage:
    """Oracle wrapper that fails every call after the first `good_calls`."""

    convention = FrameConvention.ROBOT_PLANAR

    def __init__(self, inner: OracleEstimator, good_calls: int):
        self.inner = inner
        self.good_calls = good_calls
        self.calls = 0
        self.last_failure = None

    def estimate(self, current_pose, current_observation, node):
        self.calls += 1
        if self.calls > self.good_calls:
            self.last_failure = "scripted-outage"
            return None
        result = self.inner.estimate(current_pose, current_observation, node)
        self.last_failure = self.inner.last_failure
        return result


def two_node_setup(spacing=0.5):
    field = DescriptorField(FieldConfig())
    poses = [Pose2(0.0, 0.0, 0.0), Pose2(spacing, 0.0, 0.0)]
    nodes = [
        TopoNode(
            index=i,
            timestamp=float(i),
            descriptor=field.embed(p, Session.TEACH),
            teach_pose=p,
        )
        for i, p in enumerate(poses)
    ]
    world = SimWorld(route=np.array([[0.0, 0.0], [2.0, 0.0]]))
    return TopoMap(nodes), world, RepeatCamera(field)


class TestGoalDetection:
    def test_short_route_reaches_goal(self, short_map, short_world, clean_field):
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
        )
        assert result.reached_goal
        assert result.reason is None
        assert result.outcome == "reached_goal"
        assert result.interventions == 0
        assert result.collisions == 0

    def test_two_node_hop_within_five_seconds(self):
        topo_map, world, camera = two_node_setup()
        result = run_repeat(topo_map, world, camera, OracleEstimator(OracleConfig()))
        assert result.reached_goal
        assert result.final_state.time <= 5.0

    def test_raw_mode_also_completes_clean(self, short_map, short_world, clean_field):
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
            localization_mode="raw",
        )
        assert result.reached_goal

    def test_unknown_mode_rejected(self, short_map, short_world, clean_field):
        with pytest.raises(ValueError, match="localization mode"):
            run_repeat(
                short_map,
                short_world,
                RepeatCamera(clean_field),
                OracleEstimator(OracleConfig()),
                localization_mode="hybrid",
            )


class TestFailureHandling:
    def test_always_fail_aborts_after_budget(self, short_map, short_world, clean_field):
        estimator = OracleEstimator(
            OracleConfig(p_fail=1.0), np.random.default_rng(0)
        )
        result = run_repeat(
            short_map, short_world, RepeatCamera(clean_field), estimator
        )
        assert not result.reached_goal
        assert result.reason == "estimator failures"
        assert result.outcome == "aborted"
        assert len(result.traces) == 10
        assert all(t.status.startswith("failure:") for t in result.traces)

    def test_failure_holds_scaled_previous_command(
        self, short_map, short_world, clean_field
    ):
        estimator = ScriptedOutage(OracleEstimator(OracleConfig()), good_calls=3)
        result = run_repeat(
            short_map, short_world, RepeatCamera(clean_field), estimator
        )
        assert not result.reached_goal
        assert result.reason == "estimator failures"
        rows = result.trajectory
        # Cycles 0..2 succeed, 3..12 hold a geometrically decaying command.
        assert [t.status for t in result.traces[:3]] == ["ok"] * 3
        assert result.traces[3].status == "failure: scripted-outage"
        for k in range(3, 13):
            assert rows[k].mode == "hold"
            assert abs(rows[k].v - 0.3 * rows[k - 1].v) < 1e-15
            assert abs(rows[k].w - 0.3 * rows[k - 1].w) < 1e-15

    def test_failure_cycle_skips_belief_commit(
        self, short_map, short_world, clean_field
    ):
        estimator = ScriptedOutage(OracleEstimator(OracleConfig()), good_calls=3)
        result = run_repeat(
            short_map, short_world, RepeatCamera(clean_field), estimator
        )
        # The subgoal floor freezes while the estimator is down.
        held = {t.subgoal for t in result.traces[3:]}
        assert len(held) == 1


class TestIntervention:
    def test_rescue_and_continue(self, short_map, short_world, clean_field):
        start = Pose2(0.0, 2.0, 0.0)
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
            start_pose=start,
        )
        assert result.interventions == 1
        assert result.reached_goal
        first = result.trajectory[0]
        assert first.mode == "intervention"
        assert (first.v, first.w) == (0.0, 0.0)
        # After the reset the robot sits back on the taught path.
        second = result.trajectory[1]
        assert abs(second.y) < 1e-9

    def test_budget_exhaustion_aborts(self, short_map, short_world, clean_field):
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
            start_pose=Pose2(0.0, 2.0, 0.0),
            intervention=InterventionConfig(max_count=0),
        )
        assert not result.reached_goal
        assert result.reason == "intervention budget"
        assert len(result.traces) == 1
        assert result.traces[0].status == "intervention"


class TestLoopInvariants:
    def test_commands_within_limits(self, short_map, short_world, clean_field):
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
        )
        for row in result.trajectory:
            assert abs(row.v) <= 1.4 + 1e-9
            assert abs(row.w) <= 1.0 + 1e-9

    def test_subgoal_monotone(self, short_map, short_world, clean_field):
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
        )
        subgoals = [t.subgoal for t in result.traces]
        assert all(b >= a for a, b in zip(subgoals, subgoals[1:]))

    def test_traces_one_per_cycle(self, short_map, short_world, clean_field):
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
        )
        assert len(result.traces) == len(result.trajectory)
        cycles = [t.cycle for t in result.traces]
        assert cycles == sorted(cycles)
        assert all(t.latency_ms >= 0.0 for t in result.traces)

    def test_time_limit_reason(self, short_map, short_world, clean_field):
        result = run_repeat(
            short_map,
            short_world,
            RepeatCamera(clean_field),
            OracleEstimator(OracleConfig()),
            config=PipelineConfig(max_sim_seconds=1.0),
        )
        assert not result.reached_goal
        assert result.reason == "time limit"
        assert len(result.traces) == 5

    def test_determinism_byte_identical(self, short_map, short_world, tmp_path):
        def one_run():
            field = DescriptorField(FieldConfig(measurement_sigma=0.05))
            camera = RepeatCamera(field, np.random.default_rng(5))
            estimator = OracleEstimator(
                OracleConfig(sigma_t=0.02, sigma_psi=0.01),
                np.random.default_rng(7),
            )
            return run_repeat(short_map, short_world, camera, estimator)

        a, b = one_run(), one_run()
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trajectory(pa, a.trajectory)
        write_trajectory(pb, b.trajectory)
        assert pa.read_bytes() == pb.read_bytes()
        ta, tb = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        write_traces(ta, a.traces)
        write_traces(tb, b.traces)
        # Latencies are wall-clock; compare everything else.
        import json

        rec_a = [json.loads(l) for l in ta.read_text().splitlines()]
        rec_b = [json.loads(l) for l in tb.read_text().splitlines()]
        for ra, rb in zip(rec_a, rec_b):
            ra.pop("latency_ms")
            rb.pop("latency_ms")
        assert rec_a == rec_b

    def test_start_pose_required_without_teach_poses(self, clean_field):
        nodes = [
            TopoNode(i, float(i), clean_field.embed(Pose2(i, 0, 0), Session.TEACH))
            for i in range(2)
        ]
        topo_map = TopoMap(nodes)
        world = SimWorld(route=np.array([[0.0, 0.0], [2.0, 0.0]]))
        with pytest.raises(ValueError, match="start_pose is required"):
            run_repeat(
                topo_map, world, RepeatCamera(clean_field),
                OracleEstimator(OracleConfig()),
            )


class TestConfigValidation:
    def test_pipeline_config(self):
        with pytest.raises(ValueError):
            PipelineConfig(rate=0.0)
        with pytest.raises(ValueError):
            PipelineConfig(goal_hold_cycles=0)
        with pytest.raises(ValueError):
            PipelineConfig(failure_hold_speed_factor=1.5)
        with pytest.raises(ValueError):
            PipelineConfig(max_consecutive_failures=0)
        with pytest.raises(ValueError):
            PipelineConfig(max_sim_seconds=0.0)

    def test_intervention_config(self):
        with pytest.raises(ValueError):
            InterventionConfig(threshold=0.0)
        with pytest.raises(ValueError):
            InterventionConfig(max_count=-1)
