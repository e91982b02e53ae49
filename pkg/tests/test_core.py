"""Geometry and descriptor primitives."""

from __future__ import annotations

import math

import numpy as np
import pytest

from vtrnav.core import (
    Descriptor,
    Pose2,
    RelPose2,
    Transform3,
    Twist,
    compose_se2,
    cosine_similarity,
    normalize_angle,
    relative_se2,
    yaw_rotation,
)


class TestNormalizeAngle:
    def test_identity(self):
        assert normalize_angle(0.0) == 0.0

    def test_full_period(self):
        assert abs(normalize_angle(2.0 * math.pi)) < 1e-12

    def test_three_half_pi(self):
        # 3pi/2 - 2pi = -pi/2
        assert abs(normalize_angle(3.0 * math.pi / 2.0) - (-math.pi / 2.0)) < 1e-12

    def test_boundary_is_half_open(self):
        # (-pi, pi]: pi stays pi, -pi maps to pi.
        assert normalize_angle(math.pi) == math.pi
        assert normalize_angle(-math.pi) == math.pi

    def test_non_finite_rejected(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError):
                normalize_angle(bad)

    def test_idempotent_and_in_range(self):
        rng = np.random.default_rng(0)
        thetas = rng.uniform(-1e4, 1e4, 1_000_000)
        n = len(thetas)
        wrapped = np.fromiter(
            (normalize_angle(float(t)) for t in thetas), dtype=np.float64, count=n
        )
        assert np.all(wrapped > -math.pi)
        assert np.all(wrapped <= math.pi)
        again = np.fromiter(
            (normalize_angle(float(w)) for w in wrapped), dtype=np.float64, count=n
        )
        assert np.array_equal(again, wrapped)

    def test_preserves_angle_mod_two_pi(self):
        rng = np.random.default_rng(1)
        for theta in rng.uniform(-1e4, 1e4, 500):
            w = normalize_angle(float(theta))
            turns = (float(theta) - w) / (2.0 * math.pi)
            assert abs(turns - round(turns)) < 1e-9


class TestPoseTypes:
    def test_pose_normalizes_heading(self):
        p = Pose2(0.0, 0.0, 3.0 * math.pi)
        assert abs(p.psi - math.pi) < 1e-12

    def test_relpose_normalizes_heading(self):
        r = RelPose2(0.0, 0.0, -3.0 * math.pi / 2.0)
        assert abs(r.dpsi - math.pi / 2.0) < 1e-12

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Pose2(math.nan, 0.0, 0.0)
        with pytest.raises(ValueError):
            RelPose2(0.0, math.inf, 0.0)
        with pytest.raises(ValueError):
            Twist(math.nan, 0.0)

    def test_frozen(self):
        p = Pose2(1.0, 2.0, 0.5)
        with pytest.raises(Exception):
            p.x = 3.0


class TestComposeRelative:
    def test_compose_identity(self):
        out = compose_se2(Pose2(0, 0, 0), RelPose2(0, 0, 0))
        assert (out.x, out.y, out.psi) == (0.0, 0.0, 0.0)

    def test_compose_rotated_forward_step(self):
        out = compose_se2(Pose2(0, 0, math.pi / 2), RelPose2(1, 0, 0))
        assert abs(out.x - 0.0) < 1e-12
        assert abs(out.y - 1.0) < 1e-12
        assert abs(out.psi - math.pi / 2) < 1e-12

    def test_compose_pure_rotation_keeps_position(self):
        out = compose_se2(Pose2(1, 1, 0), RelPose2(0, 0, math.pi))
        assert (out.x, out.y) == (1.0, 1.0)
        assert abs(out.psi - math.pi) < 1e-12

    def test_relative_identity(self):
        a = Pose2(3.0, -2.0, 0.7)
        rel = relative_se2(a, a)
        assert rel.dx == 0.0 and rel.dy == 0.0 and rel.dpsi == 0.0

    def test_relative_world_aligned(self):
        rel = relative_se2(Pose2(0, 0, 0), Pose2(2, 0, 0))
        assert (rel.dx, rel.dy, rel.dpsi) == (2.0, 0.0, 0.0)

    def test_relative_rotated_frame(self):
        rel = relative_se2(Pose2(0, 0, math.pi / 2), Pose2(0, 1, math.pi / 2))
        assert abs(rel.dx - 1.0) < 1e-12
        assert abs(rel.dy - 0.0) < 1e-12
        assert abs(rel.dpsi) < 1e-12

    def test_round_trip_random_pairs(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            a = Pose2(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi))
            b = Pose2(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi))
            back = compose_se2(a, relative_se2(a, b))
            assert abs(back.x - b.x) < 1e-12
            assert abs(back.y - b.y) < 1e-12
            assert abs(normalize_angle(back.psi - b.psi)) < 1e-12


class TestDescriptor:
    def test_normalized_at_construction(self):
        d = Descriptor(np.array([3.0, 4.0]))
        assert abs(float(np.linalg.norm(d.values)) - 1.0) < 1e-12
        assert abs(d.values[0] - 0.6) < 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            Descriptor(np.zeros(4))

    def test_from_normalized_keeps_bits(self):
        vec = Descriptor(np.arange(1.0, 9.0)).values
        again = Descriptor.from_normalized(vec)
        assert np.array_equal(again.values, vec)

    def test_from_normalized_rejects_off_unit(self):
        with pytest.raises(ValueError):
            Descriptor.from_normalized(np.array([1.0, 0.01]))
        with pytest.raises(ValueError):
            Descriptor.from_normalized(np.array([0.5, 0.5]))

    def test_immutable(self):
        d = Descriptor(np.ones(4))
        with pytest.raises(AttributeError):
            d.values = np.zeros(4)
        with pytest.raises(ValueError):
            d.values[0] = 2.0


class TestCosineSimilarity:
    def test_self_similarity(self):
        d = Descriptor(np.arange(1.0, 9.0))
        assert abs(cosine_similarity(d, d) - 1.0) < 1e-12

    def test_orthogonal(self):
        a = Descriptor(np.array([1.0, 0.0, 0.0]))
        b = Descriptor(np.array([0.0, 1.0, 0.0]))
        assert cosine_similarity(a, b) == 0.0

    def test_hand_dot_product(self):
        a = Descriptor(np.array([1.0, 1.0, 0.0, 0.0]))
        b = Descriptor(np.array([1.0, 0.0, 0.0, 0.0]))
        assert abs(cosine_similarity(a, b) - math.sqrt(0.5)) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a = Descriptor(rng.standard_normal(16))
        b = Descriptor(rng.standard_normal(16))
        assert cosine_similarity(a, b) == cosine_similarity(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity(Descriptor(np.ones(4)), Descriptor(np.ones(8)))

    def test_clamped(self):
        d = Descriptor(np.ones(4))
        assert -1.0 <= cosine_similarity(d, d) <= 1.0


class TestTransform3:
    def test_identity(self):
        t = Transform3.identity()
        assert np.array_equal(t.rotation, np.eye(3))
        assert np.array_equal(t.translation, np.zeros(3))

    def test_yaw_rotation_valid(self):
        t = Transform3(yaw_rotation(0.3), np.array([1.0, 2.0, 3.0]))
        assert abs(t.rotation[0, 0] - math.cos(0.3)) < 1e-12

    def test_rejects_non_orthonormal(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-3
        with pytest.raises(ValueError):
            Transform3(bad, np.zeros(3))

    def test_rejects_reflection(self):
        # Orthonormal but determinant -1.
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            Transform3(refl, np.zeros(3))

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            Transform3(np.eye(2), np.zeros(3))
        with pytest.raises(ValueError):
            Transform3(np.eye(3), np.zeros(2))

    def test_immutable(self):
        t = Transform3.identity()
        with pytest.raises(AttributeError):
            t.translation = np.ones(3)
        with pytest.raises(ValueError):
            t.rotation[0, 0] = 2.0
