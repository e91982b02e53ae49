"""Belief initialization, motion prediction, appearance update, subgoals."""

from __future__ import annotations

import math

import numpy as np
import pytest

from vtrnav.core import Descriptor
from vtrnav.localization import (
    BeliefCollapseError,
    DEFAULT_KERNEL_OFFSETS,
    LikelihoodConfig,
    MotionKernel,
    belief_mode,
    init_belief,
    measurement_likelihood,
    predict,
    select_subgoal,
    update,
)
from vtrnav.topomap import TopoMap, TopoNode


def basis_map(indices, dim=16):
    nodes = []
    for pos, i in enumerate(indices):
        values = np.zeros(dim)
        values[i % dim] = 1.0
        nodes.append(TopoNode(index=pos, timestamp=float(pos), descriptor=Descriptor(values)))
    return TopoMap(nodes)


def assert_valid(belief):
    assert np.all(belief >= 0.0)
    assert abs(float(belief.sum()) - 1.0) < 1e-9


class TestInitBelief:
    def test_uniform(self):
        assert np.allclose(init_belief(4), [0.25] * 4, atol=1e-15)

    def test_delta_prior(self):
        b = init_belief(3, start=0)
        assert np.allclose(b, [0.999, 0.0005, 0.0005], atol=1e-15)
        assert_valid(b)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            init_belief(1)
        with pytest.raises(ValueError):
            init_belief(0)

    def test_start_out_of_range(self):
        with pytest.raises(ValueError):
            init_belief(5, start=5)
        with pytest.raises(ValueError):
            init_belief(5, start=-1)


class TestMotionKernel:
    def test_default_sums_to_one(self):
        MotionKernel()
        assert abs(sum(p for _, p in DEFAULT_KERNEL_OFFSETS) - 1.0) < 1e-12

    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            MotionKernel(((0, 0.5), (1, 0.6)))
        with pytest.raises(ValueError):
            MotionKernel(((0, 1.5), (1, -0.5)))
        with pytest.raises(ValueError):
            MotionKernel(())

    def test_forward_bias_flag(self):
        assert MotionKernel().has_forward_bias
        assert not MotionKernel(((0, 1.0),)).has_forward_bias
        assert not MotionKernel(((-1, 0.5), (0, 0.5))).has_forward_bias


class TestPredict:
    def test_identity_kernel(self):
        kernel = MotionKernel(((0, 1.0),))
        b = init_belief(5, start=2)
        out = predict(b, kernel)
        assert np.allclose(out, b, atol=1e-15)

    def test_delta_with_default_kernel(self):
        b = np.zeros(5)
        b[1] = 1.0
        out = predict(b, MotionKernel())
        assert np.allclose(out, [0.1, 0.2, 0.5, 0.2, 0.0], atol=1e-15)

    def test_boundary_clamp_forward(self):
        b = np.zeros(5)
        b[4] = 1.0
        out = predict(b, MotionKernel())
        # Backward 0.1 lands on node 3; everything else piles on the end.
        assert np.allclose(out, [0.0, 0.0, 0.0, 0.1, 0.9], atol=1e-15)
        assert_valid(out)

    def test_boundary_clamp_backward(self):
        b = np.zeros(5)
        b[0] = 1.0
        out = predict(b, MotionKernel(((-2, 0.4), (0, 0.2), (1, 0.4))))
        assert np.allclose(out, [0.6, 0.4, 0.0, 0.0, 0.0], atol=1e-15)

    def test_preserves_validity(self):
        rng = np.random.default_rng(2)
        kernel = MotionKernel()
        b = init_belief(40)
        for _ in range(200):
            b = predict(b, kernel)
            assert_valid(b)


class TestLikelihood:
    def test_equal_sims_equal_likelihood(self):
        topo_map = basis_map([0, 1, 2])
        # A query orthogonal to every node gives sim 0 everywhere.
        values = np.zeros(16)
        values[10] = 1.0
        like = measurement_likelihood(Descriptor(values), topo_map)
        assert np.allclose(like, like[0], atol=1e-15)

    def test_temperature_ratio(self):
        topo_map = basis_map([0, 1])
        query = topo_map.nodes[0].descriptor
        like = measurement_likelihood(query, topo_map, LikelihoodConfig())
        # sims are [1, 0]; the epsilon floor shifts the exact ratio by ~1e-6.
        expected = math.exp(1.0 / 0.07)
        assert abs(like[0] / like[1] - expected) / expected < 1e-5

    def test_floor_keeps_positive(self):
        topo_map = basis_map([0, 1])
        values = np.zeros(16)
        values[0] = -1.0
        like = measurement_likelihood(Descriptor(values), topo_map)
        assert np.all(like > 0.0)

    def test_dimension_mismatch(self):
        topo_map = basis_map([0, 1])
        with pytest.raises(ValueError, match="dimension"):
            measurement_likelihood(Descriptor([1.0, 0.0]), topo_map)


class TestUpdate:
    def test_flat_likelihood_no_op(self):
        b = np.array([0.1, 0.2, 0.3, 0.4])
        out = update(b, np.full(4, 7.0))
        assert np.allclose(out, b, atol=1e-15)

    def test_hand_bayes(self):
        out = update(np.array([0.5, 0.5]), np.array([2.0, 1.0]))
        assert np.allclose(out, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_delta_stays_delta(self):
        b = np.array([0.0, 1.0, 0.0])
        out = update(b, np.array([5.0, 0.1, 9.0]))
        assert np.allclose(out, b, atol=1e-15)

    def test_collapse_detected(self):
        with pytest.raises(BeliefCollapseError):
            update(np.array([1.0, 0.0]), np.array([0.0, 3.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            update(np.array([1.0, 0.0]), np.array([1.0, 1.0, 1.0]))


class TestModeAndSubgoal:
    def test_mode_plain(self):
        assert belief_mode(np.array([0.1, 0.7, 0.2])) == 1

    def test_mode_tie_larger_index(self):
        b = np.full(6, 0.1)
        b[2] = 0.25
        b[5] = 0.25
        assert belief_mode(b) == 5

    def test_subgoal_lookahead(self):
        b = np.zeros(10)
        b[3] = 1.0
        assert select_subgoal(b, lookahead=1) == 4

    def test_subgoal_clamped(self):
        b = np.zeros(10)
        b[9] = 1.0
        assert select_subgoal(b, lookahead=5) == 9

    def test_negative_lookahead(self):
        with pytest.raises(ValueError):
            select_subgoal(np.array([0.5, 0.5]), lookahead=-1)


class TestFilterValidity:
    def test_random_interleavings(self):
        # Smoke-scale version of the acceptance property.
        rng = np.random.default_rng(17)
        kernel = MotionKernel()
        topo_map = basis_map(range(30), dim=32)
        b = init_belief(30)
        for _ in range(2000):
            if rng.random() < 0.5:
                b = predict(b, kernel)
            else:
                values = rng.normal(size=32)
                like = measurement_likelihood(Descriptor(values), topo_map)
                b = update(b, like)
            assert_valid(b)
