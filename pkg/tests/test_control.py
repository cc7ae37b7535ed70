import math

import numpy as np
import pytest

from trafficgrad.control import (
    ActionError,
    adjust_durations,
    base_weighted_ratios,
    durations_from_multipliers,
    durations_from_raw,
    layout_from_scenario,
    normalize_by_group,
    phase_adjustment_matrix,
    softmax_by_group,
)


@pytest.fixture(scope="module")
def lay_a(network_a):
    return layout_from_scenario(network_a)


@pytest.fixture(scope="module")
def lay_b(network_b):
    return layout_from_scenario(network_b)


class TestSoftmaxByGroup:
    def test_symmetric_group(self, lay_a):
        assert np.array_equal(softmax_by_group(np.zeros(2), lay_a), [0.5, 0.5])

    def test_known_ratio(self, lay_a):
        x = np.array([math.log(1.0), math.log(3.0)])
        assert np.allclose(softmax_by_group(x, lay_a), [0.25, 0.75], atol=1e-12)

    def test_huge_inputs_no_overflow(self, lay_a):
        out = softmax_by_group(np.array([1000.0, 1000.0]), lay_a)
        assert np.array_equal(out, [0.5, 0.5])

    def test_per_group_normalization(self, lay_b):
        rng = np.random.default_rng(0)
        s = softmax_by_group(rng.normal(size=lay_b.n_phases), lay_b)
        assert np.all((s > 0) & (s < 1))
        sums = np.add.reduceat(s, lay_b.group_start[:-1])
        assert np.allclose(sums, 1.0, atol=1e-12)

    def test_nonfinite_raises(self, lay_a):
        with pytest.raises(ActionError):
            softmax_by_group(np.array([np.nan, 0.0]), lay_a)
        with pytest.raises(ActionError):
            softmax_by_group(np.array([np.inf, 0.0]), lay_a)

    def test_wrong_shape_raises(self, lay_a):
        with pytest.raises(ActionError):
            softmax_by_group(np.zeros(3), lay_a)


class TestAdjustDurations:
    def test_network_a_uniform_ratios(self, lay_a):
        # floors (3, 14), budget 68: 3 + 34 = 37, 14 + 34 = 48
        assert np.array_equal(adjust_durations(np.array([0.5, 0.5]), lay_a), [37.0, 48.0])

    def test_fixed_point_reproduces_base_plan(self, lay_a):
        ratios = np.array([15.0 / 85.0, 70.0 / 85.0])
        assert np.allclose(adjust_durations(ratios, lay_a), [15.0, 70.0], atol=1e-12)

    def test_limit_case_all_budget_to_one_phase(self, lay_a):
        out = adjust_durations(np.array([1.0, 0.0]), lay_a)
        assert np.allclose(out, [3.0 + 68.0, 14.0], atol=1e-12)


class TestPhaseAdjustmentMatrix:
    def test_network_a_single_block(self, lay_a):
        m = phase_adjustment_matrix(lay_a)
        assert m.shape == (2, 2)
        assert np.array_equal(m, np.ones((2, 2)))

    def test_network_b_block_sizes(self, lay_b):
        m = phase_adjustment_matrix(lay_b)
        sizes = m @ np.ones(lay_b.n_phases)
        expected = lay_b.group_sizes()[lay_b.group_of_phase]
        assert np.array_equal(sizes, expected)
        assert sorted(lay_b.group_sizes().tolist()) == [4, 5, 5, 5, 5, 6]

    def test_group_constant_vectors_stay_group_constant(self, lay_b):
        v = np.arange(lay_b.n_groups, dtype=float)[lay_b.group_of_phase]
        out = phase_adjustment_matrix(lay_b) @ v
        # within every group the result is constant
        for g in range(lay_b.n_groups):
            block = out[lay_b.group_start[g]:lay_b.group_start[g + 1]]
            assert np.all(block == block[0])


class TestFullTransform:
    def test_group_constant_raw_reproduces_base_plan(self, lay_a, lay_b):
        assert np.array_equal(durations_from_raw(np.zeros(2), lay_a), lay_a.base)
        out_b = durations_from_raw(np.full(lay_b.n_phases, 2.5), lay_b)
        assert np.allclose(out_b, lay_b.base, atol=1e-9)

    def test_unit_multipliers_reproduce_base_plan(self, lay_a):
        assert np.array_equal(durations_from_multipliers(np.ones(2), lay_a), lay_a.base)

    def test_cycle_preservation_random_sweep(self, lay_a, lay_b):
        rng = np.random.default_rng(123)
        for lay in (lay_a, lay_b):
            base_sums = np.add.reduceat(lay.base, lay.group_start[:-1])
            for _ in range(1000):
                d = durations_from_raw(rng.normal(scale=3.0, size=lay.n_phases), lay)
                sums = np.add.reduceat(d, lay.group_start[:-1])
                assert np.max(np.abs(sums - base_sums)) < 1e-9

    def test_floor_guarantee(self, lay_b):
        rng = np.random.default_rng(7)
        for _ in range(500):
            d = durations_from_raw(rng.normal(scale=5.0, size=lay_b.n_phases), lay_b)
            assert np.all(d >= 0.2 * lay_b.base - 1e-12)

    def test_group_shift_invariance(self, lay_b):
        rng = np.random.default_rng(5)
        raw = rng.normal(size=lay_b.n_phases)
        shift = np.array([10.0, -3.0, 0.5, 100.0, -50.0, 2.0])[lay_b.group_of_phase]
        assert np.allclose(durations_from_raw(raw, lay_b),
                           durations_from_raw(raw + shift, lay_b), atol=1e-9)

    def test_monotonicity(self, lay_b):
        rng = np.random.default_rng(11)
        raw = rng.normal(size=lay_b.n_phases)
        d0 = durations_from_raw(raw, lay_b)
        for i in (0, 7, 29):
            bumped = raw.copy()
            bumped[i] += 0.05
            d1 = durations_from_raw(bumped, lay_b)
            g = lay_b.group_of_phase[i]
            in_group = lay_b.group_of_phase == g
            assert d1[i] > d0[i]
            others = in_group.copy()
            others[i] = False
            assert np.all(d1[others] < d0[others])
            assert np.array_equal(d1[~in_group], d0[~in_group])


class TestNormalizeByGroup:
    def test_plain_normalization(self, lay_a):
        out = normalize_by_group(np.array([1.0, 3.0]), lay_a)
        assert np.allclose(out, [0.25, 0.75], atol=1e-15)

    def test_zero_group_falls_back_to_uniform(self, lay_a):
        assert np.array_equal(normalize_by_group(np.zeros(2), lay_a), [0.5, 0.5])

    def test_negative_raises(self, lay_a):
        with pytest.raises(ActionError):
            normalize_by_group(np.array([-1.0, 1.0]), lay_a)


class TestBaseWeightedRatios:
    def test_uniform_weights_give_base_proportions(self, lay_a):
        r = base_weighted_ratios(np.array([0.5, 0.5]), lay_a)
        assert np.allclose(r, [15.0 / 85.0, 70.0 / 85.0], atol=1e-15)

    def test_layout_arithmetic(self, lay_a):
        assert np.array_equal(lay_a.floor, [3.0, 14.0])
        assert np.array_equal(lay_a.budget, [68.0])
        # floors plus budget add back to the full phase time
        assert lay_a.floor.sum() + lay_a.budget.sum() == lay_a.base.sum()
