"""Substitute predicates and the contrast family of variance estimators."""

from __future__ import annotations

import math

import numpy as np
import pytest

from designvar import (
    AssignmentVector,
    AssumptionError,
    ObservedData,
    PotentialOutcomes,
    ValidationError,
    build_crd,
    build_matched_pair,
    estimator_expectation,
    full_substitute_map,
    full_substitute_set,
    is_substitute,
    mse_sub_epsem,
    neyman_variance,
    reveal,
    substitution_mode,
    true_mse_hajek,
    true_variance,
    v_pair,
    v_sub,
)
from designvar.core import as_value

from conftest import random_table


def _av(bits: str) -> AssignmentVector:
    return AssignmentVector.from_string(bits)


class TestIsSubstitute:
    def test_half_swap_is_substitute(self):
        assert is_substitute(_av("1100"), _av("1001"), "equal-size")

    def test_complement_is_not(self):
        assert not is_substitute(_av("1100"), _av("0011"), "equal-size")

    def test_epsem_overlap_counting(self):
        # N=18, N_t=6, overlap k=2: a substitute treats 2 of the anchor's 6
        # treated units and 4 of its 12 controls.
        w = _av("1" * 6 + "0" * 12)
        cand = _av("110000" + "111100000000")
        assert is_substitute(w, cand, "epsem")
        off_count = _av("100000" + "111110000000")
        assert not is_substitute(w, off_count, "epsem")

    def test_equal_size_divisibility_enforced(self):
        with pytest.raises(AssumptionError, match="substitution undefined"):
            is_substitute(_av("110100"), _av("011010"), "equal-size")

    def test_epsem_integrality_enforced(self):
        # N=8, N_t=2 gives k = 4/8, not an integer.
        with pytest.raises(AssumptionError, match="substitution undefined"):
            is_substitute(_av("11000000"), _av("00110000"), "epsem")


class TestFullSubstituteSet:
    def test_crossed_pairs_anchor(self, crossed_pairs):
        sub = full_substitute_set(crossed_pairs, _av("1100"))
        members = sorted(m.to_string() for m in sub.members)
        assert members == ["0110", "1001"]
        assert sub.is_label_closed

    def test_crd_4_2_counts(self, crd42):
        for w, _ in crd42.enumerate_support():
            assert len(full_substitute_set(crd42, w)) == 4

    def test_crd_8_4_counts(self):
        d = build_crd(8, 4)
        w = _av("11110000")
        assert len(full_substitute_set(d, w)) == 36

    def test_crd_16_4_epsem_counts(self):
        d = build_crd(16, 4)
        assert substitution_mode(d) == "epsem"
        w = _av("1111" + "0" * 12)
        # k = 1: choose 1 of 4 treated and 3 of 12 controls.
        assert len(full_substitute_set(d, w)) == 4 * math.comb(12, 3)

    def test_anchor_not_in_support(self, crossed_pairs):
        with pytest.raises(ValidationError, match="support"):
            full_substitute_set(crossed_pairs, _av("1010"))

    def test_membership_symmetry(self, crossed_pairs):
        for w, _ in crossed_pairs.enumerate_support():
            for member in full_substitute_set(crossed_pairs, w):
                assert w in full_substitute_set(crossed_pairs, member)

    def test_cap_enforced(self):
        d = build_crd(16, 4)
        with pytest.raises(AssumptionError, match="cap"):
            full_substitute_set(d, _av("1111" + "0" * 12), cap=10)


class TestSubstitutionMode:
    def test_equal_size_designs(self, crossed_pairs):
        assert substitution_mode(crossed_pairs) == "equal-size"
        assert substitution_mode(build_crd(8, 4)) == "equal-size"

    def test_epsem_fallback(self):
        assert substitution_mode(build_crd(16, 4)) == "epsem"

    def test_non_integral_overlap_errors(self):
        with pytest.raises(AssumptionError, match="substitution undefined"):
            substitution_mode(build_crd(8, 2))


class TestVSub:
    def test_crossed_pairs_hand_value(self, crossed_pairs):
        obs = ObservedData(_av("1001"), np.array([3.0, 2.0, 3.0, 6.0]))
        assert as_value(v_sub(crossed_pairs, obs)) == pytest.approx(4.0, rel=1e-12)

    def test_constant_outcomes_give_zero(self, crossed_pairs):
        obs = ObservedData(_av("1100"), np.full(4, 9.0))
        assert as_value(v_sub(crossed_pairs, obs)) == pytest.approx(0.0, abs=1e-12)

    def test_equals_two_sample_on_crd(self):
        d = build_crd(8, 4)
        rng = np.random.default_rng(0)
        po = random_table(rng, 8)
        for w, _ in d.enumerate_support():
            obs = reveal(po, w)
            assert as_value(v_sub(d, obs)) == pytest.approx(
                as_value(neyman_variance(obs)), rel=1e-10
            )
            break  # spot check one vector here; the acceptance suite sweeps all

    def test_nonnegative(self, crossed_pairs):
        rng = np.random.default_rng(1)
        for _ in range(20):
            po = random_table(rng, 4)
            for w, _ in crossed_pairs.enumerate_support():
                assert as_value(v_sub(crossed_pairs, reveal(po, w))) >= 0.0

    def test_string_keyed_substitute_map(self, crossed_pairs):
        g = {
            "1100": ["1001", "0110"],
            "0011": ["1001", "0110"],
            "1001": ["1100", "0011"],
            "0110": ["1100", "0011"],
        }
        obs = ObservedData(_av("1001"), np.array([3.0, 2.0, 3.0, 6.0]))
        assert as_value(v_sub(crossed_pairs, obs, g)) == pytest.approx(4.0, rel=1e-12)

    def test_missing_anchor_in_custom_map(self, crossed_pairs):
        g = {"1100": ["1001"], "0011": ["1001"], "1001": ["1100"]}
        obs = ObservedData(_av("1001"), np.array([3.0, 2.0, 3.0, 6.0]))
        with pytest.raises(ValidationError, match="0110"):
            v_sub(crossed_pairs, obs, g)

    def test_non_substitute_member_rejected(self, crossed_pairs):
        g = {
            "1100": ["0011"],  # complement, not a substitute
            "0011": ["1001"],
            "1001": ["1100"],
            "0110": ["1100"],
        }
        obs = ObservedData(_av("1100"), np.array([1.0, 2.0, 3.0, 4.0]))
        with pytest.raises(ValidationError):
            v_sub(crossed_pairs, obs, g)

    def test_realized_assignment_must_be_supported(self, crossed_pairs):
        obs = ObservedData(_av("1010"), np.array([1.0, 2.0, 3.0, 4.0]))
        with pytest.raises(ValidationError):
            v_sub(crossed_pairs, obs)

    def test_conservative_with_homogeneous_sharpness(self, crossed_pairs):
        rng = np.random.default_rng(2)
        est = lambda obs: as_value(v_sub(crossed_pairs, obs))
        for _ in range(20):
            po = random_table(rng, 4)
            gap = estimator_expectation(crossed_pairs, po, est) - true_variance(
                crossed_pairs, po
            )
            assert gap >= -1e-10
        po = random_table(rng, 4, homogeneous=True)
        gap = estimator_expectation(crossed_pairs, po, est) - true_variance(
            crossed_pairs, po
        )
        assert abs(gap) <= 1e-10 * max(1.0, true_variance(crossed_pairs, po))


class TestVPair:
    def test_equal_differences_give_zero(self):
        obs = ObservedData(
            _av("1100"),
            np.array([1.0, 2.0, 3.0, 4.0]),
            pair_labels=((0, 2), (1, 3)),
        )
        assert as_value(v_pair(obs)) == pytest.approx(0.0, abs=1e-12)

    def test_matches_substitute_estimator_on_pairs(self):
        pairs = [(0, 4), (1, 5), (2, 6), (3, 7)]
        d = build_matched_pair(pairs)
        rng = np.random.default_rng(3)
        po = random_table(rng, 8)
        for w, _ in d.enumerate_support():
            obs = reveal(po, w, pair_labels=tuple(pairs))
            assert as_value(v_pair(obs)) == pytest.approx(
                as_value(v_sub(d, obs)), rel=1e-10
            )

    def test_missing_labels_rejected(self):
        obs = ObservedData(_av("1100"), np.array([1.0, 2.0, 3.0, 4.0]))
        with pytest.raises(ValidationError, match="pair labels"):
            v_pair(obs)

    def test_two_treated_in_one_pair_rejected(self):
        obs = ObservedData(
            _av("1100"),
            np.array([1.0, 2.0, 3.0, 4.0]),
            pair_labels=((0, 1), (2, 3)),
        )
        with pytest.raises(ValidationError):
            v_pair(obs)

    def test_needs_at_least_two_pairs(self):
        obs = ObservedData(
            _av("10"), np.array([1.0, 2.0]), pair_labels=((0, 1),)
        )
        with pytest.raises(AssumptionError, match="at least 4"):
            v_pair(obs)


class TestMseSubEpsem:
    def test_unbiased_under_homogeneity(self):
        d = build_crd(16, 4)
        rng = np.random.default_rng(4)
        po = random_table(rng, 16, homogeneous=True)
        est = lambda obs: as_value(mse_sub_epsem(d, obs))
        assert estimator_expectation(d, po, est) == pytest.approx(
            true_mse_hajek(d, po), rel=1e-9
        )

    def test_conservative_on_equal_group_closed_design(self, crossed_pairs):
        rng = np.random.default_rng(5)
        est = lambda obs: as_value(mse_sub_epsem(crossed_pairs, obs))
        for _ in range(20):
            po = random_table(rng, 4)
            gap = estimator_expectation(crossed_pairs, po, est) - true_mse_hajek(
                crossed_pairs, po
            )
            assert gap >= -1e-10

    def test_constant_outcomes_give_zero(self):
        d = build_crd(16, 4)
        w = _av("1111" + "0" * 12)
        obs = ObservedData(w, np.full(16, 3.0))
        assert as_value(mse_sub_epsem(d, obs)) == pytest.approx(0.0, abs=1e-12)

    def test_non_integral_overlap_rejected(self):
        d = build_crd(8, 2)
        obs = ObservedData(_av("11000000"), np.arange(8.0))
        with pytest.raises(AssumptionError, match="substitution undefined"):
            mse_sub_epsem(d, obs)


def test_full_substitute_map_covers_support():
    d = build_crd(4, 2)
    mapping = full_substitute_map(d)
    assert len(mapping) == d.support_size
    for anchor, sub in mapping.items():
        assert anchor in d.support
        assert all(is_substitute(anchor, m, "equal-size") for m in sub.members)
