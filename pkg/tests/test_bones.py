import math
import time

import numpy as np
import numpy.testing as npt
import pytest

from kinegraph import bones, skeleton
from kinegraph.errors import (
    DimensionMismatch,
    EmptySampleSet,
    InconsistentJointCount,
    SameJoint,
    TooLarge,
)
from kinegraph.priors import GprGraph


def scores_from(matrix) -> bones.CandidateScores:
    return bones.CandidateScores(score=np.asarray(matrix, dtype=float))


def sym(v, entries):
    m = np.zeros((v, v))
    for (i, j), val in entries.items():
        m[i, j] = m[j, i] = val
    return m


class TestBoneStd:
    def test_constant_bone_zero(self):
        seq = skeleton.SkeletonSequence(data=np.ones((5, 3, 3)))
        assert bones.bone_std(seq, 0, 1) == 0.0

    def test_ramp_by_hand(self):
        # x-difference [0,1,2,3]: population std sqrt(1.25), averaged over 3 coords
        data = np.zeros((4, 2, 3))
        data[:, 1, 0] = [0.0, 1.0, 2.0, 3.0]
        seq = skeleton.SkeletonSequence(data=data)
        npt.assert_allclose(bones.bone_std(seq, 0, 1), math.sqrt(1.25) / 3.0, atol=1e-12)

    def test_single_frame_zero(self):
        rng = np.random.default_rng(0)
        seq = skeleton.SkeletonSequence(data=rng.normal(size=(1, 4, 3)))
        assert bones.bone_std(seq, 1, 3) == 0.0

    def test_same_joint_rejected(self):
        seq = skeleton.SkeletonSequence(data=np.ones((2, 3, 3)))
        with pytest.raises(SameJoint):
            bones.bone_std(seq, 2, 2)

    def test_pair_matrix_matches_pairwise_calls(self):
        rng = np.random.default_rng(1)
        seq = skeleton.SkeletonSequence(data=rng.normal(size=(6, 5, 3)))
        mat = bones.pair_std_matrix(seq)
        for i in range(5):
            for j in range(5):
                if i != j:
                    npt.assert_allclose(mat[i, j], bones.bone_std(seq, i, j), atol=1e-12)


class TestDatasetScores:
    def test_single_sample_equals_bone_std(self):
        rng = np.random.default_rng(2)
        seq = skeleton.SkeletonSequence(data=rng.normal(size=(6, 4, 3)))
        sc = bones.dataset_scores([seq])
        npt.assert_allclose(sc.score[0, 2], bones.bone_std(seq, 0, 2), atol=1e-12)

    def test_two_sample_mean(self):
        a = np.zeros((4, 2, 3))
        a[:, 1, 0] = [0, 0.2, 0.4, 0.6]  # std 0.2236/3 pattern
        b = np.zeros((4, 2, 3))
        b[:, 1, 0] = [0, 0.4, 0.8, 1.2]
        s1 = bones.dataset_scores([skeleton.SkeletonSequence(data=a)]).score[0, 1]
        s2 = bones.dataset_scores([skeleton.SkeletonSequence(data=b)]).score[0, 1]
        both = bones.dataset_scores([
            skeleton.SkeletonSequence(data=a), skeleton.SkeletonSequence(data=b)
        ]).score[0, 1]
        npt.assert_allclose(both, (s1 + s2) / 2.0, atol=1e-12)

    def test_uniform_gpr_weights_are_one(self):
        rng = np.random.default_rng(3)
        seq = skeleton.SkeletonSequence(data=rng.normal(size=(6, 4, 3)))
        plain = bones.dataset_scores([seq])
        uniform = GprGraph(dist=np.ones((4, 4)) - np.eye(4))
        weighted = bones.dataset_scores([seq], uniform)
        off = ~np.eye(4, dtype=bool)
        npt.assert_allclose(weighted.score[off], plain.score[off], atol=1e-12)

    def test_gpr_scales_by_normalized_distance(self):
        rng = np.random.default_rng(4)
        seq = skeleton.SkeletonSequence(data=rng.normal(size=(6, 3, 3)))
        dist = sym(3, {(0, 1): 1.0, (0, 2): 2.0, (1, 2): 4.0})
        weighted = bones.dataset_scores([seq], GprGraph(dist=dist))
        plain = bones.dataset_scores([seq])
        npt.assert_allclose(weighted.score[0, 1], plain.score[0, 1] * 0.25, atol=1e-12)

    def test_empty_and_inconsistent(self):
        with pytest.raises(EmptySampleSet):
            bones.dataset_scores([])
        a = skeleton.SkeletonSequence(data=np.ones((2, 3, 3)))
        b = skeleton.SkeletonSequence(data=np.ones((2, 4, 3)))
        with pytest.raises(InconsistentJointCount):
            bones.dataset_scores([a, b])


class TestSelection:
    def test_three_joint_example(self):
        sc = scores_from(sym(3, {(0, 1): 1.0, (0, 2): 2.0, (1, 2): 0.5}))
        out = bones.select_min_assignment(sc, base=0)
        assert out.pairs() == [(0, 1), (1, 2)]
        npt.assert_allclose(bones.selection_cost(sc, out), 1.5)

    def test_two_joint_forced(self):
        sc = scores_from(sym(2, {(0, 1): 3.3}))
        out = bones.select_min_assignment(sc, base=0)
        assert out.pairs() == [(0, 1)]

    def test_all_equal_lexicographic_tie_break(self):
        sc = scores_from(np.ones((4, 4)) - np.eye(4))
        out = bones.select_min_assignment(sc, base=0)
        assert out.pairs() == [(0, 1), (0, 2), (0, 3)]
        oracle = bones.brute_force_select(sc, base=0)
        assert oracle.pairs() == out.pairs()

    def test_brute_force_three_joint(self):
        sc = scores_from(sym(3, {(0, 1): 1.0, (0, 2): 2.0, (1, 2): 0.5}))
        out = bones.brute_force_select(sc, base=0)
        npt.assert_allclose(bones.selection_cost(sc, out), 1.5)

    def test_brute_force_guard(self):
        sc = scores_from(np.zeros((8, 8)))
        with pytest.raises(TooLarge):
            bones.brute_force_select(sc, base=0)

    def test_bad_base(self):
        sc = scores_from(np.zeros((3, 3)))
        with pytest.raises(DimensionMismatch):
            bones.select_min_assignment(sc, base=5)

    def test_oracle_equivalence_100_seeds(self):
        t0 = time.perf_counter()
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            raw = rng.uniform(size=(5, 5))
            sc = scores_from(np.triu(raw, 1) + np.triu(raw, 1).T)
            fast = bones.select_min_assignment(sc, base=0)
            slow = bones.brute_force_select(sc, base=0)
            assert bones.selection_cost(sc, fast) == bones.selection_cost(sc, slow)
            assert fast.pairs() == slow.pairs()
            fast.validate()
        assert time.perf_counter() - t0 < 1.0

    def test_nonzero_base(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            raw = rng.uniform(size=(5, 5))
            sc = scores_from(np.triu(raw, 1) + np.triu(raw, 1).T)
            fast = bones.select_min_assignment(sc, base=2)
            slow = bones.brute_force_select(sc, base=2)
            assert fast.pairs() == slow.pairs()
            assert fast.mat.sum(axis=0)[2] == 0

    def test_positive_scaling_preserves_argmin(self):
        rng = np.random.default_rng(77)
        raw = rng.uniform(size=(5, 5))
        sc = scores_from(np.triu(raw, 1) + np.triu(raw, 1).T)
        scaled = scores_from(sc.score * 12.5)
        assert (bones.select_min_assignment(sc, 0).pairs()
                == bones.select_min_assignment(scaled, 0).pairs())


class TestBoneMatrix:
    def test_invariants_enforced(self):
        with pytest.raises(DimensionMismatch):
            # joint 2 has no incoming bone
            bones.BoneMatrix.from_pairs([(0, 1)], base=0, joints=3)
        with pytest.raises(DimensionMismatch):
            # pair {0,1} used twice (both directions)
            m = np.zeros((3, 3), dtype=np.int8)
            m[0, 1] = m[1, 0] = 1
            m[0, 2] = 1
            bones.BoneMatrix(mat=m, base=0)
        with pytest.raises(DimensionMismatch):
            # base must have empty column
            bones.BoneMatrix.from_pairs([(1, 0), (0, 1), (0, 2)], base=0, joints=3)

    def test_round_trip_dict(self):
        b = bones.BoneMatrix.from_pairs([(0, 1), (1, 2)], base=0, joints=3)
        again = bones.BoneMatrix.from_dict(b.to_dict(), joints=3)
        npt.assert_array_equal(b.mat, again.mat)

    def test_physical_25(self):
        b = bones.physical_bones(25)
        assert b.joints == 25
        assert len(b.pairs()) == 24
        b.validate()
