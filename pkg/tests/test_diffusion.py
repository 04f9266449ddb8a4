import math

import numpy as np
import numpy.testing as npt
import pytest

from kinegraph import diffusion
from kinegraph.diffusion import DiffusionConfig
from kinegraph.errors import (
    DimensionMismatch,
    DomainError,
    NotSymmetric,
    SpectrumOutOfRange,
)

TANH1 = math.tanh(1.0)


def rand_sym(v, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(v, v)) * scale
    return 0.5 * (a + a.T)


def normalized_sym(v, seed):
    """Symmetric nonnegative matrix, degree-normalized: spectrum in [-1, 1]."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(v, v))
    a = 0.5 * (a + a.T) + np.eye(v)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return (a * d[:, None]) * d[None, :]


class TestGcBaseline:
    def test_identity_partition_alpha_scaling(self):
        rng = np.random.default_rng(0)
        feats = rng.normal(size=(4, 3))
        w = rng.normal(size=(3, 2))
        out = diffusion.gc_baseline(feats, [np.eye(4)], [w], alpha=0.001)
        npt.assert_allclose(out, feats @ w / 1.001, atol=1e-12)

    def test_identity_everything(self):
        feats = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = diffusion.gc_baseline(feats, [np.eye(2)], [np.eye(2)], alpha=0.0)
        npt.assert_allclose(out, feats, atol=1e-12)

    def test_isolated_nodes_independent(self):
        rng = np.random.default_rng(1)
        feats = rng.normal(size=(2, 3))
        w = rng.normal(size=(3, 3))
        adj = np.eye(2)
        out = diffusion.gc_baseline(feats, [adj], [w], alpha=0.0)
        # change node 1's features: node 0 output unchanged
        feats2 = feats.copy()
        feats2[1] += 5.0
        out2 = diffusion.gc_baseline(feats2, [adj], [w], alpha=0.0)
        npt.assert_allclose(out[0], out2[0], atol=1e-12)
        assert not np.allclose(out[1], out2[1])

    def test_three_partition_sum(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(3, 2))
        parts = [np.eye(3), rand_sym(3, 5) ** 2, rand_sym(3, 6) ** 2]
        ws = [rng.normal(size=(2, 2)) for _ in range(3)]
        total = diffusion.gc_baseline(feats, parts, ws)
        acc = sum(diffusion.gc_baseline(feats, [p], [w]) for p, w in zip(parts, ws))
        npt.assert_allclose(total, acc, atol=1e-12)


class TestOneHopAttention:
    def params(self, v, c, r, topo=None, gamma=1.0, wq=None, wk=None, w3=None):
        return diffusion.AttentionParams(
            shared_topology=np.zeros((v, v)) if topo is None else topo,
            gamma=gamma,
            w_query=np.ones((c, r)) if wq is None else wq,
            w_key=np.ones((c, r)) if wk is None else wk,
            w_reduce=np.ones(r) if w3 is None else w3,
        )

    def test_identical_features_zero_refinement(self):
        feats = np.ones((3, 2))
        topo = rand_sym(3, 7)
        stack = diffusion.one_hop_attention(feats, self.params(3, 2, 2, topo=topo))
        npt.assert_allclose(stack.a_tilde, 0.0, atol=1e-15)
        npt.assert_allclose(stack.a_bar, topo, atol=1e-15)

    def test_gamma_zero_keeps_shared(self):
        rng = np.random.default_rng(8)
        feats = rng.normal(size=(4, 3))
        topo = rand_sym(4, 9)
        p = self.params(4, 3, 2, topo=topo, gamma=0.0,
                        wq=rng.normal(size=(3, 2)), wk=rng.normal(size=(3, 2)))
        stack = diffusion.one_hop_attention(feats, p)
        npt.assert_allclose(stack.a_bar, topo, atol=1e-15)

    def test_hand_two_node_example(self):
        feats = np.array([[0.0], [1.0]])
        p = self.params(2, 1, 1)
        stack = diffusion.one_hop_attention(feats, p)
        npt.assert_allclose(stack.a_tilde[0], [[0.0, -TANH1], [TANH1, 0.0]], atol=1e-12)
        npt.assert_allclose(stack.a_bar, [[0.0, -TANH1], [TANH1, 0.0]], atol=1e-12)


class TestMultiHopExact:
    def test_identity_partial_sum(self):
        out = diffusion.multi_hop_exact(np.eye(3), DiffusionConfig(beta=0.5, hops=2))
        npt.assert_allclose(out, 0.875 * np.eye(3), atol=1e-15)

    def test_zero_hops(self):
        a = rand_sym(4, 10)
        out = diffusion.multi_hop_exact(a, DiffusionConfig(beta=0.3, hops=0))
        npt.assert_allclose(out, 0.3 * np.eye(4), atol=1e-15)

    def test_swap_matrix_by_hand(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = diffusion.multi_hop_exact(a, DiffusionConfig(beta=0.5, hops=2))
        npt.assert_allclose(out, [[0.625, 0.25], [0.25, 0.625]], atol=1e-15)

    def test_one_hop_closed_form(self):
        # k=1 reduces exactly to b I + b(1-b) A
        a = rand_sym(5, 11)
        beta = 0.37
        out = diffusion.multi_hop_exact(a, DiffusionConfig(beta=beta, hops=1))
        npt.assert_array_equal(out, beta * np.eye(5) + beta * (1 - beta) * a)

    def test_weights(self):
        cfg = DiffusionConfig(beta=0.5, hops=3)
        npt.assert_allclose(cfg.weights(), [0.5, 0.25, 0.125, 0.0625])


class TestDiffuseIterative:
    def test_identity_matrix_collapses(self):
        rng = np.random.default_rng(12)
        feats = rng.normal(size=(4, 3))
        cfg = DiffusionConfig(beta=0.4, mode="iterative", iterations=25)
        out = diffusion.diffuse_iterative(np.eye(4), feats, cfg)
        npt.assert_allclose(out, feats, atol=1e-12)

    def test_zero_iterations(self):
        rng = np.random.default_rng(13)
        feats = rng.normal(size=(3, 2))
        cfg = DiffusionConfig(beta=0.5, mode="iterative", iterations=0)
        npt.assert_array_equal(diffusion.diffuse_iterative(rand_sym(3, 1), feats, cfg), feats)

    def test_swap_one_step(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        cfg = DiffusionConfig(beta=0.5, mode="iterative", iterations=1)
        out = diffusion.diffuse_iterative(a, np.array([1.0, 0.0]), cfg)
        npt.assert_allclose(out, [0.5, 0.5], atol=1e-15)

    def test_closed_form_recursion(self):
        # E^K = ((1-b)^K A^K + b sum_{i<K} (1-b)^i A^i) F
        a = normalized_sym(6, 14)
        rng = np.random.default_rng(15)
        feats = rng.normal(size=(6, 2))
        beta, big_k = 0.5, 7
        cfg = DiffusionConfig(beta=beta, mode="iterative", iterations=big_k)
        out = diffusion.diffuse_iterative(a, feats, cfg)
        expect = (1 - beta) ** big_k * np.linalg.matrix_power(a, big_k) @ feats
        for i in range(big_k):
            expect += beta * (1 - beta) ** i * np.linalg.matrix_power(a, i) @ feats
        npt.assert_allclose(out, expect, atol=1e-12)


class TestAggregate:
    def test_identity_nonnegative(self):
        feats = np.abs(np.random.default_rng(16).normal(size=(3, 2)))
        out = diffusion.aggregate(np.eye(3), feats, np.eye(2))
        npt.assert_allclose(out, feats, atol=1e-15)

    def test_relu_clamps(self):
        feats = np.array([[-1.0, 2.0]])
        out = diffusion.aggregate(np.eye(1), feats, np.eye(2))
        npt.assert_array_equal(out, [[0.0, 2.0]])

    def test_hand_average(self):
        a = np.full((2, 2), 0.5)
        out = diffusion.aggregate(a, np.array([2.0, 0.0]), np.array([[1.0]]))
        npt.assert_allclose(out, [[1.0], [1.0]])


class TestSymmetricEigen:
    def test_diagonal(self):
        w, u = diffusion.symmetric_eigen(np.diag([3.0, 1.0, 2.0]))
        npt.assert_allclose(w, [1.0, 2.0, 3.0], atol=1e-14)
        npt.assert_allclose(np.abs(u), np.eye(3)[:, [1, 2, 0]], atol=1e-14)

    def test_swap_eigenvalues(self):
        w, _ = diffusion.symmetric_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]))
        npt.assert_allclose(w, [-1.0, 1.0], atol=1e-14)

    def test_reconstruction_v25(self):
        m = rand_sym(25, 17)
        w, u = diffusion.symmetric_eigen(m)
        npt.assert_allclose(u @ np.diag(w) @ u.T, m, atol=1e-10)
        npt.assert_allclose(u.T @ u, np.eye(25), atol=1e-10)
        assert np.all(np.diff(w) >= -1e-14)

    def test_matches_numpy(self):
        for seed in range(5):
            m = rand_sym(10, 100 + seed)
            w, _ = diffusion.symmetric_eigen(m)
            npt.assert_allclose(w, np.linalg.eigvalsh(m), atol=1e-11)

    def test_not_symmetric(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(NotSymmetric):
            diffusion.symmetric_eigen(m)


class TestEigenRelation:
    def test_fixed_points(self):
        beta = 0.5
        # eigenvalues 1, 0, -1 -> map to 1, beta, beta/(2-beta)
        m = np.diag([1.0, 0.0, -1.0])
        report = diffusion.verify_eigen_relation(m, beta, k_trunc=120)
        assert report["max_eig_residual"] <= 1e-9
        mu = sorted(report["multi_hop_eigenvalues"])
        npt.assert_allclose(mu, sorted([1.0, 0.5, 0.5 / 1.5]), atol=1e-9)

    def test_truncation_bound_documented(self):
        m = normalized_sym(8, 18)
        report = diffusion.verify_eigen_relation(m, 0.5, k_trunc=30)
        assert report["residual_bound"] == pytest.approx(0.5 ** 31)
        assert report["max_eig_residual"] <= report["residual_bound"] + 1e-10

    def test_spectrum_out_of_range(self):
        with pytest.raises(SpectrumOutOfRange):
            diffusion.verify_eigen_relation(np.diag([2.0, 0.0]), 0.5, 10)

    def test_eigenvector_sharing(self):
        a = normalized_sym(7, 19)
        _, u1 = diffusion.symmetric_eigen(a)
        multi = diffusion.multi_hop_exact(a, DiffusionConfig(beta=0.5, hops=60))
        _, u2 = diffusion.symmetric_eigen(multi)
        # map is increasing, so sorted order aligns columns; compare up to sign
        dots = np.abs((u1 * u2).sum(axis=0))
        npt.assert_allclose(dots, 1.0, atol=1e-8)


class TestLaplacianRatio:
    def test_hand_values(self):
        assert diffusion.laplacian_ratio(1.0, 0.5).ratio == pytest.approx(0.5, abs=1e-12)
        assert diffusion.laplacian_ratio(2.0, 0.5).ratio == pytest.approx(1 / 3, abs=1e-12)

    def test_zero_limit_flag(self):
        out = diffusion.laplacian_ratio(0.0, 0.5)
        assert out.limit_used
        assert out.ratio == pytest.approx(1.0, abs=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            diffusion.laplacian_ratio(2.5, 0.5)
        with pytest.raises(DomainError):
            diffusion.laplacian_ratio(1.0, 1.5)

    def test_damping_below_one(self):
        for lam in np.arange(0.1, 2.01, 0.1):
            for beta in np.arange(0.1, 0.91, 0.1):
                r = diffusion.laplacian_ratio(float(lam), float(beta)).ratio
                if beta / (1 - beta) + lam > 1:
                    assert r < 1

    def test_small_beta_separates_frequencies_more(self):
        # relative damping of high vs low frequencies is stronger at small beta
        def spread(beta):
            return (diffusion.laplacian_ratio(2.0, beta).ratio
                    / diffusion.laplacian_ratio(0.1, beta).ratio)

        assert spread(0.1) < spread(0.9)


class TestDegreeStats:
    def test_row_stochastic(self):
        rng = np.random.default_rng(20)
        a = rng.uniform(size=(4, 4))
        a /= a.sum(axis=1, keepdims=True)
        report = diffusion.degree_stats(a)
        npt.assert_allclose(report["degrees"], np.ones(4), atol=1e-12)

    def test_identity(self):
        report = diffusion.degree_stats(np.eye(3))
        npt.assert_allclose(report["degrees"], [1.0, 1.0, 1.0])
        assert not report["normalization_skipped"]

    def test_hand_sums(self):
        report = diffusion.degree_stats(np.full((2, 2), 0.1))
        npt.assert_allclose(report["degrees"], [0.2, 0.2], atol=1e-15)

    def test_zero_degree_skips_normalization(self):
        report = diffusion.degree_stats(np.zeros((2, 2)))
        assert report["normalization_skipped"]


class TestProperties:
    def test_partial_sum_identity(self):
        for beta in (0.1, 0.5, 0.9):
            for k in range(65):
                w = DiffusionConfig(beta=beta, hops=k).weights()
                total = 0.0
                for x in w:
                    total += x
                assert abs(total - (1 - (1 - beta) ** (k + 1))) <= 1e-12
                assert np.all(np.diff(w) < 0) or k == 0

    def test_proposition_convergence_decay(self):
        # the K-step iterate approximates the k=K truncated power sum with
        # residual (1-b)^(K+1) A^K F, shrinking by ~(1-b) per added iteration
        a = normalized_sym(25, 21)
        rng = np.random.default_rng(22)
        feats = rng.normal(size=(25, 4))
        beta = 0.5
        errs = []
        for big_k in range(1, 21):
            cfg = DiffusionConfig(beta=beta, mode="iterative", iterations=big_k)
            out = diffusion.diffuse_iterative(a, feats, cfg)
            target = diffusion.multi_hop_exact(a, DiffusionConfig(beta=beta, hops=big_k)) @ feats
            errs.append(np.max(np.abs(out - target)))
        assert errs[-1] <= 1e-5
        ratios = [errs[i + 1] / errs[i] for i in range(len(errs) - 1) if errs[i] > 0]
        assert max(ratios) <= 0.55

    def test_iterate_approaches_infinite_sum(self):
        # against a deep truncation the whole-gap error also decays geometrically
        a = normalized_sym(25, 23)
        rng = np.random.default_rng(24)
        feats = rng.normal(size=(25, 4))
        beta = 0.5
        target = diffusion.multi_hop_exact(a, DiffusionConfig(beta=beta, hops=200)) @ feats
        prev = None
        for big_k in (5, 10, 20):
            cfg = DiffusionConfig(beta=beta, mode="iterative", iterations=big_k)
            err = np.max(np.abs(diffusion.diffuse_iterative(a, feats, cfg) - target))
            if prev is not None:
                assert err < prev
            prev = err
        assert prev <= 1e-5

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            diffusion.diffuse_iterative(np.eye(3), np.ones((4, 2)),
                                        DiffusionConfig(mode="iterative", iterations=1))
