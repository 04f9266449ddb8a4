"""Acceptance suite: one test per release criterion, fixed tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one status line
per criterion.  The dataset-gated statistics run only when
``KINEGRAPH_NTU_DATA`` points at a directory of capture files.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from kinegraph import bones, diffusion, model, skeleton, training
from kinegraph.diffusion import DiffusionConfig
from kinegraph.errors import EmptyFile, JointCountMismatch, MalformedLine
from kinegraph.priors import GprGraph

DATA = Path(__file__).parent / "data"


def report(name: str, detail: str = ""):
    print(f"[PASS] {name}" + (f"  ({detail})" if detail else ""))


def normalized_sym(v, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(v, v))
    a = 0.5 * (a + a.T) + np.eye(v)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return (a * d[:, None]) * d[None, :]


def test_diffusion_convergence():
    """Iterative diffusion matches the truncated power sum, decaying geometrically."""
    t0 = time.perf_counter()
    worst_final = 0.0
    worst_ratio = 0.0
    for seed in range(50):
        a = normalized_sym(25, 1000 + seed)
        rng = np.random.default_rng(2000 + seed)
        feats = rng.normal(size=(25, 3))
        errs = []
        for big_k in range(1, 21):
            out = diffusion.diffuse_iterative(
                a, feats, DiffusionConfig(beta=0.5, mode="iterative", iterations=big_k))
            target = diffusion.multi_hop_exact(
                a, DiffusionConfig(beta=0.5, hops=big_k)) @ feats
            errs.append(float(np.max(np.abs(out - target))))
        assert errs[-1] <= 1e-5
        worst_final = max(worst_final, errs[-1])
        for i in range(len(errs) - 1):
            assert errs[i + 1] <= 0.55 * errs[i]
            worst_ratio = max(worst_ratio, errs[i + 1] / errs[i])
    elapsed = time.perf_counter() - t0
    assert elapsed < 2.0
    report("diffusion convergence",
           f"worst final {worst_final:.2e}, worst ratio {worst_ratio:.3f}, {elapsed:.2f}s")


def test_spectral_lemma():
    """Truncated multi-hop eigenvalues match b/(1-(1-b)x) to 1e-6."""
    worst = 0.0
    for seed in range(20):
        a = normalized_sym(25, 3000 + seed)
        rep = diffusion.verify_eigen_relation(a, beta=0.5, k_trunc=200)
        assert rep["max_eig_residual"] <= 1e-6
        worst = max(worst, rep["max_eig_residual"])
    report("spectral eigenvalue relation", f"worst residual {worst:.2e}")


def test_laplacian_ratio_grid():
    """Both computation routes of the damping ratio agree to 1e-9 on the grid."""
    worst = 0.0
    for lam in np.arange(0.1, 2.0001, 0.1):
        for beta in np.arange(0.1, 0.9001, 0.1):
            got = diffusion.laplacian_ratio(float(lam), float(beta))
            closed = 1.0 / (beta / (1.0 - beta) + lam)
            err = abs(got.ratio - closed)
            assert err <= 1e-9
            worst = max(worst, err)
    report("laplacian damping ratio grid", f"worst |diff| {worst:.2e}")


def test_hop_weight_identities():
    """Partial sums hit 1-(1-b)^(k+1) to 1e-12; weights strictly decrease."""
    worst = 0.0
    for beta in (0.1, 0.5, 0.9):
        for k in range(0, 65):
            w = DiffusionConfig(beta=beta, hops=k).weights()
            total = 0.0
            for x in w:
                total += x
            err = abs(total - (1.0 - (1.0 - beta) ** (k + 1)))
            assert err <= 1e-12
            worst = max(worst, err)
            assert np.all(w[1:] < w[:-1])
    report("hop weight identities", f"worst |diff| {worst:.2e}")


def test_bone_selection_oracle_equivalence():
    """Matching solver equals brute force exactly on 100 seeded V=5 instances."""
    t0 = time.perf_counter()
    for seed in range(100):
        rng = np.random.default_rng(5000 + seed)
        raw = np.triu(rng.uniform(size=(5, 5)), 1)
        sc = bones.CandidateScores(score=raw + raw.T)
        fast = bones.select_min_assignment(sc, base=0)
        slow = bones.brute_force_select(sc, base=0)
        assert bones.selection_cost(sc, fast) == bones.selection_cost(sc, slow)
        fast.validate()
        slow.validate()
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    report("bone selection oracle equivalence", f"{elapsed:.2f}s for 100 instances")


@pytest.mark.skipif("KINEGRAPH_NTU_DATA" not in os.environ,
                    reason="dataset-gated: set KINEGRAPH_NTU_DATA to run")
def test_dataset_gated_bone_statistics():
    """Physical/selected bone std sums and candidate mean match reported values."""
    root = Path(os.environ["KINEGRAPH_NTU_DATA"])
    files = sorted(root.glob("*.skeleton"))
    assert files, f"no .skeleton files under {root}"
    cfg = skeleton.PreprocessConfig(target_frames=64)
    samples = []
    for f in files:
        for seq in skeleton.parse_ntu_text(f.read_text()):
            if seq.joints == 25:
                samples.append(skeleton.preprocess(seq, cfg))
    scores = bones.dataset_scores(samples)
    iu = np.triu_indices(25, k=1)
    mean_std = float(scores.score[iu].mean())
    physical = bones.selection_cost(scores, bones.physical_bones(25))
    selected = bones.selection_cost(
        scores, bones.select_min_assignment(scores, base=0))
    assert abs(physical - 0.8265) <= 0.02
    assert abs(selected - 0.6977) <= 0.02
    assert abs(mean_std - 0.1073) <= 0.005
    report("dataset-gated bone statistics",
           f"physical {physical:.4f}, selected {selected:.4f}, mean {mean_std:.4f}")


def test_model_plumbing():
    """Parameter budget, output shapes, loss composition, aux isolation."""
    n = model.param_count(model.init_params(model.ModelConfig(), 0))
    assert 1_240_000 <= n <= 1_680_000

    for m in (5, 60, 120):
        cfg = model.ModelConfig(classes=m)
        params = model.init_params(cfg, 1)
        logits, theta = model.model_forward(np.zeros((2, 64, 25, 3)), params, cfg)
        assert logits.shape == (2, m)
        assert theta.shape == (2, 25, 256)

    rng = np.random.default_rng(7)
    for _ in range(100):
        p, a, lam = rng.uniform(0, 5, size=3)
        assert model.total_loss(p, a, lam).total == p + lam * a

    cfg = training.micro_config()
    params = model.init_params(cfg, 3)
    x = rng.normal(size=(3, cfg.frames, cfg.joints, 3))
    with_aux, _ = model.model_forward(x, params, cfg)
    stripped = dict(params)
    stripped["aux.w"] = np.zeros_like(params["aux.w"])
    stripped["aux.b"] = np.zeros_like(params["aux.b"])
    without_aux, _ = model.model_forward(x, stripped, cfg)
    assert np.array_equal(with_aux, without_aux)
    report("model plumbing", f"default parameter count {n:,}")


def test_micro_training():
    """Loss halves within the step budget, deterministically, under 60 s."""
    cfg = training.micro_config()
    dataset = training.make_micro_dataset(0)
    t0 = time.perf_counter()
    trace = training.micro_train(dataset, cfg, steps=60, lr=0.5, seed=7)
    elapsed = time.perf_counter() - t0
    assert trace.steps <= 300
    assert trace.losses[-1] <= 0.5 * trace.losses[0]
    assert elapsed < 60.0
    # deterministic per seed: a shorter run reproduces the trace prefix
    again = training.micro_train(dataset, cfg, steps=5, lr=0.5, seed=7)
    assert again.losses == trace.losses[:6]
    report("micro-training",
           f"loss {trace.losses[0]:.3f} -> {trace.losses[-1]:.3f} "
           f"in {trace.steps} steps, {elapsed:.1f}s, backend {trace.backend}")


def test_ensemble_criteria():
    """Self-fusion never changes the argmax; hand example lands on class 0."""
    rng = np.random.default_rng(11)
    logits = rng.normal(size=(1000, 6))
    _, single = model.ensemble_scores([logits])
    _, doubled = model.ensemble_scores([logits, logits])
    assert np.array_equal(single, doubled)

    _, pred = model.ensemble_scores([np.array([[2.0, 0.0]]), np.array([[0.0, 1.0]])])
    assert pred[0] == 0
    report("ensemble invariance", "1000 seeded vectors + hand example")


def test_parser_golden_files():
    """Fixtures round-trip bit-exactly; malformed inputs raise the right class."""
    for name in ("two_joint.skeleton", "two_body.skeleton"):
        for seq in skeleton.parse_ntu_text((DATA / name).read_text()):
            blob = skeleton.write_canonical(seq, sig_digits=None)
            again = skeleton.read_canonical(blob)
            assert np.array_equal(seq.data, again.data)
            assert skeleton.write_canonical(again, sig_digits=None) == blob

    with pytest.raises(EmptyFile):
        skeleton.parse_ntu_text((DATA / "empty.skeleton").read_text())
    with pytest.raises(JointCountMismatch):
        skeleton.parse_ntu_text((DATA / "joint_mismatch.skeleton").read_text())
    with pytest.raises(MalformedLine):
        skeleton.parse_ntu_text("3\nnot-a-count\n")
    report("parser golden files", "bit-exact round trips + error classes")


def test_fixture_embeddings_flow_end_to_end():
    """Checked-in embedding fixture drives graphs and the aux head without the
    extractor being built."""
    from kinegraph.jsonio import load_json
    from kinegraph.priors import build_gpr, build_templates, class_centroids, load_embedding_table

    table = load_embedding_table(load_json(DATA / "embeddings_p3_stub.json"))
    gpr = build_gpr(class_centroids(table))
    templates = build_templates(table)
    rng = np.random.default_rng(0)
    theta = rng.normal(size=(table.joints, 4))
    logits = model.pcac_logits(theta, templates, rng.normal(size=4), 0.0)
    assert logits.shape == (table.classes,)
    assert np.all(np.isfinite(logits))
    assert isinstance(gpr, GprGraph)
    report("fixture embeddings end-to-end", "graphs + aux logits from fixture")
