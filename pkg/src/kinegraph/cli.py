"""Command-line entry point.

Every command writes canonical JSON results plus a ``.manifest.json``
sidecar, prints the result path on stdout and keeps diagnostics on stderr.
Exit codes: 0 success, 2 input/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bones, diffusion, jsonio, model, priors, skeleton, training
from .errors import (
    KinegraphError,
    NotSymmetric,
    ShapeMismatch,
    SpectrumOutOfRange,
    ZeroDegree,
)

_NUMERICAL = (NotSymmetric, SpectrumOutOfRange, ZeroDegree)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _manifest(cmd: str, args: argparse.Namespace, inputs: dict[str, str]) -> jsonio.RunManifest:
    cfg = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    digest = jsonio.sha256_text(jsonio.canonical_dumps(
        {k: str(v) for k, v in cfg.items()}))
    in_digests = {}
    for name, path in inputs.items():
        if path and Path(path).exists():
            in_digests[name] = jsonio.sha256_file(path)
    return jsonio.RunManifest(
        command=cmd,
        config_digest=digest,
        input_digests=in_digests,
        tool_version=__version__,
        seed=getattr(args, "seed", None),
    )


def _finish(manifest: jsonio.RunManifest, out_path: str, quiet: bool) -> int:
    manifest.finish()
    manifest.write(out_path)
    print(out_path)
    if not quiet:
        print(f"wrote {out_path} ({manifest.wall_time_s:.3f}s)", file=sys.stderr)
    return EXIT_OK


def _load_matrix(path: str) -> np.ndarray:
    obj = jsonio.load_json(path)
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeMismatch(f"{path}: expected a square 2-D JSON array")
    return arr


def _load_sequences(path: str) -> list[skeleton.SkeletonSequence]:
    p = Path(path)
    if p.suffix == ".json":
        obj = jsonio.load_json(p)
        items = obj if isinstance(obj, list) else [obj]
        return [skeleton.read_canonical(o) for o in items]
    return skeleton.parse_ntu_text(p.read_text(encoding="utf-8"))


def _load_dataset(directory: str, threads: int) -> list[skeleton.SkeletonSequence]:
    files = sorted(p for p in Path(directory).iterdir()
                   if p.suffix in (".json", ".skeleton", ".txt"))
    if not files:
        raise ShapeMismatch(f"no .json/.skeleton/.txt files in {directory}")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_file = list(pool.map(lambda f: _load_sequences(str(f)), files))
    else:
        per_file = [_load_sequences(str(f)) for f in files]
    return [seq for group in per_file for seq in group]


# --- commands ----------------------------------------------------------------


def cmd_parse(args) -> int:
    man = _manifest("parse", args, {"in": args.in_path})
    text = Path(args.in_path).read_text(encoding="utf-8")
    if args.format == "ntu":
        seqs = skeleton.parse_ntu_text(text)
    else:
        obj = jsonio.load_json(args.in_path)
        items = obj if isinstance(obj, list) else [obj]
        seqs = [skeleton.read_canonical(o) for o in items]
    payload = [
        {
            "version": 1,
            "frames": s.frames,
            "joints": s.joints,
            "dims": s.dims,
            "label": s.label,
            "data": s.data,
        }
        for s in seqs
    ]
    jsonio.write_json(args.out, payload, sig_digits=None)
    return _finish(man, args.out, args.quiet)


def cmd_graphs(args) -> int:
    man = _manifest("graphs", args, {"embeddings": args.embeddings})
    table = priors.load_embedding_table(jsonio.load_json(args.embeddings))
    gpr = priors.build_gpr(priors.class_centroids(table))
    templates = priors.build_templates(table)
    jsonio.write_json(args.out_gpr, {
        "version": 1,
        "joints": table.joints,
        "prompt": table.prompt_id,
        "dist": gpr.dist,
    })
    jsonio.write_json(args.out_tc, {
        "version": 1,
        "classes": table.classes,
        "joints": table.joints,
        "kind": templates.kind,
        "templates": templates.templates,
    })
    man.finish()
    man.write(args.out_gpr)
    man.write(args.out_tc)
    print(args.out_gpr)
    print(args.out_tc)
    return EXIT_OK


def cmd_select_bones(args) -> int:
    man = _manifest("select-bones", args, {"gpr": args.gpr or ""})
    samples = _load_dataset(args.data, args.threads)
    gpr = None
    if args.gpr:
        obj = jsonio.load_json(args.gpr)
        gpr = priors.GprGraph(dist=np.asarray(obj["dist"], dtype=float))
    scores = bones.dataset_scores(samples, gpr)
    selected = bones.select_min_assignment(scores, base=args.base)
    payload = selected.to_dict()
    payload["joints"] = selected.joints
    payload["total_score"] = bones.selection_cost(scores, selected)
    payload["n_samples"] = scores.n_samples
    jsonio.write_json(args.out, payload)
    return _finish(man, args.out, args.quiet)


def cmd_diffuse(args) -> int:
    man = _manifest("diffuse", args, {"abar": args.abar,
                                      "features": args.features or ""})
    a_bar = _load_matrix(args.abar)
    if args.mode == "exact":
        cfg = diffusion.DiffusionConfig(beta=args.beta, hops=args.hops)
        out = diffusion.multi_hop_exact(a_bar, cfg)
    else:
        cfg = diffusion.DiffusionConfig(beta=args.beta, hops=args.hops,
                                        mode="iterative", iterations=args.iterations)
        feats = _load_matrix(args.features) if args.features else np.eye(a_bar.shape[0])
        out = diffusion.diffuse_iterative(a_bar, feats, cfg)
    jsonio.write_json(args.out, out)
    return _finish(man, args.out, args.quiet)


def cmd_spectra(args) -> int:
    man = _manifest("spectra", args, {"abar": args.abar})
    a_bar = _load_matrix(args.abar)
    degrees = diffusion.degree_stats(a_bar)
    sym = 0.5 * (a_bar + a_bar.T)
    q = sym.sum(axis=1)
    if np.all(q > 0):
        d = 1.0 / np.sqrt(q)
        normalized = (sym * d[:, None]) * d[None, :]
    else:
        normalized = sym
    relation = diffusion.verify_eigen_relation(normalized, args.beta, args.trunc)
    report = dict(relation)
    report["degree"] = degrees
    jsonio.write_json(args.report, report)
    return _finish(man, args.report, args.quiet)


def _config_from_dict(obj: dict) -> model.ModelConfig:
    kwargs = dict(obj)
    for key in ("channels", "strides", "tc_dilations"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return model.ModelConfig(**kwargs)


def _params_from_json(obj: dict, cfg: model.ModelConfig, seed: int) -> dict[str, np.ndarray]:
    params = model.init_params(cfg, seed)
    stored = obj.get("params")
    if stored:
        for key, val in stored.items():
            if key not in params:
                raise ShapeMismatch(f"unknown parameter {key!r} in model file")
            arr = np.asarray(val, dtype=float)
            if arr.shape != params[key].shape:
                raise ShapeMismatch(f"parameter {key!r} has shape {arr.shape}, "
                                    f"expected {params[key].shape}")
            params[key] = arr
    return params


def cmd_forward(args) -> int:
    man = _manifest("forward", args, {"model": args.model, "data": args.data})
    spec = jsonio.load_json(args.model)
    cfg = _config_from_dict(spec.get("config", {}))
    seed = int(spec.get("seed", args.seed or 0))
    params = _params_from_json(spec, cfg, seed)
    seqs = _load_sequences(args.data)
    pcfg = skeleton.PreprocessConfig(target_frames=cfg.frames)
    samples = []
    for i, seq in enumerate(seqs):
        pre = skeleton.preprocess(seq, pcfg)
        logits, _ = model.model_forward(pre.data, params, cfg)
        samples.append({"id": i, "logits": logits})
    jsonio.write_json(args.out_scores, {"samples": samples})
    return _finish(man, args.out_scores, args.quiet)


def cmd_micro_train(args) -> int:
    man = _manifest("micro-train", args, {"config": args.config})
    spec = jsonio.load_json(args.config)
    cfg = _config_from_dict(spec.get("model", {}))
    ds_spec = spec.get("dataset", {})
    dataset = training.make_micro_dataset(
        seed=int(ds_spec.get("seed", 0)),
        per_class=int(ds_spec.get("per_class", 3)),
        joints=cfg.joints,
        frames=cfg.frames,
        classes=cfg.classes,
    )
    trace = training.micro_train(
        dataset, cfg,
        steps=args.steps,
        lr=float(spec.get("lr", 0.5)),
        seed=args.seed if args.seed is not None else 7,
    )
    jsonio.write_json(args.trace, {
        "losses": trace.losses,
        "final_loss": trace.losses[-1],
        "initial_loss": trace.losses[0],
        "steps": trace.steps,
        "lr": trace.lr,
        "seed": trace.seed,
        "backend": trace.backend,
        "wall_time_s": trace.wall_time_s,
        "params_checksum": trace.checksum,
    })
    if args.out_model:
        jsonio.write_json(args.out_model, {
            "config": spec.get("model", {}),
            "seed": trace.seed,
            "params": {k: v for k, v in trace.params.items()},
        }, sig_digits=None)
    return _finish(man, args.trace, args.quiet)


def cmd_ensemble(args) -> int:
    man = _manifest("ensemble", args, {f"scores{i}": p for i, p in enumerate(args.scores)})
    streams = []
    ids = None
    for path in args.scores:
        obj = jsonio.load_json(path)
        samples = obj.get("samples")
        if not isinstance(samples, list) or not samples:
            raise ShapeMismatch(f"{path}: missing samples")
        cur_ids = [s.get("id") for s in samples]
        if ids is None:
            ids = cur_ids
        elif cur_ids != ids:
            raise ShapeMismatch(f"{path}: sample ids differ across streams")
        streams.append(np.asarray([s["logits"] for s in samples], dtype=float))
    fused, preds = model.ensemble_scores(streams)
    jsonio.write_json(args.out, {"samples": [
        {"id": ids[i], "fused": fused[i], "prediction": int(preds[i])}
        for i in range(len(ids))
    ]})
    return _finish(man, args.out, args.quiet)


def cmd_report(args) -> int:
    man = _manifest("report", args, {"gpr": args.gpr or "",
                                     "embeddings": args.embeddings or ""})
    report: dict = {"tool_version": __version__}
    if not args.data and not args.embeddings:
        raise ShapeMismatch("report needs --data and/or --embeddings")
    if args.data:
        samples = _load_dataset(args.data, args.threads)
        gpr = None
        if args.gpr:
            obj = jsonio.load_json(args.gpr)
            gpr = priors.GprGraph(dist=np.asarray(obj["dist"], dtype=float))
        raw = bones.dataset_scores(samples)
        weighted = bones.dataset_scores(samples, gpr) if gpr is not None else raw
        v = raw.joints
        iu = np.triu_indices(v, k=1)
        section = {
            "n_samples": raw.n_samples,
            "joints": v,
            "n_candidates": len(iu[0]),
            "mean_candidate_std": float(raw.score[iu].mean()),
        }
        selected = bones.select_min_assignment(weighted, base=args.base)
        section["min_assignment"] = selected.to_dict()
        section["min_sum_std"] = bones.selection_cost(raw, selected)
        inv = float(weighted.score.max()) - weighted.score
        np.fill_diagonal(inv, 0.0)
        max_sel = bones.select_min_assignment(
            bones.CandidateScores(score=inv, n_samples=raw.n_samples), base=args.base)
        section["max_assignment"] = max_sel.to_dict()
        section["max_sum_std"] = bones.selection_cost(raw, max_sel)
        try:
            phys = bones.physical_bones(v)
            section["physical_sum_std"] = bones.selection_cost(raw, phys)
        except KinegraphError:
            pass
        report["bones"] = section
    if args.embeddings:
        table = priors.load_embedding_table(jsonio.load_json(args.embeddings))
        gpr = priors.build_gpr(priors.class_centroids(table))
        templates = priors.build_templates(table)
        rng = np.random.default_rng(args.seed if args.seed is not None else 0)
        theta = rng.normal(size=(table.joints, 8))
        head_w = rng.normal(size=8)
        logits = model.pcac_logits(theta, templates, head_w, 0.0)
        report["embeddings"] = {
            "classes": table.classes,
            "joints": table.joints,
            "dim": table.dim,
            "prompt": table.prompt_id,
            "gpr_max_dist": float(gpr.dist.max()),
            "template_kind": templates.kind,
            "template_mean": float(templates.templates.mean()),
            "pcac_logits": logits,
        }
    jsonio.write_json(args.out, report)
    return _finish(man, args.out, args.quiet)


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kinegraph",
        description="skeleton prior graphs, bone selection and attention diffusion",
    )
    ap.add_argument("--seed", type=int, default=None, help="global seed")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for batch loading")
    ap.add_argument("--quiet", action="store_true", help="suppress progress diagnostics")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse capture text or canonical JSON")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--format", choices=("ntu", "json"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("graphs", help="build prior graphs from an embedding table")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-gpr", dest="out_gpr", required=True)
    p.add_argument("--out-tc", dest="out_tc", required=True)
    p.set_defaults(func=cmd_graphs)

    p = sub.add_parser("select-bones", help="score candidates and pick the minimal bone set")
    p.add_argument("--data", required=True, help="directory of sequence files")
    p.add_argument("--gpr", default=None)
    p.add_argument("--base", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select_bones)

    p = sub.add_parser("diffuse", help="multi-hop diffusion of an attention matrix")
    p.add_argument("--abar", required=True)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--hops", type=int, default=4)
    p.add_argument("--mode", choices=("exact", "iter"), default="exact")
    p.add_argument("--K", dest="iterations", type=int, default=20)
    p.add_argument("--features", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("spectra", help="spectral verification report")
    p.add_argument("--abar", required=True)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--trunc", type=int, default=200)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("forward", help="run the encoder over sequences")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-scores", dest="out_scores", required=True)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("micro-train", help="finite-difference training on synthetic data")
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--trace", required=True)
    p.add_argument("--out-model", dest="out_model", default=None)
    p.set_defaults(func=cmd_micro_train)

    p = sub.add_parser("ensemble", help="fuse softmax scores of several streams")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("report", help="diagnostics over a dataset and/or embeddings")
    p.add_argument("--data", default=None)
    p.add_argument("--gpr", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--base", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except _NUMERICAL as exc:
        print(f"kinegraph: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (KinegraphError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"kinegraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"kinegraph: internal error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
