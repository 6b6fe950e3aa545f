"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
TALNET_OUT_DIR overrides the default output directory.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _out_dir(args):
    return os.environ.get("TALNET_OUT_DIR", args.out)


def _load_run_config(args):
    from .config import RunConfig, apply_overrides, load_config

    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = []
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        overrides.append((key.strip(), val.strip()))
    return apply_overrides(cfg, overrides)


def _generate(cfg):
    from .data import default_schema, generate_synthetic

    d = cfg.data
    return generate_synthetic(
        d.num_identities, d.seqs_per_identity, d.frames_per_seq, default_schema(),
        noise=d.noise, occlusion_prob=d.occlusion_prob, seed=d.seed,
        color_pool=d.color_pool, combo_pool=d.combo_pool,
        brightness_jitter=d.brightness_jitter)


def cmd_synth(args):
    from .data import save_dataset

    cfg = _load_run_config(args)
    dataset = _generate(cfg)
    out = _out_dir(args)
    save_dataset(out, dataset)
    print(f"wrote {len(dataset.sequences)} sequences to {out}")
    return EXIT_OK


def _dataset(args, cfg):
    from .data import load_dataset

    if args.data_dir:
        return load_dataset(args.data_dir)
    return _generate(cfg)


def cmd_train(args):
    from .data import train_test_split
    from .trainer import DivergenceError, train

    cfg = _load_run_config(args)
    dataset = _dataset(args, cfg)
    train_set, _ = train_test_split(dataset, cfg.data.test_seqs_per_id)
    out = _out_dir(args)
    try:
        _, ckpt, log = train(cfg.model, cfg.train, train_set, out, quiet=args.quiet)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"checkpoint: {ckpt}\nloss log: {log}")
    return EXIT_OK


def cmd_eval(args):
    from .data import train_test_split
    from .nn import load_checkpoint
    from .retrieval import embed_sequences, evaluate, metrics_report, query_gallery_split, write_embeddings
    from .trainer import build_model

    cfg = _load_run_config(args)
    dataset = _dataset(args, cfg)
    _, test_set = train_test_split(dataset, cfg.data.test_seqs_per_id)
    model = build_model(cfg.model, dataset, cfg.train.seed)
    load_checkpoint(args.checkpoint, model)
    records = embed_sequences(test_set.sequences, model, cfg.model.clip_len)
    queries, gallery = query_gallery_split(records)
    result = evaluate(queries, gallery, lambda_sim=cfg.train.lambda_sim,
                      protocol=args.protocol)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    write_embeddings(os.path.join(out, "embeddings.tsv"), records)
    report = metrics_report(result)
    with open(os.path.join(out, "metrics.tsv"), "w") as fh:
        fh.write(report)
    print(report, end="")
    return EXIT_OK


def cmd_ablate(args):
    from .trainer import ablate, write_ablation_table

    cfg = _load_run_config(args)
    dataset = _dataset(args, cfg)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    variants = args.variants.split(",") if args.variants else None
    rows = ablate(cfg.model, cfg.train, dataset, out, variants=variants,
                  seeds=seeds, quiet=args.quiet)
    table = os.path.join(out, "ablation.csv")
    write_ablation_table(table, rows)
    print(f"{'variant':<16} rank-1  mAP")
    for name, r1, m in rows:
        print(f"{name:<16} {r1:.4f}  {m:.4f}")
    print(f"table: {table}")
    return EXIT_OK


def cmd_gradcheck(args):
    from .checks import run_all

    reports = run_all(tol=args.tol, eps=args.eps)
    ok = True
    for name, rep in reports.items():
        status = "PASS" if rep.passed else "FAIL"
        worst = rep.worst[0].rel_err if rep.worst else 0.0
        print(f"{status} {name}: worst rel err {worst:.3e} ({rep.checked} coords)")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_dump_attention(args):
    from .data import split_clips, train_test_split
    from .nn import load_checkpoint
    from .trainer import build_model

    cfg = _load_run_config(args)
    dataset = _dataset(args, cfg)
    model = build_model(cfg.model, dataset, cfg.train.seed)
    load_checkpoint(args.checkpoint, model)
    if not model.cfg.use_att:
        print("error: attribute branch is disabled in this config", file=sys.stderr)
        return EXIT_USAGE
    seq = next((s for s in dataset.sequences if s.sequence_id == args.sequence), None)
    if seq is None:
        print(f"error: sequence {args.sequence} not found", file=sys.stderr)
        return EXIT_DATA
    clip = split_clips(seq, model.cfg.clip_len)[0]
    frames = clip.frames[None]  # single-clip batch
    fm = model.extract_feature_maps(frames)
    out = model.forward_feature_maps(fm, rng=np.random.default_rng(0))
    lines = ["attribute\tframe\ttop\tleft\tbottom\tright"]
    flat = fm.reshape((fm.shape[0] * fm.shape[1],) + tuple(fm.shape[2:]))
    regions = model.attention.describe_regions(flat)
    names = [f"attr{n}" for n in range(model.cfg.n_attributes)]
    for n, per_frame in enumerate(regions):
        for t, (_, region) in enumerate(per_frame):
            top, left, bottom, right = region.normalized_bounds
            lines.append(f"{names[n]}\t{t}\t{top:.4f}\t{left:.4f}\t{bottom:.4f}\t{right:.4f}")
    outdir = _out_dir(args)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "regions.tsv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    scores = out.get("attention_scores")
    if scores is not None:
        a_s, a_t = scores[0].data[0], scores[1].data[0]
        np.savetxt(os.path.join(outdir, "semantic_scores.tsv"), a_s, delimiter="\t", fmt="%.6f")
        np.savetxt(os.path.join(outdir, "temporal_scores.tsv"), a_t, delimiter="\t", fmt="%.6f")
    print(f"wrote attention dumps to {outdir}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="talnet", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="plain key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. model.d=32")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--data-dir", help="load a dataset written by `synth` instead of regenerating")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="two-stage training run")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="CMC/mAP evaluation of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--protocol", default="multi-shot", choices=["multi-shot", "pairwise"])
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare ablation variants")
    common(p)
    p.add_argument("--variants", help="comma-separated variant names (default: all)")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("dump-attention", help="region and score tables for one sequence")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequence", type=int, default=0)
    p.set_defaults(fn=cmd_dump_attention)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage; remap
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
