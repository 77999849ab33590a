"""Command-line entry points: synth, train, cv, eval, features."""

from __future__ import annotations

import argparse
import sys

from aufuse.config import RunConfig, load_config
from aufuse.data import ClipCache, read_manifest
from aufuse.model import build_model
from aufuse.training import cross_validate, evaluate, render_fold_report, split_folds, train_fold


def _load_cfg(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_synth(args) -> int:
    from aufuse.synth import generate_synthetic

    manifest = generate_synthetic(
        args.clips, args.seed, args.out, fps=args.fps, noise=args.noise
    )
    print(f"wrote {args.clips} clips, manifest at {manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    records = read_manifest(args.manifest)
    plan = split_folds([r.id for r in records], k=6, seed=cfg.seed)
    _, report = train_fold(
        records, plan, args.fold, cfg, out_dir=args.out, log=print
    )
    print(render_fold_report(report, cfg), end="")
    return 0


def cmd_cv(args) -> int:
    cfg = _load_cfg(args.config)
    records = read_manifest(args.manifest)
    _, summary = cross_validate(records, cfg, out_dir=args.out, log=print)
    print(summary, end="")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args.config)
    records = read_manifest(args.manifest)
    model = build_model(cfg)
    model.load(args.checkpoint)
    cache = ClipCache(records, resolution=cfg.image_size)
    per_au, macro = evaluate(model, [r.id for r in records], cache)
    print(f"evaluated {len(records)} clips")
    for j, score in enumerate(per_au, start=1):
        print(f"  au{j:<3d} {score:.4f}")
    print(f"macro F1: {macro:.4f}")
    return 0


def cmd_features(args) -> int:
    from aufuse.audio import wav_to_logmel

    logmel = wav_to_logmel(args.wav)
    values = logmel.values
    print(f"log-Mel spectrogram for {args.wav}")
    print(f"  frames:     {values.shape[0]}")
    print(f"  channels:   {values.shape[1]}")
    print(f"  frame rate: {logmel.frame_rate} Hz")
    print(f"  min:        {values.min():.4f}")
    print(f"  max:        {values.max():.4f}")
    print(f"  mean:       {values.mean():.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aufuse", description="Audio-visual facial action unit detection harness."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic planted-signal dataset")
    p.add_argument("--clips", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.05)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one cross-validation fold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="run six-fold cross-validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("features", help="print log-Mel statistics for a WAV file")
    p.add_argument("--wav", required=True)
    p.set_defaults(func=cmd_features)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
