"""Command-line entry point: ``triembed <command> [flags]``."""
from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, atomic_write_text
from .corpus import (
    SyntheticConfig,
    TupleRecord,
    adjust_narration_span,
    align_actions_narrations,
    generate_synthetic_corpus,
    load_corpus,
    read_actions_csv,
    read_narrations_csv,
    select_frames,
    stemmed_tokens,
    write_corpus,
    write_manifest,
)
from .matchmap import ModeError
from .pipeline import (
    PRESETS,
    ConfigError,
    TrainConfig,
    config_fields,
    evaluate,
    format_config,
    load_config,
    load_model,
    reports_csv,
    save_model,
    train,
    write_runlog,
)

log = logging.getLogger("triembed")

GRAD_TOL = 1e-4
ORACLE_TOL = 1e-12
LOSS_ORACLE_TOL = 1e-10
# split sizes of the full kitchen-video corpus; recorded for reference, never enforced
TARGET_SPLIT_SIZES = "train=14000,val=600,test=545"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    """One flag per config key; unset flags fall back to the config file, then defaults."""
    for name, ftype in config_fields().items():
        kind = str(ftype)
        if "tuple" in kind:
            p.add_argument(_flag(name), dest=name, default=None, metavar="A,B,..",
                           help=f"comma-separated {name}")
        elif kind == "bool":
            p.add_argument(_flag(name), dest=name, default=None, action=argparse.BooleanOptionalAction)
        else:
            conv = {"int": int, "float": float}.get(kind, str)
            p.add_argument(_flag(name), dest=name, type=conv, default=None)
    p.add_argument("--config", help="flat key = value file; flags override its values")
    p.add_argument("--preset", choices=sorted(PRESETS), help="pooling-mode triple and batch size preset")


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    values: dict[str, object] = {}
    if args.preset:
        values.update(PRESETS[args.preset])
    if args.config:
        values.update(load_config(args.config))
    for name in config_fields():
        v = getattr(args, name)
        if v is None:
            continue
        if isinstance(v, str) and name == "modes":
            v = tuple(s.strip().upper() for s in v.split(",") if s.strip())
        elif isinstance(v, str) and name.endswith("channels"):
            try:
                v = tuple(int(s) for s in v.split(",") if s.strip())
            except ValueError as exc:
                raise ConfigError(f"bad value for {name}: {v!r}") from exc
        values[name] = v
    return TrainConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="triembed", description="Trimodal matchmap embeddings: data, training, evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a planted-concept synthetic corpus")
    p.add_argument("--out", default="corpus", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--concepts", type=int, default=SyntheticConfig.n_concepts)
    p.add_argument("--train", type=int, default=SyntheticConfig.n_train)
    p.add_argument("--val", type=int, default=SyntheticConfig.n_val)
    p.add_argument("--noise", type=float, default=SyntheticConfig.noise_sigma)
    p.add_argument("--feat-dim", type=int, default=SyntheticConfig.feat_dim)
    p.add_argument("--grid", type=int, default=SyntheticConfig.grid_rows, help="grid cells per image side")
    p.add_argument("--audio-frames", type=int, default=SyntheticConfig.audio_frames)

    p = sub.add_parser("prep", help="align action/narration annotations into a manifest")
    p.add_argument("--actions", required=True, help="CSV: video_id,start_s,end_s,text[,language]")
    p.add_argument("--narrations", required=True, help="CSV: video_id,start_s,end_s,text")
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.add_argument("--fps", type=float, default=30.0, help="video frame rate for frame indices")
    p.add_argument("--language", default="en")
    p.add_argument("--out", default="prep", help="output directory")

    p = sub.add_parser("train", help="train encoders on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="run", help="output directory")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="Recall@K of a checkpoint on one split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--mode", help="image-audio pooling mode (defaults to the config's first mode)")
    p.add_argument("--out", default="eval", help="output directory")
    _add_train_flags(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks per operation")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--max-coords", type=int, default=40, help="coordinates probed per parameter")

    p = sub.add_parser("oracle-check", help="compare against nested-loop reference implementations")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    return parser


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(n_concepts=args.concepts, n_train=args.train, n_val=args.val, noise_sigma=args.noise,
                          feat_dim=args.feat_dim, grid_rows=args.grid, grid_cols=args.grid,
                          audio_frames=args.audio_frames, seed=args.seed)
    path = write_corpus(generate_synthetic_corpus(cfg), args.out)
    print(f"wrote {path} ({args.train} train, {args.val} val)")
    return 0


def cmd_prep(args) -> int:
    actions = read_actions_csv(args.actions)
    narrations = read_narrations_csv(args.narrations)
    result = align_actions_narrations(actions, narrations, args.language)
    drops = Counter({"non_language": result.non_english, "unmatched_action": result.unmatched_actions,
                     "unmatched_narration": result.unmatched_narrations, "short_span": 0, "empty_clip": 0})
    vocab: dict[str, int] = {}
    records = []
    for n, (action, narration) in enumerate(result.pairs):
        span = adjust_narration_span(narration.start_s, narration.end_s)
        if span is None:
            drops["short_span"] += 1
            continue
        first = int(np.floor(action.start_s * args.fps + 0.5))
        count = int(np.floor(action.end_s * args.fps + 0.5)) - first + 1
        if count < 1:
            drops["empty_clip"] += 1
            continue
        tokens = [vocab.setdefault(w, len(vocab)) for w in stemmed_tokens(narration.text)] or [
            vocab.setdefault("<empty>", len(vocab))]
        audio_ref = f"{narration.video_id}.pcm#{span[0]:.3f}-{span[1]:.3f}"
        for f, idx in enumerate(select_frames(count, args.split)):
            rid = f"{action.video_id}-{n:05d}-f{f}"
            records.append(TupleRecord(rid, args.split, action.text, f"{action.video_id}/frame_{first + idx:07d}.jpg",
                                       audio_ref, tokens))
    out = Path(args.out)
    meta = {"source": "annotations", "fps": repr(args.fps), "vocab_size": str(len(vocab)),
            "target_split_sizes": TARGET_SPLIT_SIZES}
    write_manifest(out / "manifest.tsv", records, meta)
    atomic_write_text(out / "vocab.txt", "".join(f"{w}\n" for w in vocab))
    atomic_write_text(out / "drops.csv", "reason,count\n" + "".join(f"{k},{v}\n" for k, v in drops.items()))
    print(f"kept {len(result.pairs) - drops['short_span'] - drops['empty_clip']} pairs as {len(records)} records; "
          + ", ".join(f"{k}={v}" for k, v in drops.items()))
    return 0


def cmd_train(args) -> int:
    from .report import plot_loss, plot_recall_curves

    cfg = _resolve_config(args)
    corpus = load_corpus(args.manifest)
    model, runlog = train(corpus, cfg)
    out = Path(args.out)
    write_runlog(runlog, cfg, out)
    save_model(model, out / "checkpoint.bin")
    atomic_write_text(out / "config.cfg", format_config(cfg))
    plot_loss(runlog, out / "loss.png")
    if any(e.reports for e in runlog.epochs):
        plot_recall_curves(runlog, out / "recall.png")
    last = runlog.epochs[-1] if runlog.epochs else None
    summary = f"loss {last.mean_loss:.4f}" if last else "no epochs run"
    if last and last.reports:
        summary += "; " + ", ".join(f"{d} R@1 {r.recalls[min(r.recalls)]:.3f}" for d, r in last.reports.items())
    print(f"wrote {out}: {summary}")
    return 0


def cmd_eval(args) -> int:
    from .report import plot_recall_bars

    if not args.config and (Path(args.checkpoint).parent / "config.cfg").exists():
        args.config = str(Path(args.checkpoint).parent / "config.cfg")
    cfg = _resolve_config(args)
    corpus = load_corpus(args.manifest)
    model = load_model(args.checkpoint, cfg, corpus)
    reports = evaluate(corpus, model, cfg, args.split, mode=args.mode and args.mode.upper())
    out = Path(args.out)
    atomic_write_text(out / "metrics.csv", reports_csv(reports, cfg))
    plot_recall_bars(reports, out / "recall.png")
    for d, r in reports.items():
        print(f"{d}->{'audio' if d == 'image' else 'image'} " + " ".join(f"R@{k}={v:.3f}" for k, v in r.recalls.items()))
    return 0


def cmd_gradcheck(args) -> int:
    from .selfcheck import gradient_suite

    results = gradient_suite(range(args.seeds), max_coords=args.max_coords)
    ok = True
    for name, (err, checked, skipped) in results.items():
        passed = checked > 0 and err < GRAD_TOL
        ok &= passed
        print(f"{'ok  ' if passed else 'FAIL'} {name:<46} max rel error {err:.3e}  "
              f"({checked} coords, {skipped} near kinks)")
    worst = max(err for err, _, _ in results.values())
    print(f"max relative error {worst:.3e} (tolerance {GRAD_TOL:g})")
    return 0 if ok else 1


def cmd_oracle_check(args) -> int:
    from .selfcheck import oracle_suite

    results = oracle_suite(args.instances, seed=args.seed)
    ok = True
    for name, dev in results.items():
        tol = LOSS_ORACLE_TOL if "loss" in name else ORACLE_TOL
        passed = dev <= tol
        ok &= passed
        print(f"{'ok  ' if passed else 'FAIL'} {name:<34} max deviation {dev:.3e} (tolerance {tol:g})")
    return 0 if ok else 1


COMMANDS = {"synth": cmd_synth, "prep": cmd_prep, "train": cmd_train, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "oracle-check": cmd_oracle_check}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError, CheckpointError, ConfigError, ModeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"triembed {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
