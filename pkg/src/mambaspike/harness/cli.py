"""Command-line entry point: ``mambaspike <command> [options]``.

Exit status is 0 on success, 1 on a usage error and 2 when the command
itself fails (missing files, bad config values, failed checks).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import checkpoint as ckpt
from ..events import write_aer
from .ablate import DEFAULT_TAUS, PLANS, ablate
from .config import RunConfig, load_config
from .data import gesture_stream, load_split
from .gradcheck import SIGN_AGREEMENT_MIN, format_results, run_suite, surrogate_sign_agreement
from .train import evaluate, train

log = logging.getLogger("mambaspike")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config file (section.key = value lines)")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mambaspike", description="Spiking front-end + selective state-space classifier.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("encode", help="write a dataset split as AER files or spike arrays")
    _common(p)
    p.add_argument("--split", choices=("train", "test", "both"), default="both")
    p.add_argument("--limit", type=int, help="encode at most this many samples per split")

    p = sub.add_parser("train", help="train and write report.json plus checkpoints")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint file (default <out>/model.msck)")
    p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("ablate", help="front-end on/off or neuron x tau sweep")
    _common(p)
    p.add_argument("--plan", choices=PLANS, default="frontend-on-off")
    p.add_argument("--seeds", type=int, nargs="+", help="seed list (default: the config seed)")
    p.add_argument("--taus", type=float, nargs="+", default=list(DEFAULT_TAUS))

    p = sub.add_parser("gradcheck", help="finite-difference checks of every component")
    _common(p)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def cmd_encode(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    splits = ("train", "test") if args.split == "both" else (args.split,)
    for split in splits:
        d = out / split
        d.mkdir(parents=True, exist_ok=True)
        if cfg.data.dataset == "synth-gesture":
            n = cfg.data.n_train if split == "train" else cfg.data.n_test
            n = min(n, args.limit) if args.limit is not None else n
            lines = ["index,label,events,file"]
            for i in range(n):
                stream = gesture_stream(cfg.data, i, split)
                name = f"sample_{i:05d}.aer"
                write_aer(stream, d / name)
                lines.append(f"{i},{stream.label},{len(stream)},{name}")
            (d / "labels.csv").write_text("\n".join(lines) + "\n")
        else:
            data = load_split(cfg, split)
            n = len(data) if args.limit is None else min(len(data), args.limit)
            np.save(d / "spikes.npy", data.inputs[:n])
            np.save(d / "labels.npy", data.labels[:n])
        print(f"{split}: {n} samples -> {d}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    report = train(cfg, cfg.out_dir)
    spikes = "-" if report.spikes_per_sample is None else f"{report.spikes_per_sample:.1f}"
    print(f"accuracy {report.final_accuracy:.4f}  macro_f1 {report.macro_f1:.4f}  "
          f"spikes/sample {spikes}  decision_steps {report.decision_steps}")
    print(f"report: {Path(cfg.out_dir) / 'report.json'}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    path = args.checkpoint or Path(cfg.out_dir) / "model.msck"
    report = evaluate(cfg, path, args.split)
    doc = report.as_dict()
    doc["latency_proxy"]["wall_us_per_sample"] = report.timing["wall_us_per_sample"]
    for key in ("initial", "epochs"):
        doc.pop(key)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    seeds = args.seeds if args.seeds else [cfg.train.seed]
    table = ablate(cfg, args.plan, seeds=seeds, taus=args.taus, out_dir=cfg.out_dir)
    print(table.format())
    print(f"csv: {Path(cfg.out_dir) / 'ablation.csv'}")
    return 2 if any(r.error for r in table.rows) else 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    results = run_suite(cfg, seed=cfg.train.seed)
    frac, finite = surrogate_sign_agreement(cfg, seed=cfg.train.seed)
    print(format_results(results, (frac, finite)))
    ok = all(r.passed for r in results) and finite and frac >= SIGN_AGREEMENT_MIN
    return 0 if ok else 2


COMMANDS = {"encode": cmd_encode, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "mambaspike: error: a command is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except (OSError, ValueError, RuntimeError, FloatingPointError, ckpt.CheckpointMismatchError) as exc:
        print(f"mambaspike {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
