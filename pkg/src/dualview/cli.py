"""Command line: ``dualview {synth,train,eval,dream,report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every subcommand takes ``--config FILE`` with ``key = value`` lines whose
keys are the long flag names; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import ConfigError, RunConfig, convert, read_config
from .data import (BENIGN, MALIGNANT, SEED_CROP, DatasetSplit, ManifestError, load_case,
                   parse_manifest, prepare, split_patients)
from .dream import DreamConfig, DreamError, dream, write_frames
from .dog import build_bank
from .evaluate import evaluate, report_dirs
from .imageio import to_uint8, write_pgm
from .models import Ensemble
from .synth import synth_generate
from .train import NumericError, TrainConfig, train_ensemble

log = logging.getLogger("dualview")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so main() owns the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> _Parser:
    parser = _Parser(prog="dualview", description="Two-view mammogram classifier toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="generate the synthetic lesion benchmark")
    p.add_argument("--out", required=True, help="output root for case directories")
    p.add_argument("--cases", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    _add_common(p)

    p = sub.add_parser("train", help="train a model or an ensemble")
    p.add_argument("--data", required=True, help="dataset root (one directory per case)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--kind", choices=("parallel", "multimodal"), default="parallel")
    p.add_argument("--backbone", choices=("inception_lite", "alexnet_small"), default="inception_lite")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--decay", type=float, default=0.99)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-6)
    p.add_argument("--ensemble", type=int, default=1, help="number of independently trained members")
    p.add_argument("--workers", type=int, default=1, help="processes for ensemble members")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--seed-crop", type=int, default=SEED_CROP, help="square crop around the seed pixel")
    p.add_argument("--no-rotate", dest="rotate", action="store_false", help="disable rotation augmentation")
    p.add_argument("--strict", action="store_true", help="abort on any malformed case")
    p.add_argument("--dump-kernels", metavar="DIR", help="write each DoG kernel as a PGM for inspection")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate checkpoints on a held-out split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True, nargs="+",
                   help="checkpoint files or run directories; several form an ensemble")
    p.add_argument("--out", required=True)
    p.add_argument("--split", help="split file (default: split.txt beside the checkpoint)")
    p.add_argument("--split-seed", type=int, default=0, help="used when no split file exists")
    p.add_argument("--subset", choices=("test", "validation", "train", "all"), default="test")
    p.add_argument("--seed-crop", type=int, default=SEED_CROP)
    _add_common(p)

    p = sub.add_parser("dream", help="run Directed Dream on one case")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--case", required=True, help="case directory")
    p.add_argument("--target", choices=("benign", "malignant"), default="malignant")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--seed-crop", type=int, default=SEED_CROP)
    p.add_argument("--noise-start", action="store_true", help="start from N(0,1) noise instead of the case")
    _add_common(p)

    p = sub.add_parser("report", help="aggregate eval outputs into a comparison table")
    p.add_argument("runs", nargs="+", help="eval output directories")
    p.add_argument("--out", help="write the table here instead of stdout")
    _add_common(p)
    return parser


def _scan(argv: list[str]) -> tuple[str | None, str | None]:
    command = next((a for a in argv if not a.startswith("-")), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    return command, config


def _apply_config(parser: _Parser, argv: list[str]) -> argparse.Namespace:
    """Install config-file values as subcommand defaults, then parse the flags."""
    command, config = _scan(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if config and command in subparsers:
        sub = subparsers[command]
        actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
        defaults = {}
        for key, text in read_config(config).items():
            action = actions.get(key)
            if action is None:
                raise UsageError(f"config key {key!r} is not an option of '{command}'")
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[key] = convert(text, bool, key)
            elif action.nargs == "+":
                defaults[key] = text.split()
            else:
                value = convert(text, action.type or str, key)
                if action.choices and value not in action.choices:
                    raise UsageError(f"config {key}: {value!r} not in {sorted(action.choices)}")
                defaults[key] = value
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _load_cases(root, strict: bool):
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data root not found: {root}")
    cases, errors = parse_manifest(root, strict=strict)
    for e in errors:
        log.warning("skipping case: %s", e)
    if not cases:
        raise ManifestError(f"no usable cases under {root}")
    return cases


def cmd_synth(args) -> int:
    cases = synth_generate(args.cases, args.seed, args.size, args.out)
    n_mal = sum(c.label == MALIGNANT for c in cases)
    print(f"wrote {len(cases)} cases ({len(cases) - n_mal} benign, {n_mal} malignant) to {args.out}")
    return EXIT_OK


def _dump_kernels(out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bank = build_bank()
    for sigma, kernel in zip(bank.sigmas, bank.kernels):
        m = float(np.abs(kernel).max())
        write_pgm(out / f"dog_sigma_{sigma:.4f}.pgm", to_uint8(kernel, -m, m))


def cmd_train(args) -> int:
    if args.dump_kernels:
        _dump_kernels(args.dump_kernels)
    cases = _load_cases(args.data, args.strict)
    split = split_patients(cases, args.split_seed)
    by_id = {c.patient_id: c for c in cases}
    train_cases = [prepare(by_id[p], args.seed_crop) for p in split.train]
    val_cases = [prepare(by_id[p], args.seed_crop) for p in split.validation]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = RunConfig.from_mapping(vars(args))
    run.checkpoint = "checkpoint.dvnc"
    (out / "config.txt").write_text(run.to_text(), encoding="utf-8")
    (out / "split.txt").write_text(split.to_text(), encoding="utf-8")

    cfg = TrainConfig(kind=args.kind, backbone=args.backbone, epochs=args.epochs, batch_size=args.batch,
                      lr=args.lr, decay=args.decay, dropout=args.dropout, l2=args.l2, seed=args.seed,
                      rotate=args.rotate)
    results = train_ensemble(train_cases, val_cases, cfg, args.ensemble, args.workers)
    for m, res in enumerate(results):
        member_dir = out if args.ensemble == 1 else out / f"member_{m:02d}"
        member_dir.mkdir(parents=True, exist_ok=True)
        ckpt.save(res.model, member_dir / "checkpoint.dvnc")
        (member_dir / "metrics.csv").write_text(res.log_csv(), encoding="utf-8")
        last = res.log[-1] if res.log else {}
        print(f"member {m}: best epoch {res.best_epoch}, "
              f"val_acc {last.get('val_acc', float('nan')):.4f} -> {member_dir / 'checkpoint.dvnc'}")
    return EXIT_OK


def _checkpoint_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob("checkpoint.dvnc")) + sorted(p.glob("member_*/checkpoint.dvnc"))
            if not found:
                raise FileNotFoundError(f"no checkpoint.dvnc in {p}")
            files.extend(found)
        elif p.is_file():
            files.append(p)
        else:
            raise FileNotFoundError(f"checkpoint not found: {p}")
    return files


def _find_split(args, files) -> DatasetSplit | None:
    if args.split:
        path = Path(args.split)
        if not path.is_file():
            raise FileNotFoundError(f"split file not found: {path}")
        return DatasetSplit.from_text(path.read_text(encoding="utf-8"))
    for f in files:
        for d in (f.parent, f.parent.parent):
            if (d / "split.txt").is_file():
                return DatasetSplit.from_text((d / "split.txt").read_text(encoding="utf-8"))
    return None


def cmd_eval(args) -> int:
    files = _checkpoint_files(args.checkpoint)
    models = [ckpt.load(f) for f in files]
    model = models[0] if len(models) == 1 else Ensemble(models)
    cases = _load_cases(args.data, strict=False)
    if args.subset == "all":
        chosen = cases
    else:
        split = _find_split(args, files) or split_patients(cases, args.split_seed)
        ids = set(getattr(split, args.subset))
        chosen = [c for c in cases if c.patient_id in ids]
        if len(chosen) != len(ids):
            raise ManifestError(f"{len(ids) - len(chosen)} {args.subset} patients missing from {args.data}")
    report = evaluate(model, [prepare(c, args.seed_crop) for c in chosen])
    report.write(args.out)
    print(report.summary_text(), end="")
    return EXIT_OK


def cmd_dream(args) -> int:
    net = ckpt.load(args.checkpoint)
    case = prepare(load_case(args.case), args.seed_crop)
    cc, mlo = case.test_inputs()
    if args.noise_start:
        rng = np.random.default_rng(args.seed)
        cc, mlo = (rng.standard_normal(cc.shape).astype(np.float32) for _ in range(2))
    target = MALIGNANT if args.target == "malignant" else BENIGN
    config = DreamConfig(max_iter=args.iters, learning_rate=args.lr, target_class=target, rng_seed=args.seed)
    state = dream(net, cc, mlo, config)
    write_frames(state, args.out, config)
    if state.frames:
        print(f"target {args.target}: p_target {state.frames[0].p_target:.4f} -> "
              f"{state.frames[-1].p_target:.4f} after {len(state.frames)} iterations")
    return EXIT_OK


def cmd_report(args) -> int:
    table = report_dirs(args.runs)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "dream": cmd_dream, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:   # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError) as exc:
        print(f"dualview: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (NumericError, DreamError, FloatingPointError) as exc:
        print(f"dualview: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ManifestError, ckpt.CheckpointError, ValueError, OSError) as exc:
        print(f"dualview: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
