"""Synthetic benchmark: generate data, train both architectures, evaluate, tabulate.

    python scripts/run_synthetic_benchmark.py --out runs/bench --epochs 30
"""

import argparse
import time
from pathlib import Path

from dualview.cli import main as cli


def run(argv):
    code = cli([str(a) for a in argv])
    if code != 0:
        raise SystemExit(f"command failed ({code}): {' '.join(map(str, argv))}")


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--cases", type=int, default=500)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--backbone", default="inception_lite", choices=("inception_lite", "alexnet_small"))
    return p.parse_args()


def main():
    args = parse_args()
    data = args.out / "data"
    if not data.is_dir():
        run(["synth", "--out", data, "--cases", args.cases, "--seed", args.seed])
    evals = []
    for kind in ("parallel", "multimodal"):
        t0 = time.perf_counter()
        run(["train", "--data", data, "--out", args.out / kind, "--kind", kind, "--backbone", args.backbone,
             "--epochs", args.epochs, "--seed", args.seed, "--split-seed", args.seed, "--seed-crop", 256])
        print(f"{kind}: trained in {time.perf_counter() - t0:.0f}s")
        run(["eval", "--data", data, "--checkpoint", args.out / kind, "--out", args.out / f"eval_{kind}",
             "--seed-crop", 256])
        evals.append(args.out / f"eval_{kind}")
    run(["report", *evals, "--out", args.out / "comparison.txt"])


if __name__ == "__main__":
    main()
