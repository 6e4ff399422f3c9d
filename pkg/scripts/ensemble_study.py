"""Ensemble size study: member metrics against the averaged ensemble.

Trains ``--members`` parallel networks with consecutive seeds on an existing
synthetic dataset, then evaluates each member and every prefix ensemble.

    python scripts/ensemble_study.py --data runs/bench/data --out runs/ens --members 5
"""

import argparse
from pathlib import Path

import numpy as np

from dualview import checkpoint as ckpt
from dualview.data import DatasetSplit, parse_manifest, prepare
from dualview.evaluate import evaluate
from dualview.models import Ensemble
from dualview.cli import main as cli


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--members", type=int, default=5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--workers", type=int, default=1)
    return p.parse_args()


def main():
    args = parse_args()
    if cli(["train", "--data", str(args.data), "--out", str(args.out), "--ensemble", str(args.members),
            "--workers", str(args.workers), "--epochs", str(args.epochs), "--seed", str(args.seed),
            "--split-seed", str(args.seed), "--seed-crop", "256"]) != 0:
        raise SystemExit("training failed")
    split = DatasetSplit.from_text((args.out / "split.txt").read_text())
    cases, _ = parse_manifest(args.data)
    test = [prepare(c, 256) for c in cases if c.patient_id in set(split.test)]
    members = [ckpt.load(p) for p in sorted(args.out.glob("member_*/checkpoint.dvnc"))]

    reports = [evaluate(m, test) for m in members]
    print(f"{'members':>7}  {'acc':>6}  {'auc':>6}  {'loss':>7}  {'mean member loss':>16}")
    for k in range(1, len(members) + 1):
        rep = evaluate(Ensemble(members[:k]), test)
        mean_loss = np.mean([r.mean_loss for r in reports[:k]])
        auc = f"{rep.auc:.4f}" if rep.auc is not None else "n/a"
        print(f"{k:>7}  {rep.accuracy:.4f}  {auc:>6}  {rep.mean_loss:.5f}  {mean_loss:16.5f}")


if __name__ == "__main__":
    main()
