"""Dream a benign test case toward malignant and print the score trace.

    python scripts/dream_demo.py --run runs/bench/parallel --data runs/bench/data --out runs/dream
"""

import argparse
from pathlib import Path

from dualview import checkpoint as ckpt
from dualview.data import DatasetSplit, parse_manifest, prepare
from dualview.dream import DreamConfig, clean_scores, dream, write_frames


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--run", type=Path, required=True, help="training run directory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--every", type=int, default=20, help="print every N iterations")
    return p.parse_args()


def main():
    args = parse_args()
    net = ckpt.load(args.run / "checkpoint.dvnc")
    split = DatasetSplit.from_text((args.run / "split.txt").read_text())
    cases = {c.patient_id: c for c in parse_manifest(args.data)[0]}
    benign = [pid for pid in split.test if cases[pid].label == 0]
    if not benign:
        raise SystemExit("no benign case in the test split")
    cc, mlo = prepare(cases[benign[0]], 256).test_inputs()
    _, p0 = clean_scores(net, cc, mlo, target=1)
    config = DreamConfig(max_iter=args.iters, rng_seed=args.seed)
    state = dream(net, cc, mlo, config)
    write_frames(state, args.out, config)
    print(f"{benign[0]}: start p_malignant {p0:.4f}")
    for f in state.frames:
        if f.iteration % args.every == 0 or f.iteration == 1:
            print(f"iter {f.iteration:4d}  p_malignant {f.p_target:.4f}")
    print(f"frames and trace.csv written to {args.out}")


if __name__ == "__main__":
    main()
