"""Solve and certify the bundled instance over several seeds and summarise.

    python3 scripts/run_example4.py --seeds 5 --out reports/sweep
"""
import argparse
from pathlib import Path

from rosenblatt_nii.cli import run_example4


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--first-seed", type=int, default=20240611)
    ap.add_argument("--out", default="reports/sweep")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    print("seed        verdict    iters  max theta1 ratio  M0 max   failing")
    for k in range(args.seeds):
        seed = args.first_seed + k
        rep, _ = run_example4(args.set + [f"seed={seed}"], Path(args.out) / str(seed))
        s = rep["solver"]
        m0 = rep["hypotheses"]["M0"]["max"]
        print(f"{seed:<11d} {s['verdict']:<10s} {s['iterations']:<6d} {s['max_theta1_ratio']:<17.3e} "
              f"{m0:<8.4f} {','.join(rep['failing']) or '-'}")


if __name__ == "__main__":
    main()
