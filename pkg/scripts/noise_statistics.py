"""Moment, slope and stationarity statistics of simulated Rosenblatt paths.

    python3 scripts/noise_statistics.py --hurst 0.75 --n 128 --paths 2000
"""
import argparse
import math

import numpy as np

from rosenblatt_nii.noise import (
    continuum_variance,
    increment_stationarity_test,
    projected_kernel,
    simulate_batch,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hurst", type=float, default=0.75)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--diagonal", choices=["wick", "exclude"], default="wick")
    args = ap.parse_args()

    Z = simulate_batch(args.hurst, args.n, range(args.paths), diagonal=args.diagonal)
    times = np.linspace(0.0, 1.0, args.n + 1)
    z1 = Z[:, -1]
    print(f"mean Z(1) / se          {z1.mean() / (z1.std(ddof=1) / math.sqrt(z1.size)):+.3f}")
    ts = np.array([0.25, 0.5, 0.75, 1.0])
    m2 = np.mean(Z[:, (ts * args.n).astype(int)] ** 2, axis=0)
    print(f"log-log slope           {np.polyfit(np.log(ts), np.log(m2), 1)[0]:.4f}  (2H = {2 * args.hurst})")
    exact = projected_kernel(args.hurst, args.n).exact_variance(args.diagonal)[-1]
    print(f"E Z(1)^2  sample        {np.mean(z1**2):.5f}")
    print(f"          discrete      {exact:.5f}")
    print(f"          continuum     {continuum_variance(args.hurst):.5f}")
    if args.paths >= 500:
        st = increment_stationarity_test(Z, times, 0.25)["statistic"]
        print(f"stationarity z          {st['z_first_moment']:+.3f} {st['z_second_moment']:+.3f}")


if __name__ == "__main__":
    main()
