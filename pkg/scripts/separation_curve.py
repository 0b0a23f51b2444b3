"""Frequency of |<psi_tilde, psi2>| >= 7/8 as the sample grows, under the split-3n scheme."""

import argparse

import numpy as np

from hmmfrontier.harness import ExperimentConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="theta_star")
    ap.add_argument("--M", type=int, default=3)
    ap.add_argument("--tau", type=float, default=4.0)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--log2n", default="12,13,14,15,16,17,18")
    args = ap.parse_args()

    ns = tuple(2 ** int(k) for k in args.log2n.split(","))
    cfg = ExperimentConfig(model=args.model, n=ns, reps=args.reps, seed=args.seed, M=args.M,
                           tau=args.tau, estimator=("direction",))
    rows = run_sweep(cfg)
    print(f"{'n':>8} {'success':>8} {'median |<.,psi2>|':>18}")
    for n in ns:
        loss = np.array([r.loss_clamped_or_truncated for r in rows if r.n == n])
        print(f"{n:>8d} {np.mean(loss <= 1 / 8):>8.3f} {np.median(1 - loss):>18.4f}")


if __name__ == "__main__":
    main()
