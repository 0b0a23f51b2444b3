"""Mean L2 risk of the rough and smooth estimators on each emission density."""

import argparse

import numpy as np

from hmmfrontier.harness import ExperimentConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="rough_smooth")
    ap.add_argument("--n", type=int, default=2**15)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=4)
    ap.add_argument("--direction", default="oracle")
    args = ap.parse_args()

    ests = ("rough-f0", "smooth-f0", "rough-f1", "smooth-f1")
    cfg = ExperimentConfig(model=args.model, n=(args.n,), reps=args.reps, seed=args.seed,
                           estimator=ests, direction=args.direction)
    rows = run_sweep(cfg)
    risk = {e: np.mean([r.loss_clamped_or_truncated for r in rows if r.estimator == e])
            for e in ests}
    for e in ests:
        print(f"{e:>10} {risk[e]:.4e}")
    for f in ("f0", "f1"):
        print(f"rough/smooth on {f}: {risk['rough-' + f] / risk['smooth-' + f]:.3f}")


if __name__ == "__main__":
    main()
