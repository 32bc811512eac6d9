"""Run the toy teacher/student loop and print the acceptance quantities.

    python3 scripts/run_toy_training.py --out report.csv
    python3 scripts/run_toy_training.py --lambda1 0 --seeds 42 43 44

Prints, per seed, the 20-step moving average of l_total at steps 20 and
``steps`` and the teacher/student relation MI at the first and last step.
"""

import argparse

from renyikd.losses import LossWeights
from renyikd.train import TrainConfig, moving_average, run_toy_training


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[42])
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--lambda1", type=float, default=1.0)
    ap.add_argument("--lambda2", type=float, default=0.5)
    ap.add_argument("--out", help="CSV path for the first seed's report")
    args = ap.parse_args()

    print("seed,ma20_at_20,ma20_at_end,mi_first,mi_last")
    for i, seed in enumerate(args.seeds):
        cfg = TrainConfig(seed=seed, steps=args.steps, weights=LossWeights(args.lambda1, args.lambda2))
        rep = run_toy_training(cfg)
        ma = moving_average(rep.column("l_total"), 20)
        mi = rep.column("mi_ts")
        print(f"{seed},{ma[min(19, len(ma) - 1)]:.6f},{ma[-1]:.6f},{mi[0]:.6f},{mi[-1]:.6f}")
        if i == 0 and args.out:
            rep.write_csv(args.out)


if __name__ == "__main__":
    main()
