"""Time the order-2 Frobenius path against eigenvalue entropies of several orders.

    python3 scripts/bench_alpha.py --sizes 64 128 256 512 --alphas 1.01 2 3
"""

import argparse

from renyikd.cli import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--alphas", type=float, nargs="+", default=[1.01, 2.0, 3.0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("n,path,alpha,mean_ms,std_ms,speedup_vs_frob")
    for n in args.sizes:
        for alpha in args.alphas:
            frob, eig = bench(n, args.trials, alpha, args.seed)
            if alpha == args.alphas[0]:
                print(f"{n},frob,2.0,{frob['mean_ms']:.3f},{frob['std_ms']:.3f},1.0")
            print(f"{n},eig,{alpha},{eig['mean_ms']:.3f},{eig['std_ms']:.3f},{eig['speedup_vs_frob']:.1f}")


if __name__ == "__main__":
    main()
