"""Construction-time study: learned incidence vs exact k-NN vs k-means.

Prints the timing table and growth ratios relative to the smallest N.

    python scripts/construction_timing.py --n-list 1000,2000,4000,8000,16000
"""
import argparse

from dyhg.dhcm import METHODS, time_construction


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-list", default="1000,2000,4000,8000,16000")
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--knn-max-n", type=int, default=8000)
    args = ap.parse_args()
    n_list = [int(v) for v in args.n_list.split(",")]

    print("method,N,mean_seconds,ratio_to_first")
    for method in METHODS:
        ns = [n for n in n_list if method != "knn" or n <= args.knn_max_n]
        reps = args.reps * 4 if method == "dhcm" else args.reps  # sub-millisecond timings are noisy
        table = time_construction(method, ns, args.dim, reps)
        base = table[0][1]
        for n, sec in table:
            print(f"{method},{n},{sec:.6g},{sec / base:.1f}", flush=True)


if __name__ == "__main__":
    main()
