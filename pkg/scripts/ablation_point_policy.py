"""Villi-length MAE of the third-point policies on a curved synthetic cohort."""
import argparse

from polymeasure.ablation import point_policy_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 1.0, 2.0, 4.0])
    args = ap.parse_args()
    print(f"{'sigma':>6} {'duplicate_endpoint':>19} {'midpoint':>9}")
    for sigma in args.sigmas:
        r = point_policy_ablation(args.n, args.seed, sigma)
        print(f"{sigma:6.1f} {r['duplicate_endpoint']:19.3f} {r['midpoint']:9.3f}")


if __name__ == "__main__":
    main()
