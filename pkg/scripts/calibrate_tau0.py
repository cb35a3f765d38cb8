"""Empirical Gram-Schmidt threshold versus the provable ``1 / (4 n)``."""

import argparse

from barylab.forms import calibrate_tau0, tau0


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nmax", type=int, default=12)
    args = p.parse_args()
    print("n,tau0,empirical,empirical_c")
    for n in range(4, args.nmax + 1):
        emp = calibrate_tau0(n, args.trials, args.seed)
        print(f"{n},{tau0(n):.6g},{emp:.6g},{emp * n:.4g}")


if __name__ == "__main__":
    main()
