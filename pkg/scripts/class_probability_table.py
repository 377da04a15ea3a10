"""Trajectory-class probabilities from the enumeration oracle next to the
p-free exponent formulas and the exp(-p nu t) forms.

At p = 1 all columns agree; for p < 1 only the exp(-p nu t) forms match.
"""
import argparse
import math

from catfilter.cat import CatModelParams
from catfilter.chains import class_probabilities, counting_moments


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, nargs="+", default=[0.3, 0.7, 1.0])
    ap.add_argument("--t", type=float, nargs="+", default=[0.5, 1.0, 2.0, 5.0])
    ap.add_argument("--alpha", type=float, default=0.6)
    args = ap.parse_args()
    alpha = args.alpha
    beta = math.sqrt(1 - alpha ** 2)
    a2, b2 = alpha ** 2, beta ** 2

    header = f"{'p':>5} {'t':>5} {'P1 oracle':>12} {'P1 p-free':>12} {'P1 exp(-pnt)':>13} {'E[n1]':>10} {'P0 oracle':>12} {'P0 p-free':>12}"
    print(header)
    for p in args.p:
        params = CatModelParams(p=p, alpha=alpha, beta=beta)
        for t in args.t:
            cp = class_probabilities(t, params)
            cm = counting_moments(t, params)
            free = 1 - math.exp(-t)
            print(f"{p:5.2f} {t:5.2f} {cp.p_class1:12.8f} {b2 * free:12.8f} "
                  f"{b2 * (1 - math.exp(-p * t)):13.8f} {cm.mean_deaths:10.8f} "
                  f"{cp.p_class0:12.8f} {a2 * free:12.8f}")


if __name__ == "__main__":
    main()
