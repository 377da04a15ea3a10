"""Where projector logic departs from Boolean logic: pair classifications and
distributivity defects for random qubit and qutrit projector triples."""
import argparse

import numpy as np

from catfilter.logic import boolean_lattice_defects, classify_pair, distributivity_witness
from catfilter.operators import projector_onto, random_unitary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    defects, incompatible = [], 0
    for _ in range(args.n):
        ps = [projector_onto(random_unitary(args.dim, rng)[:, :1]) for _ in range(3)]
        defects.append(distributivity_witness(*ps)[1])
        incompatible += classify_pair(ps[0], ps[1]).incompatible
    defects = np.array(defects)
    print(f"Boolean lattice (universe 3) worst defect: {boolean_lattice_defects(3):.1e}")
    print(f"random rank-1 triples in C^{args.dim}: {np.mean(defects > 1e-9):.3f} non-distributive, "
          f"median defect {np.median(defects):.3f}, max {defects.max():.3f}")
    print(f"incompatible pairs: {incompatible}/{args.n}")


if __name__ == "__main__":
    main()
