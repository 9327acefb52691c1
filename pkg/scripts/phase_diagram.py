"""Print a coarse text phase diagram and the transition lines for one model family.

    python scripts/phase_diagram.py --family isinggauss:2
    python scripts/phase_diagram.py --family gaussgauss:3 --alpha 3.2:8:12 --lam 0.5:3:16
"""

import argparse

import numpy as np

from densefactor.models import family_name, parse_family
from densefactor.replica import trace_phase_diagram

SYMBOL = {"PM": ".", "I": "1", "II": "2", "III": "3", "IV": "4", "V": "5", "impossible": ".", "hard": "h", "easy": "e"}


def grid(text):
    lo, hi, n = text.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", default="isinggauss:2")
    ap.add_argument("--alpha", default="0.4:3.0:14", help="lo:hi:count")
    ap.add_argument("--lam", default="0.3:4.0:20", help="lo:hi:count")
    args = ap.parse_args()

    fam = parse_family(args.family)
    alphas, lams = grid(args.alpha), grid(args.lam)
    points, lines = trace_phase_diagram(fam, alphas, lams)
    region = {(pt.alpha, pt.lam): pt.region for pt in points}

    print(f"{family_name(fam)}: rows lambda (top = largest), columns alpha")
    for lam in lams[::-1]:
        print(f"{lam:6.2f} " + " ".join(SYMBOL.get(region[(a, lam)], "?") for a in alphas))
    print("       " + " ".join(f"{a:.1f}"[-1] for a in alphas))
    print("\nalpha  lambda_star  lambda_d  lambda_c")
    fmt = lambda v: f"{v:9.4f}" if v is not None else "        -"
    for tl in lines:
        print(f"{tl.alpha:5.2f}  {fmt(tl.lambda_star)}  {fmt(tl.lambda_d)}  {fmt(tl.lambda_c)}")


if __name__ == "__main__":
    main()
