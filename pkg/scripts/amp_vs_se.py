"""Instance-averaged G-AMP (or r-BP) magnetization against state evolution.

Example:
    python scripts/amp_vs_se.py --family isinggauss:2 --alpha 1.6 --lam 2 --instances 5
    python scripts/amp_vs_se.py --family gaussgauss:3 --alpha 5 --lam 2 --N 1008 \
        --spreading deterministic --scheme informative --max-t 40
"""

import argparse
import time

import numpy as np

from densefactor.channels import parse_spreading
from densefactor.hypergraph import sample_mixed
from densefactor.instance import generate_instance
from densefactor.models import parse_family
from densefactor.mp_engine import Algorithm, parse_scheme, run_mp
from densefactor.state_evolution import SEModel, run_se


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", default="isinggauss:2")
    ap.add_argument("--alpha", type=float, default=1.6)
    ap.add_argument("--lam", type=float, default=2.0)
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--M", type=int, default=100)
    ap.add_argument("--spreading", default="rademacher")
    ap.add_argument("--scheme", default="uninformative:0.01")
    ap.add_argument("--algorithm", choices=["gamp", "rbp"], default="gamp")
    ap.add_argument("--damping", type=float, default=None)
    ap.add_argument("--instances", type=int, default=5)
    ap.add_argument("--max-t", type=int, default=100)
    ap.add_argument("--seed", type=int, default=100)
    ap.add_argument("--corrected", action="store_true", help="per-plane sign-corrected magnetization")
    args = ap.parse_args()

    fam = parse_family(args.family)
    scheme = parse_scheme(args.scheme)
    alg = Algorithm(args.algorithm)
    t0 = time.perf_counter()
    trajs = []
    for k in range(args.instances):
        seed = args.seed + k
        g = sample_mixed(args.N, args.M, fam.species(args.alpha), seed)
        inst = generate_instance(g, args.M, args.lam, fam.prior, fam.channel(), parse_spreading(args.spreading), seed)
        tr = run_mp(alg, inst, scheme, damping=args.damping, max_t=args.max_t, conv_tol=1e-6, seed=seed,
                    corrected=args.corrected)
        flag = f"diverged at {tr.diverged_step}" if tr.diverged else ("converged" if tr.converged else "max_t")
        print(f"instance {k}: {flag} after {tr.steps} steps, m={tr.final[1]:.4f}")
        trajs.append(tr)

    start = (1.0, 1.0, 1.0) if scheme.kind == "informative" else (scheme.a, scheme.a, 1.0)
    se = run_se(start, SEModel.from_family(fam, args.alpha, args.lam), max_t=args.max_t, conv_tol=0.0).column("m")

    print(f"\n{'t':>4} {'m_amp':>8} {'m_se':>8} {'|dev|':>8}")
    n = max(len(t.records) for t in trajs)
    worst = 0.0
    for s in range(n):
        m = np.mean([t.records[s][1] for t in trajs if len(t.records) > s])
        ref = se[min(s, len(se) - 1)]
        worst = max(worst, abs(m - ref))
        if s % 5 == 0 or s == n - 1:
            print(f"{s:>4} {m:8.4f} {ref:8.4f} {abs(m - ref):8.4f}")
    print(f"\nmax deviation {worst:.4f}; {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
