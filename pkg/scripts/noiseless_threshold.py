"""Easy-hard threshold of the p=2 Ising model: exact noiseless map vs large finite lambda."""

from densefactor.models import IsingGauss
from densefactor.replica import M_TOP, easy_hard_threshold, solve_eos


def low_branch_edge(lam, lo=1.05, hi=2.0, tol=1e-4):
    def has_low(alpha):
        return any(s.stable and s.m < M_TOP * 0.999 for s in solve_eos(IsingGauss(2), alpha, lam).nonzero)

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if has_low(mid) else (lo, mid)
    return 0.5 * (lo + hi)


if __name__ == "__main__":
    print(f"lambda = inf : alpha_P = {easy_hard_threshold(IsingGauss(2)):.4f}")
    for lam in (5.0, 10.0, 20.0, 50.0):
        print(f"lambda = {lam:<4g}: low branch disappears at alpha = {low_branch_edge(lam):.4f}")
    print("reference value quoted for the noiseless limit: 1.30 +/- 0.02")
