"""Bayes-optimal equations of state, free energies, transition lines and
phase classification.

Every family reduces on the Nishimori line (m = q, Q = 1) to

    m = prior_map(A(m)),

with A the effective field.  The Gaussian prior has prior_map(A) = A/(1+A),
the Ising prior has prior_map(A) = E tanh(A + sqrt(A) z).
Passing ``lam=math.inf`` uses the noiseless-limit field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .channels import PriorKind
from .models import GaussGauss, GaussSign, IsingGauss, MixedGaussGauss, family_name
from .numerics import (
    CLAMP_EPS,
    DEFAULT_QUADRATURE,
    BracketError,
    QuadratureSpec,
    bracket_root,
    damped_fixed_point,
    gauss_expect_adaptive,
    h_func,
)
from .state_evolution import sign_overlap_integral, tanh_moments

M_TOP = 1.0 - CLAMP_EPS
DEDUP_TOL = 1e-8
LAMBDA_CAP = 1e6
DAMPED_MIN = 1e-4


# ---- equation of state ----------------------------------------------------


def _species(family, alpha):
    return family.species(alpha)


def effective_field(family, m: float, alpha: float, lam: float, spec=DEFAULT_QUADRATURE) -> float:
    if m <= 0.0:
        return 0.0
    if isinstance(family, GaussSign):
        p = family.p
        return 2.0 * alpha * m ** (p - 1) * sign_overlap_integral(m, p, spec) / (1.0 - m**p)
    A = 0.0
    for p, a in _species(family, alpha):
        if a == 0:
            continue
        if math.isinf(lam):
            A += a * m ** (p - 1) / (1.0 - m**p)
        else:
            A += a * lam**2 * m ** (p - 1) / (1.0 + lam**2 * (1.0 - m**p))
    return A


def prior_map(prior: PriorKind, A: float, spec=DEFAULT_QUADRATURE) -> float:
    if A <= 0.0:
        return 0.0
    if prior is PriorKind.ISING:
        return tanh_moments(A, A, spec)[0]
    return A / (1.0 + A)


def eos_rhs(family, m, alpha, lam, spec=DEFAULT_QUADRATURE) -> float:
    return prior_map(family.prior, effective_field(family, m, alpha, lam, spec), spec)


def _rhs_grid(family, ms, alpha, lam, spec):
    if family.prior is PriorKind.GAUSSIAN and not isinstance(family, GaussSign):
        A = np.zeros_like(ms)
        for p, a in _species(family, alpha):
            if math.isinf(lam):
                A += a * ms ** (p - 1) / (1.0 - ms**p)
            else:
                A += a * lam**2 * ms ** (p - 1) / (1.0 + lam**2 * (1.0 - ms**p))
        return A / (1.0 + A)
    return np.array([eos_rhs(family, float(m), alpha, lam, spec) for m in ms])


def _scan_grid():
    lo = np.geomspace(1e-10, 1e-2, 40, endpoint=False)
    mid = np.linspace(1e-2, 1.0 - 1e-2, 120, endpoint=False)
    hi = 1.0 - np.geomspace(1e-2, CLAMP_EPS, 40)
    return np.concatenate([lo, mid, hi])


SCAN_GRID = _scan_grid()


@dataclass
class EosSolution:
    m: float
    free_energy: float
    kind: str  # paramagnet | low | high
    stable: bool


@dataclass
class EosBranches:
    solutions: list
    dominant: int
    diagnostics: list = field(default_factory=list)

    @property
    def nonzero(self):
        return [s for s in self.solutions if s.kind != "paramagnet"]

    @property
    def stable_nonzero(self):
        return [s for s in self.nonzero if s.stable]

    def of_kind(self, kind):
        return [s for s in self.solutions if s.kind == kind]

    @property
    def m_values(self):
        return [s.m for s in self.solutions]


def _slope(family, m, alpha, lam, spec):
    h = 1e-6 * max(min(m, 1.0 - m), 1e-6)
    return (eos_rhs(family, m + h, alpha, lam, spec) - eos_rhs(family, m - h, alpha, lam, spec)) / (2 * h)


def solve_eos(family, alpha: float, lam: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> EosBranches:
    """All fixed points of the equation of state in [0, 1)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if isinstance(family, GaussSign):
        lam = 1.0  # observations are invariant under rescaling of lambda
    elif not lam > 0:
        raise ValueError("lambda must be positive")
    diags = []

    def red(m):  # (RHS - m)/m, same zeros as the residual for m > 0
        return eos_rhs(family, m, alpha, lam, spec) / m - 1.0

    ms = SCAN_GRID
    vals = _rhs_grid(family, ms, alpha, lam, spec) / ms - 1.0
    roots = []
    for k in range(len(ms) - 1):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(float(ms[k]))
        elif a * b < 0:
            roots.append(bracket_root(red, float(ms[k]), float(ms[k + 1]), tol=1e-15))
    if math.isinf(lam) and vals[-1] >= 0.0:
        # noiseless limit: the perfect-recovery solution sits at the clamp
        roots.append(float(ms[-1]))

    for x0 in (1e-6, 0.5, 1.0 - 1e-6):
        res = damped_fixed_point(lambda m: eos_rhs(family, m, alpha, lam, spec), x0, max_iter=200)
        if not res.converged:
            diags.append(f"damped iteration from {x0} unconverged (residual {res.residual:.2e})")
            continue
        # near m = 0 the residual is O(m^3) at criticality; small roots come from the scan
        if res.value > DAMPED_MIN and all(abs(res.value - r) > 1e-6 for r in roots):
            roots.append(res.value)
            diags.append(f"root {res.value:.10g} found only by damped iteration")

    roots = sorted(roots)
    uniq = []
    for r in roots:
        if r > DEDUP_TOL and (not uniq or r - uniq[-1] > DEDUP_TOL):
            uniq.append(r)

    sols = [EosSolution(0.0, free_energy(family, 0.0, alpha, lam, spec), "paramagnet",
                        paramagnet_stability(family, alpha, lam)[0])]
    for k, r in enumerate(uniq):
        kind = "high" if (len(uniq) >= 2 and k == len(uniq) - 1) else "low"
        try:
            f = free_energy(family, r, alpha, lam, spec)
        except (ArithmeticError, ValueError) as exc:
            diags.append(f"dropped branch m={r:.6g}: {exc}")
            continue
        if not math.isfinite(f):
            diags.append(f"dropped branch m={r:.6g}: non-finite free energy")
            continue
        stable = abs(_slope(family, r, alpha, lam, spec)) < 1.0 if r < M_TOP else True
        sols.append(EosSolution(r, f, kind, stable))
    dom = int(np.argmin([s.free_energy for s in sols]))
    return EosBranches(sols, dom, diags)


# ---- free energies --------------------------------------------------------


def _log_cosh(u):
    a = abs(u)
    return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)


def _h_log_h_integral(m, p, spec):
    qp = m**p
    k = math.sqrt(qp / (1.0 - qp))
    if k == 0.0:
        return 0.5 * math.log(0.5)

    def f(x):
        h = float(h_func(x))
        return h * math.log(h) if h > 0 else 0.0

    return gauss_expect_adaptive(f, spec, scale=k)


def free_energy(family, m: float, alpha: float, lam: float, spec=DEFAULT_QUADRATURE) -> float:
    """Bayes-optimal RS free energy at m = q, Q = 1, up to m-independent constants.

    Lower is thermodynamically preferred.
    """
    if not 0.0 <= m < 1.0:
        raise ValueError(f"m must lie in [0, 1), got {m!r}")
    if isinstance(family, GaussSign):
        p = family.p
        return -0.5 * (m + math.log1p(-m)) - (2.0 * alpha / p) * _h_log_h_integral(m, p, spec)
    noise = 0.0
    for p, a in _species(family, alpha):
        if math.isinf(lam):
            noise += (a / (2 * p)) * math.log1p(-(m**p)) if m > 0 else 0.0
        else:
            noise += (a / (2 * p)) * math.log1p(lam**2 * (1.0 - m**p))
    if family.prior is PriorKind.ISING:
        A = effective_field(family, m, alpha, lam, spec)
        if A == 0.0:
            return noise
        sa = math.sqrt(A)
        lc = gauss_expect_adaptive(_log_cosh, spec, loc=A, scale=sa, breaks=(0.0,))
        return 0.5 * A * (1.0 + m) - lc + noise
    return -0.5 * (m + math.log1p(-m)) + noise


def delta_f_gauss(m: float, alpha: float, lam: float, p: int) -> float:
    """f(0) - f(m) for the Gaussian prior with additive noise."""
    return 0.5 * math.log1p(-m) + 0.5 * m - (alpha / (2 * p)) * math.log1p(-(lam**2 / (1 + lam**2)) * m**p)


# ---- stability, spinodal, crossings ---------------------------------------


def paramagnet_coefficient(family, alpha: float, lam: float) -> float:
    """d RHS / dm at m = 0 (0 when the linear term vanishes)."""
    if isinstance(family, GaussSign):
        return 2.0 * alpha / math.pi if family.p == 2 else 0.0
    k = 0.0
    for p, a in _species(family, alpha):
        if p == 2:
            k += a if math.isinf(lam) else a * lam**2 / (1.0 + lam**2)
    return k


def paramagnet_stability(family, alpha: float, lam: float):
    """(stable, lambda_star); lambda_star is absent unless a finite lambda destabilizes m=0."""
    k = paramagnet_coefficient(family, alpha, lam)
    a2 = sum(a for p, a in _species(family, alpha) if p == 2)
    lam_star = None
    if not isinstance(family, GaussSign) and a2 > 1.0:
        lam_star = 1.0 / math.sqrt(a2 - 1.0)
    return k < 1.0, lam_star


def _inverse_prior_map(prior, m, spec):
    if prior is PriorKind.GAUSSIAN:
        return m / (1.0 - m)
    # E tanh(A + sqrt(A) z) is increasing in A
    hi = 1.0
    while prior_map(prior, hi, spec) < m:
        hi *= 2.0
        if hi > 1e8:
            return math.inf
    return bracket_root(lambda A: prior_map(prior, A, spec) - m, 0.0, hi, tol=1e-13)


def lambda_of_m(family, m: float, alpha: float, spec=DEFAULT_QUADRATURE) -> float:
    """The lambda at which m solves the equation of state (nan if none)."""
    A = _inverse_prior_map(family.prior, m, spec)
    sp = _species(family, alpha)
    if len(sp) == 1:
        p, a = sp[0]
        den = a * m ** (p - 1) - A * (1.0 - m**p)
        return math.sqrt(A / den) if den > 0 else math.nan

    def field_minus(l):
        return effective_field(family, m, alpha, l) - A

    if effective_field(family, m, alpha, math.inf) <= A:
        return math.nan
    lo, hi = 1e-8, 1.0
    while field_minus(hi) < 0:
        hi *= 2.0
    return bracket_root(field_minus, lo, hi, tol=1e-14)


def gauss3_spinodal_m(alpha: float) -> float:
    return (alpha - math.sqrt(alpha * (alpha - 3.0))) / 3.0


def gauss3_lambda(m: float, alpha: float) -> float:
    return 1.0 / math.sqrt(m**3 - alpha * m**2 + alpha * m - 1.0)


def _curve_point(family, alpha, s, spec):
    """(m, lambda) on the branch curve. The curve parameter s is the effective
    field A for the Ising prior (m(A) is monotone and cheap forward) and m itself
    for the Gaussian prior."""
    if family.prior is PriorKind.ISING:
        m = prior_map(family.prior, s, spec)
        p, a = _species(family, alpha)[0]
        den = a * m ** (p - 1) - s * (1.0 - m**p)
        return m, (math.sqrt(s / den) if den > 0 else math.inf)
    return s, lambda_of_m(family, s, alpha, spec)


@lru_cache(maxsize=512)
def branch_curve_extrema(family, alpha: float, spec=DEFAULT_QUADRATURE):
    """Local minima and maxima (in lambda) of the curve of magnetized solutions,
    plus a flag for a pole (the curve escaping to lambda = inf at interior m)."""
    if family.prior is PriorKind.ISING:
        grid = np.geomspace(1e-3, 60.0, 240)
    else:
        grid = np.linspace(1e-3, 1.0 - 1e-3, 240)
    lams = np.array([_curve_point(family, alpha, float(s), spec)[1] for s in grid])
    lams = np.where(np.isfinite(lams), lams, np.inf)
    mins, maxs = [], []
    pole = bool(np.any(np.isinf(lams[1:-1]) & np.isfinite(lams[:-2])) and np.isfinite(lams[-1]))

    def refine(k, sign):
        res = optimize.minimize_scalar(
            lambda s: sign * _curve_point(family, alpha, s, spec)[1],
            bounds=(grid[k - 1], grid[k + 1]),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, grid[k])},
        )
        return float(sign * res.fun)

    for k in range(1, len(grid) - 1):
        w = lams[k - 1 : k + 2]
        if not np.all(np.isfinite(w)):
            continue
        if w[1] <= w[0] and w[1] <= w[2] and (w[0] > w[1] or w[2] > w[1]):
            mins.append(refine(k, 1.0))
        elif w[1] >= w[0] and w[1] >= w[2] and (w[0] < w[1] or w[2] < w[1]):
            maxs.append(refine(k, -1.0))
    return tuple(mins), tuple(maxs), pole


def spinodal(family, alpha: float, spec=DEFAULT_QUADRATURE):
    """Smallest lambda at which a metastable magnetized branch exists (absent if none)."""
    if isinstance(family, GaussSign):
        return None
    if isinstance(family, GaussGauss) and family.p == 3:
        if alpha <= 3.0:
            return None
        return gauss3_lambda(gauss3_spinodal_m(alpha), alpha)
    mins, _, _ = branch_curve_extrema(family, alpha, spec)
    return min(mins) if mins else None


def _high_minus_rest(family, alpha, lam, spec):
    br = solve_eos(family, alpha, lam, spec)
    stable = [s for s in br.solutions if s.stable]
    if len(stable) < 2:
        return None
    top = max(stable, key=lambda s: s.m)
    if top.m == 0.0:
        return None
    return top.free_energy - min(s.free_energy for s in stable if s is not top)


def critical_line(family, alpha: float, spec=DEFAULT_QUADRATURE):
    """First-order transition: lambda where the high branch overtakes its competitor."""
    lam_d = spinodal(family, alpha, spec)
    if lam_d is None:
        return None
    # at lam_d itself the branch is a double root the scan cannot see; step inside
    d_lo = None
    for eps in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
        lo = lam_d * (1.0 + eps)
        d_lo = _high_minus_rest(family, alpha, lo, spec)
        if d_lo is not None:
            break
    if d_lo is None or d_lo <= 0:
        return None
    # walk up geometrically towards 10*lam_d (then beyond) until the sign flips
    hi = None
    for cand in np.geomspace(lo, 10.0 * lam_d, 25)[1:]:
        d = _high_minus_rest(family, alpha, float(cand), spec)
        if d is None:
            return None  # coexistence ends before the branches cross
        if d < 0:
            hi = float(cand)
            break
        lo = float(cand)
    while hi is None:
        cand = lo * 2.0
        if cand > LAMBDA_CAP:
            return None
        d = _high_minus_rest(family, alpha, cand, spec)
        if d is None:
            return None
        if d < 0:
            hi = cand
        else:
            lo = cand

    def g(l):
        d = _high_minus_rest(family, alpha, l, spec)
        if d is None:
            raise BracketError(f"coexistence lost at lambda={l}")
        return d

    return bracket_root(g, lo, hi, tol=1e-10)


def code_free_energies(R: float, lam: float) -> tuple[float, float]:
    """Ising free energies of m=0 and m=1 with p, alpha -> infinity at rate R = p/alpha
    (common constants dropped)."""
    return math.log1p(lam**2) / (2.0 * R), math.log(2.0)


def capacity_check(lam: float) -> float:
    """Gaussian channel capacity (bits) at signal-to-noise lambda^2."""
    return 0.5 * math.log2(1.0 + lam**2)


def shannon_code_limit(R: float) -> tuple[float, float]:
    if not R > 0:
        raise ValueError("R must be positive")

    def d(lam):
        f0, f1 = code_free_energies(R, lam)
        return f0 - f1

    hi = 1.0
    while d(hi) < 0:
        hi *= 2.0
    lam_c = bracket_root(d, 0.0, hi, tol=1e-15)
    return lam_c, capacity_check(lam_c)


def easy_hard_threshold(family=IsingGauss(2), lo: float = 1.05, hi: float = 2.0, tol: float = 1e-4) -> float:
    """alpha_P: in the noiseless limit a stable low-overlap branch exists for alpha < alpha_P."""

    def has_low(alpha):
        br = solve_eos(family, alpha, math.inf)
        return any(s.stable and s.m < M_TOP * 0.999 for s in br.nonzero)

    if not has_low(lo) or has_low(hi):
        raise ValueError("threshold not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_low(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---- phase classification -------------------------------------------------


def coexistence_window(family, alpha: float):
    """(lam_lo, lam_hi) where two stable magnetized branches coexist with an
    unstable paramagnet (Ising p=2 above alpha=1); lam_hi may be inf."""
    mins, maxs, pole = branch_curve_extrema(family, alpha)
    if not mins:
        return None
    lam_lo = min(mins)
    above = [x for x in maxs if x > lam_lo]
    if pole:
        return lam_lo, math.inf
    return (lam_lo, max(above)) if above else None


def _ising2_region(family, alpha, lam, br):
    pm_stable = br.solutions[0].stable
    stable_nz = br.stable_nonzero
    if pm_stable:
        return "I" if stable_nz else "PM"
    if len(stable_nz) >= 2:
        return "II"
    win = coexistence_window(family, alpha)
    if win is None:
        return "IV"
    lam_lo, lam_hi = win
    if lam < lam_lo:
        return "V"
    return "III" if lam > lam_hi else "II"


def classify_phase(family, alpha: float, lam: float) -> str:
    br = solve_eos(family, alpha, lam)
    if isinstance(family, IsingGauss) and family.p == 2:
        return _ising2_region(family, alpha, lam, br)
    stable_nz = br.stable_nonzero
    if not stable_nz:
        return "impossible"
    if not br.solutions[0].stable and len(stable_nz) == 1:
        return "easy"
    return "hard"


@dataclass
class PhasePoint:
    alpha: float
    lam: float
    region: str
    m_para: float
    m_low: float | None
    m_high: float | None
    f_low_minus_f_para: float | None
    f_high_minus_f_para: float | None

    def row(self):
        return (self.alpha, self.lam, self.region, self.m_para, self.m_low, self.m_high,
                self.f_low_minus_f_para, self.f_high_minus_f_para)


@dataclass
class TransitionLines:
    alpha: float
    lambda_star: float | None
    lambda_d: float | None
    lambda_c: float | None

    def row(self):
        return (self.alpha, self.lambda_star, self.lambda_d, self.lambda_c)


PHASE_HEADER = "alpha,lambda,region,m_para,m_low,m_high,f_low_minus_f_para,f_high_minus_f_para"
TRANSITION_HEADER = "alpha,lambda_star,lambda_d,lambda_c"


def phase_point(family, alpha, lam) -> PhasePoint:
    br = solve_eos(family, alpha, lam)
    f0 = br.solutions[0].free_energy
    low = br.of_kind("low")
    high = br.of_kind("high")
    m_low = low[0].m if low else None
    m_high = high[0].m if high else None
    return PhasePoint(
        alpha, lam, classify_phase(family, alpha, lam), 0.0, m_low, m_high,
        (low[0].free_energy - f0) if low else None,
        (high[0].free_energy - f0) if high else None,
    )


def transition_lines(family, alpha) -> TransitionLines:
    _, lam_star = paramagnet_stability(family, alpha, 1.0)
    lam_d = spinodal(family, alpha)
    try:
        lam_c = critical_line(family, alpha)
    except BracketError:
        lam_c = None
    return TransitionLines(alpha, lam_star, lam_d, lam_c)


def trace_phase_diagram(family, alpha_grid, lambda_grid, with_lines: bool = True):
    alpha_grid = [float(a) for a in alpha_grid]
    lambda_grid = [float(l) for l in lambda_grid]
    if alpha_grid != sorted(alpha_grid) or lambda_grid != sorted(lambda_grid):
        raise ValueError("grids must be sorted")
    points = [phase_point(family, a, l) for a in alpha_grid for l in lambda_grid]
    lines = [transition_lines(family, a) for a in alpha_grid] if with_lines else []
    return points, lines


def describe(family) -> str:
    return family_name(family)
