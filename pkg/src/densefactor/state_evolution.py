"""State evolution: the macroscopic recursion for (m, q, Q).

Hat variables are carried internally multiplied by lambda^2.  For the sign
channel that product does not depend on lambda at all, which makes sign
trajectories exactly invariant under rescaling of lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channels import AdditiveGaussian, ChannelKind, PriorKind, Sign, output_score
from .numerics import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    gauss_expect_adaptive,
    gauss_hermite,
    h_func,
    h_log_deriv,
)
from .trajectory import Trajectory

COV_REG = 1e-14
V_FLOOR = 1e-12
BAYES_TOL = 1e-12  # |m - q| and |Q - 1| below this use the Bayes-optimal closed forms


class CovarianceError(ValueError):
    pass


@dataclass(frozen=True)
class SEModel:
    prior: PriorKind
    channel: ChannelKind
    species: tuple  # ((p, alpha), ...)
    lam: float

    @classmethod
    def from_family(cls, family, alpha: float, lam: float) -> "SEModel":
        return cls(family.prior, family.channel(), tuple(family.species(alpha)), float(lam))

    @property
    def p_max(self) -> int:
        return max(p for p, _ in self.species)


@dataclass(frozen=True)
class SEState:
    m: float
    q: float
    Q: float = 1.0
    hat_chi: float = 0.0
    hat_m: float = 0.0
    hat_q: float = 0.0
    v_eff: float = 0.0


# ---- hats -----------------------------------------------------------------


def _check_cov(m, q, Q, p):
    if q < -1e-12 or Q < q - 1e-12 or m ** (2 * p) > q**p * 1.0 + 1e-12:
        raise CovarianceError(f"indefinite covariance at m={m!r}, q={q!r}, Q={Q!r}, p={p}")


def sign_overlap_integral(q: float, p: int, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """I(q) = E_z[H'(X)^2 / H(X)] with X = -sqrt(q^p / (1 - q^p)) z."""
    qp = max(q, 0.0) ** p
    if qp >= 1.0:
        raise CovarianceError("sign overlap integral needs q^p < 1")
    k = math.sqrt(qp / (1.0 - qp))
    if k == 0.0:
        return 1.0 / math.pi

    if k <= 1.0:
        # smooth on the Gaussian scale: fixed Gauss-Hermite agrees with the
        # adaptive rule to rounding here
        t, w = gauss_hermite(spec.node_count)
        x = k * t
        return float(np.sum(w * (-np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * h_log_deriv(x))))

    def f(x):
        phi = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        return -phi * h_log_deriv(x)

    return gauss_expect_adaptive(f, spec, loc=0.0, scale=k)


def _lam2_hats_additive(m, q, Q, p, lam, delta2):
    denom = lam**2 * (Q**p - q**p) + delta2
    denom = max(denom, V_FLOOR)
    chi = lam**2 / denom
    qh = lam**2 * (lam**2 * (1.0 - 2.0 * m**p + q**p) + delta2) / denom**2
    return chi, chi, qh


def _lam2_hats_sign_bayes(q, Q, p, spec):
    v1 = max(Q**p - q**p, V_FLOOR)
    h = 2.0 * sign_overlap_integral(q, p, spec) / v1
    return h, h, h


def _lam2_hats_sign_general(m, q, Q, p, spec):
    # unit-lambda covariance; every hat scales as 1/lambda^2
    c11, c12, c22 = q**p, m**p, 1.0
    v = max(Q**p - q**p, V_FLOOR)
    sv = math.sqrt(v)
    ch = Sign()
    if c11 <= COV_REG:
        a, s = 0.0, math.sqrt(c22)
        sd = 0.0
    else:
        a = c12 / c11
        s = math.sqrt(max(c22 - c12 * c12 / c11, COV_REG))
        sd = math.sqrt(c11)

    def parts(xi):
        gp, dgp = output_score(ch, xi, 1.0, v)
        gm, dgm = output_score(ch, xi, -1.0, v)
        pp = float(h_func(-a * xi / s))
        pm = 1.0 - pp
        phi = math.exp(-0.5 * (a * xi / s) ** 2) / math.sqrt(2 * math.pi) / s
        return pp, pm, gp, gm, dgp, dgm, phi

    def chi_f(xi):
        pp, pm, _, _, dgp, dgm, _ = parts(xi)
        return -(pp * dgp + pm * dgm)

    def m_f(xi):
        _, _, gp, gm, _, _, phi = parts(xi)
        return phi * (gp - gm)

    def q_f(xi):
        pp, pm, gp, gm, _, _, _ = parts(xi)
        return pp * gp * gp + pm * gm * gm

    if sd == 0.0:
        return chi_f(0.0), m_f(0.0), q_f(0.0)
    return tuple(gauss_expect_adaptive(f, spec, scale=sd, breaks=(0.0,)) for f in (chi_f, m_f, q_f))


def _lam2_hats_additive_quadrature(m, q, Q, p, lam, delta2, spec):
    """Tensor-product Gauss-Hermite over (xi, z, w) after a Cholesky factor of C."""
    C = lam**2 * np.array([[q**p, m**p], [m**p, 1.0]]) + COV_REG * np.eye(2)
    L = np.linalg.cholesky(C)
    n = max(9, spec.node_count // 3)
    t, w = gauss_hermite(n)
    t1, t2, t3 = np.meshgrid(t, t, t, indexing="ij")
    wt = w[:, None, None] * w[None, :, None] * w[None, None, :]
    xi = L[0, 0] * t1
    z = L[1, 0] * t1 + L[1, 1] * t2
    y = z + math.sqrt(delta2) * t3
    V = lam**2 * (Q**p - q**p)
    g, dg = output_score(AdditiveGaussian(math.sqrt(delta2) if delta2 > 0 else 1e-300), xi, y, V)
    chi = float(np.sum(wt * -dg))
    mh = float(np.sum(wt * -dg))  # d g / d z = d g / d y = -dg for additive noise
    qh = float(np.sum(wt * g * g))
    return lam**2 * chi, lam**2 * mh, lam**2 * qh


def lam2_hats(m, q, Q, p, lam, channel, spec=DEFAULT_QUADRATURE, method="auto"):
    """lambda^2 * (hat_chi, hat_m, hat_q) for one species."""
    _check_cov(m, q, Q, p)
    bayes = abs(m - q) <= BAYES_TOL and abs(Q - 1.0) <= BAYES_TOL
    if isinstance(channel, AdditiveGaussian):
        if method == "general":
            return _lam2_hats_additive_quadrature(m, q, Q, p, lam, channel.variance, spec)
        return _lam2_hats_additive(m, q, Q, p, lam, channel.variance)
    if isinstance(channel, Sign):
        if method == "closed" or (method == "auto" and bayes):
            return _lam2_hats_sign_bayes(q, Q, p, spec)
        return _lam2_hats_sign_general(m, q, Q, p, spec)
    raise TypeError(f"unknown channel {channel!r}")


def se_hats(state, channel, lam, p, spec=DEFAULT_QUADRATURE, method="auto"):
    """(hat_chi, hat_m, hat_q) at the order parameters of ``state``."""
    h = lam2_hats(state.m, state.q, state.Q, p, lam, channel, spec, method)
    return tuple(x / lam**2 for x in h)


def theta01(lam, Q0, Q, m, q, p):
    """Gaussian-noise (unit variance) theta_0 and theta_1."""
    denom = lam**2 * (Q**p - q**p) + 1.0
    th0 = (lam**2 * (Q0**p - 2.0 * m**p + q**p) + 1.0) / denom**2
    return th0, th0 - 1.0 / denom


# ---- prior side -----------------------------------------------------------


def tanh_moments(A: float, B: float, spec=DEFAULT_QUADRATURE) -> tuple[float, float]:
    """(E tanh(A + sqrt(B) z), E tanh^2(A + sqrt(B) z))."""
    if B <= 0.0:
        t = math.tanh(A)
        return t, t * t
    sb = math.sqrt(B)
    m1 = gauss_expect_adaptive(math.tanh, spec, loc=A, scale=sb, breaks=(0.0,))
    m2 = gauss_expect_adaptive(lambda u: math.tanh(u) ** 2, spec, loc=A, scale=sb, breaks=(0.0,))
    return m1, m2


def prior_update(prior: PriorKind, A: float, Bq: float, Bchi: float, spec=DEFAULT_QUADRATURE):
    """New (m, q, Q) given the effective fields
    A = sum alpha lam^2 m^(p-1) hat_m, Bq = ... q^(p-1) hat_q, Bchi = ... q^(p-1) hat_chi."""
    if prior is PriorKind.ISING:
        m1, m2 = tanh_moments(A, Bq, spec)
        return m1, m2, 1.0
    m1 = A / (1.0 + Bchi)
    q1 = m1 * m1 + Bq / (1.0 + Bchi) ** 2
    return m1, q1, q1 + 1.0 / (1.0 + Bchi)


def se_step(state: SEState, model: SEModel, spec=DEFAULT_QUADRATURE, method="auto") -> SEState:
    m, q, Q = state.m, state.q, state.Q
    if method == "auto" and abs(m - q) <= BAYES_TOL and abs(Q - 1.0) <= BAYES_TOL:
        # Bayes-optimal fast path: evaluate on the Nishimori line itself.  The
        # off-line direction can be linearly unstable (Gaussian prior, large
        # fields), so rounding residue must not be fed back.
        m, Q = q, 1.0
    A = Bq = Bchi = 0.0
    first = None
    for p, alpha in model.species:
        if alpha == 0:
            continue
        hc, hm, hq = lam2_hats(m, q, Q, p, model.lam, model.channel, spec, method)
        if first is None:
            first = (hc, hm, hq, model.lam**2 * (Q**p - q**p))
        A += alpha * m ** (p - 1) * hm
        Bq += alpha * q ** (p - 1) * hq
        Bchi += alpha * q ** (p - 1) * hc
    m1, q1, Q1 = prior_update(model.prior, A, Bq, Bchi, spec)
    lam2 = model.lam**2
    hc, hm, hq, v = first if first is not None else (0.0, 0.0, 0.0, 0.0)
    return SEState(m1, q1, Q1, hc / lam2, hm / lam2, hq / lam2, v)


def run_se(
    initial,
    model: SEModel,
    max_t: int = 10_000,
    conv_tol: float = 1e-10,
    spec=DEFAULT_QUADRATURE,
    method="auto",
) -> Trajectory:
    if max_t < 1:
        raise ValueError("max_t must be >= 1")
    m, q, Q = initial
    if model.prior is PriorKind.ISING:
        Q = 1.0
    state = SEState(float(m), float(q), float(Q))
    p_rep = model.p_max
    traj = Trajectory()
    traj.append(0, state.m, state.q, state.Q, 0.0, model.lam, p_rep)
    for t in range(1, max_t + 1):
        try:
            new = se_step(state, model, spec, method)
        except (ArithmeticError, ValueError) as exc:
            traj.diverged, traj.diverged_step, traj.message = True, t, str(exc)
            return traj
        d = max(abs(new.m - state.m), abs(new.q - state.q), abs(new.Q - state.Q))
        if not all(map(math.isfinite, (new.m, new.q, new.Q))):
            traj.diverged, traj.diverged_step, traj.message = True, t, "non-finite SE state"
            return traj
        state = new
        traj.append(t, state.m, state.q, state.Q, d, model.lam, p_rep)
        if d <= conv_tol:
            traj.converged = True
            break
    traj.final_state = state
    return traj


def se_fixed_point(model: SEModel, start=(1.0, 1.0, 1.0), **kw) -> float:
    traj = run_se(start, model, **kw)
    return traj.final[1]


def locate_continuous_transition(
    family, alpha_lo: float, alpha_hi: float, lam: float = 1.0, m0: float = 1e-3,
    threshold: float = 1e-5, tol: float = 1e-3, max_t: int = 20_000,
) -> float:
    """Bisect on alpha for the onset of a nonzero SE fixed point reached from a small start."""

    def magnetized(alpha):
        # on the Nishimori line the recursion is monotone: a first step upward
        # means the limit lies above m0 > threshold; downward runs are followed
        # until they cross the threshold or settle
        model = SEModel.from_family(family, alpha, lam)
        state = SEState(m0, m0, 1.0)
        for _ in range(max_t):
            new = se_step(state, model)
            if new.m >= state.m:
                return new.m > threshold
            if new.m <= threshold:
                return False
            if state.m - new.m <= 1e-13:
                return new.m > threshold
            state = new
        return state.m > threshold

    if magnetized(alpha_lo) or not magnetized(alpha_hi):
        raise ValueError("transition not bracketed by [alpha_lo, alpha_hi]")
    lo, hi = alpha_lo, alpha_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if magnetized(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
