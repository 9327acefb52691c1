"""Finite-size message passing: r-BP and G-AMP.

Factor-side quantities are computed for every edge first, then all
variable-side quantities (a synchronous sweep).  Each species block of the
graph is handled by the same numba kernels; variable-side sums are
accumulated across blocks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .channels import PriorKind, Sign, input_moments, output_score
from .instance import Instance
from .trajectory import Trajectory

V_FLOOR = 1e-12
DIVERGENCE_D = 1e3


class Algorithm(enum.Enum):
    RBP = "rbp"
    GAMP = "gamp"


class DivergenceError(FloatingPointError):
    def __init__(self, msg, indices=None):
        super().__init__(msg)
        self.indices = indices


@dataclass(frozen=True)
class InitScheme:
    kind: str  # informative | uninformative | truly_random | sign_informative
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in ("informative", "uninformative", "truly_random", "sign_informative"):
            raise ValueError(f"unknown init scheme {self.kind!r}")
        if self.kind != "informative" and not 0.0 < self.a < 1.0:
            raise ValueError(f"init parameter a must lie in (0, 1), got {self.a}")


def Informative():
    return InitScheme("informative", 1.0)


def Uninformative(a=0.01):
    return InitScheme("uninformative", a)


def TrulyRandom(a=0.01):
    return InitScheme("truly_random", a)


def SignInformative(a=0.99):
    return InitScheme("sign_informative", a)


def parse_scheme(text: str) -> InitScheme:
    name, _, arg = text.partition(":")
    name = name.strip().lower().replace("-", "_")
    table = {"informative": Informative, "uninformative": Uninformative,
             "truly_random": TrulyRandom, "random": TrulyRandom, "sign_informative": SignInformative}
    if name not in table:
        raise ValueError(f"unknown init scheme {text!r}")
    return table[name](float(arg)) if arg else table[name]()


def default_damping(algorithm: Algorithm, prior: PriorKind = PriorKind.ISING) -> float:
    """0.5 for r-BP.  G-AMP runs undamped on the Ising prior; the Gaussian prior
    needs damping because the direction off m = q, Q = 1 oscillates with a
    growth factor near -(p - 1) per sweep."""
    if algorithm is Algorithm.RBP:
        return 0.5
    return 1.0 if prior is PriorKind.ISING else 0.7


# ---- kernels ----------------------------------------------------------------


@numba.njit(cache=True)
def _gamp_factor(edges, F, m, v, m_prev, g_prev, s, omega, V):
    n_edges, p = edges.shape
    m_dim = F.shape[1]
    mj = np.empty(p)
    vj = np.empty(p)
    mpj = np.empty(p)
    for e in range(n_edges):
        om = 0.0
        vv = 0.0
        ge = g_prev[e]
        for nu in range(m_dim):
            prod_m = 1.0
            prod_v = 1.0
            for j in range(p):
                i = edges[e, j]
                mj[j] = m[i, nu]
                vj[j] = v[i, nu]
                mpj[j] = m_prev[i, nu]
                prod_m *= mj[j]
                prod_v *= vj[j]
            ons = 0.0
            if ge != 0.0:
                for j in range(p):
                    t = vj[j] - mj[j] * mj[j]
                    for k in range(p):
                        if k != j:
                            t *= mj[k] * mpj[k]
                    ons += t
            sf = s * F[e, nu]
            om += sf * (prod_m - sf * ge * ons)
            vv += sf * sf * (prod_v - prod_m * prod_m)
        omega[e] = om
        V[e] = vv


@numba.njit(cache=True)
def _gamp_variable(edges, F, m, v, m_prev, g, dg, g_prev, s, A, B):
    n_edges, p = edges.shape
    m_dim = F.shape[1]
    mj = np.empty(p)
    vj = np.empty(p)
    mpj = np.empty(p)
    for e in range(n_edges):
        ge, dge, gpe = g[e], dg[e], g_prev[e]
        for nu in range(m_dim):
            for j in range(p):
                i = edges[e, j]
                mj[j] = m[i, nu]
                vj[j] = v[i, nu]
                mpj[j] = m_prev[i, nu]
            sf = s * F[e, nu]
            for a in range(p):
                loo = 1.0
                for k in range(p):
                    if k != a:
                        loo *= mj[k]
                ons = 0.0
                if gpe != 0.0:
                    for j in range(p):
                        if j == a:
                            continue
                        t = vj[j] - mj[j] * mj[j]
                        for k in range(p):
                            if k != a and k != j:
                                t *= mj[k] * mpj[k]
                        ons += t
                i = edges[e, a]
                A[i, nu] += sf * sf * (-dge) * loo * loo
                B[i, nu] += sf * ge * (loo - sf * gpe * mpj[a] * ons)


@numba.njit(cache=True)
def _gamp_factor2(edges, F, m, v, m_prev, g_prev, s, omega, V):
    for e in range(edges.shape[0]):
        mi, mj = m[edges[e, 0]], m[edges[e, 1]]
        vi, vj = v[edges[e, 0]], v[edges[e, 1]]
        pi, pj = m_prev[edges[e, 0]], m_prev[edges[e, 1]]
        Fe = F[e]
        ge = g_prev[e]
        om = 0.0
        vv = 0.0
        for nu in range(Fe.shape[0]):
            a = mi[nu]
            b = mj[nu]
            pm = a * b
            sf = s * Fe[nu]
            ons = (vi[nu] - a * a) * b * pj[nu] + (vj[nu] - b * b) * a * pi[nu]
            om += sf * (pm - sf * ge * ons)
            vv += sf * sf * (vi[nu] * vj[nu] - pm * pm)
        omega[e] = om
        V[e] = vv


@numba.njit(cache=True)
def _gamp_variable2(edges, F, m, v, m_prev, g, dg, g_prev, s, A, B):
    for e in range(edges.shape[0]):
        i, j = edges[e, 0], edges[e, 1]
        mi, mj, vi, vj, pi, pj = m[i], m[j], v[i], v[j], m_prev[i], m_prev[j]
        Ai, Aj, Bi, Bj = A[i], A[j], B[i], B[j]
        Fe = F[e]
        ge, mdg, gpe = g[e], -dg[e], g_prev[e]
        for nu in range(Fe.shape[0]):
            a = mi[nu]
            b = mj[nu]
            sf = s * Fe[nu]
            w = sf * sf * mdg
            Ai[nu] += w * b * b
            Aj[nu] += w * a * a
            Bi[nu] += sf * ge * (b - sf * gpe * pi[nu] * (vj[nu] - b * b))
            Bj[nu] += sf * ge * (a - sf * gpe * pj[nu] * (vi[nu] - a * a))


@numba.njit(cache=True)
def _gamp_factor3(edges, F, m, v, m_prev, g_prev, s, omega, V):
    for e in range(edges.shape[0]):
        i, j, k = edges[e, 0], edges[e, 1], edges[e, 2]
        mi, mj, mk = m[i], m[j], m[k]
        vi, vj, vk = v[i], v[j], v[k]
        pi, pj, pk = m_prev[i], m_prev[j], m_prev[k]
        Fe = F[e]
        ge = g_prev[e]
        om = 0.0
        vv = 0.0
        for nu in range(Fe.shape[0]):
            a = mi[nu]
            b = mj[nu]
            c = mk[nu]
            pm = a * b * c
            sf = s * Fe[nu]
            xa = a * pi[nu]
            xb = b * pj[nu]
            xc = c * pk[nu]
            ons = (vi[nu] - a * a) * xb * xc + (vj[nu] - b * b) * xa * xc + (vk[nu] - c * c) * xa * xb
            om += sf * (pm - sf * ge * ons)
            vv += sf * sf * (vi[nu] * vj[nu] * vk[nu] - pm * pm)
        omega[e] = om
        V[e] = vv


@numba.njit(cache=True)
def _gamp_variable3(edges, F, m, v, m_prev, g, dg, g_prev, s, A, B):
    for e in range(edges.shape[0]):
        i, j, k = edges[e, 0], edges[e, 1], edges[e, 2]
        mi, mj, mk = m[i], m[j], m[k]
        vi, vj, vk = v[i], v[j], v[k]
        pi, pj, pk = m_prev[i], m_prev[j], m_prev[k]
        Ai, Aj, Ak, Bi, Bj, Bk = A[i], A[j], A[k], B[i], B[j], B[k]
        Fe = F[e]
        ge, mdg, gpe = g[e], -dg[e], g_prev[e]
        for nu in range(Fe.shape[0]):
            a = mi[nu]
            b = mj[nu]
            c = mk[nu]
            sf = s * Fe[nu]
            w = sf * sf * mdg
            u = sf * gpe
            da = vi[nu] - a * a
            db = vj[nu] - b * b
            dc = vk[nu] - c * c
            xa = a * pi[nu]
            xb = b * pj[nu]
            xc = c * pk[nu]
            Ai[nu] += w * (b * c) ** 2
            Aj[nu] += w * (a * c) ** 2
            Ak[nu] += w * (a * b) ** 2
            Bi[nu] += sf * ge * (b * c - u * pi[nu] * (db * xc + dc * xb))
            Bj[nu] += sf * ge * (a * c - u * pj[nu] * (da * xc + dc * xa))
            Bk[nu] += sf * ge * (a * b - u * pk[nu] * (da * xb + db * xa))


_GAMP_KERNELS = {2: (_gamp_factor2, _gamp_variable2), 3: (_gamp_factor3, _gamp_variable3)}


def _gamp_kernels(p):
    return _GAMP_KERNELS.get(p, (_gamp_factor, _gamp_variable))


@numba.njit(cache=True)
def _loo_products(rows, out):
    """out[a, mu] = prod_{k != a} rows[k, mu] (prefix/suffix products)."""
    p, m_dim = rows.shape
    for mu in range(m_dim):
        acc = 1.0
        for a in range(p):
            out[a, mu] = acc
            acc *= rows[a, mu]
        acc = 1.0
        for a in range(p - 1, -1, -1):
            out[a, mu] *= acc
            acc *= rows[a, mu]


@numba.njit(cache=True)
def _rbp_factor(edges, F, mm, vm, s, omega, V):
    n_edges, p = edges.shape
    m_dim = F.shape[1]
    pm = np.empty(m_dim)
    pv = np.empty(m_dim)
    for e in range(n_edges):
        Fe = F[e]
        for mu in range(m_dim):
            pm[mu] = 1.0
            pv[mu] = 1.0
        for j in range(p):
            mr = mm[e, j]
            vr = vm[e, j]
            for mu in range(m_dim):
                pm[mu] *= mr[mu]
                pv[mu] *= vr[mu]
        tot_om = 0.0
        tot_v = 0.0
        for mu in range(m_dim):
            sf = s * Fe[mu]
            tot_om += sf * pm[mu]
            tot_v += sf * sf * (pv[mu] - pm[mu] * pm[mu])
        om = omega[e]
        vv = V[e]
        for mu in range(m_dim):
            sf = s * Fe[mu]
            om[mu] = tot_om - sf * pm[mu]
            vv[mu] = tot_v - sf * sf * (pv[mu] - pm[mu] * pm[mu])


@numba.njit(cache=True)
def _rbp_totals(edges, F, mm, g, dg, s, A, B):
    n_edges, p = edges.shape
    m_dim = F.shape[1]
    loo = np.empty((p, m_dim))
    for e in range(n_edges):
        _loo_products(mm[e], loo)
        Fe, ge, dge = F[e], g[e], dg[e]
        for a in range(p):
            Ai = A[edges[e, a]]
            Bi = B[edges[e, a]]
            la = loo[a]
            for mu in range(m_dim):
                sf = s * Fe[mu]
                Ai[mu] += sf * sf * (-dge[mu]) * la[mu] * la[mu]
                Bi[mu] += sf * ge[mu] * la[mu]


@numba.njit(cache=True)
def _rbp_messages(edges, F, mm, vm, g, dg, s, A, B, ising, damping, a_floor):
    """Cavity update of every message; returns (sum |f - m|, bad edge or -1).

    All slots of an edge are computed from the old messages before any write.
    """
    n_edges, p = edges.shape
    m_dim = F.shape[1]
    loo = np.empty((p, m_dim))
    newm = np.empty((p, m_dim))
    newv = np.empty((p, m_dim))
    dsum = 0.0
    for e in range(n_edges):
        _loo_products(mm[e], loo)
        Fe, ge, dge = F[e], g[e], dg[e]
        for a in range(p):
            Ai = A[edges[e, a]]
            Bi = B[edges[e, a]]
            la = loo[a]
            for mu in range(m_dim):
                sf = s * Fe[mu]
                ca = Ai[mu] - sf * sf * (-dge[mu]) * la[mu] * la[mu]
                cb = Bi[mu] - sf * ge[mu] * la[mu]
                if ca < a_floor:
                    ca = a_floor
                if ising:
                    f = math.tanh(cb)
                    f2 = 1.0
                else:
                    sig = 1.0 / ca
                    f = sig * cb / (sig + 1.0)
                    f2 = sig / (sig + 1.0) + f * f
                newm[a, mu] = f
                newv[a, mu] = f2
        for a in range(p):
            mr = mm[e, a]
            vr = vm[e, a]
            for mu in range(m_dim):
                f = newm[a, mu]
                if not (math.isfinite(f) and math.isfinite(newv[a, mu])):
                    return dsum, e
                dsum += abs(f - mr[mu])
                mr[mu] += damping * (f - mr[mu])
                vr[mu] += damping * (newv[a, mu] - vr[mu])
    return dsum, -1


# ---- states -----------------------------------------------------------------


@dataclass
class MessageStateGAMP:
    m: np.ndarray
    v: np.ndarray
    m_prev: np.ndarray
    g_prev: list  # per species (E_s,)
    g: list = field(default_factory=list)
    dg: list = field(default_factory=list)
    omega: list = field(default_factory=list)
    V: list = field(default_factory=list)
    D: float = math.nan
    clamped: int = 0
    t: int = 0

    def copy(self):
        return MessageStateGAMP(self.m.copy(), self.v.copy(), self.m_prev.copy(),
                                [x.copy() for x in self.g_prev], D=self.D, t=self.t)


@dataclass
class MessageStateRBP:
    mm: list  # per species (E_s, p, M)
    vm: list
    m: np.ndarray  # marginals (N, M)
    v: np.ndarray
    g: list = field(default_factory=list)
    dg: list = field(default_factory=list)
    omega: list = field(default_factory=list)
    V: list = field(default_factory=list)
    D: float = math.nan
    clamped: int = 0
    t: int = 0

    def copy(self):
        return MessageStateRBP([x.copy() for x in self.mm], [x.copy() for x in self.vm],
                               self.m.copy(), self.v.copy(), D=self.D, t=self.t)


def _init_moments(scheme: InitScheme, inst: Instance, seed: int):
    x = inst.truth
    rng = np.random.default_rng([int(seed), 77])
    gauss = inst.prior is PriorKind.GAUSSIAN
    a = scheme.a
    if scheme.kind == "informative":
        m = x.copy()
        v = x * x if gauss else np.ones_like(x)
    elif scheme.kind == "uninformative":
        m = a * x + math.sqrt(a - a * a) * rng.standard_normal(x.shape)
        v = np.ones_like(x)
    elif scheme.kind == "truly_random":
        m = math.sqrt(a) * rng.standard_normal(x.shape)
        v = np.ones_like(x)
    else:  # sign_informative
        m = x * (a + math.sqrt(a - a * a) * rng.standard_normal(x.shape))
        v = m * m / a
    if not gauss:
        v = np.ones_like(x)
    return m, v


def init_messages(scheme: InitScheme, inst: Instance, algorithm: Algorithm, seed: int = 0):
    m, v = _init_moments(scheme, inst, seed)
    if algorithm is Algorithm.GAMP:
        return MessageStateGAMP(m, v, m.copy(), [np.zeros(b.shape[0]) for b in inst.graph.blocks])
    # every outgoing message of (i, mu) starts from the same draw
    mm = [np.ascontiguousarray(m[b]) for b in inst.graph.blocks]
    vm = [np.ascontiguousarray(v[b]) for b in inst.graph.blocks]
    return MessageStateRBP(mm, vm, m.copy(), v.copy())


def _scores(inst, omega, V, ys):
    n_neg = int(np.sum(V < V_FLOOR))
    Vc = np.maximum(V, V_FLOOR)
    g, dg = output_score(inst.channel, omega, ys, Vc)
    return np.asarray(g), np.asarray(dg), n_neg


def _check_finite(name, arr):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = np.argwhere(bad)[:5]
        raise DivergenceError(f"non-finite {name} at {idx.tolist()}", idx)


def gamp_sweep(state: MessageStateGAMP, inst: Instance, damping: float = 1.0) -> MessageStateGAMP:
    s = inst.lam / math.sqrt(inst.m_dim)
    N, M = state.m.shape
    A = np.zeros((N, M))
    B = np.zeros((N, M))
    gs, dgs, oms, Vs = [], [], [], []
    clamped = 0
    for k, (edges, F, sl) in enumerate(zip(inst.graph.blocks, inst.spreading, inst.edge_slices())):
        om = np.empty(edges.shape[0])
        V = np.empty(edges.shape[0])
        _gamp_kernels(edges.shape[1])[0](edges, F, state.m, state.v, state.m_prev, state.g_prev[k], s, om, V)
        _check_finite("omega", om)
        _check_finite("V", V)
        g, dg, n_neg = _scores(inst, om, V, inst.observations[sl])
        clamped += n_neg
        _check_finite("g_out", g)
        gs.append(g), dgs.append(dg), oms.append(om), Vs.append(V)
    for k, (edges, F) in enumerate(zip(inst.graph.blocks, inst.spreading)):
        _gamp_kernels(edges.shape[1])[1](edges, F, state.m, state.v, state.m_prev, gs[k], dgs[k], state.g_prev[k], s, A, B)
    A = np.maximum(A, V_FLOOR)
    sigma = 1.0 / A
    T = state.m + B / A
    f, f2 = input_moments(inst.prior, sigma, T)
    _check_finite("f_input", f)
    D = float(np.mean(np.abs(f - state.m)))
    m_new = state.m + damping * (f - state.m)
    v_new = state.v + damping * (f2 - state.v)
    # memory terms see the damped score history; equals g itself at damping 1
    g_mem = [gp + damping * (g - gp) for gp, g in zip(state.g_prev, gs)]
    return MessageStateGAMP(m_new, v_new, state.m, g_mem, gs, dgs, oms, Vs, D, clamped, state.t + 1)


def rbp_sweep(state: MessageStateRBP, inst: Instance, damping: float = 0.5) -> MessageStateRBP:
    s = inst.lam / math.sqrt(inst.m_dim)
    N, M = state.m.shape
    A = np.zeros((N, M))
    B = np.zeros((N, M))
    gs, dgs, oms, Vs = [], [], [], []
    clamped = 0
    for edges, F, sl, mm, vm in zip(inst.graph.blocks, inst.spreading, inst.edge_slices(), state.mm, state.vm):
        om = np.empty((edges.shape[0], M))
        V = np.empty((edges.shape[0], M))
        _rbp_factor(edges, F, mm, vm, s, om, V)
        _check_finite("omega", om)
        _check_finite("V", V)
        g, dg, n_neg = _scores(inst, om, V, inst.observations[sl][:, None])
        clamped += n_neg
        _check_finite("g_out", g)
        gs.append(g), dgs.append(dg), oms.append(om), Vs.append(V)
    for edges, F, mm, g, dg in zip(inst.graph.blocks, inst.spreading, state.mm, gs, dgs):
        _rbp_totals(edges, F, mm, g, dg, s, A, B)
    ising = inst.prior is PriorKind.ISING
    mms = [x.copy() for x in state.mm]
    vms = [x.copy() for x in state.vm]
    dsum, count = 0.0, 0
    for edges, F, mm, vm, g, dg in zip(inst.graph.blocks, inst.spreading, mms, vms, gs, dgs):
        d, bad = _rbp_messages(edges, F, mm, vm, g, dg, s, A, B, ising, float(damping), V_FLOOR)
        if bad >= 0:
            raise DivergenceError(f"non-finite message on edge {bad}", np.array([bad]))
        dsum += d
        count += mm.size
    # full marginals use every incident factor
    Ac = np.maximum(A, V_FLOOR)
    f, f2 = input_moments(inst.prior, 1.0 / Ac, B / Ac)
    D = dsum / max(count, 1)
    return MessageStateRBP(mms, vms, f, f2, gs, dgs, oms, Vs, D, clamped, state.t + 1)


# ---- measurements ------------------------------------------------------------


def measure_order_params(state, inst: Instance) -> tuple[float, float, float]:
    m_est = state.m
    n = m_est.size
    mag = float(np.sum(inst.truth * m_est) / n)
    q = float(np.sum(m_est * m_est) / n)
    Q = 1.0 if inst.prior is PriorKind.ISING else float(np.sum(state.v) / n)
    return mag, q, Q


def corrected_magnetization(state, inst: Instance) -> float:
    per_plane = np.mean(inst.truth * state.m, axis=0)
    return float(np.mean(np.abs(per_plane)))


def error_metrics(m, q, lam, p):
    from .trajectory import error_metrics as _em

    return _em(m, q, lam, p)


def run_mp(
    algorithm: Algorithm,
    inst: Instance,
    scheme: InitScheme,
    damping: float | None = None,
    max_t: int = 1000,
    conv_tol: float = 1e-8,
    seed: int = 0,
    corrected: bool = False,
) -> Trajectory:
    if max_t < 1:
        raise ValueError("max_t must be >= 1")
    if damping is None:
        damping = default_damping(algorithm, inst.prior)
    state = init_messages(scheme, inst, algorithm, seed)
    sweep = gamp_sweep if algorithm is Algorithm.GAMP else rbp_sweep
    p_rep = max(b.shape[1] for b in inst.graph.blocks)
    traj = Trajectory()

    def record(st, D):
        m, q, Q = measure_order_params(st, inst)
        if corrected:
            m = corrected_magnetization(st, inst)
        traj.append(st.t, m, q, Q, D, inst.lam, p_rep)

    record(state, math.nan)
    for _ in range(max_t):
        try:
            state = sweep(state, inst, damping)
        except DivergenceError as exc:
            traj.diverged, traj.diverged_step, traj.message = True, state.t + 1, str(exc)
            break
        record(state, state.D)
        if not math.isfinite(state.D) or state.D > DIVERGENCE_D:
            traj.diverged, traj.diverged_step = True, state.t
            traj.message = f"D={state.D:.3g} exceeds divergence threshold"
            break
        if state.D <= conv_tol:
            traj.converged = True
            break
    traj.final_state = state
    return traj


def uses_sign(inst: Instance) -> bool:
    return isinstance(inst.channel, Sign)
