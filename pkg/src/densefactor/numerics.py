"""Shared numerical kernels: Gaussian expectations, the H function,
damped scalar fixed-point iteration and bracketed root finding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
CLAMP_EPS = 1e-12


class QuadratureError(ArithmeticError):
    pass


class SolverError(ArithmeticError):
    pass


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    node_count: int = 101
    fallback_interval: tuple[float, float] = (-10.0, 10.0)
    abs_tol: float = 1e-12

    def __post_init__(self):
        if self.node_count < 3:
            raise ValueError("node_count must be >= 3")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        lo, hi = self.fallback_interval
        if not (lo < 0 < hi and math.isclose(-lo, hi)):
            raise ValueError("fallback_interval must be symmetric about 0")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class FixedPointResult:
    value: float
    iterations: int
    converged: bool
    residual: float


_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E_{z~N(0,1)}[f(z)] ~ sum w_k f(z_k)."""
    if n not in _GH_CACHE:
        z, w = np.polynomial.hermite_e.hermegauss(n)
        _GH_CACHE[n] = (z, w / SQRT2PI)
    return _GH_CACHE[n]


def std_gauss_expect(f: Callable, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E[f(z)] for z ~ N(0, 1) by Gauss-Hermite quadrature.

    ``f`` is called once on the whole node array, so it must broadcast.
    """
    z, w = gauss_hermite(spec.node_count)
    vals = np.asarray(f(z), dtype=float)
    vals = np.broadcast_to(vals, z.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.argmax(bad))
        raise QuadratureError(f"non-finite integrand {vals[k]!r} at node z={z[k]:.6g}")
    return float(np.dot(w, vals))


def gauss_expect_adaptive(
    f: Callable[[float], float],
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    loc: float = 0.0,
    scale: float = 1.0,
    breaks: Sequence[float] = (),
) -> float:
    """E[f(loc + scale*z)] by adaptive quadrature on ``spec.fallback_interval``.

    For integrands that are not polynomial-like (ratios of H functions, or
    tanh with a steep transition). ``breaks`` are points in the argument of
    ``f`` where the integrand changes quickly; they are mapped to z-space and
    handed to QUADPACK as hints.
    """
    lo, hi = spec.fallback_interval
    pts = []
    if scale > 0:
        for u in breaks:
            zb = (u - loc) / scale
            if lo < zb < hi:
                pts.append(zb)

    def integrand(z):
        val = f(loc + scale * z)
        if not math.isfinite(val):
            raise QuadratureError(f"non-finite integrand {val!r} at node z={z:.6g}")
        return math.exp(-0.5 * z * z) / SQRT2PI * val

    val, _ = integrate.quad(
        integrand, lo, hi, points=pts or None, epsabs=spec.abs_tol * 0.1, epsrel=1e-13, limit=400
    )
    return float(val)


def h_func(x):
    """H(x) = P(z > x) for a standard normal z."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / SQRT2)


def h_log_deriv(x):
    """H'(x)/H(x) = -phi(x)/H(x), via the scaled erfc so it does not
    underflow to 0/0 for large positive x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = -math.sqrt(2.0 / math.pi) / special.erfcx(x / SQRT2)
    return out if out.ndim else float(out)


def damped_fixed_point(
    fmap: Callable[[float], float],
    x0: float,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    lo: float = 0.0,
    hi: float = 1.0 - CLAMP_EPS,
) -> FixedPointResult:
    """Iterate x <- x + damping*(fmap(x) - x), clamped to [lo, hi]."""
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    x = min(max(float(x0), lo), hi)
    res = math.inf
    for it in range(1, max_iter + 1):
        fx = fmap(x)
        if not math.isfinite(fx):
            raise SolverError(f"map returned {fx!r} at x={x!r} (iteration {it})")
        res = abs(fx - x)
        if res <= tol:
            return FixedPointResult(x, it, True, res)
        x = min(max(x + damping * (fx - x), lo), hi)
    return FixedPointResult(x, max_iter, False, res)


def bracket_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of f in [lo, hi]; requires a sign change over the bracket."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo!r}, {fhi!r}")
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
