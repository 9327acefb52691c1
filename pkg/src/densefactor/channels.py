"""Priors, output channels and spreading factors, with the input/output
function pairs used by message passing and state evolution.

All score functions broadcast over numpy arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .numerics import h_log_deriv

SIGMA_MIN = 1e-12
V_MIN = 1e-12
NOISELESS = 1e-300  # noise_std at or below this is treated as exactly zero


class PriorKind(enum.Enum):
    ISING = "ising"
    GAUSSIAN = "gaussian"


class SpreadingKind(enum.Enum):
    DETERMINISTIC = "deterministic"
    RADEMACHER = "rademacher"
    GAUSSIAN_UNIT = "gaussian"


@dataclass(frozen=True)
class AdditiveGaussian:
    noise_std: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.noise_std) and self.noise_std > 0):
            raise ValueError(f"noise_std must be finite and positive, got {self.noise_std!r}")

    @property
    def noiseless(self) -> bool:
        return self.noise_std <= NOISELESS

    @property
    def variance(self) -> float:
        return 0.0 if self.noiseless else self.noise_std**2


@dataclass(frozen=True)
class Sign:
    pass


ChannelKind = Union[AdditiveGaussian, Sign]


class DomainError(ValueError):
    pass


def _finite(name, *arrs):
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite input to {name}")


def input_moments(prior: PriorKind, sigma, t_field):
    """Posterior mean and second moment of x under prior * N(x; T, Sigma)."""
    sigma = np.maximum(np.asarray(sigma, dtype=float), SIGMA_MIN)
    t = np.asarray(t_field, dtype=float)
    _finite("input_moments", sigma, t)
    if prior is PriorKind.ISING:
        f = np.tanh(t / sigma)
        f2 = np.ones_like(f)
    elif prior is PriorKind.GAUSSIAN:
        f = t / (sigma + 1.0)
        f2 = sigma / (sigma + 1.0) + f * f
    else:
        raise TypeError(f"unknown prior {prior!r}")
    if f.ndim == 0:
        return float(f), float(f2)
    return f, f2


def output_score(channel: ChannelKind, omega, y, v):
    """(g_out, d g_out / d omega) for observation y given a Gaussian
    estimate of the clean signal with mean omega and variance v."""
    v = np.maximum(np.asarray(v, dtype=float), V_MIN)
    omega = np.asarray(omega, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(channel, AdditiveGaussian):
        denom = v + channel.variance
        g = (y - omega) / denom
        dg = np.broadcast_to(-1.0 / denom, g.shape).copy()
    elif isinstance(channel, Sign):
        if not np.all((y == 1.0) | (y == -1.0)):
            raise DomainError("sign channel observations must be +1 or -1")
        sv = np.sqrt(v)
        x = -y * omega / sv
        r = h_log_deriv(x)
        g = -y / sv * r
        dg = -(x * r + r * r) / v
    else:
        raise TypeError(f"unknown channel {channel!r}")
    if np.ndim(g) == 0:
        return float(g), float(dg)
    return g, dg


def output_second_moment(channel: ChannelKind, omega, y, v):
    """g_out,II = 1/V + dg + g^2, in closed form."""
    g, dg = output_score(channel, omega, y, v)
    v = np.maximum(np.asarray(v, dtype=float), V_MIN)
    return 1.0 / v + dg + g * g


def sample_prior(prior: PriorKind, count: int, seed) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if prior is PriorKind.ISING:
        return 2.0 * rng.integers(0, 2, size=count).astype(float) - 1.0
    return rng.standard_normal(count)


def sample_spreading(kind: SpreadingKind, shape, rng: np.random.Generator) -> np.ndarray:
    if kind is SpreadingKind.DETERMINISTIC:
        return np.ones(shape)
    if kind is SpreadingKind.RADEMACHER:
        return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
    return rng.standard_normal(shape)


def channel_forward(channel: ChannelKind, pi, noise_draw):
    pi = np.asarray(pi, dtype=float)
    if isinstance(channel, AdditiveGaussian):
        out = pi.copy() if channel.noiseless else pi + channel.noise_std * np.asarray(noise_draw)
    elif isinstance(channel, Sign):
        out = np.where(pi >= 0.0, 1.0, -1.0)
    else:
        raise TypeError(f"unknown channel {channel!r}")
    return float(out) if out.ndim == 0 else out


def parse_prior(name: str) -> PriorKind:
    try:
        return PriorKind(name.lower())
    except ValueError:
        raise ValueError(f"unknown prior {name!r}; expected one of ising, gaussian") from None


def parse_spreading(name: str) -> SpreadingKind:
    try:
        return SpreadingKind(name.lower())
    except ValueError:
        raise ValueError(
            f"unknown spreading {name!r}; expected deterministic, rademacher or gaussian"
        ) from None


def parse_channel(name: str, delta: float = 1.0) -> ChannelKind:
    name = name.lower()
    if name in ("gauss", "gaussian", "additive"):
        return AdditiveGaussian(delta)
    if name == "sign":
        return Sign()
    raise ValueError(f"unknown channel {name!r}; expected gaussian or sign")


def channel_name(channel: ChannelKind) -> str:
    return "sign" if isinstance(channel, Sign) else "gaussian"
