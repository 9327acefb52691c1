"""Model families shared by state evolution and the replica analytics.

A family plus (alpha, lambda) fixes the prior, the channel and the list of
interaction species [(p, alpha_s)].
"""

from __future__ import annotations

from dataclasses import dataclass

from .channels import AdditiveGaussian, ChannelKind, PriorKind, Sign


@dataclass(frozen=True)
class IsingGauss:
    p: int = 2
    prior = PriorKind.ISING

    def species(self, alpha):
        return [(self.p, alpha)]

    def channel(self) -> ChannelKind:
        return AdditiveGaussian(1.0)


@dataclass(frozen=True)
class GaussGauss:
    p: int = 2
    prior = PriorKind.GAUSSIAN

    def species(self, alpha):
        return [(self.p, alpha)]

    def channel(self) -> ChannelKind:
        return AdditiveGaussian(1.0)


@dataclass(frozen=True)
class GaussSign:
    p: int = 2
    prior = PriorKind.GAUSSIAN

    def species(self, alpha):
        return [(self.p, alpha)]

    def channel(self) -> ChannelKind:
        return Sign()


@dataclass(frozen=True)
class MixedGaussGauss:
    """Two additive-noise species; ``alpha`` passed to the solvers is alpha2."""

    p1: int = 2
    alpha1: float = 2.0
    p2: int = 3
    prior = PriorKind.GAUSSIAN

    @property
    def p(self):
        return min(self.p1, self.p2)

    def species(self, alpha):
        return [(self.p1, self.alpha1), (self.p2, alpha)]

    def channel(self) -> ChannelKind:
        return AdditiveGaussian(1.0)


ModelFamily = IsingGauss | GaussGauss | GaussSign | MixedGaussGauss


def family_name(fam) -> str:
    if isinstance(fam, MixedGaussGauss):
        return f"mixed({fam.p1},{fam.alpha1:g},{fam.p2})"
    return f"{type(fam).__name__.lower()}({fam.p})"


def parse_family(text: str):
    """'isinggauss:2', 'gaussgauss:3', 'gausssign:2', 'mixed:2,2.0,3'."""
    name, _, args = text.replace("(", ":").rstrip(")").partition(":")
    name = name.strip().lower()
    parts = [a for a in args.split(",") if a.strip()]
    if name in ("isinggauss", "ising"):
        return IsingGauss(int(parts[0]) if parts else 2)
    if name in ("gaussgauss", "gauss", "gaussian"):
        return GaussGauss(int(parts[0]) if parts else 2)
    if name in ("gausssign", "sign"):
        return GaussSign(int(parts[0]) if parts else 2)
    if name in ("mixed", "mixedgaussgauss"):
        if len(parts) != 3:
            raise ValueError("mixed family needs p1,alpha1,p2")
        return MixedGaussGauss(int(parts[0]), float(parts[1]), int(parts[2]))
    raise ValueError(f"unknown model family {text!r}")
