"""Teacher-student problem instances: ground truth, spreading factors,
clean signals and observations."""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass

import numba
import numpy as np

from .channels import (
    AdditiveGaussian,
    ChannelKind,
    PriorKind,
    Sign,
    SpreadingKind,
    channel_forward,
    channel_name,
    sample_prior,
    sample_spreading,
)
from .hypergraph import FactorGraph

FORMAT_VERSION = 1
MAGIC = b"DFIN"

# fixed labels for independent PRNG streams
_TRUTH, _SPREAD, _NOISE = 1, 2, 3


def stream(seed: int, label: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), label])


@numba.njit(cache=True)
def _edge_signals(edges, F, truth, scale):
    # Neumaier-compensated sum over mu of F * prod_j x_j, per edge
    n_edges, p = edges.shape
    m_dim = F.shape[1]
    out = np.empty(n_edges)
    for e in range(n_edges):
        s = 0.0
        comp = 0.0
        for mu in range(m_dim):
            term = F[e, mu]
            for j in range(p):
                term *= truth[edges[e, j], mu]
            t = s + term
            if abs(s) >= abs(term):
                comp += (s - t) + term
            else:
                comp += (term - t) + s
            s = t
        out[e] = scale * (s + comp)
    return out


@dataclass(frozen=True, eq=False)
class Instance:
    graph: FactorGraph
    m_dim: int
    lam: float
    prior: PriorKind
    channel: ChannelKind
    spreading_kind: SpreadingKind
    spreading: tuple  # one (E_s, M) array per species
    truth: np.ndarray  # (N, M)
    pi_star: np.ndarray  # (E,)
    observations: np.ndarray  # (E,)
    seed: int

    @property
    def n_vars(self) -> int:
        return self.graph.n_vars

    def edge_slices(self):
        start = 0
        for b in self.graph.blocks:
            yield slice(start, start + b.shape[0])
            start += b.shape[0]

    def same_as(self, other: "Instance") -> bool:
        return (
            self.graph.same_as(other.graph)
            and (self.m_dim, self.lam, self.prior, self.channel, self.spreading_kind, self.seed)
            == (other.m_dim, other.lam, other.prior, other.channel, other.spreading_kind, other.seed)
            and all(np.array_equal(a, b) for a, b in zip(self.spreading, other.spreading))
            and np.array_equal(self.truth, other.truth)
            and np.array_equal(self.pi_star, other.pi_star)
            and np.array_equal(self.observations, other.observations)
        )


def _signals(graph, spreading, truth, lam, m_dim):
    scale = lam / math.sqrt(m_dim)
    parts = [_edge_signals(b, F, truth, scale) for b, F in zip(graph.blocks, spreading)]
    return np.concatenate(parts) if parts else np.zeros(0)


def generate_instance(
    graph: FactorGraph,
    m_dim: int,
    lam: float,
    prior: PriorKind,
    channel: ChannelKind,
    spreading_kind: SpreadingKind,
    seed: int,
) -> Instance:
    if m_dim < 1:
        raise ValueError(f"m_dim must be >= 1, got {m_dim}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    n = graph.n_vars
    truth = sample_prior(prior, n * m_dim, stream(seed, _TRUTH)).reshape(n, m_dim)
    rng_f = stream(seed, _SPREAD)
    spreading = tuple(sample_spreading(spreading_kind, (b.shape[0], m_dim), rng_f) for b in graph.blocks)
    pi = _signals(graph, spreading, truth, lam, m_dim)
    noise = stream(seed, _NOISE).standard_normal(pi.shape[0])
    y = np.asarray(channel_forward(channel, pi, noise), dtype=float).reshape(-1)
    return Instance(graph, m_dim, float(lam), prior, channel, spreading_kind, spreading, truth, pi, y, int(seed))


def clean_signal(inst: Instance, edge_index: int) -> float:
    if not 0 <= edge_index < inst.graph.n_edges:
        raise IndexError(f"edge index {edge_index} out of range [0, {inst.graph.n_edges})")
    k = edge_index
    for b, F in zip(inst.graph.blocks, inst.spreading):
        if k < b.shape[0]:
            scale = inst.lam / math.sqrt(inst.m_dim)
            return float(_edge_signals(b[k : k + 1], F[k : k + 1], inst.truth, scale)[0])
        k -= b.shape[0]
    raise AssertionError("unreachable")


def build_instance(graph, m_dim, lam, prior, channel, spreading_kind, spreading, truth, seed=0) -> Instance:
    """Assemble an instance from given truth and spreading (for hand-built cases)."""
    truth = np.asarray(truth, dtype=float).reshape(graph.n_vars, m_dim)
    spreading = tuple(np.asarray(F, dtype=float).reshape(b.shape[0], m_dim) for b, F in zip(graph.blocks, spreading))
    pi = _signals(graph, spreading, truth, lam, m_dim)
    noise = stream(seed, _NOISE).standard_normal(pi.shape[0])
    y = np.asarray(channel_forward(channel, pi, noise), dtype=float).reshape(-1)
    return Instance(graph, m_dim, float(lam), prior, channel, spreading_kind, spreading, truth, pi, y, int(seed))


# serialization: MAGIC, version byte, u64 header length, JSON header, raw little-endian arrays


def _arrays(inst: Instance):
    yield "truth", inst.truth
    yield "pi_star", inst.pi_star
    yield "observations", inst.observations
    for s, (b, F) in enumerate(zip(inst.graph.blocks, inst.spreading)):
        yield f"edges{s}", b
        yield f"spreading{s}", F


def save_instance(inst: Instance, path) -> None:
    arrays = list(_arrays(inst))
    ch = inst.channel
    header = {
        "n_vars": inst.n_vars,
        "m_dim": inst.m_dim,
        "lambda": inst.lam.hex(),
        "prior": inst.prior.value,
        "channel": channel_name(ch),
        "noise_std": ch.noise_std.hex() if isinstance(ch, AdditiveGaussian) else None,
        "spreading": inst.spreading_kind.value,
        "seed": inst.seed,
        "notes": list(inst.graph.notes),
        "arrays": [[name, a.dtype.str, list(a.shape)] for name, a in arrays],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([FORMAT_VERSION]) + struct.pack("<Q", len(hbytes)) + hbytes)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())


def load_instance(path) -> Instance:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an instance file")
    if raw[4] != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {raw[4]}")
    (hlen,) = struct.unpack("<Q", raw[5:13])
    header = json.loads(raw[13 : 13 + hlen])
    buf = io.BytesIO(raw[13 + hlen :])
    arrays = {}
    for name, dt, shape in header["arrays"]:
        dtype = np.dtype(dt)
        nbytes = dtype.itemsize * int(np.prod(shape))
        arrays[name] = np.frombuffer(buf.read(nbytes), dtype=dtype).reshape(shape).copy()
    n_species = sum(1 for name, _, _ in header["arrays"] if name.startswith("edges"))
    graph = FactorGraph(
        header["n_vars"], tuple(arrays[f"edges{s}"] for s in range(n_species)), tuple(header["notes"])
    )
    if header["channel"] == "sign":
        channel: ChannelKind = Sign()
    else:
        channel = AdditiveGaussian(float.fromhex(header["noise_std"]))
    return Instance(
        graph,
        header["m_dim"],
        float.fromhex(header["lambda"]),
        PriorKind(header["prior"]),
        channel,
        SpreadingKind(header["spreading"]),
        tuple(arrays[f"spreading{s}"] for s in range(n_species)),
        arrays["truth"],
        arrays["pi_star"],
        arrays["observations"],
        header["seed"],
    )
