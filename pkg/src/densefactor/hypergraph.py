"""Degree-regular p-uniform random hypergraphs (and mixtures of species).

Edges of each species live in an (E_s, p_s) int array with sorted rows.
Global edge indices run over species in order.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class FeasibilityError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FactorGraph:
    n_vars: int
    blocks: tuple  # one (E_s, p_s) int64 array per species
    notes: tuple = field(default=())

    @property
    def species(self) -> list[tuple[int, int]]:
        return [(int(b.shape[1]), int(b.shape[0])) for b in self.blocks]

    @property
    def n_edges(self) -> int:
        return sum(int(b.shape[0]) for b in self.blocks)

    @cached_property
    def edge_species(self) -> np.ndarray:
        return np.concatenate(
            [np.full(b.shape[0], s, dtype=np.int64) for s, b in enumerate(self.blocks)]
        ) if self.blocks else np.zeros(0, dtype=np.int64)

    @property
    def edges(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in row) for b in self.blocks for row in b]

    def degrees(self, species: int | None = None) -> np.ndarray:
        blocks = self.blocks if species is None else (self.blocks[species],)
        deg = np.zeros(self.n_vars, dtype=np.int64)
        for b in blocks:
            deg += np.bincount(b.ravel(), minlength=self.n_vars)
        return deg

    @cached_property
    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_vars)]
        for k, e in enumerate(self.edges):
            for v in e:
                adj[v].append(k)
        return adj

    @classmethod
    def from_edges(cls, n_vars: int, edges, notes=()) -> "FactorGraph":
        """Build from a list of tuples; edges are grouped into species by size."""
        by_p: dict[int, list] = {}
        for e in edges:
            by_p.setdefault(len(e), []).append(sorted(int(v) for v in e))
        blocks = tuple(np.asarray(by_p[p], dtype=np.int64).reshape(-1, p) for p in sorted(by_p))
        return cls(int(n_vars), blocks, tuple(notes))

    def same_as(self, other: "FactorGraph") -> bool:
        return (
            self.n_vars == other.n_vars
            and len(self.blocks) == len(other.blocks)
            and all(np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks))
        )


@dataclass
class GraphDiagnostics:
    degree_histogram: list[dict[int, int]]  # per species
    duplicate_edges: int
    within_edge_repeats: int

    @property
    def violations(self) -> int:
        return self.duplicate_edges + self.within_edge_repeats

    @property
    def regular(self) -> bool:
        return all(len(h) <= 1 for h in self.degree_histogram)


def validate(graph: FactorGraph) -> GraphDiagnostics:
    hists = []
    dup = rep = 0
    for s, b in enumerate(graph.blocks):
        deg = graph.degrees(s)
        vals, counts = np.unique(deg, return_counts=True)
        hists.append({int(v): int(c) for v, c in zip(vals, counts)})
        if b.shape[0] == 0:
            continue
        srt = np.sort(b, axis=1)
        rep += int(np.any(np.diff(srt, axis=1) == 0, axis=1).sum())
        _, cnt = np.unique(srt, axis=0, return_counts=True)
        dup += int((cnt - 1).sum())
    return GraphDiagnostics(hists, dup, rep)


def check_feasible(n_vars: int, p: int, c: int) -> int:
    if p < 2:
        raise FeasibilityError(f"p must be >= 2, got {p}")
    if c < 0 or n_vars < p:
        raise FeasibilityError(f"need n_vars >= p and c >= 0 (n_vars={n_vars}, p={p}, c={c})")
    if (n_vars * c) % p:
        raise FeasibilityError(f"n_vars*c = {n_vars * c} is not divisible by p={p}")
    if c > 0 and math.comb(n_vars - 1, p - 1) <= c:
        raise FeasibilityError(
            f"only {math.comb(n_vars - 1, p - 1)} distinct {p}-plets contain a given variable, "
            f"need more than c={c}"
        )
    return n_vars * c // p


def _sample_block(n_vars: int, p: int, c: int, rng: np.random.Generator) -> np.ndarray:
    n_edges = check_feasible(n_vars, p, c)
    if n_edges == 0:
        return np.zeros((0, p), dtype=np.int64)
    stubs = np.repeat(np.arange(n_vars, dtype=np.int64), c)
    rng.shuffle(stubs)
    edges = np.sort(stubs.reshape(n_edges, p), axis=1)

    # edge-swap repair of within-edge repeats and duplicate edges
    keys = [tuple(row) for row in edges.tolist()]
    count = Counter(keys)

    def bad(k):
        key = keys[k]
        return len(set(key)) < p or count[key] > 1

    queue = [k for k in range(n_edges) if bad(k)]
    budget = 100 * n_edges
    while queue:
        k = queue.pop()
        if not bad(k):
            continue
        while True:
            if budget <= 0:
                raise SamplingError(
                    f"repair budget exhausted for (n_vars={n_vars}, p={p}, c={c}); "
                    f"{sum(bad(j) for j in range(n_edges))} invalid edges remain"
                )
            budget -= 1
            l = int(rng.integers(n_edges))
            if l == k:
                continue
            a, b = int(rng.integers(p)), int(rng.integers(p))
            ek, el = list(keys[k]), list(keys[l])
            ek[a], el[b] = el[b], ek[a]
            nk, nl = tuple(sorted(ek)), tuple(sorted(el))
            # edge l must stay valid; edge k may keep a repeat if it has fewer
            # of them than before (a triple repeat needs two swaps)
            if len(set(nl)) < p or nk == nl or len(set(keys[k])) >= len(set(nk)) < p:
                continue
            count[keys[k]] -= 1
            count[keys[l]] -= 1
            if count[nk] > 0 or count[nl] > 0:
                count[keys[k]] += 1
                count[keys[l]] += 1
                continue
            count[nk] += 1
            count[nl] += 1
            keys[k], keys[l] = nk, nl
            if bad(k):
                queue.append(k)
            break
    return np.asarray(keys, dtype=np.int64).reshape(n_edges, p)


def _species_rng(seed: int, species: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1000 + species])


def sample_regular(n_vars: int, p: int, c: int, seed: int) -> FactorGraph:
    if c < 1:
        raise FeasibilityError("c must be >= 1")
    block = _sample_block(n_vars, p, c, _species_rng(seed, 0))
    return FactorGraph(n_vars, (block,))


def sample_mixed(n_vars: int, m_dim: int, species, seed: int) -> FactorGraph:
    """``species`` is a list of (p, alpha); species s gets degree c_s = alpha_s * m_dim."""
    blocks, notes = [], []
    for s, (p, alpha) in enumerate(species):
        c_exact = alpha * m_dim
        c = int(round(c_exact))
        if abs(c - c_exact) > 1e-9:
            notes.append(f"species {s}: degree alpha*M={c_exact} rounded to {c}")
        blocks.append(_sample_block(n_vars, int(p), c, _species_rng(seed, s)))
    return FactorGraph(n_vars, tuple(blocks), tuple(notes))


def dump_graph(graph: FactorGraph, path) -> None:
    with open(path, "w") as fh:
        for s, b in enumerate(graph.blocks):
            p = b.shape[1]
            for row in b:
                fh.write(f"{s} {p} " + " ".join(str(int(v)) for v in row) + "\n")


def load_graph(path, n_vars: int) -> FactorGraph:
    rows: dict[int, list] = {}
    ps: dict[int, int] = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            s, p, *vs = (int(t) for t in line.split())
            if len(vs) != p:
                raise ValueError(f"edge line has {len(vs)} members, expected {p}: {line!r}")
            ps[s] = p
            rows.setdefault(s, []).append(vs)
    blocks = tuple(np.asarray(rows[s], dtype=np.int64).reshape(-1, ps[s]) for s in sorted(rows))
    return FactorGraph(n_vars, blocks)
