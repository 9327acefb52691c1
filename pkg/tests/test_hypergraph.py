import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densefactor.hypergraph import (
    FactorGraph,
    FeasibilityError,
    check_feasible,
    dump_graph,
    load_graph,
    sample_mixed,
    sample_regular,
    validate,
)


def recount(graph):
    """Independent degree/duplicate recount by plain Python loops."""
    deg = Counter()
    seen = Counter()
    repeats = 0
    for e in graph.edges:
        for v in e:
            deg[v] += 1
        if len(set(e)) < len(e):
            repeats += 1
        seen[tuple(sorted(e))] += 1
    dups = sum(c - 1 for c in seen.values())
    return deg, dups, repeats


def test_small_regular_example():
    g = sample_regular(6, 3, 2, seed=11)
    assert g.n_edges == 4
    assert np.all(g.degrees() == 2)


def test_degenerate_infeasible():
    with pytest.raises(FeasibilityError):
        sample_regular(3, 3, 2, seed=0)
    with pytest.raises(FeasibilityError):
        check_feasible(5, 2, 3)  # 15 stubs do not pair up
    with pytest.raises(FeasibilityError):
        check_feasible(10, 1, 2)


def test_large_regular_recount():
    g = sample_regular(1000, 2, 50, seed=7)
    assert g.n_edges == 25000
    d = validate(g)
    deg, dups, reps = recount(g)
    assert d.violations == 0 and dups == 0 and reps == 0
    assert set(deg.values()) == {50} and len(deg) == 1000
    assert d.degree_histogram == [{50: 1000}]


def test_mixed_species_edge_counts():
    g = sample_mixed(60, 5, [(2, 2.0), (3, 3.0)], seed=1)
    assert [b.shape[0] for b in g.blocks] == [300, 300]
    assert np.all(g.degrees(0) == 10) and np.all(g.degrees(1) == 15)
    assert validate(g).violations == 0


def test_mixed_reduces_to_regular():
    a = sample_mixed(40, 4, [(3, 1.5)], seed=5)
    b = sample_regular(40, 3, 6, seed=5)
    assert a.same_as(b)


def test_mixed_zero_species():
    g = sample_mixed(30, 4, [(2, 1.0), (3, 0.0)], seed=2)
    assert g.blocks[1].shape[0] == 0


def test_mixed_rounding_note():
    g = sample_mixed(30, 3, [(2, 1.1)], seed=2)
    assert g.notes and "rounded" in g.notes[0]


def test_validate_hand_built():
    d = validate(FactorGraph.from_edges(4, [(0, 0, 1), (1, 2, 3)]))
    assert d.within_edge_repeats == 1 and d.duplicate_edges == 0
    d = validate(FactorGraph.from_edges(4, [(0, 1), (1, 0), (2, 3)]))
    assert d.duplicate_edges == 1 and d.within_edge_repeats == 0


@given(
    st.sampled_from([(30, 2, 4), (60, 3, 5), (24, 4, 6), (12, 3, 9), (50, 2, 12)]),
    st.integers(0, 10_000),
)
@settings(max_examples=60, deadline=None)
def test_regular_and_duplicate_free(params, seed):
    n, p, c = params
    g = sample_regular(n, p, c, seed)
    deg, dups, reps = recount(g)
    assert dups == 0 and reps == 0
    assert all(deg[v] == c for v in range(n))
    assert g.n_edges == n * c // p


def test_dense_regime_repairs():
    # 20 choose 2 = 190 pairs and 95 edges needed: half of all pairs are used
    for seed in range(20):
        g = sample_regular(20, 2, 10, seed)
        assert validate(g).violations == 0 and validate(g).regular


def test_determinism_and_seed_sensitivity():
    assert sample_regular(100, 3, 6, 4).same_as(sample_regular(100, 3, 6, 4))
    assert not sample_regular(100, 3, 6, 4).same_as(sample_regular(100, 3, 6, 5))


def test_adjacency_consistent():
    g = sample_regular(30, 3, 4, seed=0)
    for v, ks in enumerate(g.adjacency):
        assert len(ks) == 4
        assert all(v in g.edges[k] for k in ks)


def test_dump_load_round_trip(tmp_path):
    g = sample_mixed(24, 3, [(2, 1.0), (3, 2.0)], seed=3)
    path = tmp_path / "g.txt"
    dump_graph(g, path)
    assert load_graph(path, 24).same_as(g)


def test_pair_coverage_small_case():
    # every sampled edge is a valid p-subset of range(n)
    g = sample_regular(8, 3, 3, seed=1)
    allowed = set(itertools.combinations(range(8), 3))
    assert all(tuple(sorted(e)) in allowed for e in g.edges)
