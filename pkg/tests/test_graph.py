import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmci.graph import (
    INTER,
    RELATION_BLOCKS,
    GraphInputError,
    RelationKind,
    Sample,
    align,
    build_graph,
    edge_count,
)


def make_sample(n_t, n_a, n_v, dep=(), d=(3, 2, 2), seed=0):
    rng = np.random.default_rng(seed)
    return Sample(
        rng.standard_normal((n_t, d[0])),
        rng.standard_normal((n_a, d[1])),
        rng.standard_normal((n_v, d[2])),
        list(dep),
        0.0,
        "s",
    )


def test_relation_kind_order():
    assert [r.name for r in RelationKind] == ["TT", "AA", "VV", "TV", "TA", "VA"]
    assert [int(r) for r in RelationKind] == list(range(6))


def test_small_graph_example():
    g = build_graph(make_sample(2, 1, 1, [(0, 1)]))
    assert g.N == 4
    assert set(g.edge_list(RelationKind.TT)) == {(0, 1), (1, 0), (0, 0), (1, 1)}
    assert set(g.edge_list(RelationKind.AA)) == {(2, 2)}
    assert set(g.edge_list(RelationKind.VV)) == {(3, 3)}
    ta = set(g.edge_list(RelationKind.TA))
    # both text nodes align to the single audio node
    assert ta == {(0, 2), (2, 0), (1, 2), (2, 1)}
    assert edge_count(g, RelationKind.TT) == 4


def test_equal_lengths_pair_equal_positions():
    g = build_graph(make_sample(3, 3, 3))
    expected = {(i, i + 3) for i in range(3)} | {(i + 3, i) for i in range(3)}
    assert set(g.edge_list(RelationKind.TA)) == expected


def test_unequal_alignment_example():
    assert [align(i, 4, 2) for i in range(4)] == [0, 0, 1, 1]
    g = build_graph(make_sample(4, 2, 1))
    forward = {(i, j - 4) for i, j in g.edge_list(RelationKind.TA) if i < 4}
    assert forward == {(0, 0), (1, 0), (2, 1), (3, 1)}


def test_edge_counts():
    assert edge_count(build_graph(make_sample(3, 1, 1)), RelationKind.TT) == 3
    assert edge_count(build_graph(make_sample(1, 5, 1)), RelationKind.AA) == 13


def test_out_of_range_dep_edge():
    with pytest.raises(GraphInputError):
        build_graph(make_sample(2, 1, 1, [(0, 2)]))


def test_non_finite_features_rejected():
    s = make_sample(2, 1, 1)
    s.audio_feats[0, 0] = np.nan
    with pytest.raises(GraphInputError):
        build_graph(s)


def test_no_inter_leaves_cross_modal_empty():
    g = build_graph(make_sample(3, 2, 4), inter_modal=False)
    for r in INTER:
        assert edge_count(g, r) == 0


def test_dense_adjacency_matches_edge_lists():
    g = build_graph(make_sample(3, 2, 2, [(0, 2)]))
    adj = g.dense_adjacency()
    assert adj.shape == (7, 7, 6)
    for r in RelationKind:
        assert int(adj[:, :, r].sum()) == edge_count(g, r)


samples = st.tuples(
    st.integers(1, 7), st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**16)
).flatmap(
    lambda t: st.tuples(
        st.just(t),
        st.lists(st.tuples(st.integers(0, t[0] - 1), st.integers(0, t[0] - 1)), max_size=6),
    )
)


@settings(max_examples=150, deadline=None)
@given(samples)
def test_block_discipline_symmetry_and_self_loops(args):
    (n_t, n_a, n_v, seed), dep = args
    g = build_graph(make_sample(n_t, n_a, n_v, dep, seed=seed))
    assert g.N == n_t + n_a + n_v
    for r in RelationKind:
        pairs = set(g.edge_list(r))
        a, b = RELATION_BLOCKS[r]
        for i, j in pairs:
            assert (j, i) in pairs
            assert {g.block_of(i), g.block_of(j)} == {a, b}
    for r, n, lo in zip(RelationKind, (n_t, n_a, n_v), g.modality_offsets):
        pairs = set(g.edge_list(r))
        assert all((lo + i, lo + i) in pairs for i in range(n))
    # every node of either block has an aligned partner
    for r in INTER:
        a, b = RELATION_BLOCKS[r]
        touched = {i for i, _ in g.edge_list(r)}
        lo = g.modality_offsets[a]
        sizes = (n_t, n_a, n_v)
        assert set(range(lo, lo + sizes[a])) <= touched


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30))
def test_align_in_range_and_identity(n_from, n_to):
    for i in range(n_from):
        assert 0 <= align(i, n_from, n_to) < n_to
    if n_from == n_to:
        assert [align(i, n_from, n_to) for i in range(n_from)] == list(range(n_from))
