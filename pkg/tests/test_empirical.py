"""Neighborhood and component empirical measures of finite marked graphs."""

from __future__ import annotations

import math

import numpy as np
import pytest

from graphld.empirical import (
    ComponentView,
    component_measure,
    component_view,
    empirical_functional,
    mtp_check_graph,
    neighborhood_measure,
)
from graphld.measures import mtp_check, tv_distance
from graphld.samplers import MarkedGraph, make_rng, sample_er, assign_marks
from graphld.trees import CanonicalTree

from helpers import canon_raw, component_law, random_forest, star


def graph_from_forest(adj, vmarks, emarks) -> MarkedGraph:
    n = len(adj)
    edges = [(v, w) for v in adj for w in adj[v] if v < w]
    return MarkedGraph(n, edges, [vmarks[v] for v in range(n)], dict(emarks))


def unmarked(n, edges) -> MarkedGraph:
    vmarks = [0] * n
    emarks = {}
    for u, v in edges:
        emarks[(u, v)] = 0
        emarks[(v, u)] = 0
    return MarkedGraph(n, edges, vmarks, emarks)


# ---------------------------------------------------------------- views


def test_component_view_layers_distance_correct():
    g = unmarked(5, [(0, 1), (1, 2), (2, 3), (0, 4)])
    view = component_view(g, 0, 2)
    assert view.root == 0
    assert view.layers == ((0,), (1, 4), (2,))
    assert not view.cycle_detected


def test_component_view_cycle_flag():
    # the depth-h view is the induced subgraph on the radius-h ball, so the
    # triangle is already cyclic at depth 1; a 5-cycle only at depth >= 2
    tri = unmarked(3, [(0, 1), (1, 2), (0, 2)])
    assert component_view(tri, 0, 0).cycle_detected is False
    assert component_view(tri, 0, 1).cycle_detected
    c5 = unmarked(5, [(i, (i + 1) % 5) for i in range(5)])
    assert not component_view(c5, 0, 1).cycle_detected
    assert component_view(c5, 0, 2).cycle_detected


def test_component_view_negative_depth():
    with pytest.raises(ValueError):
        component_view(unmarked(1, []), 0, -1)


# ---------------------------------------------------- neighborhood measure


def test_neighborhood_empty_graph_point_mass():
    g = MarkedGraph(4, [], [1, 1, 1, 1], {})
    m = neighborhood_measure(g)
    assert m.depth_bound == 1
    assert m.non_tree_mass == 0.0
    assert m.atoms == {CanonicalTree(1): 1.0}


def test_neighborhood_triangle_point_mass():
    tri = unmarked(3, [(0, 1), (1, 2), (0, 2)])
    m = neighborhood_measure(tri)
    assert m.atoms == {star(0, [0, 0]): 1.0}


def test_neighborhood_three_path_marks():
    # path a - b - a with vertex marks a=0, b=1 and trivial edge marks
    g = MarkedGraph(3, [(0, 1), (1, 2)], [0, 1, 0],
                    {(0, 1): 0, (1, 0): 0, (1, 2): 0, (2, 1): 0})
    m = neighborhood_measure(g)
    assert m.get(star(0, [1])) == pytest.approx(2 / 3, rel=1e-15)
    assert m.get(star(1, [0, 0])) == pytest.approx(1 / 3, rel=1e-15)
    assert len(m.atoms) == 2


def test_neighborhood_matches_per_vertex_enumeration():
    rng = make_rng(41)
    for trial in range(10):
        g = sample_er(12, 2.5, make_rng(41, trial))
        g = assign_marks(g, (0.5, 0.3, 0.2), ((0.25, 0.25), (0.25, 0.25)), rng)
        adj = g.adjacency()
        acc = {}
        for v in range(g.n):
            entries = [((g.emarks[(w, v)], g.emarks[(v, w)]), (g.vmarks[w], []))
                       for w in adj[v]]
            t = canon_raw((g.vmarks[v], entries))
            acc[t] = acc.get(t, 0) + 1
        expected = {t: c / g.n for t, c in acc.items()}
        got = neighborhood_measure(g)
        assert set(got.atoms) == set(expected)
        for t, w in expected.items():
            assert got.get(t) == pytest.approx(w, rel=1e-14)


# ------------------------------------------------------ component measure


def test_component_two_disjoint_edges_deep_truncation():
    g = unmarked(4, [(0, 1), (2, 3)])
    m = component_measure(g, 5)
    assert m.atoms == {star(0, [0]): 1.0}
    assert m.non_tree_mass == 0.0
    assert m.depth_bound == 5


def test_component_triangle_all_non_tree_at_depth_2():
    tri = unmarked(3, [(0, 1), (1, 2), (0, 2)])
    m2 = component_measure(tri, 2)
    assert m2.non_tree_mass == 1.0
    assert m2.atoms == {}
    # the induced depth-1 view of a triangle vertex already holds the cycle,
    # unlike its always-a-tree neighborhood star
    m1 = component_measure(tri, 1)
    assert m1.non_tree_mass == 1.0
    assert neighborhood_measure(tri).atoms == {star(0, [0, 0]): 1.0}
    m0 = component_measure(tri, 0)
    assert m0.atoms == {CanonicalTree(0): 1.0}


def test_component_forest_matches_dfs_oracle():
    for seed in range(8):
        rng = make_rng(7, seed)
        adj, vmarks, emarks = random_forest(rng, 10)
        g = graph_from_forest(adj, vmarks, emarks)
        full = component_law(adj, vmarks, emarks)
        for h in (1, 2, 3):
            got = component_measure(g, h)
            want = full.truncated(h)
            assert got.non_tree_mass == 0.0
            assert set(got.atoms) == set(want.atoms)
            for t, w in want.items():
                assert got.get(t) == pytest.approx(w, rel=1e-13)


def test_component_depth1_marginal_is_neighborhood_on_forests():
    rng = make_rng(11)
    adj, vmarks, emarks = random_forest(rng, 12, n_components=3)
    g = graph_from_forest(adj, vmarks, emarks)
    L = neighborhood_measure(g)
    for h in (1, 2, 4):
        assert component_measure(g, h).truncated(1) == L


def test_component_star_collapse_accounts_for_cycles():
    # triangle with a pendant: vertex 3 attached to 0
    g = unmarked(4, [(0, 1), (1, 2), (0, 2), (0, 3)])
    L = neighborhood_measure(g)
    u2 = component_measure(g, 2)
    # every vertex sees the cycle within depth 2 except the pendant's view
    # still contains it; tree atoms' depth-1 truncations stay below L
    trunc = u2.truncated(1)
    gap = []
    for t, w in L.items():
        assert trunc.get(t) <= w + 1e-12
        gap.append(w - trunc.get(t))
    assert math.fsum(gap) == pytest.approx(u2.non_tree_mass, abs=1e-12)


# ----------------------------------------------------------- functionals


def test_functional_empty_graph_zero():
    g = MarkedGraph(3, [], [0, 1, 0], {})
    assert empirical_functional(neighborhood_measure(g), lambda x: 10.0 + x) == 0.0


def test_functional_regular_graph():
    # 2-regular all-mark-1 graph: <L, f> = 2 * hfun(1)
    cyc = [(i, (i + 1) % 5) for i in range(5)]
    g = MarkedGraph(5, cyc, [1] * 5, {k: 0 for e in cyc for k in (e, e[::-1])})
    val = empirical_functional(neighborhood_measure(g), lambda x: 3.5 if x == 1 else 0.0)
    assert val == pytest.approx(2 * 3.5, rel=1e-14)


def test_functional_three_path_example():
    g = MarkedGraph(3, [(0, 1), (1, 2)], [1, 0, 1],
                    {(0, 1): 0, (1, 0): 0, (1, 2): 0, (2, 1): 0})
    # root 0 (mark 1): neighbor mark 0; root 1: neighbors 1,1; root 2: neighbor 0
    val = empirical_functional(neighborhood_measure(g), lambda x: float(x))
    assert val == pytest.approx(2 / 3, rel=1e-14)


def test_functional_needs_depth_one():
    g = unmarked(2, [(0, 1)])
    with pytest.raises(ValueError):
        empirical_functional(component_measure(g, 0), lambda x: 1.0)


# --------------------------------------------------------- mass transport


def test_mtp_graph_zero_on_cyclic_graphs():
    shapes = [
        unmarked(3, [(0, 1), (1, 2), (0, 2)]),
        unmarked(5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]),
        unmarked(6, [(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (4, 5), (5, 2)]),
    ]
    rng = make_rng(5)
    for i in range(6):
        g = sample_er(14, 2.8, make_rng(5, i))
        shapes.append(assign_marks(g, (0.6, 0.4), ((0.5, 0.1), (0.2, 0.2)), rng))
    for g in shapes:
        assert mtp_check_graph(g, h=2, rng=make_rng(99)) <= 1e-9


def test_mtp_graph_and_measure_agree_on_forests():
    for seed in range(5):
        rng = make_rng(23, seed)
        adj, vmarks, emarks = random_forest(rng, 11)
        g = graph_from_forest(adj, vmarks, emarks)
        assert mtp_check_graph(g, h=2, rng=make_rng(1)) <= 1e-9
        u2 = component_measure(g, 2)
        assert mtp_check(u2, rng=make_rng(2)) <= 1e-9
        # polymorphic entry point dispatches on the graph as well
        assert mtp_check(g, h=2, rng=make_rng(3)) <= 1e-9


def test_local_convergence_toward_reference_stars():
    # TV(neighborhood law of ER(n, kappa), Poisson-star reference) shrinks in n
    from graphld.rates import ReferenceLaw

    law = ReferenceLaw.poisson(1.5, (1.0,), ((1.0,),))
    eta = law.materialize()
    tvs = []
    for n in (100, 2000):
        vals = []
        for s in range(3):
            g = sample_er(n, 1.5, make_rng(77, 10 * n + s))
            g = assign_marks(g, (1.0,), ((1.0,),), make_rng(78, 10 * n + s))
            vals.append(tv_distance(neighborhood_measure(g), eta))
        tvs.append(np.mean(vals))
    assert tvs[1] < tvs[0]
    assert tvs[1] < 0.05
