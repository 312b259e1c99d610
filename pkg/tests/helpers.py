"""Shared builders for tests: raw trees, exact reference laws, small forests."""

from __future__ import annotations

import itertools

from graphld.measures import TreeMeasure
from graphld.trees import CanonicalTree


def canon_raw(raw):
    """Canonical tree from a raw nested ``(mark, [((yc, yr), sub), ...])``."""
    mark, kids = raw
    return CanonicalTree(mark, tuple((pair, canon_raw(sub)) for pair, sub in kids))


def star(root_mark, leaf_marks, pair=(0, 0)):
    return canon_raw((root_mark, [(pair, (m, [])) for m in leaf_marks]))


def eta1_exact(alpha, nu, xibar):
    """Depth-1 star law with root mark ~ nu, degree ~ alpha, i.i.d. child
    attributes (x, yc, yr) ~ nu x xibar; built by ordered products + collapse."""
    child_opts = [
        ((x, yc, yr), nu[x] * xibar[(yc, yr)]) for x in nu for (yc, yr) in xibar
    ]
    acc = {}
    for x0, w0 in nu.items():
        for d, ad in alpha.items():
            for combo in itertools.product(child_opts, repeat=d):
                w = w0 * ad
                kids = []
                for (x, yc, yr), cw in combo:
                    w *= cw
                    kids.append(((yc, yr), (x, [])))
                t = canon_raw((x0, kids))
                acc[t] = acc.get(t, 0.0) + w
    return TreeMeasure(acc, 0.0, 1)


def forest_component(adj, vmarks, emarks, root):
    """Component of `root` as a raw rooted tree (DFS; adj must be a forest)."""

    def build(v, parent):
        kids = []
        for w in sorted(adj[v]):
            if w != parent:
                kids.append(((emarks[(w, v)], emarks[(v, w)]), build(w, v)))
        return (vmarks[v], kids)

    return build(root, None)


def random_forest(rng, n, n_components=2, n_x=2, n_y=2):
    """Random marked forest as (adj, vmarks, emarks)."""
    adj = {v: set() for v in range(n)}
    roots = list(range(n_components))
    for v in range(n_components, n):
        p = int(rng.integers(v)) if v > n_components else roots[int(rng.integers(len(roots)))]
        adj[v].add(p)
        adj[p].add(v)
    vmarks = {v: int(rng.integers(n_x)) for v in range(n)}
    emarks = {}
    for v in adj:
        for w in adj[v]:
            if v < w:
                emarks[(v, w)] = int(rng.integers(n_y))
                emarks[(w, v)] = int(rng.integers(n_y))
    return adj, vmarks, emarks


def component_law(adj, vmarks, emarks):
    """Uniform-root component law of a marked forest, by direct enumeration."""
    counts = {}
    for v in adj:
        t = canon_raw(forest_component(adj, vmarks, emarks, v))
        counts[t] = counts.get(t, 0) + 1
    return TreeMeasure.from_counts(counts)


def half_edge_view(adj, vmarks, emarks, u, v, depth):
    """Raw tree rooted at ``u`` looking away from ``v``, truncated at ``depth``."""

    def build(w, parent, d):
        kids = []
        if d < depth:
            for z in sorted(adj[w]):
                if z != parent:
                    kids.append(((emarks[(z, w)], emarks[(w, z)]), build(z, w, d + 1)))
        return (vmarks[w], kids)

    return build(u, v, 0)


def markov_product_measure(deg_law, pair_matrix):
    """Admissible vertex-only depth-1 law from a symmetric nonnegative matrix.

    Normalizing the matrix gives the size-biased (child, root) mark pair law;
    the root mark follows its marginal and leaves are i.i.d. from the
    conditional given the root mark, independently of the degree, which makes
    the pair law symmetric by construction.
    """
    total = sum(sum(row) for row in pair_matrix)
    n_x = len(pair_matrix)
    pi = [[pair_matrix[a][b] / total for b in range(n_x)] for a in range(n_x)]
    q = [sum(pi[a][b] for a in range(n_x)) for b in range(n_x)]
    acc = {}
    for x0 in range(n_x):
        if q[x0] == 0:
            continue
        cond = [pi[a][x0] / q[x0] for a in range(n_x)]
        for d, pd in deg_law.items():
            for combo in itertools.product(range(n_x), repeat=d):
                w = pd * q[x0]
                for x in combo:
                    w *= cond[x]
                if w > 0:
                    t = star(x0, list(combo))
                    acc[t] = acc.get(t, 0.0) + w
    return TreeMeasure(acc, 0.0, 1)
