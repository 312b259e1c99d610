"""Canonical rooted marked trees and the combinatorial operations on them.

Vertices carry a mark from a finite alphabet X and every directed edge side
carries a mark from a finite alphabet Y; marks are stored as integer indices.
A rooted marked tree is represented up to isomorphism by a ``CanonicalTree``,
whose children are kept sorted under a fixed total order, so two labeled trees
are isomorphic iff their canonical encodings are equal (marked AHU form).
"""

from __future__ import annotations

import hashlib
import struct
from typing import Dict, Iterator, List, NamedTuple, Tuple

_HDR = struct.Struct("<HH")

__all__ = [
    "CanonicalTree",
    "HalfEdgeTree",
    "LabeledTree",
    "canonicalize",
    "truncate",
    "split_at_child",
    "attach",
    "branch_views",
    "count_branch_pairs",
    "random_labeling",
    "tree_to_obj",
    "tree_from_obj",
]


class CanonicalTree:
    """Isomorphism-class representative of a rooted marked tree.

    ``children`` is a tuple of ``((y_child_side, y_root_side), subtree)``
    entries sorted lexicographically on (edge mark pair, subtree encoding).
    The mark pair stores the child-to-root side first, root-to-child second.
    Instances are immutable; a compact byte encoding and a 64-bit hash are
    memoized for use as map keys.
    """

    __slots__ = ("mark", "children", "depth", "encoding", "_hash")

    def __init__(self, mark: int, children: Tuple = ()) -> None:
        if not 0 <= mark < 0xFFFF:
            raise ValueError("mark index out of range")
        kids = sorted(children, key=lambda c: (c[0], c[1].encoding))
        object.__setattr__(self, "mark", int(mark))
        object.__setattr__(self, "children", tuple(kids))
        depth = 0 if not kids else 1 + max(sub.depth for _, sub in kids)
        object.__setattr__(self, "depth", depth)
        parts = [_HDR.pack(mark, len(kids))]
        for (yc, yr), sub in kids:
            parts.append(_HDR.pack(yc, yr))
            parts.append(sub.encoding)
        enc = b"".join(parts)
        object.__setattr__(self, "encoding", enc)
        h = int.from_bytes(hashlib.blake2b(enc, digest_size=8).digest(), "little")
        object.__setattr__(self, "_hash", h)

    def __setattr__(self, name, value):
        raise AttributeError("CanonicalTree is immutable")

    @property
    def root_degree(self) -> int:
        return len(self.children)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, CanonicalTree):
            return NotImplemented
        return self.encoding == other.encoding

    def __lt__(self, other: "CanonicalTree") -> bool:
        return self.encoding < other.encoding

    def size(self) -> int:
        """Number of vertices."""
        return 1 + sum(sub.size() for _, sub in self.children)

    def __repr__(self) -> str:
        return f"CanonicalTree(mark={self.mark}, deg={self.root_degree}, depth={self.depth})"


class HalfEdgeTree(NamedTuple):
    """A canonical tree plus the pendant mark carried toward a removed neighbor."""

    tree: CanonicalTree
    pendant_mark: int

    def truncated(self, h: int) -> "HalfEdgeTree":
        return HalfEdgeTree(truncate(self.tree, h), self.pendant_mark)

    @property
    def sort_key(self):
        return (self.tree.encoding, self.pendant_mark)


class LabeledTree:
    """A rooted marked tree with Ulam-Harris-Neveu labels.

    The root is the empty tuple; the children of a vertex with l children
    carry its label extended by a suffix in 1..l.  ``vmarks`` maps labels to
    vertex marks, ``emarks`` maps ordered label pairs (both directions of
    every edge) to edge marks.
    """

    __slots__ = ("vmarks", "emarks", "_children")

    def __init__(self, vmarks: Dict[tuple, int], emarks: Dict[Tuple[tuple, tuple], int]) -> None:
        if () not in vmarks:
            raise ValueError("missing root label ()")
        children: Dict[tuple, List[tuple]] = {v: [] for v in vmarks}
        for v in vmarks:
            if v == ():
                continue
            parent = v[:-1]
            if parent not in vmarks:
                raise ValueError(f"label set not prefix closed at {v}")
            children[parent].append(v)
        for v, kids in children.items():
            kids.sort()
            if [k[-1] for k in kids] != list(range(1, len(kids) + 1)):
                raise ValueError(f"child suffixes of {v} are not 1..l")
            for k in kids:
                if (v, k) not in emarks or (k, v) not in emarks:
                    raise ValueError(f"missing edge mark on ({v}, {k})")
        self.vmarks = dict(vmarks)
        self.emarks = dict(emarks)
        self._children = children

    def children(self, v: tuple) -> List[tuple]:
        return self._children[v]

    def __len__(self) -> int:
        return len(self.vmarks)

    def vertices(self) -> Iterator[tuple]:
        return iter(self.vmarks)


def canonicalize(t: LabeledTree) -> CanonicalTree:
    """Canonical representative of `t`; invariant under relabeling."""

    def build(v: tuple) -> CanonicalTree:
        kids = []
        for c in t.children(v):
            pair = (t.emarks[(c, v)], t.emarks[(v, c)])
            kids.append((pair, build(c)))
        return CanonicalTree(t.vmarks[v], tuple(kids))

    return build(())


def truncate(t: CanonicalTree, h: int) -> CanonicalTree:
    """Subtree of vertices within distance `h` of the root."""
    if h < 0:
        raise ValueError("truncation depth must be nonnegative")
    if t.depth <= h:
        return t
    if h == 0:
        return CanonicalTree(t.mark)
    return CanonicalTree(t.mark, tuple((pair, truncate(sub, h - 1)) for pair, sub in t.children))


def split_at_child(t: CanonicalTree, child_index: int) -> Tuple[HalfEdgeTree, HalfEdgeTree]:
    """Cut the edge to one root child.

    Returns (branch, remainder): the child subtree keeping the child-side
    mark as its pendant, and the tree with that branch removed keeping the
    root-side mark as its pendant.
    """
    if not 0 <= child_index < t.root_degree:
        raise IndexError("child index out of range")
    (yc, yr), sub = t.children[child_index]
    rest = t.children[:child_index] + t.children[child_index + 1 :]
    return HalfEdgeTree(sub, yc), HalfEdgeTree(CanonicalTree(t.mark, rest), yr)


def attach(a: HalfEdgeTree, b: HalfEdgeTree) -> CanonicalTree:
    """Attach `b` as a new root child of `a`, consuming both pendant marks.

    The new edge carries ``b.pendant_mark`` on the child side and
    ``a.pendant_mark`` on the root side; the root degree grows by one.
    """
    entry = ((b.pendant_mark, a.pendant_mark), b.tree)
    return CanonicalTree(a.tree.mark, a.tree.children + (entry,))


def branch_views(t: CanonicalTree, h: int) -> List[Tuple[HalfEdgeTree, HalfEdgeTree]]:
    """Per root child, the pair (branch, remainder) truncated at depth `h`."""
    views = []
    for i in range(t.root_degree):
        branch, rest = split_at_child(t, i)
        views.append((branch.truncated(h), rest.truncated(h)))
    return views


def count_branch_pairs(
    tau: HalfEdgeTree, tau_prime: HalfEdgeTree, t: CanonicalTree, h: int
) -> int:
    """Number of root children of `t` whose depth-(h-1) cut views equal (tau, tau_prime)."""
    if h < 1:
        raise ValueError("h must be at least 1")
    if tau.tree.depth > h - 1 or tau_prime.tree.depth > h - 1:
        raise ValueError("view depth exceeds h-1")
    if t.depth > h:
        raise ValueError("tree depth exceeds h")
    return sum(1 for pair in branch_views(t, h - 1) if pair == (tau, tau_prime))


def random_labeling(t: CanonicalTree, rng) -> LabeledTree:
    """Uniformly random Ulam-Harris-Neveu labeling of `t`.

    Each vertex's children are put in uniformly random order, independently
    across vertices, which realizes breadth-first labeling with ties broken
    uniformly at random.
    """
    vmarks: Dict[tuple, int] = {}
    emarks: Dict[Tuple[tuple, tuple], int] = {}

    def place(node: CanonicalTree, label: tuple) -> None:
        vmarks[label] = node.mark
        k = node.root_degree
        if k == 0:
            return
        order = rng.permutation(k)
        for slot, idx in enumerate(order, start=1):
            (yc, yr), sub = node.children[int(idx)]
            child = label + (slot,)
            emarks[(child, label)] = yc
            emarks[(label, child)] = yr
            place(sub, child)

    place(t, ())
    return LabeledTree(vmarks, emarks)


def tree_to_obj(t: CanonicalTree) -> dict:
    """JSON-ready encoding: {"mark": m, "children": [{"ym_child", "ym_root", "tree"}]}."""
    return {
        "mark": t.mark,
        "children": [
            {"ym_child": yc, "ym_root": yr, "tree": tree_to_obj(sub)}
            for (yc, yr), sub in t.children
        ],
    }


def tree_from_obj(obj: dict) -> CanonicalTree:
    kids = tuple(
        ((c["ym_child"], c["ym_root"]), tree_from_obj(c["tree"])) for c in obj["children"]
    )
    return CanonicalTree(obj["mark"], kids)
