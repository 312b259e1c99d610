"""Finitely supported measures on canonical trees and on pairs of half-edge trees.

Weights are 64-bit floats with a 1e-12 normalization tolerance.  Measures are
immutable after construction; +inf is a legitimate value of the entropy
functionals, never an error.
"""

from __future__ import annotations

import hashlib
import math
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .trees import (
    CanonicalTree,
    HalfEdgeTree,
    split_at_child,
    tree_from_obj,
    tree_to_obj,
    truncate,
)

MASS_TOL = 1e-12
ADMISSIBILITY_TOL = 1e-9


def _check_weights(weights: Iterable[float], what: str) -> None:
    total = math.fsum(weights)
    if abs(total - 1.0) > MASS_TOL:
        raise ValueError(f"{what} has total mass {total!r}, expected 1 within {MASS_TOL}")


class TreeMeasure:
    """A probability measure on canonical trees of depth at most ``depth_bound``.

    ``non_tree_mass`` holds probability carried by non-tree (cyclic) sample
    points that cannot be represented as atoms; it stays unresolved under
    truncation and blocks operations that need the full support.
    """

    __slots__ = ("atoms", "non_tree_mass", "depth_bound")

    def __init__(
        self,
        atoms: Mapping[CanonicalTree, float],
        non_tree_mass: float = 0.0,
        depth_bound: Optional[int] = None,
    ) -> None:
        clean: Dict[CanonicalTree, float] = {}
        for t, w in atoms.items():
            if w < 0:
                raise ValueError(f"negative weight {w!r}")
            if w > 0:
                clean[t] = float(w)
        if non_tree_mass < 0:
            raise ValueError("negative non_tree_mass")
        _check_weights(list(clean.values()) + [non_tree_mass], "tree measure")
        max_depth = max((t.depth for t in clean), default=0)
        if depth_bound is None:
            depth_bound = max_depth
        elif max_depth > depth_bound:
            raise ValueError(f"atom depth {max_depth} exceeds depth_bound {depth_bound}")
        object.__setattr__(self, "atoms", clean)
        object.__setattr__(self, "non_tree_mass", float(non_tree_mass))
        object.__setattr__(self, "depth_bound", int(depth_bound))

    def __setattr__(self, name, value):
        raise AttributeError("TreeMeasure is immutable")

    @classmethod
    def from_counts(
        cls,
        counts: Mapping[CanonicalTree, int],
        non_tree_count: int = 0,
        depth_bound: Optional[int] = None,
    ) -> "TreeMeasure":
        total = sum(counts.values()) + non_tree_count
        if total <= 0:
            raise ValueError("empty count table")
        return cls(
            {t: c / total for t, c in counts.items()},
            non_tree_count / total,
            depth_bound,
        )

    @classmethod
    def point_mass(cls, t: CanonicalTree) -> "TreeMeasure":
        return cls({t: 1.0})

    def get(self, t: CanonicalTree) -> float:
        return self.atoms.get(t, 0.0)

    def items(self) -> List[Tuple[CanonicalTree, float]]:
        """Atoms sorted by canonical encoding, for deterministic iteration."""
        return sorted(self.atoms.items(), key=lambda kv: kv[0].encoding)

    def __len__(self) -> int:
        return len(self.atoms)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TreeMeasure)
            and self.atoms == other.atoms
            and self.non_tree_mass == other.non_tree_mass
        )

    def __repr__(self) -> str:
        return (
            f"TreeMeasure({len(self.atoms)} atoms, depth_bound={self.depth_bound},"
            f" non_tree_mass={self.non_tree_mass})"
        )

    def truncated(self, h: int) -> "TreeMeasure":
        """Pushforward under depth-``h`` truncation; non-tree mass is carried over."""
        if h >= self.depth_bound:
            return self
        acc: Dict[CanonicalTree, List[float]] = {}
        for t, w in self.atoms.items():
            acc.setdefault(truncate(t, h), []).append(w)
        return TreeMeasure(
            {t: math.fsum(ws) for t, ws in acc.items()}, self.non_tree_mass, h
        )

    def _require_tree_support(self, op: str) -> None:
        if self.non_tree_mass > MASS_TOL:
            raise ValueError(f"{op} needs full tree support, non_tree_mass > 0")

    def degree_law(self) -> "DegreeLaw":
        self._require_tree_support("degree_law")
        acc: Dict[int, List[float]] = {}
        for t, w in self.atoms.items():
            acc.setdefault(t.root_degree, []).append(w)
        return DegreeLaw({k: math.fsum(ws) for k, ws in acc.items()})

    def mean_degree(self) -> float:
        self._require_tree_support("mean_degree")
        return math.fsum(t.root_degree * w for t, w in self.items())

    def root_mark_law(self) -> Dict[int, float]:
        self._require_tree_support("root_mark_law")
        acc: Dict[int, List[float]] = {}
        for t, w in self.atoms.items():
            acc.setdefault(t.mark, []).append(w)
        return {x: math.fsum(ws) for x, ws in sorted(acc.items())}

    def to_obj(self) -> dict:
        return {
            "atoms": [{"tree": tree_to_obj(t), "weight": w} for t, w in self.items()],
            "non_tree_mass": self.non_tree_mass,
            "depth_bound": self.depth_bound,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TreeMeasure":
        return cls(
            {tree_from_obj(a["tree"]): a["weight"] for a in obj["atoms"]},
            obj.get("non_tree_mass", 0.0),
            obj.get("depth_bound"),
        )


class PairMeasure:
    """A probability measure on ordered pairs of half-edge trees."""

    __slots__ = ("atoms",)

    def __init__(self, atoms: Mapping[Tuple[HalfEdgeTree, HalfEdgeTree], float]) -> None:
        clean: Dict[Tuple[HalfEdgeTree, HalfEdgeTree], float] = {}
        for pair, w in atoms.items():
            if w < 0:
                raise ValueError(f"negative weight {w!r}")
            if w > 0:
                clean[pair] = float(w)
        _check_weights(clean.values(), "pair measure")
        object.__setattr__(self, "atoms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("PairMeasure is immutable")

    def get(self, a: HalfEdgeTree, b: HalfEdgeTree) -> float:
        return self.atoms.get((a, b), 0.0)

    def items(self) -> List[Tuple[Tuple[HalfEdgeTree, HalfEdgeTree], float]]:
        return sorted(self.atoms.items(), key=lambda kv: (kv[0][0].sort_key, kv[0][1].sort_key))

    def __len__(self) -> int:
        return len(self.atoms)

    def __eq__(self, other) -> bool:
        return isinstance(other, PairMeasure) and self.atoms == other.atoms

    def swapped(self) -> "PairMeasure":
        return PairMeasure({(b, a): w for (a, b), w in self.atoms.items()})

    def symmetry_defect(self) -> float:
        """max over pairs of |p(a,b) - p(b,a)|."""
        defect = 0.0
        for (a, b), w in self.atoms.items():
            defect = max(defect, abs(w - self.atoms.get((b, a), 0.0)))
        return defect


class DegreeLaw:
    """A probability law on nonnegative integer degrees."""

    __slots__ = ("probs",)

    def __init__(self, probs: Mapping[int, float]) -> None:
        clean: Dict[int, float] = {}
        for k, w in probs.items():
            if k < 0 or k != int(k):
                raise ValueError(f"bad degree {k!r}")
            if w < 0:
                raise ValueError(f"negative weight {w!r}")
            if w > 0:
                clean[int(k)] = float(w)
        _check_weights(clean.values(), "degree law")
        object.__setattr__(self, "probs", clean)

    def __setattr__(self, name, value):
        raise AttributeError("DegreeLaw is immutable")

    def pmf(self, k: int) -> float:
        return self.probs.get(k, 0.0)

    def items(self) -> List[Tuple[int, float]]:
        return sorted(self.probs.items())

    def mean(self) -> float:
        return math.fsum(k * w for k, w in self.items())

    def max_degree(self) -> int:
        return max(self.probs, default=0)

    def __eq__(self, other) -> bool:
        return isinstance(other, DegreeLaw) and self.probs == other.probs


class DepthChain:
    """A consistent family (rho_1, ..., rho_H) of depth-h measures.

    ``levels[h-1]`` is the depth-h law.  ``extension_exact`` records that
    depths beyond the materialized prefix are defined as iterated one-step
    unimodular extensions of the last level, so their per-depth rate terms
    vanish by construction rather than by evaluation.
    """

    __slots__ = ("levels", "extension_exact")

    def __init__(self, levels: Iterable[TreeMeasure], extension_exact: bool = False) -> None:
        levels = tuple(levels)
        if not levels:
            raise ValueError("empty chain")
        for h, m in enumerate(levels, start=1):
            if m.depth_bound > h:
                raise ValueError(f"level {h} has depth_bound {m.depth_bound}")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "extension_exact", bool(extension_exact))

    def __setattr__(self, name, value):
        raise AttributeError("DepthChain is immutable")

    def __len__(self) -> int:
        return len(self.levels)

    def level(self, h: int) -> TreeMeasure:
        if not 1 <= h <= len(self.levels):
            raise IndexError(f"no materialized level {h}")
        return self.levels[h - 1]

    def truncation_defect(self) -> float:
        """max TV between each level truncated one step and the previous level."""
        worst = 0.0
        for h in range(2, len(self.levels) + 1):
            worst = max(worst, tv_distance(self.level(h).truncated(h - 1), self.level(h - 1)))
        return worst


# ---------------------------------------------------------------- entropies


def _items_of(m) -> List[Tuple[object, float]]:
    if isinstance(m, (TreeMeasure, PairMeasure, DegreeLaw)):
        return m.items()
    return sorted(m.items(), key=lambda kv: repr(kv[0]))


def entropy(m) -> float:
    """Shannon entropy -sum p log p in nats, with 0 log 0 = 0."""
    if isinstance(m, TreeMeasure):
        m._require_tree_support("entropy")
    return -math.fsum(w * math.log(w) for _, w in _items_of(m) if w > 0)


def relative_entropy(m, base) -> float:
    """sum m log(m/base) in nats; +inf when m is not absolutely continuous."""
    if isinstance(m, TreeMeasure) and isinstance(base, TreeMeasure):
        if m.non_tree_mass > MASS_TOL:
            if base.non_tree_mass > MASS_TOL:
                raise ValueError("cannot compare two unresolved non-tree masses")
            return math.inf
    base_atoms = base.atoms if hasattr(base, "atoms") else base.probs if hasattr(base, "probs") else base
    terms = []
    for key, w in _items_of(m):
        if w <= 0:
            continue
        b = base_atoms.get(key, 0.0)
        if b <= 0:
            return math.inf
        terms.append(w * math.log(w / b))
    return math.fsum(terms)


def tv_distance(m, base) -> float:
    """Total variation distance (half the l1 distance over the joint support)."""
    ma = m.atoms if hasattr(m, "atoms") else m.probs if hasattr(m, "probs") else m
    ba = base.atoms if hasattr(base, "atoms") else base.probs if hasattr(base, "probs") else base
    keys = set(ma) | set(ba)
    total = math.fsum(abs(ma.get(k, 0.0) - ba.get(k, 0.0)) for k in keys)
    if isinstance(m, TreeMeasure) and isinstance(base, TreeMeasure):
        total += abs(m.non_tree_mass - base.non_tree_mass)
    return 0.5 * total


# ---------------------------------------------------------------- size-biasing


def size_bias(rho: TreeMeasure) -> TreeMeasure:
    """Reweight by root degree over the mean degree; kills degree-0 atoms."""
    rho._require_tree_support("size_bias")
    beta = rho.mean_degree()
    if beta <= 0:
        raise ValueError("degenerate size-bias: mean degree is 0")
    return TreeMeasure(
        {t: w * t.root_degree / beta for t, w in rho.atoms.items() if t.root_degree > 0},
        0.0,
        rho.depth_bound,
    )


def pair_measure(rho: TreeMeasure, h: Optional[int] = None) -> PairMeasure:
    """Law of the ordered pair of depth-(h-1) half-edge views across a root edge.

    Cell (tau, tau') receives (1/beta) x the rho-expected number of root
    children whose cut views are (branch, remainder) = (tau, tau').
    """
    rho._require_tree_support("pair_measure")
    if h is None:
        h = rho.depth_bound
    if rho.depth_bound > h:
        raise ValueError(f"atoms of depth {rho.depth_bound} exceed h={h}; truncate first")
    beta = rho.mean_degree()
    if beta <= 0:
        raise ValueError("degenerate pair measure: mean degree is 0")
    acc: Dict[Tuple[HalfEdgeTree, HalfEdgeTree], List[float]] = {}
    for t, w in rho.atoms.items():
        for i in range(t.root_degree):
            branch, rest = split_at_child(t, i)
            key = (branch.truncated(h - 1), rest.truncated(h - 1))
            acc.setdefault(key, []).append(w)
    return PairMeasure({k: math.fsum(ws) / beta for k, ws in acc.items()})


def is_admissible(p: PairMeasure, tol: float = ADMISSIBILITY_TOL) -> Tuple[bool, float]:
    """Whether the pair measure is symmetric within ``tol``; also the max asymmetry."""
    defect = p.symmetry_defect()
    return defect <= tol, defect


def pair_marginals(p: PairMeasure):
    """(first marginal, second marginal, conditional first-given-second).

    The disintegration identity p(a, b) = second(b) * cond[b][a] holds exactly
    on atoms.
    """
    first_acc: Dict[HalfEdgeTree, List[float]] = {}
    second_acc: Dict[HalfEdgeTree, List[float]] = {}
    for (a, b), w in p.atoms.items():
        first_acc.setdefault(a, []).append(w)
        second_acc.setdefault(b, []).append(w)
    first = {a: math.fsum(ws) for a, ws in first_acc.items()}
    second = {b: math.fsum(ws) for b, ws in second_acc.items()}
    cond: Dict[HalfEdgeTree, Dict[HalfEdgeTree, float]] = {b: {} for b in second}
    for (a, b), w in p.atoms.items():
        cond[b][a] = w / second[b]
    return first, second, cond


# ---------------------------------------------------------------- mass transport


def _hash_bit(seed: int, payload: bytes) -> int:
    return hashlib.blake2b(seed.to_bytes(8, "little") + payload, digest_size=1).digest()[0] & 1


def _pair_payload(key: Tuple[HalfEdgeTree, HalfEdgeTree]) -> bytes:
    a, b = key
    return (
        a.tree.encoding
        + bytes([a.pendant_mark & 0xFF])
        + b.tree.encoding
        + bytes([b.pendant_mark & 0xFF])
    )


def transport_violation(weights, swap, payload, trial_count: int = 20, rng=None) -> float:
    """Max |sum_k w(k) (g(k) - g(swap(k)))| over a family of 0/1 functions g.

    The family is the greedy indicator 1{w(k) > w(swap(k))}, which maximizes
    the defect over all indicator functions, plus ``trial_count`` seeded hash
    functions of ``payload(k)`` as an independent guard.
    """
    violations = [
        math.fsum(
            w - weights.get(swap(k), 0.0)
            for k, w in weights.items()
            if w > weights.get(swap(k), 0.0)
        )
    ]
    if trial_count > 0:
        import numpy as np

        rng = np.random.default_rng(0) if rng is None else rng
        seeds = [int(s) for s in rng.integers(0, 2**62, size=trial_count)]
        for seed in seeds:
            violations.append(
                abs(
                    math.fsum(
                        w * (_hash_bit(seed, payload(k)) - _hash_bit(seed, payload(swap(k))))
                        for k, w in weights.items()
                    )
                )
            )
    return max(violations)


def _pair_weights(u: TreeMeasure, h: int) -> Dict[Tuple[HalfEdgeTree, HalfEdgeTree], float]:
    acc: Dict[Tuple[HalfEdgeTree, HalfEdgeTree], List[float]] = {}
    for t, w in u.atoms.items():
        for i in range(t.root_degree):
            branch, rest = split_at_child(t, i)
            key = (branch.truncated(h - 1), rest.truncated(h - 1))
            acc.setdefault(key, []).append(w)
    return {k: math.fsum(ws) for k, ws in acc.items()}


def mtp_check(u, h: Optional[int] = None, trial_count: int = 20, rng=None) -> float:
    """Max mass-transport violation over a family of bounded test functions.

    Accepts either an empirical component measure (a TreeMeasure whose atoms
    are whole components) or a finite marked graph.  Test functions depend on
    a doubly rooted component only through its pair of depth-(h-1) half-edge
    views, so both sides are finite sums; the result must be ~0 for any
    measure arising from a finite graph.
    """
    if hasattr(u, "edges"):
        from .empirical import mtp_check_graph

        return mtp_check_graph(u, h=h, trial_count=trial_count, rng=rng)
    u._require_tree_support("mtp_check")
    if h is None:
        h = max(u.depth_bound, 1)
    weights = _pair_weights(u, h)
    return transport_violation(
        weights, lambda k: (k[1], k[0]), _pair_payload, trial_count, rng
    )


# ---------------------------------------------------------------- conveniences


def degree_law(rho: TreeMeasure) -> DegreeLaw:
    return rho.degree_law()


def mean_degree(rho: TreeMeasure) -> float:
    return rho.mean_degree()
