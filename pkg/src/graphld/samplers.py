"""Random generation of sparse marked graph ensembles and Galton-Watson trees.

All samplers are pure functions of (arguments, rng); rngs are counter-based
(Philox) so runs are bit-reproducible across platforms, and parallel batches
can use independent streams of the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .measures import MASS_TOL, DegreeLaw
from .trees import LabeledTree


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; distinct (seed, stream) pairs are independent."""
    return np.random.Generator(np.random.Philox(key=[seed % 2**64, stream % 2**64]))


# ---------------------------------------------------------------- graph type


class MarkedGraph:
    """A finite simple graph, optionally with vertex and directed edge marks.

    ``emarks[(u, v)]`` is the mark vertex ``u`` carries on edge {u, v}; every
    edge has entries for both directions.
    """

    __slots__ = ("n", "edges", "vmarks", "emarks")

    def __init__(
        self,
        n: int,
        edges: Sequence[Tuple[int, int]],
        vmarks: Optional[Sequence[int]] = None,
        emarks: Optional[Dict[Tuple[int, int], int]] = None,
    ) -> None:
        norm = []
        seen = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range")
            e = (u, v) if u < v else (v, u)
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            norm.append(e)
        if (vmarks is None) != (emarks is None):
            raise ValueError("vertex and edge marks must be supplied together")
        if vmarks is not None:
            if len(vmarks) != n:
                raise ValueError("vmarks length mismatch")
            vmarks = tuple(int(x) for x in vmarks)
            emarks = {(int(a), int(b)): int(y) for (a, b), y in emarks.items()}
            for u, v in norm:
                if (u, v) not in emarks or (v, u) not in emarks:
                    raise ValueError(f"missing directed mark on edge ({u}, {v})")
            if len(emarks) != 2 * len(norm):
                raise ValueError("edge mark entries do not match the edge set")
        self.n = int(n)
        self.edges = tuple(sorted(norm))
        self.vmarks = vmarks
        self.emarks = emarks

    @property
    def is_marked(self) -> bool:
        return self.vmarks is not None

    def adjacency(self) -> List[List[int]]:
        adj: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for lst in adj:
            lst.sort()
        return adj

    def degree_histogram(self) -> Dict[int, int]:
        deg = [0] * self.n
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        hist: Dict[int, int] = {}
        for d in deg:
            hist[d] = hist.get(d, 0) + 1
        return hist

    def to_obj(self) -> dict:
        obj = {"n": self.n, "edges": [[u, v] for u, v in self.edges]}
        if self.is_marked:
            obj["vmarks"] = list(self.vmarks)
            obj["emarks"] = [
                {"u": u, "v": v, "yu": self.emarks[(u, v)], "yv": self.emarks[(v, u)]}
                for u, v in self.edges
            ]
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "MarkedGraph":
        vmarks = obj.get("vmarks")
        emarks = None
        if vmarks is not None:
            emarks = {}
            for rec in obj["emarks"]:
                emarks[(rec["u"], rec["v"])] = rec["yu"]
                emarks[(rec["v"], rec["u"])] = rec["yv"]
        return cls(obj["n"], [tuple(e) for e in obj["edges"]], vmarks, emarks)


@dataclass(frozen=True)
class ModelConfig:
    """Configuration of one graph ensemble with i.i.d. marks.

    ``nu`` is the vertex mark law; ``xi`` the (possibly asymmetric) law on
    ordered edge mark pairs.  ``alpha`` is required for the CM ensemble,
    ``kappa`` for ER; FE takes an explicit edge count or derives one from
    ``kappa`` as round(n * kappa / 2).
    """

    ensemble: str
    nu: Tuple[float, ...]
    xi: Tuple[Tuple[float, ...], ...]
    seed: int = 0
    kappa: Optional[float] = None
    alpha: Optional[DegreeLaw] = None
    m_n: Optional[int] = None

    def __post_init__(self):
        if self.ensemble not in ("CM", "FE", "ER"):
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if abs(math.fsum(self.nu) - 1.0) > MASS_TOL or min(self.nu) < 0:
            raise ValueError("nu is not a probability vector")
        flat = [w for row in self.xi for w in row]
        if abs(math.fsum(flat) - 1.0) > MASS_TOL or min(flat) < 0:
            raise ValueError("xi is not a probability matrix")
        if any(len(row) != len(self.xi) for row in self.xi):
            raise ValueError("xi must be square")
        if self.ensemble == "CM" and self.alpha is None:
            raise ValueError("CM needs a degree law alpha")
        if self.ensemble == "ER" and self.kappa is None:
            raise ValueError("ER needs kappa")
        if self.ensemble == "FE" and self.kappa is None and self.m_n is None:
            raise ValueError("FE needs kappa or m_n")

    def mean_degree(self) -> float:
        if self.ensemble == "CM":
            return self.alpha.mean()
        return float(self.kappa) if self.kappa is not None else 0.0

    def edge_count(self, n: int) -> int:
        if self.m_n is not None:
            return self.m_n
        return round(n * self.kappa / 2)

    def to_obj(self) -> dict:
        obj = {
            "ensemble": self.ensemble,
            "nu": list(self.nu),
            "xi": [list(r) for r in self.xi],
            "seed": self.seed,
        }
        if self.kappa is not None:
            obj["kappa"] = self.kappa
        if self.alpha is not None:
            obj["alpha"] = {str(k): w for k, w in self.alpha.items()}
        if self.m_n is not None:
            obj["m_n"] = self.m_n
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "ModelConfig":
        alpha = obj.get("alpha")
        if alpha is not None:
            alpha = DegreeLaw({int(k): w for k, w in alpha.items()})
        return cls(
            ensemble=obj["ensemble"],
            nu=tuple(obj["nu"]),
            xi=tuple(tuple(r) for r in obj["xi"]),
            seed=obj.get("seed", 0),
            kappa=obj.get("kappa"),
            alpha=alpha,
            m_n=obj.get("m_n"),
        )


# ---------------------------------------------------------------- degree counts


def integer_degree_counts(alpha: DegreeLaw, n: int) -> Dict[int, int]:
    """Integer vertex counts per degree close to n*alpha, with even total degree.

    Largest-remainder apportionment; if the total degree comes out odd, one
    vertex is moved from some odd degree k (the likeliest) to k - 1.
    """
    items = alpha.items()
    floors = {k: int(math.floor(n * w)) for k, w in items}
    remainders = sorted(
        ((n * w - floors[k], k) for k, w in items), key=lambda t: (-t[0], t[1])
    )
    short = n - sum(floors.values())
    for _, k in remainders[:short]:
        floors[k] += 1
    if sum(k * c for k, c in floors.items()) % 2:
        odd = [k for k, c in floors.items() if k % 2 and c > 0]
        if not odd:
            raise ValueError("cannot fix degree parity")
        k = max(odd, key=lambda k: floors[k])
        floors[k] -= 1
        floors[k - 1] = floors.get(k - 1, 0) + 1
    return {k: c for k, c in sorted(floors.items()) if c > 0}


def _degree_sequence(cfg: ModelConfig, n: int) -> List[int]:
    degrees: List[int] = []
    for k, w in cfg.alpha.items():
        c = n * w
        if abs(c - round(c)) > 1e-9:
            raise ValueError(f"n * alpha({k}) = {c} is not integral")
        degrees.extend([k] * round(c))
    if len(degrees) != n:
        raise ValueError("alpha counts do not sum to n")
    if sum(degrees) % 2:
        raise ValueError("odd total degree")
    return degrees


# ---------------------------------------------------------------- pair indexing


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2

def _pair_start(u: int, n: int) -> int:
    return u * (n - 1) - u * (u - 1) // 2

def _unrank_pair(t: int, n: int) -> Tuple[int, int]:
    """The t-th pair (u, v), u < v, in lexicographic order."""
    u = min(int(n - 1 - (1 + math.isqrt(1 + 8 * (_pair_count(n) - 1 - t))) // 2), n - 2)
    while _pair_start(u + 1, n) <= t:
        u += 1
    while _pair_start(u, n) > t:
        u -= 1
    return u, u + 1 + (t - _pair_start(u, n))


# ---------------------------------------------------------------- ensembles


def sample_cm(n: int, cfg: ModelConfig, rng: np.random.Generator, max_restarts: int = 1000) -> MarkedGraph:
    """Uniform simple graph with degree histogram exactly n * alpha.

    Configuration-model stub pairing with whole-pairing rejection: any pairing
    containing a self-loop or multi-edge restarts from scratch, which leaves
    the uniform law on simple realizations.
    """
    degrees = _degree_sequence(cfg, n)
    if not nx.is_graphical(degrees):
        raise ValueError("degree sequence is not graphical")
    stubs = np.repeat(np.arange(n), degrees)
    if stubs.size == 0:
        return MarkedGraph(n, [])
    for _ in range(max_restarts):
        perm = rng.permutation(stubs)
        u = np.minimum(perm[0::2], perm[1::2])
        v = np.maximum(perm[0::2], perm[1::2])
        if np.any(u == v):
            continue
        codes = u.astype(np.int64) * n + v
        if np.unique(codes).size != codes.size:
            continue
        return MarkedGraph(n, list(zip(u.tolist(), v.tolist())))
    raise RuntimeError(f"no simple pairing found in {max_restarts} restarts")


def sample_fe(n: int, m_n: int, rng: np.random.Generator) -> MarkedGraph:
    """Uniform simple graph with exactly m_n edges (partial Fisher-Yates)."""
    total = _pair_count(n)
    if m_n > total:
        raise ValueError(f"m_n = {m_n} exceeds {total} available pairs")
    swap: Dict[int, int] = {}
    picks = []
    for i in range(m_n):
        j = i + int(rng.integers(total - i))
        picks.append(swap.get(j, j))
        swap[j] = swap.get(i, i)
    return MarkedGraph(n, [_unrank_pair(t, n) for t in picks])


def sample_er(n: int, kappa: float, rng: np.random.Generator) -> MarkedGraph:
    """Each pair independently present with probability kappa / n."""
    if kappa > n:
        raise ValueError("kappa exceeds n")
    if kappa < 0:
        raise ValueError("negative kappa")
    p = kappa / n
    total = _pair_count(n)
    if p <= 0 or total == 0:
        return MarkedGraph(n, [])
    if p >= 1:
        return MarkedGraph(n, [_unrank_pair(t, n) for t in range(total)])
    picks = []
    cur = -1
    batch = max(64, int(total * p * 1.2))
    while True:
        gaps = rng.geometric(p, size=batch)
        for g in gaps:
            cur += int(g)
            if cur >= total:
                return MarkedGraph(n, [_unrank_pair(t, n) for t in picks])
            picks.append(cur)


def assign_marks(g: MarkedGraph, nu: Sequence[float], xi, rng: np.random.Generator) -> MarkedGraph:
    """I.i.d. vertex marks from nu; per edge an ordered pair from xi assigned
    to the two sides by a fair coin, so each directed pair has the symmetrized
    law (xi + xi^T) / 2."""
    if g.is_marked:
        raise ValueError("graph is already marked")
    xi = np.asarray(xi, dtype=float)
    vmarks = rng.choice(len(nu), size=g.n, p=np.asarray(nu, dtype=float))
    m = len(g.edges)
    emarks: Dict[Tuple[int, int], int] = {}
    if m:
        flat = rng.choice(xi.size, size=m, p=xi.ravel())
        ys, yps = np.unravel_index(flat, xi.shape)
        coins = rng.integers(2, size=m)
        for (u, v), y, yp, c in zip(g.edges, ys.tolist(), yps.tolist(), coins.tolist()):
            yu, yv = (y, yp) if c else (yp, y)
            emarks[(u, v)] = yu
            emarks[(v, u)] = yv
    return MarkedGraph(g.n, g.edges, vmarks.tolist(), emarks)


# ---------------------------------------------------------------- tree samplers


def _size_biased_offspring(q: DegreeLaw) -> DegreeLaw:
    mean = q.mean()
    if mean <= 0:
        raise ValueError("zero-mean offspring law")
    return DegreeLaw({k - 1: k * w / mean for k, w in q.items() if k > 0})


def sample_sized_biased_gw(offspring, nu, xi, depth: int, rng: np.random.Generator) -> LabeledTree:
    """Size-biased Galton-Watson tree truncated at ``depth``, with i.i.d. marks.

    ``offspring`` is a DegreeLaw (root offspring; deeper vertices use the
    size-biased shifted law (k+1) q(k+1) / mean) or a float Poisson mean, for
    which the shifted law is again Poisson.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if isinstance(offspring, DegreeLaw):
        rootlaw = offspring
        deeplaw = _size_biased_offspring(offspring)

        def draw(law):
            ks, ws = zip(*law.items())
            return int(ks[rng.choice(len(ks), p=np.asarray(ws) / math.fsum(ws))])

        draw_root = lambda: draw(rootlaw)
        draw_deep = lambda: draw(deeplaw)
    else:
        beta = float(offspring)
        if beta <= 0:
            raise ValueError("zero-mean offspring law")
        draw_root = draw_deep = lambda: int(rng.poisson(beta))

    nu = np.asarray(nu, dtype=float)
    xi = np.asarray(xi, dtype=float)

    def edge_pair() -> Tuple[int, int]:
        flat = int(rng.choice(xi.size, p=xi.ravel()))
        y, yp = np.unravel_index(flat, xi.shape)
        return (int(y), int(yp)) if rng.integers(2) else (int(yp), int(y))

    vmarks = {(): int(rng.choice(len(nu), p=nu))}
    emarks: Dict[Tuple[tuple, tuple], int] = {}
    frontier = [()]
    for level in range(depth):
        nxt = []
        for v in frontier:
            k = draw_root() if level == 0 and v == () else draw_deep()
            for slot in range(1, k + 1):
                c = v + (slot,)
                vmarks[c] = int(rng.choice(len(nu), p=nu))
                yc, yr = edge_pair()
                emarks[(c, v)] = yc
                emarks[(v, c)] = yr
                nxt.append(c)
        frontier = nxt
    return LabeledTree(vmarks, emarks)


def sample_ugwt(rho_h, h: int, depth: int, rng: np.random.Generator) -> LabeledTree:
    """Draw from the unimodular extension of an admissible depth-h law.

    The extension is materialized exactly by iterating the one-step extension
    up to ``depth`` and drawing from the resulting finite law; intended for
    enumerable supports (the support grows quickly with depth).
    """
    from .measures import is_admissible, pair_measure
    from .rates import one_step_extension
    from .trees import random_labeling

    if depth < h:
        raise ValueError("depth must be at least h")
    law = rho_h
    if rho_h.mean_degree() > 0:
        ok, defect = is_admissible(pair_measure(rho_h, h))
        if not ok:
            raise ValueError(f"input law is inadmissible (asymmetry {defect:.3g})")
        for d in range(h, depth):
            law = one_step_extension(law, d)
    atoms, weights = zip(*law.items())
    i = rng.choice(len(atoms), p=np.asarray(weights) / math.fsum(weights))
    return random_labeling(atoms[int(i)], rng)
