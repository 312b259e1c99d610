"""Large-deviation rate functions for neighborhood and component empirical measures.

Three provably equal representations are implemented as mutual cross-checks:

* the component form, an average of two relative entropies per depth against
  the one-step unimodular extension and its conditionally reweighted version;
* the intermediate form, a difference of tree-level and pair-level relative
  entropies per depth;
* the combinatorial form, assembled from Shannon entropies, matching
  entropies, and pairing-multiplicity log-factorials (microstate counting).

All evaluations are truncated at a finite depth H; the per-depth summands are
nonnegative, so truncated totals are certified lower bounds for the component
and intermediate forms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .measures import (
    MASS_TOL,
    DegreeLaw,
    DepthChain,
    PairMeasure,
    TreeMeasure,
    entropy,
    is_admissible,
    pair_marginals,
    pair_measure,
    relative_entropy,
    tv_distance,
)
from .trees import CanonicalTree, HalfEdgeTree, branch_views, split_at_child

GATE_TOL = 1e-9
POISSON_TAIL = 1e-13

__all__ = [
    "GATE_TOL",
    "ReferenceLaw",
    "RateReport",
    "ExtensionKernel",
    "edge_density_rate",
    "leaf_indep_law",
    "leaf_cond_law",
    "nbd_rate_generic",
    "nbd_rate",
    "vertex_only_rate",
    "extension_kernel",
    "one_step_extension",
    "cond_extension_law",
    "extension_chain",
    "edge_mark_intensity",
    "matching_entropy",
    "matching_entropy_sum",
    "ensemble_reference",
    "component_rate",
    "intermediate_rate",
    "combinatorial_rate",
]


def edge_density_rate(kappa: float, beta: float) -> float:
    """Cost per vertex of shifting the mean degree from kappa to beta.

    (kappa/2) * ((beta/kappa) log(beta/kappa) - beta/kappa + 1), with 0 log 0 = 0;
    convex in beta with minimum 0 at beta = kappa.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return kappa / 2.0
    r = beta / kappa
    return 0.5 * kappa * (r * math.log(r) - r + 1.0)


def matching_entropy(beta: float) -> float:
    """beta/2 - (beta/2) log beta, the per-vertex entropy of a near-uniform
    perfect matching on beta * n half-edges; 0 at beta = 0."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return 0.0
    return beta / 2.0 - (beta / 2.0) * math.log(beta)


def matching_entropy_sum(intensity: Dict[Tuple[int, int], float]) -> float:
    """Sum of matching entropies over the cells of an edge mark intensity."""
    return math.fsum(matching_entropy(v) for v in intensity.values())


# ---------------------------------------------------------------- reference law


def _check_mark_laws(nu, xi) -> Tuple[Tuple[float, ...], Tuple[Tuple[float, ...], ...]]:
    nu = tuple(float(w) for w in nu)
    if not nu or min(nu) < 0 or abs(math.fsum(nu) - 1.0) > MASS_TOL:
        raise ValueError("nu is not a probability vector")
    xi = tuple(tuple(float(w) for w in row) for row in xi)
    flat = [w for row in xi for w in row]
    if not flat or min(flat) < 0 or abs(math.fsum(flat) - 1.0) > MASS_TOL:
        raise ValueError("xi is not a probability matrix")
    if any(len(row) != len(xi) for row in xi):
        raise ValueError("xi must be square")
    return nu, xi


class ReferenceLaw:
    """The i.i.d.-marks reference law on depth-1 stars.

    The root degree follows either a fixed finite law or a Poisson law
    truncated at a cap with neglected tail below 1e-12 (reported in
    ``neglected_tail``); vertex marks are i.i.d. ``nu`` and each edge carries
    an ordered mark pair with the symmetrized law ``xibar``.
    """

    __slots__ = ("alpha", "poisson_mean", "nu", "xi", "xibar", "degree_pmf", "neglected_tail")

    def __init__(self, nu, xi, alpha: Optional[DegreeLaw] = None, poisson_mean: Optional[float] = None):
        if (alpha is None) == (poisson_mean is None):
            raise ValueError("exactly one of alpha and poisson_mean is required")
        nu, xi = _check_mark_laws(nu, xi)
        k = len(xi)
        xibar = tuple(
            tuple((xi[y][yp] + xi[yp][y]) / 2.0 for yp in range(k)) for y in range(k)
        )
        if alpha is not None:
            pmf = dict(alpha.items())
            tail = 0.0
        else:
            b = float(poisson_mean)
            if b < 0:
                raise ValueError("poisson mean must be nonnegative")
            if b == 0:
                pmf, tail = {0: 1.0}, 0.0
            else:
                pmf = {}
                cap = max(8, int(math.ceil(b)))
                while True:
                    pmf = {
                        d: math.exp(-b + d * math.log(b) - math.lgamma(d + 1))
                        for d in range(cap + 1)
                    }
                    tail = 1.0 - math.fsum(pmf.values())
                    if tail < POISSON_TAIL:
                        break
                    cap *= 2
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "poisson_mean", poisson_mean)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "xibar", xibar)
        object.__setattr__(self, "degree_pmf", pmf)
        object.__setattr__(self, "neglected_tail", max(tail, 0.0))

    def __setattr__(self, name, value):
        raise AttributeError("ReferenceLaw is immutable")

    @classmethod
    def fixed_alpha(cls, alpha: DegreeLaw, nu, xi) -> "ReferenceLaw":
        return cls(nu, xi, alpha=alpha)

    @classmethod
    def poisson(cls, beta: float, nu, xi) -> "ReferenceLaw":
        return cls(nu, xi, poisson_mean=beta)

    def mean_degree(self) -> float:
        if self.alpha is not None:
            return self.alpha.mean()
        return float(self.poisson_mean)

    def nu_pmf(self, x: int) -> float:
        return self.nu[x] if 0 <= x < len(self.nu) else 0.0

    def xibar_pmf(self, y: int, yp: int) -> float:
        if 0 <= y < len(self.xibar) and 0 <= yp < len(self.xibar):
            return self.xibar[y][yp]
        return 0.0

    def xibar_marginal(self, y: int) -> float:
        if not 0 <= y < len(self.xibar):
            return 0.0
        return math.fsum(self.xibar[y])

    def xibar_dict(self) -> Dict[Tuple[int, int], float]:
        return {
            (y, yp): w
            for y, row in enumerate(self.xibar)
            for yp, w in enumerate(row)
            if w > 0
        }

    def star_density(self, t: CanonicalTree) -> float:
        """Exact atom probability of the reference law at a depth <= 1 tree."""
        if t.depth > 1:
            raise ValueError("star density is defined on depth <= 1 trees")
        d = t.root_degree
        dens = self.degree_pmf.get(d, 0.0) * self.nu_pmf(t.mark)
        if dens == 0.0:
            return 0.0
        cells: Dict[Tuple[Tuple[int, int], int], int] = {}
        for (yc, yr), sub in t.children:
            cells[((yc, yr), sub.mark)] = cells.get(((yc, yr), sub.mark), 0) + 1
        logmult = math.lgamma(d + 1)
        for ((yc, yr), x), m in cells.items():
            q = self.nu_pmf(x) * self.xibar_pmf(yc, yr)
            if q == 0.0:
                return 0.0
            dens *= q**m
            logmult -= math.lgamma(m + 1)
        return dens * math.exp(logmult)

    def pair_density(self, cell: Tuple[HalfEdgeTree, HalfEdgeTree]) -> float:
        """Reference probability of an ordered pair of depth-0 half-edge views."""
        a, b = cell
        if a.tree.depth > 0 or b.tree.depth > 0:
            raise ValueError("pair density is defined on depth-0 views")
        return (
            self.nu_pmf(a.tree.mark)
            * self.nu_pmf(b.tree.mark)
            * self.xibar_pmf(a.pendant_mark, b.pendant_mark)
        )

    def materialize(self, max_atoms: int = 200_000) -> TreeMeasure:
        """The reference law as an explicit depth-1 measure (small supports only)."""
        entries = {
            ((yc, yr), x): self.nu[x] * self.xibar[yc][yr]
            for yc in range(len(self.xibar))
            for yr in range(len(self.xibar))
            for x in range(len(self.nu))
            if self.nu[x] * self.xibar[yc][yr] > 0
        }
        atoms = _assemble_stars(
            self.degree_pmf,
            {x: w for x, w in enumerate(self.nu) if w > 0},
            lambda x_o: entries,
            max_atoms,
        )
        return TreeMeasure(atoms, 0.0, 1)

    def to_obj(self) -> dict:
        obj = {"nu": list(self.nu), "xi": [list(r) for r in self.xi]}
        if self.alpha is not None:
            obj["degree"] = {"type": "fixed", "pmf": {str(k): w for k, w in self.alpha.items()}}
        else:
            obj["degree"] = {"type": "poisson", "mean": self.poisson_mean}
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "ReferenceLaw":
        deg = obj["degree"]
        if deg["type"] == "fixed":
            alpha = DegreeLaw({int(k): w for k, w in deg["pmf"].items()})
            return cls.fixed_alpha(alpha, obj["nu"], obj["xi"])
        if deg["type"] == "poisson":
            return cls.poisson(deg["mean"], obj["nu"], obj["xi"])
        raise ValueError(f"unknown degree law type {deg['type']!r}")


# ------------------------------------------------------- depth-1 reference pair


def _assemble_stars(
    degree_pmf: Dict[int, float],
    root_weights: Dict[int, float],
    entries_for: Callable[[int], Dict[Tuple[Tuple[int, int], int], float]],
    max_atoms: int,
) -> Dict[CanonicalTree, float]:
    """Depth-1 atoms root-by-root: degree d and root x get mass
    pmf(d) * root(x) * multinomial(d; multiset) * prod entry_weight^count."""
    projected = 0
    per_root = {}
    for x_o in root_weights:
        ew = entries_for(x_o)
        per_root[x_o] = sorted(ew.items())
        for d in degree_pmf:
            projected += math.comb(len(ew) + d - 1, d) if ew else (1 if d == 0 else 0)
    if projected > max_atoms:
        raise ValueError(
            f"materialized support would need {projected} atoms (limit {max_atoms})"
        )
    atoms: Dict[CanonicalTree, float] = {}
    for x_o, wx in root_weights.items():
        ew = per_root[x_o]
        for d, pd in degree_pmf.items():
            base = pd * wx
            if base == 0.0:
                continue
            if d == 0:
                atoms[CanonicalTree(x_o)] = atoms.get(CanonicalTree(x_o), 0.0) + base
                continue
            if not ew:
                continue
            for combo in itertools.combinations_with_replacement(range(len(ew)), d):
                counts: Dict[int, int] = {}
                for i in combo:
                    counts[i] = counts.get(i, 0) + 1
                w = base
                logmult = math.lgamma(d + 1)
                kids = []
                for i, m in counts.items():
                    (pair, x), q = ew[i]
                    w *= q**m
                    logmult -= math.lgamma(m + 1)
                    kids.extend([(pair, CanonicalTree(x))] * m)
                w *= math.exp(logmult)
                if w > 0:
                    t = CanonicalTree(x_o, tuple(kids))
                    atoms[t] = atoms.get(t, 0.0) + w
    return atoms


def _sb_stats(mu: TreeMeasure):
    """Size-biased child statistics of a depth-1 law: the child entry marginal
    keyed (child mark, child-side edge mark) and the conditional entry law
    given the root entry (root mark, root-side edge mark)."""
    pi = pair_measure(mu, 1)
    first, _, cond = pair_marginals(pi)
    child = {(a.tree.mark, a.pendant_mark): w for a, w in first.items()}
    cond_flat = {
        (b.tree.mark, b.pendant_mark): {
            (a.tree.mark, a.pendant_mark): w for a, w in row.items()
        }
        for b, row in cond.items()
    }
    return pi, child, cond_flat


def _indep_ratio(law: ReferenceLaw, child: Dict, x: int, yc: int) -> float:
    base = law.nu_pmf(x) * law.xibar_marginal(yc)
    if base == 0.0:
        return 0.0
    return child.get((x, yc), 0.0) / base


def _cond_ratio(law: ReferenceLaw, cond: Dict, x_o: int, x: int, yc: int, yr: int) -> float:
    row = cond.get((x_o, yr))
    if row is None:
        # conditioning entry carries no size-biased mass; any conditional
        # version is admissible, and ratio 1 keeps the total mass exactly 1
        return 1.0
    base = law.nu_pmf(x) * law.xibar_pmf(yc, yr)
    if base == 0.0:
        return 0.0
    return row.get((x, yc), 0.0) * law.xibar_marginal(yr) / base


def _indep_density(law: ReferenceLaw, child: Dict, t: CanonicalTree) -> float:
    dens = law.star_density(t)
    for (yc, yr), sub in t.children:
        if dens == 0.0:
            return 0.0
        dens *= _indep_ratio(law, child, sub.mark, yc)
    return dens


def _cond_density(law: ReferenceLaw, cond: Dict, t: CanonicalTree) -> float:
    dens = law.star_density(t)
    for (yc, yr), sub in t.children:
        if dens == 0.0:
            return 0.0
        dens *= _cond_ratio(law, cond, t.mark, sub.mark, yc, yr)
    return dens


def _require_depth1(mu: TreeMeasure, op: str) -> None:
    if mu.depth_bound > 1:
        raise ValueError(f"{op} is defined on depth-1 laws")
    mu._require_tree_support(op)


def _require_dominated(mu: TreeMeasure, law: ReferenceLaw, op: str) -> None:
    for t, _ in mu.items():
        if law.star_density(t) <= 0.0:
            raise ValueError(f"{op}: input is not absolutely continuous at {t!r}")


def leaf_indep_law(mu: TreeMeasure, law: ReferenceLaw, max_atoms: int = 200_000) -> TreeMeasure:
    """The reference star law reweighted so leaf entries are i.i.d. from the
    size-biased child marginal of ``mu``; a probability measure dominating
    ``mu`` whenever ``mu`` is dominated by the reference."""
    _require_depth1(mu, "leaf_indep_law")
    if mu.mean_degree() <= 0:
        raise ValueError("leaf_indep_law needs positive mean degree")
    _require_dominated(mu, law, "leaf_indep_law")
    _, child, _ = _sb_stats(mu)
    entries = {
        ((yc, yr), x): law.nu[x] * law.xibar[yc][yr] * _indep_ratio(law, child, x, yc)
        for yc in range(len(law.xibar))
        for yr in range(len(law.xibar))
        for x in range(len(law.nu))
    }
    entries = {e: q for e, q in entries.items() if q > 0}
    atoms = _assemble_stars(
        law.degree_pmf,
        {x: w for x, w in enumerate(law.nu) if w > 0},
        lambda x_o: entries,
        max_atoms,
    )
    return TreeMeasure(atoms, 0.0, 1)


def leaf_cond_law(mu: TreeMeasure, law: ReferenceLaw, max_atoms: int = 200_000) -> TreeMeasure:
    """The reference star law reweighted so leaf entries are conditionally
    i.i.d. given the root entry, from the size-biased conditional of ``mu``."""
    _require_depth1(mu, "leaf_cond_law")
    if mu.mean_degree() <= 0:
        raise ValueError("leaf_cond_law needs positive mean degree")
    _require_dominated(mu, law, "leaf_cond_law")
    _, _, cond = _sb_stats(mu)

    def entries_for(x_o: int) -> Dict[Tuple[Tuple[int, int], int], float]:
        ew = {}
        for yc in range(len(law.xibar)):
            for yr in range(len(law.xibar)):
                for x in range(len(law.nu)):
                    q = law.nu[x] * law.xibar[yc][yr] * _cond_ratio(law, cond, x_o, x, yc, yr)
                    if q > 0:
                        ew[((yc, yr), x)] = q
        return ew

    atoms = _assemble_stars(
        law.degree_pmf,
        {x: w for x, w in enumerate(law.nu) if w > 0},
        entries_for,
        max_atoms,
    )
    return TreeMeasure(atoms, 0.0, 1)


# --------------------------------------------------------- neighborhood rates


def _relent_vs_density(m: TreeMeasure, density: Callable[[CanonicalTree], float]) -> float:
    terms = []
    for t, w in m.items():
        d = density(t)
        if d <= 0.0:
            return math.inf
        terms.append(w * math.log(w / d))
    return math.fsum(terms)


def _pair_relent_vs_density(p: PairMeasure, density) -> float:
    terms = []
    for cell, w in p.items():
        d = density(cell)
        if d <= 0.0:
            return math.inf
        terms.append(w * math.log(w / d))
    return math.fsum(terms)


def _root_mark_divergence(mu: TreeMeasure, law: ReferenceLaw) -> float:
    nu_dict = {x: w for x, w in enumerate(law.nu) if w > 0}
    return relative_entropy(mu.root_mark_law(), nu_dict)


def nbd_rate_generic(beta: float, law: ReferenceLaw, mu: TreeMeasure) -> float:
    """Neighborhood rate of a depth-1 law against a reference at mean degree beta.

    Mean-degree-0 case: relative entropy of the root mark law.  Otherwise, the
    average of the relative entropies against the independent-leaf and the
    conditional-leaf reweightings of the reference, gated to +inf when the
    mean degree mismatches, the size-biased pair law is asymmetric, or the
    input is not dominated by the reference.
    """
    if mu.depth_bound > 1:
        raise ValueError("nbd_rate_generic is defined on depth-1 laws")
    if mu.non_tree_mass > MASS_TOL:
        return math.inf
    mean = mu.mean_degree()
    if beta <= 0:
        return _root_mark_divergence(mu, law) if mean == 0 else math.inf
    if abs(mean - beta) > GATE_TOL:
        return math.inf
    pi = pair_measure(mu, 1)
    ok, _ = is_admissible(pi)
    if not ok:
        return math.inf
    if any(law.star_density(t) <= 0.0 for t, _ in mu.items()):
        return math.inf
    _, child, cond = _sb_stats(mu)
    h_indep = _relent_vs_density(mu, lambda t: _indep_density(law, child, t))
    h_cond = _relent_vs_density(mu, lambda t: _cond_density(law, cond, t))
    return 0.5 * (h_indep + h_cond)


def ensemble_reference(ensemble: str, cfg, measure=None) -> Tuple[float, ReferenceLaw, Optional[float]]:
    """(beta, reference law, kappa) for one ensemble.

    CM: beta is the mean of alpha and the reference degree law is alpha.
    FE: beta = kappa with a Poisson(kappa) reference.  ER: the reference is
    re-centered at the measured mean degree of ``measure``; kappa is returned
    for the edge density cost.
    """
    ens = ensemble.upper()
    if ens == "CM":
        if cfg.alpha is None:
            raise ValueError("CM reference needs a degree law alpha")
        kappa = cfg.alpha.mean()
        return kappa, ReferenceLaw.fixed_alpha(cfg.alpha, cfg.nu, cfg.xi), None
    if ens == "FE":
        if cfg.kappa is None:
            raise ValueError("FE reference needs kappa")
        kappa = float(cfg.kappa)
        return kappa, ReferenceLaw.poisson(kappa, cfg.nu, cfg.xi), None
    if ens == "ER":
        if cfg.kappa is None:
            raise ValueError("ER reference needs kappa")
        if measure is None:
            raise ValueError("ER reference is centered at the measured mean degree")
        level1 = measure.level(1) if isinstance(measure, DepthChain) else measure
        bprime = 0.0 if level1.non_tree_mass > MASS_TOL else level1.mean_degree()
        return bprime, ReferenceLaw.poisson(bprime, cfg.nu, cfg.xi), float(cfg.kappa)
    raise ValueError(f"unknown ensemble {ensemble!r}")


def nbd_rate(ensemble: str, cfg, mu: TreeMeasure) -> float:
    """Ensemble neighborhood rate of a depth-1 law.

    CM additionally gates on exact degree-law agreement; ER adds the edge
    density cost of moving the mean degree off kappa.
    """
    if mu.depth_bound > 1:
        raise ValueError("nbd_rate is defined on depth-1 laws")
    ens = ensemble.upper()
    if mu.non_tree_mass > MASS_TOL:
        return math.inf
    if ens == "CM":
        beta, law, _ = ensemble_reference(ens, cfg)
        if tv_distance(mu.degree_law(), law.alpha) > GATE_TOL:
            return math.inf
        return nbd_rate_generic(beta, law, mu)
    if ens == "FE":
        beta, law, _ = ensemble_reference(ens, cfg)
        return nbd_rate_generic(beta, law, mu)
    if ens == "ER":
        bprime, law, kappa = ensemble_reference(ens, cfg, mu)
        return edge_density_rate(kappa, bprime) + nbd_rate_generic(bprime, law, mu)
    raise ValueError(f"unknown ensemble {ensemble!r}")


def vertex_only_rate(beta: float, law: ReferenceLaw, mu: TreeMeasure) -> float:
    """Marks-on-vertices-only form of the neighborhood rate.

    With a trivial edge mark alphabet the rate simplifies to the conditional
    relative entropy plus (beta/2) times the mutual information of the
    size-biased (child, root) mark pair.
    """
    if len(law.xi) != 1:
        raise ValueError("vertex_only_rate needs a trivial edge mark alphabet")
    if mu.depth_bound > 1:
        raise ValueError("vertex_only_rate is defined on depth-1 laws")
    if mu.non_tree_mass > MASS_TOL:
        return math.inf
    mean = mu.mean_degree()
    if beta <= 0:
        return _root_mark_divergence(mu, law) if mean == 0 else math.inf
    if abs(mean - beta) > GATE_TOL:
        return math.inf
    pi = pair_measure(mu, 1)
    ok, _ = is_admissible(pi)
    if not ok:
        return math.inf
    if any(law.star_density(t) <= 0.0 for t, _ in mu.items()):
        return math.inf
    _, _, cond = _sb_stats(mu)
    h_cond = _relent_vs_density(mu, lambda t: _cond_density(law, cond, t))
    first, second, _ = pair_marginals(pi)
    mutual = math.fsum(
        w * math.log(w / (first[a] * second[b])) for (a, b), w in pi.items()
    )
    return h_cond + 0.5 * beta * mutual


# ------------------------------------------------------------ depth extension


class ExtensionKernel:
    """Conditional laws of the one-step-deeper half-edge view across a root edge.

    For a size-biased tree and a uniformly chosen root neighbor, this is the
    law of the depth-h view away from that neighbor, given its depth-(h-1)
    truncation (first argument) and the depth-(h-1) view from the opposite
    side (second argument).  Admissibility of the input makes the same kernel
    valid for either orientation of the edge.
    """

    __slots__ = ("h", "beta", "_laws")

    def __init__(self, rho: TreeMeasure, h: int) -> None:
        rho._require_tree_support("extension kernel")
        if rho.depth_bound > h:
            raise ValueError(f"atoms of depth {rho.depth_bound} exceed h={h}")
        beta = rho.mean_degree()
        if beta <= 0:
            raise ValueError("degenerate kernel: mean degree is 0")
        ok, defect = is_admissible(pair_measure(rho, h))
        if not ok:
            raise ValueError(f"input law is inadmissible (asymmetry {defect:.3g})")
        acc: Dict[Tuple[HalfEdgeTree, HalfEdgeTree], Dict[HalfEdgeTree, List[float]]] = {}
        for s, w in rho.items():
            for i in range(s.root_degree):
                branch, rest = split_at_child(s, i)
                cell = acc.setdefault((rest.truncated(h - 1), branch), {})
                cell.setdefault(rest, []).append(w)
        laws = {}
        for key, cand in acc.items():
            sums = {c: math.fsum(ws) for c, ws in cand.items()}
            total = math.fsum(sums.values())
            laws[key] = {c: v / total for c, v in sorted(sums.items(), key=lambda kv: kv[0].sort_key)}
        object.__setattr__(self, "h", int(h))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "_laws", laws)

    def __setattr__(self, name, value):
        raise AttributeError("ExtensionKernel is immutable")

    def cells(self) -> List[Tuple[HalfEdgeTree, HalfEdgeTree]]:
        return sorted(self._laws, key=lambda k: (k[0].sort_key, k[1].sort_key))

    def law(self, prior: HalfEdgeTree, opposite: HalfEdgeTree) -> Dict[HalfEdgeTree, float]:
        """The extension law for a view pair; defined on positive-mass pairs."""
        try:
            return dict(self._laws[(prior, opposite)])
        except KeyError:
            raise ValueError("no mass on this view pair") from None


def extension_kernel(rho: TreeMeasure, h: int) -> ExtensionKernel:
    return ExtensionKernel(rho, h)


def one_step_extension(rho: TreeMeasure, h: int) -> TreeMeasure:
    """Depth-(h+1) unimodular extension of an admissible depth-h law.

    Each root branch is deepened independently from the extension kernel;
    degree-0 atoms pass through unchanged.  The depth-h marginal of the
    result equals the input on atoms.
    """
    rho._require_tree_support("one_step_extension")
    if rho.depth_bound > h:
        raise ValueError(f"atoms of depth {rho.depth_bound} exceed h={h}")
    if rho.mean_degree() == 0:
        return TreeMeasure(rho.atoms, 0.0, h + 1)
    kernel = ExtensionKernel(rho, h)
    acc: Dict[CanonicalTree, List[float]] = {}
    for s, w in rho.items():
        if s.root_degree == 0:
            acc.setdefault(s, []).append(w)
            continue
        options = []
        backs = []
        for i in range(s.root_degree):
            branch, rest = split_at_child(s, i)
            options.append(list(kernel.law(branch, rest.truncated(h - 1)).items()))
            backs.append(rest.pendant_mark)
        for combo in itertools.product(*options):
            wt = w
            kids = []
            for (deeper, p), yb in zip(combo, backs):
                wt *= p
                kids.append(((deeper.pendant_mark, yb), deeper.tree))
            t = CanonicalTree(s.mark, tuple(kids))
            acc.setdefault(t, []).append(wt)
    return TreeMeasure({t: math.fsum(ws) for t, ws in acc.items()}, 0.0, h + 1)


def _cond_from_extension(rho: TreeMeasure, rstar: TreeMeasure, h: int) -> TreeMeasure:
    """Reweight the extension by the per-branch ratio of view-pair laws."""
    pi = pair_measure(rho, h)
    pistar = pair_measure(rstar, h)
    atoms: Dict[CanonicalTree, float] = {}
    for t, w in rstar.items():
        dens = 1.0
        for branch, rest in branch_views(t, h - 1):
            denom = pistar.get(branch, rest)
            if denom <= 0.0:
                raise ValueError("extension pair law misses one of its own views")
            dens *= pi.get(branch, rest) / denom
            if dens == 0.0:
                break
        if dens > 0.0:
            atoms[t] = w * dens
    return TreeMeasure(atoms, 0.0, h)


def cond_extension_law(rho: TreeMeasure, h: int, law: Optional[ReferenceLaw] = None) -> TreeMeasure:
    """The conditionally reweighted reference at depth h.

    For h >= 2 this reweights the one-step extension of the depth-(h-1)
    truncation by the per-branch view-pair density; at h = 1 it is the
    conditional-leaf reweighting of the depth-1 reference law.
    """
    if h < 1:
        raise ValueError("h must be at least 1")
    if h == 1:
        if law is None:
            raise ValueError("the depth-1 form needs the reference law")
        return leaf_cond_law(rho, law)
    rho._require_tree_support("cond_extension_law")
    if rho.depth_bound > h:
        raise ValueError(f"atoms of depth {rho.depth_bound} exceed h={h}")
    prev = rho.truncated(h - 1)
    rstar = one_step_extension(prev, h - 1)
    return _cond_from_extension(rho, rstar, h)


def extension_chain(levels: Union[TreeMeasure, Sequence[TreeMeasure]], depth: int) -> DepthChain:
    """Extend a measure (or a consistent prefix) to ``depth`` levels by
    iterated one-step extensions; deeper per-depth rate terms then vanish by
    construction."""
    if isinstance(levels, TreeMeasure):
        levels = [levels]
    levels = list(levels)
    if not levels:
        raise ValueError("empty chain")
    while len(levels) < depth:
        h = len(levels)
        levels.append(one_step_extension(levels[-1], h))
    return DepthChain(levels, extension_exact=True)


# ----------------------------------------------------------- component rates


def edge_mark_intensity(level1: TreeMeasure) -> Dict[Tuple[int, int], float]:
    """Mean number per vertex of root half-edges by ordered (own, opposite)
    edge mark pair; entries sum to the mean degree."""
    beta = level1.mean_degree()
    if beta == 0:
        return {}
    acc: Dict[Tuple[int, int], List[float]] = {}
    for cell, w in pair_measure(level1, 1).items():
        a, b = cell
        acc.setdefault((a.pendant_mark, b.pendant_mark), []).append(w)
    return {k: beta * math.fsum(ws) for k, ws in sorted(acc.items())}


@dataclass
class RateReport:
    """Truncated evaluation of one representation of the component rate.

    ``terms`` lists the per-depth summand pair; ``prefix_totals`` the running
    generic totals, so ``value = boundary + prefix_totals[-1]`` whenever the
    gates pass.  ``j_values`` holds the per-depth microstate entropy estimates
    for the combinatorial form.
    """

    form: str
    ensemble: Optional[str]
    beta: float
    depth: int
    value: float
    boundary: float = 0.0
    terms: List[Tuple[float, float]] = field(default_factory=list)
    prefix_totals: List[float] = field(default_factory=list)
    j_values: List[float] = field(default_factory=list)
    log_factorial_terms: List[float] = field(default_factory=list)
    flags: Dict[str, object] = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "form": self.form,
            "ensemble": self.ensemble,
            "beta": self.beta,
            "depth": self.depth,
            "value": self.value,
            "boundary": self.boundary,
            "terms": [list(t) for t in self.terms],
            "prefix_totals": list(self.prefix_totals),
            "j_values": list(self.j_values),
            "log_factorial_terms": list(self.log_factorial_terms),
            "flags": dict(self.flags),
        }


def _as_chain(levels) -> DepthChain:
    if isinstance(levels, DepthChain):
        return levels
    return DepthChain(levels)


def _prepare(levels, beta, law, ensemble, kappa):
    """Shared gate evaluation; returns (chain, flags, boundary, short-circuit).

    The short-circuit is None when the positive-mean machinery should run,
    +inf when a gate fails, or a finite value for the mean-degree-0 branch.
    """
    chain = _as_chain(levels)
    ens = ensemble.upper() if ensemble else None
    flags: Dict[str, object] = {
        "extension_exact": chain.extension_exact,
        "neglected_tail": law.neglected_tail,
    }
    tree_ok = all(lv.non_tree_mass <= MASS_TOL for lv in chain.levels)
    flags["tree_supported"] = tree_ok
    boundary = 0.0
    if not tree_ok:
        if ens == "ER":
            if kappa is None:
                raise ValueError("ER evaluation needs kappa")
            flags["mean_degree"] = None
        return chain, flags, boundary, math.inf
    defect = chain.truncation_defect()
    flags["consistency_defect"] = defect
    if defect > GATE_TOL:
        raise ValueError(f"inconsistent depth chain (truncation defect {defect:.3g})")
    mean = chain.level(1).mean_degree()
    flags["mean_degree"] = mean
    if ens == "CM":
        if law.alpha is None:
            raise ValueError("CM evaluation needs a fixed degree law reference")
        match = tv_distance(chain.level(1).degree_law(), law.alpha) <= GATE_TOL
        flags["degree_law_match"] = match
        if not match:
            return chain, flags, boundary, math.inf
    if ens == "ER":
        if kappa is None:
            raise ValueError("ER evaluation needs kappa")
        boundary = edge_density_rate(kappa, mean)
        if law.poisson_mean is None or abs(law.poisson_mean - mean) > GATE_TOL:
            raise ValueError("ER evaluation needs the reference centered at the measured mean degree")
        beta = mean
    if beta <= 0:
        if mean == 0:
            return chain, flags, boundary, _root_mark_divergence(chain.level(1), law)
        return chain, flags, boundary, math.inf
    if abs(mean - beta) > GATE_TOL:
        return chain, flags, boundary, math.inf
    worst = 0.0
    for h in range(1, len(chain) + 1):
        _, d = is_admissible(pair_measure(chain.level(h), h))
        worst = max(worst, d)
    flags["admissible"] = worst <= GATE_TOL
    flags["admissibility_defect"] = worst
    if worst > GATE_TOL:
        return chain, flags, boundary, math.inf
    dominated = all(law.star_density(t) > 0.0 for t, _ in chain.level(1).items())
    flags["absolutely_continuous"] = dominated
    if not dominated:
        return chain, flags, boundary, math.inf
    return chain, flags, boundary, None


def _gated_report(form, ensemble, beta, chain, flags, boundary, short) -> RateReport:
    depth = len(chain) if chain is not None else 0
    value = short if short == math.inf else boundary + short
    prefix = [] if short == math.inf else [short]
    return RateReport(
        form=form,
        ensemble=ensemble,
        beta=beta,
        depth=depth,
        value=value,
        boundary=boundary,
        prefix_totals=prefix,
        flags=flags,
    )


def _resolve_depth(chain: DepthChain, depth: Optional[int]) -> Tuple[int, int]:
    """(materialized evaluation depth, number of padded depths).

    Depths beyond the materialized prefix are legal only for chains declared
    extension-exact, where the deeper levels are one-step extensions by
    definition and the per-depth summands vanish identically.
    """
    if depth is None:
        return len(chain), 0
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if depth <= len(chain):
        return depth, 0
    if not chain.extension_exact:
        raise ValueError(f"depth {depth} exceeds the materialized chain of length {len(chain)}")
    return len(chain), depth - len(chain)


def component_rate(levels, beta: float, law: ReferenceLaw, ensemble: Optional[str] = None,
                   kappa: Optional[float] = None, depth: Optional[int] = None) -> RateReport:
    """Average-of-two-relative-entropies representation, truncated at ``depth``.

    Depth 1 compares against the independent-leaf and conditional-leaf
    reweightings of the reference; depth h >= 2 against the one-step
    extension of the previous level and its conditional reweighting.
    """
    chain, flags, boundary, short = _prepare(levels, beta, law, ensemble, kappa)
    if short is not None:
        return _gated_report("component", ensemble, beta, chain, flags, boundary, short)
    if ensemble and ensemble.upper() == "ER":
        beta = flags["mean_degree"]
    evald, padded = _resolve_depth(chain, depth)
    flags["padded_depths"] = padded
    terms: List[Tuple[float, float]] = []
    prefix: List[float] = []
    total = 0.0
    _, child, cond = _sb_stats(chain.level(1))
    for h in range(1, evald + 1):
        lv = chain.level(h)
        if h == 1:
            a = _relent_vs_density(lv, lambda t: _indep_density(law, child, t))
            b = _relent_vs_density(lv, lambda t: _cond_density(law, cond, t))
        else:
            rstar = one_step_extension(chain.level(h - 1), h - 1)
            a = relative_entropy(lv, rstar)
            rhat = _cond_from_extension(lv, rstar, h)
            b = relative_entropy(lv, rhat)
        terms.append((a, b))
        total += 0.5 * (a + b)
        prefix.append(total)
    for _ in range(padded):
        terms.append((0.0, 0.0))
        prefix.append(total)
    return RateReport(
        form="component",
        ensemble=ensemble,
        beta=beta,
        depth=evald + padded,
        value=boundary + total,
        boundary=boundary,
        terms=terms,
        prefix_totals=prefix,
        flags=flags,
    )


def intermediate_rate(levels, beta: float, law: ReferenceLaw, ensemble: Optional[str] = None,
                      kappa: Optional[float] = None, depth: Optional[int] = None) -> RateReport:
    """Tree-minus-pair relative entropy representation, truncated at ``depth``;
    termwise equal to the component form."""
    chain, flags, boundary, short = _prepare(levels, beta, law, ensemble, kappa)
    if short is not None:
        return _gated_report("intermediate", ensemble, beta, chain, flags, boundary, short)
    if ensemble and ensemble.upper() == "ER":
        beta = flags["mean_degree"]
    evald, padded = _resolve_depth(chain, depth)
    flags["padded_depths"] = padded
    terms: List[Tuple[float, float]] = []
    prefix: List[float] = []
    total = 0.0
    for h in range(1, evald + 1):
        lv = chain.level(h)
        if h == 1:
            a = _relent_vs_density(lv, law.star_density)
            b = 0.5 * beta * _pair_relent_vs_density(pair_measure(lv, 1), law.pair_density)
        else:
            rstar = one_step_extension(chain.level(h - 1), h - 1)
            a = relative_entropy(lv, rstar)
            b = 0.5 * beta * relative_entropy(pair_measure(lv, h), pair_measure(rstar, h))
        terms.append((a, b))
        total += a - b
        prefix.append(total)
    for _ in range(padded):
        terms.append((0.0, 0.0))
        prefix.append(total)
    return RateReport(
        form="intermediate",
        ensemble=ensemble,
        beta=beta,
        depth=evald + padded,
        value=boundary + total,
        boundary=boundary,
        terms=terms,
        prefix_totals=prefix,
        flags=flags,
    )


def _log_factorial_sum(t: CanonicalTree, h: int) -> float:
    counts: Dict[object, int] = {}
    for view in branch_views(t, h - 1):
        counts[view] = counts.get(view, 0) + 1
    return math.fsum(math.lgamma(c + 1) for c in counts.values())


def combinatorial_rate(levels, beta: float, law: ReferenceLaw, ensemble: Optional[str] = None,
                       kappa: Optional[float] = None, depth: Optional[int] = None) -> RateReport:
    """Microstate-entropy representation.

    Per depth h, the microstate entropy estimate is
    J_h = -s(beta) + H(rho_h) - (beta/2) H(pi_h) - E[sum log multiplicity!],
    with s the matching entropy; the rate is a boundary assembly of Shannon
    entropies, mark divergences and matching entropies minus J at the deepest
    evaluated level.
    """
    chain, flags, boundary, short = _prepare(levels, beta, law, ensemble, kappa)
    if short is not None:
        return _gated_report("combinatorial", ensemble, beta, chain, flags, boundary, short)
    ens = ensemble.upper() if ensemble else None
    if ens == "ER":
        beta = flags["mean_degree"]
    evald, padded = _resolve_depth(chain, depth)
    flags["padded_depths"] = padded
    level1 = chain.level(1)
    intensity = edge_mark_intensity(level1)
    normalized = {k: v / beta for k, v in intensity.items()}
    root_dict = level1.root_mark_law()
    h_root = entropy(root_dict)
    h_root_nu = _root_mark_divergence(level1, law)
    h_intensity = relative_entropy(normalized, law.xibar_dict())
    s_vec = matching_entropy_sum(intensity)
    base = h_root + h_root_nu + 0.5 * beta * h_intensity + s_vec
    if ens == "CM":
        e_logfact = math.fsum(w * math.lgamma(d + 1) for d, w in law.alpha.items())
        base += -e_logfact + entropy(law.alpha) - 2.0 * matching_entropy(beta)
    j_values: List[float] = []
    efacts: List[float] = []
    prefix: List[float] = []
    for h in range(1, evald + 1):
        lv = chain.level(h)
        efact = math.fsum(w * _log_factorial_sum(t, h) for t, w in lv.items())
        j = (
            -matching_entropy(beta)
            + entropy(lv)
            - 0.5 * beta * entropy(pair_measure(lv, h))
            - efact
        )
        j_values.append(j)
        efacts.append(efact)
        prefix.append(base - j)
    for _ in range(padded):
        # along declared extensions the microstate entropy is unchanged
        j_values.append(j_values[-1])
        prefix.append(prefix[-1])
    diffs = [j_values[i + 1] - j_values[i] for i in range(len(j_values) - 1)]
    if all(abs(d) <= 1e-12 for d in diffs):
        direction = "constant"
    elif all(d <= 1e-12 for d in diffs):
        direction = "non-increasing"
    elif all(d >= -1e-12 for d in diffs):
        direction = "non-decreasing"
    else:
        direction = "mixed"
    flags["j_direction"] = direction
    return RateReport(
        form="combinatorial",
        ensemble=ensemble,
        beta=beta,
        depth=evald + padded,
        value=boundary + prefix[-1],
        boundary=boundary,
        prefix_totals=prefix,
        j_values=j_values,
        log_factorial_terms=efacts,
        flags=flags,
    )
