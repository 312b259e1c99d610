"""Gibbs conditioning for the configuration model with vertex marks.

Conditioning a CM graph with i.i.d. vertex marks on a lower bound for the
mean local h-sum (the neighborhood functional summing h over the root's
neighbors) concentrates the neighborhood empirical measure at an exponential
tilt of the unconditioned law.  This module solves the finite-dimensional
dual problem for the tilted degree-mark joint law, assembles the limiting
depth-1 measure, and validates the concentration by conditional Monte Carlo
on the mark vector of a fixed degree sequence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from .measures import DegreeLaw, TreeMeasure
from .samplers import integer_degree_counts
from .trees import CanonicalTree

__all__ = [
    "GibbsProblem",
    "GibbsSolution",
    "MCReport",
    "g_of_lambda",
    "solve",
    "brute_force_opt",
    "conditional_mc",
    "delta_sweep",
]

# Accepting a sample requires its functional to clear the threshold by more
# than this guard, so exact ties (which float rounding can push to either
# side) resolve deterministically as rejections.  The functional takes values
# on a grid with spacing at least (min degree gap)/n, far above the guard.
TIE_TOL = 1e-9

BRACKET_MAX = 2.0**60


@dataclass(frozen=True)
class GibbsProblem:
    """Conditioning instance: degree law, mark law, h values, threshold.

    ``hfun[x]`` is the value of h at mark x (aligned with ``nu``).  ``c`` must
    lie strictly between the unconditioned mean of the local h-sum and its
    essential supremum; this is checked when solving, so infeasible thresholds
    can still be constructed and handed to the brute-force oracle.
    """

    alpha: DegreeLaw
    nu: Tuple[float, ...]
    hfun: Tuple[float, ...]
    c: float
    delta: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(w) for w in self.nu))
        object.__setattr__(self, "hfun", tuple(float(v) for v in self.hfun))
        if abs(math.fsum(self.nu) - 1.0) > 1e-12 or min(self.nu) < 0:
            raise ValueError("nu is not a probability vector")
        if len(self.hfun) != len(self.nu):
            raise ValueError("hfun and nu must have the same length")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def kappa(self) -> float:
        return self.alpha.mean()

    def unconditioned_mean(self) -> float:
        """Mean of the local h-sum under the unconditioned law."""
        return self.kappa() * math.fsum(
            w * v for w, v in zip(self.nu, self.hfun)
        )

    def supremum(self) -> float:
        """Essential supremum of the local h-sum per vertex."""
        return self.kappa() * max(
            v for w, v in zip(self.nu, self.hfun) if w > 0
        )


@dataclass
class GibbsSolution:
    """Tilted optimizer of the conditioned problem.

    ``gamma[(n, x)]`` is the joint degree-mark law; ``psi[x]`` its size-biased
    mark marginal; ``mu_star`` the limiting depth-1 law (root entry from
    gamma, leaves i.i.d. psi); ``value`` the optimal rate H(gamma || alpha x nu).
    """

    lam: float
    gamma: Dict[Tuple[int, int], float]
    psi: Dict[int, float]
    mu_star: TreeMeasure
    value: float
    residuals: Dict[str, float] = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "lambda": self.lam,
            "gamma": {f"{n},{x}": w for (n, x), w in sorted(self.gamma.items())},
            "psi": {str(x): w for x, w in sorted(self.psi.items())},
            "mu_star": self.mu_star.to_obj(),
            "value": self.value,
            "residuals": dict(self.residuals),
        }


def g_of_lambda(problem: GibbsProblem, lam: float) -> float:
    """Mean local h-sum under the lambda-tilted degree-mark law.

    Per degree n the root mark is tilted by exp(lambda * n * h(x)); the value
    is the alpha-average of n times the tilted mean of h.  Continuous in
    lambda, equal to the unconditioned mean at 0, and approaching the
    essential supremum as lambda grows.
    """
    total = []
    for n, an in problem.alpha.items():
        if an == 0 or n == 0:
            continue
        logs = [
            (math.log(w) + lam * n * v, v)
            for w, v in zip(problem.nu, problem.hfun)
            if w > 0
        ]
        m = max(lw for lw, _ in logs)
        z = math.fsum(math.exp(lw - m) for lw, _ in logs)
        num = math.fsum(v * math.exp(lw - m) for lw, v in logs)
        total.append(n * an * num / z)
    return math.fsum(total)


def _tilted_row(problem: GibbsProblem, lam: float, n: int) -> List[float]:
    """Conditional mark law at degree n under the lambda tilt, mass exactly 1."""
    logs = [
        math.log(w) + lam * n * v if w > 0 else -math.inf
        for w, v in zip(problem.nu, problem.hfun)
    ]
    m = max(logs)
    raw = [math.exp(lw - m) for lw in logs]
    z = math.fsum(raw)
    p = [r / z for r in raw]
    top = max(range(len(p)), key=p.__getitem__)
    p[top] = 1.0 - math.fsum(v for i, v in enumerate(p) if i != top)
    return p


def _assemble_mu_star(gamma: Dict[Tuple[int, int], float], psi: Dict[int, float]) -> TreeMeasure:
    """Depth-1 law with root entry from gamma and leaves i.i.d. psi."""
    marks = sorted(psi)
    atoms: Dict[CanonicalTree, float] = {}
    for (n, x), w in gamma.items():
        if w <= 0:
            continue
        if n == 0:
            t = CanonicalTree(x)
            atoms[t] = atoms.get(t, 0.0) + w
            continue
        for combo in itertools.combinations_with_replacement(marks, n):
            wt = w * math.exp(
                math.lgamma(n + 1)
                - math.fsum(
                    math.lgamma(c + 1)
                    for c in (combo.count(a) for a in set(combo))
                )
            )
            for a in combo:
                wt *= psi[a]
            if wt > 0:
                t = CanonicalTree(x, tuple(((0, 0), CanonicalTree(a)) for a in combo))
                atoms[t] = atoms.get(t, 0.0) + wt
    return TreeMeasure(atoms, 0.0, 1)


def solve(problem: GibbsProblem) -> GibbsSolution:
    """Solve the conditioned optimization in closed tilted form.

    Finds lambda with g(lambda) = c by bracketed bisection (the bracket grows
    geometrically; g is verified nondecreasing on the sampled bracket), forms
    gamma(n, x) = alpha(n) * tilted mark law, and assembles psi and mu_star.
    Raises ValueError when c is outside the open feasibility interval.
    """
    g0 = problem.unconditioned_mean()
    sup = problem.supremum()
    if not problem.c > g0:
        raise ValueError(
            f"threshold c={problem.c} must exceed the unconditioned mean {g0}"
        )
    if not problem.c < sup:
        raise ValueError(
            f"threshold c={problem.c} must lie below the essential supremum {sup}"
        )
    hi = 1.0
    samples = [g0]
    while g_of_lambda(problem, hi) <= problem.c:
        samples.append(g_of_lambda(problem, hi))
        hi *= 2.0
        if hi > BRACKET_MAX:
            raise RuntimeError("bracket failure: g(lambda) did not reach c")
    samples.append(g_of_lambda(problem, hi))
    monotone = all(b >= a - 1e-12 for a, b in zip(samples, samples[1:]))
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g_of_lambda(problem, mid) <= problem.c:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)

    gamma: Dict[Tuple[int, int], float] = {}
    for n, an in problem.alpha.items():
        if an == 0:
            continue
        row = _tilted_row(problem, lam, n)
        for x, p in enumerate(row):
            if p > 0:
                gamma[(n, x)] = an * p
    raw_psi = {
        x: math.fsum(n * w for (n, xx), w in gamma.items() if xx == x)
        for x in range(len(problem.nu))
    }
    mass = math.fsum(raw_psi.values())
    psi = {x: v / mass for x, v in raw_psi.items() if v > 0}
    value = math.fsum(
        w * math.log(w / (dict(problem.alpha.items())[n] * problem.nu[x]))
        for (n, x), w in gamma.items()
        if w > 0
    )
    mu_star = _assemble_mu_star(gamma, psi)

    # KKT residuals: per-degree multiplier recovered from normalization
    stat = 0.0
    for n, an in problem.alpha.items():
        if an == 0:
            continue
        devs = [
            1.0
            + math.log(gamma[(n, x)] / (an * problem.nu[x]))
            - lam * n * problem.hfun[x]
            for x in range(len(problem.nu))
            if gamma.get((n, x), 0.0) > 0
        ]
        lam_prime = math.fsum(devs) / len(devs)
        stat = max(stat, max(abs(d - lam_prime) for d in devs))
    row_res = max(
        abs(math.fsum(w for (n, x), w in gamma.items() if n == nn) - an)
        for nn, an in problem.alpha.items()
        if an > 0
    )
    active = math.fsum(
        n * problem.hfun[x] * w for (n, x), w in gamma.items()
    )
    residuals = {
        "stationarity": stat,
        "row_sums": row_res,
        "active_constraint": abs(active - problem.c),
        "complementary_slackness": abs(lam * (active - problem.c)),
        "psi_mass": abs(math.fsum(psi.values()) - 1.0),
        "g_monotone_on_bracket": 0.0 if monotone else 1.0,
    }
    return GibbsSolution(lam, gamma, psi, mu_star, value, residuals)


def brute_force_opt(
    problem: GibbsProblem, resolution: float = 1e-12
) -> Tuple[Dict[Tuple[int, int], float], float]:
    """Directly minimize H(gamma || alpha x nu) on the constraint polytope.

    Independent of the tilted closed form: sequential quadratic programming
    over the flattened gamma with per-degree row-sum equalities and the
    threshold as an inequality.  Small instances only; used as a test oracle.
    """
    support = [(n, an) for n, an in problem.alpha.items() if an > 0]
    max_deg = max(n for n, _ in support)
    n_x = len(problem.nu)
    if (max_deg + 1) * n_x > 12:
        raise ValueError(
            f"brute force cap exceeded: ({max_deg} + 1) * {n_x} > 12"
        )
    cells = [(n, x) for n, _ in support for x in range(n_x)]
    base = np.array(
        [dict(problem.alpha.items())[n] * problem.nu[x] for n, x in cells]
    )
    nh = np.array([n * problem.hfun[x] for n, x in cells])

    def objective(g):
        g = np.clip(g, 1e-300, None)
        return float(np.sum(g * np.log(g / base)))

    def grad(g):
        g = np.clip(g, 1e-300, None)
        return np.log(g / base) + 1.0

    constraints = [
        {
            "type": "eq",
            "fun": (lambda g, rows=np.array([1.0 if n == nn else 0.0 for n, _ in cells]), a=an:
                    float(rows @ g - a)),
            "jac": (lambda g, rows=np.array([1.0 if n == nn else 0.0 for n, _ in cells]):
                    rows),
        }
        for nn, an in support
    ]
    constraints.append(
        {
            "type": "ineq",
            "fun": lambda g: float(nh @ g - problem.c),
            "jac": lambda g: nh,
        }
    )
    # start from a feasible mix of the unconditioned law and the top-h corner
    corner = np.zeros(len(cells))
    for nn, an in support:
        idx = [i for i, (n, _) in enumerate(cells) if n == nn]
        j = max(idx, key=lambda i: nh[i])
        corner[j] = an
    t_need = float(nh @ base)
    t_corner = float(nh @ corner)
    if t_corner > t_need:
        t = min(0.9, max(0.0, (problem.c - t_need) / (t_corner - t_need) + 0.05))
    else:
        t = 0.0
    start = (1 - t) * base + t * corner
    res = optimize.minimize(
        objective,
        start,
        jac=grad,
        method="SLSQP",
        bounds=[(0.0, None)] * len(cells),
        constraints=constraints,
        options={"maxiter": 500, "ftol": resolution},
    )
    if not res.success:
        raise RuntimeError(f"brute force optimizer failed: {res.message}")
    gamma_bf = {cell: float(w) for cell, w in zip(cells, res.x) if w > 1e-15}
    return gamma_bf, float(res.fun)


@dataclass
class MCReport:
    """Conditional Monte Carlo summary for one (n, delta) run.

    Frequencies are averages of per-sample empirical laws over accepted
    samples; ``*_tv`` compare them to the solved gamma and psi; ``*_se`` are
    the largest per-cell standard errors of those averages.
    """

    n: int
    delta: float
    threshold: float
    draws: int
    accepted: int
    acceptance_rate: float
    joint_emp: Dict[Tuple[int, int], float]
    joint_tv: float
    joint_se: float
    leaf_emp: Dict[int, float]
    leaf_tv: float
    leaf_se: float
    degree_marginal_exact: bool
    fast_path: bool

    def to_obj(self) -> dict:
        return {
            "n": self.n,
            "delta": self.delta,
            "threshold": self.threshold,
            "draws": self.draws,
            "accepted": self.accepted,
            "acceptance_rate": self.acceptance_rate,
            "joint_emp": {f"{d},{x}": w for (d, x), w in sorted(self.joint_emp.items())},
            "joint_tv": self.joint_tv,
            "joint_se": self.joint_se,
            "leaf_emp": {str(x): w for x, w in sorted(self.leaf_emp.items())},
            "leaf_tv": self.leaf_tv,
            "leaf_se": self.leaf_se,
            "degree_marginal_exact": self.degree_marginal_exact,
            "fast_path": self.fast_path,
        }


def _tv(p: Dict, q: Dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _finish_report(
    problem, solution, n, delta, threshold, classes, draws, accepted,
    cell_sums, cell_sqsums, fast_path,
) -> MCReport:
    if accepted == 0:
        raise RuntimeError("zero accepted samples within the draw budget")
    total_deg = sum(d * c for d, c in classes)
    joint_emp = {cell: s / (accepted * n) for cell, s in cell_sums.items()}
    leaf_emp: Dict[int, float] = {}
    for (d, x), s in cell_sums.items():
        leaf_emp[x] = leaf_emp.get(x, 0.0) + d * s / (accepted * total_deg)
    joint_se = 0.0
    for cell, s in cell_sums.items():
        mean = s / accepted
        var = max(cell_sqsums[cell] / accepted - mean * mean, 0.0)
        joint_se = max(joint_se, math.sqrt(var / accepted) / n)
    leaf_se = joint_se * max(d for d, _ in classes) * n / total_deg
    return MCReport(
        n=n,
        delta=delta,
        threshold=threshold,
        draws=draws,
        accepted=accepted,
        acceptance_rate=accepted / draws,
        joint_emp=joint_emp,
        joint_tv=_tv(joint_emp, solution.gamma),
        joint_se=joint_se,
        leaf_emp=leaf_emp,
        leaf_tv=_tv(leaf_emp, solution.psi),
        leaf_se=leaf_se,
        degree_marginal_exact=True,
        fast_path=fast_path,
    )


def conditional_mc(
    problem: GibbsProblem,
    n: int,
    samples: int,
    rng: np.random.Generator,
    delta: Optional[float] = None,
    min_accepted: Optional[int] = None,
    solution: Optional[GibbsSolution] = None,
    chunk: int = 1 << 22,
) -> MCReport:
    """Rejection sampling of the conditioned mark configuration at size n.

    Marks are drawn i.i.d. from nu on the integer degree sequence closest to
    n * alpha; a draw is accepted when its mean local h-sum strictly exceeds
    c - delta.  Only the per-degree mark counts matter for both the
    acceptance event and the reported empirical laws (each vertex occurs as a
    neighbor exactly degree-many times), so the graph pairing is never
    sampled.  ``samples`` caps the number of draws; with ``min_accepted`` the
    loop stops as soon as that many draws were accepted.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if solution is None:
        solution = solve(problem)
    delta = problem.delta if delta is None else float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    threshold = problem.c - delta
    counts = integer_degree_counts(problem.alpha, n)
    classes = sorted((d, c) for d, c in counts.items() if c > 0)
    n_x = len(problem.nu)

    cell_sums: Dict[Tuple[int, int], float] = {
        (d, x): 0.0 for d, _ in classes for x in range(n_x)
    }
    cell_sqsums: Dict[Tuple[int, int], float] = dict(cell_sums)
    drawn = 0
    accepted = 0

    fast = len(classes) == 1 and n_x == 2
    if fast:
        d0, c0 = classes[0]
        t_of_b = [
            (d0 * (b * problem.hfun[1] + (c0 - b) * problem.hfun[0])) / n
            for b in range(c0 + 1)
        ]
        ok = [t > threshold + TIE_TOL for t in t_of_b]
        if not any(ok):
            raise RuntimeError("conditioning event has empty support at this n")
        # the event must be a tail set in the mark-1 count for the budget
        # shortcut; otherwise fall back to the generic path
        b_min = ok.index(True)
        fast = all(ok[b_min:])
    if fast:
        cdf = np.cumsum(stats.binom.pmf(np.arange(c0 + 1), c0, problem.nu[1]))
        cdf[-1] = 1.0
        u_min = 0.0 if b_min == 0 else float(cdf[b_min - 1])
        sum_b = 0.0
        sum_b2 = 0.0
        while drawn < samples and (min_accepted is None or accepted < min_accepted):
            size = min(chunk, samples - drawn)
            u = rng.random(size)
            drawn += size
            sel = u[u >= u_min]
            if sel.size:
                b = np.searchsorted(cdf, sel, side="right")
                accepted += int(b.size)
                sum_b += float(b.sum())
                sum_b2 += float((b.astype(np.float64) ** 2).sum())
        cell_sums[(d0, 1)] = sum_b
        cell_sums[(d0, 0)] = accepted * c0 - sum_b
        cell_sqsums[(d0, 1)] = sum_b2
        cell_sqsums[(d0, 0)] = accepted * c0 * c0 - 2 * c0 * sum_b + sum_b2
        return _finish_report(
            problem, solution, n, delta, threshold, classes, drawn, accepted,
            cell_sums, cell_sqsums, True,
        )

    nu_vec = np.array(problem.nu)
    h_vec = np.array(problem.hfun)
    gen_chunk = min(chunk, 1 << 20)
    while drawn < samples and (min_accepted is None or accepted < min_accepted):
        size = min(gen_chunk, samples - drawn)
        drawn += size
        per_class = []
        t = np.zeros(size)
        for d, c in classes:
            if n_x == 2:
                k1 = rng.binomial(c, problem.nu[1], size=size)
                ks = np.stack([c - k1, k1], axis=1)
            else:
                ks = rng.multinomial(c, nu_vec, size=size)
            per_class.append(ks)
            t += d * (ks @ h_vec)
        t /= n
        mask = t > threshold + TIE_TOL
        hits = int(mask.sum())
        if hits:
            accepted += hits
            for (d, _), ks in zip(classes, per_class):
                kept = ks[mask].astype(np.float64)
                for x in range(n_x):
                    cell_sums[(d, x)] += float(kept[:, x].sum())
                    cell_sqsums[(d, x)] += float((kept[:, x] ** 2).sum())
    return _finish_report(
        problem, solution, n, delta, threshold, classes, drawn, accepted,
        cell_sums, cell_sqsums, False,
    )


def delta_sweep(
    problem: GibbsProblem,
    n: int,
    samples: int,
    rng: np.random.Generator,
    deltas: Sequence[float] = (0.1, 0.05, 0.02),
    **kwargs,
) -> List[MCReport]:
    """Side-by-side conditional MC reports over a slack sweep."""
    solution = kwargs.pop("solution", None) or solve(problem)
    return [
        conditional_mc(problem, n, samples, rng, delta=d, solution=solution, **kwargs)
        for d in deltas
    ]
