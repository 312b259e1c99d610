"""Tests for the Gibbs conditioning solver and its Monte Carlo validation.

The canonical worked instance (all vertices of degree 2, two equiprobable
marks, h the indicator of mark 1, threshold 3/2) has a fully explicit
solution: the tilt equation reads 2 e^{2 lam} / (1 + e^{2 lam}) = 3/2, so
lam = log(3)/2, the tilted joint law puts 3/4 on (2, 1), and the optimal
value is the relative entropy of (1/4, 3/4) against the uniform law.  The
Monte Carlo reports are checked against exact conditional laws computed by
enumerating the sufficient mark counts.
"""

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from graphld.gibbs import (
    TIE_TOL,
    GibbsProblem,
    brute_force_opt,
    conditional_mc,
    delta_sweep,
    g_of_lambda,
    solve,
)
from graphld.measures import DegreeLaw, TreeMeasure, relative_entropy, tv_distance
from graphld.rates import ReferenceLaw, nbd_rate
from graphld.samplers import ModelConfig, integer_degree_counts, make_rng

from helpers import star

LAM_STAR = math.log(3.0) / 2.0
V_STAR = 0.25 * math.log(0.5) + 0.75 * math.log(1.5)


def canonical_problem(c=1.5, delta=0.05):
    return GibbsProblem(DegreeLaw({2: 1.0}), (0.5, 0.5), (0.0, 1.0), c, delta)


def two_class_problem():
    return GibbsProblem(
        DegreeLaw({1: 0.5, 3: 0.5}), (0.4, 0.6), (0.0, 1.0), 1.5, 0.1
    )


# ---------------------------------------------------------------------------
# the tilt equation
# ---------------------------------------------------------------------------


def test_g_matches_closed_form_on_grid():
    p = canonical_problem()
    for lam in np.linspace(0.0, 2.5, 26):
        expected = 2.0 * math.exp(2 * lam) / (1.0 + math.exp(2 * lam))
        assert g_of_lambda(p, float(lam)) == pytest.approx(expected, abs=1e-12)


def test_g_at_zero_is_unconditioned_mean():
    for p in (canonical_problem(), two_class_problem()):
        mean = p.kappa() * math.fsum(w * v for w, v in zip(p.nu, p.hfun))
        assert g_of_lambda(p, 0.0) == pytest.approx(mean, abs=1e-12)
        assert p.unconditioned_mean() == pytest.approx(mean, abs=1e-12)


def test_g_increasing_and_saturating():
    p = two_class_problem()
    grid = [g_of_lambda(p, lam) for lam in np.linspace(0.0, 30.0, 40)]
    assert all(b >= a - 1e-12 for a, b in zip(grid, grid[1:]))
    assert grid[-1] == pytest.approx(p.supremum(), abs=1e-10)


def test_problem_helpers_two_class():
    p = two_class_problem()
    assert p.kappa() == pytest.approx(2.0, abs=1e-15)
    assert p.unconditioned_mean() == pytest.approx(2.0 * 0.6, abs=1e-15)
    assert p.supremum() == pytest.approx(2.0, abs=1e-15)


def test_problem_validation():
    with pytest.raises(ValueError):
        GibbsProblem(DegreeLaw({2: 1.0}), (0.5, 0.4), (0.0, 1.0), 1.5)
    with pytest.raises(ValueError):
        GibbsProblem(DegreeLaw({2: 1.0}), (0.5, 0.5), (0.0, 1.0, 2.0), 1.5)
    with pytest.raises(ValueError):
        GibbsProblem(DegreeLaw({2: 1.0}), (0.5, 0.5), (0.0, 1.0), 1.5, delta=0.0)


# ---------------------------------------------------------------------------
# the solver on the canonical instance
# ---------------------------------------------------------------------------


def test_solve_canonical_tilt_and_value():
    s = solve(canonical_problem())
    assert s.lam == pytest.approx(LAM_STAR, abs=1e-12)
    assert s.gamma[(2, 1)] == pytest.approx(0.75, abs=1e-12)
    assert s.gamma[(2, 0)] == pytest.approx(0.25, abs=1e-12)
    assert math.fsum(w for (n, _), w in s.gamma.items() if n == 2) == 1.0
    assert s.psi[1] == pytest.approx(0.75, abs=1e-12)
    assert s.psi[0] == pytest.approx(0.25, abs=1e-12)
    assert s.value == pytest.approx(V_STAR, abs=1e-13)


def test_solve_canonical_residuals():
    s = solve(canonical_problem())
    assert s.residuals["stationarity"] <= 1e-9
    assert s.residuals["row_sums"] == 0.0
    assert s.residuals["active_constraint"] <= 1e-10
    assert s.residuals["complementary_slackness"] <= 1e-10
    assert s.residuals["psi_mass"] <= 1e-14
    assert s.residuals["g_monotone_on_bracket"] == 0.0


def test_solve_canonical_mu_star_atoms():
    s = solve(canonical_problem())
    mu = s.mu_star
    # root mark x with leaf multiset {a, b}: gamma(2,x) * mult * psi_a psi_b
    expected = {}
    for x in (0, 1):
        for a, b in itertools.combinations_with_replacement((0, 1), 2):
            mult = 1 if a == b else 2
            expected[star(x, (a, b))] = (
                s.gamma[(2, x)] * mult * s.psi[a] * s.psi[b]
            )
    assert set(dict(mu.items())) == set(expected)
    for t, w in mu.items():
        assert w == pytest.approx(expected[t], abs=1e-12)
    assert math.fsum(w for _, w in mu.items()) == pytest.approx(1.0, abs=1e-14)
    assert mu.mean_degree() == pytest.approx(2.0, abs=1e-12)
    assert dict(mu.degree_law().items()) == pytest.approx({2: 1.0}, abs=1e-14)
    # hand values: star(1,(1,1)) = 3/4 * 9/16 = 27/64, star(0,(0,0)) = 1/64
    assert mu.get(star(1, (1, 1))) == pytest.approx(27 / 64, abs=1e-12)
    assert mu.get(star(0, (0, 0))) == pytest.approx(1 / 64, abs=1e-12)


def test_mu_star_neighborhood_rate_equals_value():
    s = solve(canonical_problem())
    cfg = ModelConfig(
        ensemble="CM", nu=(0.5, 0.5), xi=((1.0,),), alpha=DegreeLaw({2: 1.0})
    )
    assert nbd_rate("CM", cfg, s.mu_star) == pytest.approx(s.value, abs=1e-8)


def test_solve_near_mean_threshold_limit():
    s = solve(canonical_problem(c=1.0 + 1e-8))
    assert 0.0 < s.lam < 1e-7
    assert s.value < 1e-8
    assert s.gamma[(2, 1)] == pytest.approx(0.5, abs=1e-7)


def test_solve_infeasible_thresholds():
    with pytest.raises(ValueError, match="unconditioned mean"):
        solve(canonical_problem(c=0.8))
    with pytest.raises(ValueError, match="unconditioned mean"):
        solve(canonical_problem(c=1.0))  # boundary: must strictly exceed
    with pytest.raises(ValueError, match="essential supremum"):
        solve(canonical_problem(c=2.0))
    with pytest.raises(ValueError, match="essential supremum"):
        solve(canonical_problem(c=2.5))


def test_lambda_strictly_increasing_in_threshold():
    lams = [solve(canonical_problem(c=c)).lam for c in (1.1, 1.3, 1.5, 1.7, 1.9)]
    assert all(b > a for a, b in zip(lams, lams[1:]))


def test_solution_serializes():
    s = solve(canonical_problem())
    obj = s.to_obj()
    blob = json.dumps(obj, sort_keys=True)
    back = json.loads(blob)
    assert back["lambda"] == pytest.approx(LAM_STAR, abs=1e-12)
    assert back["gamma"]["2,1"] == pytest.approx(0.75, abs=1e-12)
    assert set(back) == {
        "lambda", "gamma", "psi", "mu_star", "value", "residuals",
    }


# ---------------------------------------------------------------------------
# brute force oracle
# ---------------------------------------------------------------------------


def test_brute_force_matches_closed_form_canonical():
    gamma_bf, v_bf = brute_force_opt(canonical_problem())
    assert v_bf == pytest.approx(V_STAR, abs=1e-8)
    assert gamma_bf[(2, 1)] == pytest.approx(0.75, abs=1e-6)
    assert gamma_bf[(2, 0)] == pytest.approx(0.25, abs=1e-6)


def test_brute_force_matches_solver_two_class():
    p = two_class_problem()
    s = solve(p)
    gamma_bf, v_bf = brute_force_opt(p)
    assert v_bf == pytest.approx(s.value, abs=1e-6)
    for cell, w in s.gamma.items():
        assert gamma_bf.get(cell, 0.0) == pytest.approx(w, abs=1e-5)


def test_brute_force_inactive_constraint_gives_product():
    p = canonical_problem(c=0.8)
    gamma_bf, v_bf = brute_force_opt(p)
    assert v_bf == pytest.approx(0.0, abs=1e-10)
    assert gamma_bf[(2, 0)] == pytest.approx(0.5, abs=1e-6)
    assert gamma_bf[(2, 1)] == pytest.approx(0.5, abs=1e-6)


def test_brute_force_concentrates_near_supremum():
    gamma_bf, v_bf = brute_force_opt(canonical_problem(c=1.95))
    assert gamma_bf[(2, 1)] >= 0.95
    assert v_bf > 0.3


def test_brute_force_dimension_cap():
    p = GibbsProblem(DegreeLaw({6: 1.0}), (0.5, 0.5), (0.0, 1.0), 4.0)
    with pytest.raises(ValueError, match="cap"):
        brute_force_opt(p)


# ---------------------------------------------------------------------------
# conditional Monte Carlo
# ---------------------------------------------------------------------------


def exact_single_class_conditional(n, p1, h0, h1, d, threshold):
    """Exact conditional joint law by enumerating the mark-1 count."""
    pmf = stats.binom.pmf(np.arange(n + 1), n, p1)
    keep = [
        b for b in range(n + 1)
        if (d * (b * h1 + (n - b) * h0)) / n > threshold + TIE_TOL
    ]
    mass = float(pmf[keep].sum())
    e_b = float(sum(b * pmf[b] for b in keep)) / mass
    return mass, {(d, 1): e_b / n, (d, 0): (n - e_b) / n}


def test_conditional_mc_single_class_matches_exact():
    p = canonical_problem()
    rng = make_rng(101)
    rep = conditional_mc(p, 20, 3_000_000, rng)
    assert rep.fast_path
    assert rep.degree_marginal_exact
    acc_exact, joint_exact = exact_single_class_conditional(
        20, 0.5, 0.0, 1.0, 2, 1.45
    )
    n_eff = rep.draws
    assert rep.acceptance_rate == pytest.approx(
        acc_exact, abs=5 * math.sqrt(acc_exact / n_eff)
    )
    for cell, w in joint_exact.items():
        assert rep.joint_emp[cell] == pytest.approx(w, abs=5 * rep.joint_se + 1e-9)
    # single degree class: size-biased leaf law coincides with the joint law
    assert rep.leaf_emp[1] == pytest.approx(rep.joint_emp[(2, 1)], abs=1e-12)
    exact_tv = abs(joint_exact[(2, 1)] - 0.75)
    assert rep.joint_tv == pytest.approx(exact_tv, abs=5 * rep.joint_se)


def test_conditional_mc_two_class_matches_enumeration():
    p = two_class_problem()
    s = solve(p)
    counts = integer_degree_counts(p.alpha, 16)
    assert counts == {1: 8, 3: 8}
    rng = make_rng(103)
    rep = conditional_mc(p, 16, 500_000, rng, solution=s)
    assert not rep.fast_path
    # enumerate the two binomial mark-1 counts exactly
    pmf = stats.binom.pmf(np.arange(9), 8, 0.6)
    tot = 0.0
    acc_cells = {(1, 0): 0.0, (1, 1): 0.0, (3, 0): 0.0, (3, 1): 0.0}
    for b1 in range(9):
        for b3 in range(9):
            t = (b1 + 3 * b3) / 16
            if t > p.c - p.delta + TIE_TOL:
                w = float(pmf[b1] * pmf[b3])
                tot += w
                acc_cells[(1, 1)] += w * b1
                acc_cells[(1, 0)] += w * (8 - b1)
                acc_cells[(3, 1)] += w * b3
                acc_cells[(3, 0)] += w * (8 - b3)
    exact_joint = {k: v / tot / 16 for k, v in acc_cells.items()}
    assert rep.acceptance_rate == pytest.approx(
        tot, abs=5 * math.sqrt(tot / rep.draws)
    )
    for cell, w in exact_joint.items():
        assert rep.joint_emp[cell] == pytest.approx(w, abs=5 * rep.joint_se + 1e-9)
    # leaf law is the degree-weighted mark aggregate over a fixed total degree
    total_deg = 8 * 1 + 8 * 3
    leaf_exact = {
        x: sum(d * acc_cells[(d, x)] for d in (1, 3)) / tot / total_deg
        for x in (0, 1)
    }
    for x, w in leaf_exact.items():
        assert rep.leaf_emp[x] == pytest.approx(w, abs=5 * rep.leaf_se + 1e-9)


def test_conditional_mc_descending_h_falls_back_and_matches():
    # h decreasing in the mark index: the acceptance set is a lower tail in
    # the mark-1 count, so the tail-set shortcut must not be used
    p = GibbsProblem(DegreeLaw({2: 1.0}), (0.5, 0.5), (1.0, 0.0), 1.5, 0.05)
    s = solve(p)
    assert s.gamma[(2, 0)] == pytest.approx(0.75, abs=1e-12)
    rng = make_rng(107)
    rep = conditional_mc(p, 20, 400_000, rng, solution=s)
    assert not rep.fast_path
    acc_exact, joint_exact = exact_single_class_conditional(
        20, 0.5, 1.0, 0.0, 2, 1.45
    )
    for cell, w in joint_exact.items():
        assert rep.joint_emp[cell] == pytest.approx(w, abs=5 * rep.joint_se + 1e-9)


def test_conditional_mc_no_bite_recovers_product():
    # a slack larger than the threshold gap accepts every draw
    p = canonical_problem(delta=2.0)
    rng = make_rng(109)
    rep = conditional_mc(p, 20, 200_000, rng)
    assert rep.acceptance_rate == 1.0
    se = math.sqrt(0.25 / (20 * rep.accepted))
    assert rep.joint_emp[(2, 1)] == pytest.approx(0.5, abs=5 * se)
    assert rep.joint_emp[(2, 0)] == pytest.approx(0.5, abs=5 * se)


def test_conditional_mc_zero_accepted_raises():
    # threshold just below the maximum: only the all-ones mark vector passes
    p = canonical_problem(c=1.99, delta=0.001)
    rng = make_rng(113)
    with pytest.raises(RuntimeError, match="zero accepted"):
        conditional_mc(p, 30, 100_000, rng)


def test_conditional_mc_min_accepted_stops_early():
    p = canonical_problem()
    rng = make_rng(127)
    rep = conditional_mc(p, 20, 50_000_000, rng, min_accepted=500, chunk=1 << 15)
    assert rep.accepted >= 500
    assert rep.draws < 50_000_000


def test_conditional_mc_deterministic():
    p = canonical_problem()
    rep1 = conditional_mc(p, 20, 300_000, make_rng(31))
    rep2 = conditional_mc(p, 20, 300_000, make_rng(31))
    assert rep1.to_obj() == rep2.to_obj()
    blob = json.dumps(rep1.to_obj(), sort_keys=True)
    assert json.dumps(rep2.to_obj(), sort_keys=True) == blob


def test_conditional_mc_input_validation():
    p = canonical_problem()
    with pytest.raises(ValueError):
        conditional_mc(p, 20, 0, make_rng(1))
    with pytest.raises(ValueError):
        conditional_mc(p, 20, 100, make_rng(1), delta=-0.1)


def test_delta_sweep_reports():
    p = canonical_problem()
    rng = make_rng(131)
    reps = delta_sweep(p, 20, 300_000, rng)
    assert [r.delta for r in reps] == [0.1, 0.05, 0.02]
    assert [r.threshold for r in reps] == pytest.approx([1.4, 1.45, 1.48])
    for r in reps:
        assert r.accepted > 0
        assert 0.0 < r.acceptance_rate <= 1.0
    # looser slack can only enlarge the acceptance event
    assert reps[0].acceptance_rate >= reps[2].acceptance_rate - 3e-3


# ---------------------------------------------------------------------------
# property tests
# ---------------------------------------------------------------------------


@st.composite
def small_problems(draw):
    degs = draw(
        st.lists(st.integers(1, 4), min_size=1, max_size=3, unique=True)
    )
    weights = [draw(st.integers(1, 5)) for _ in degs]
    tot = sum(weights)
    alpha = DegreeLaw({d: w / tot for d, w in zip(degs, weights)})
    n_x = draw(st.sampled_from((2, 3)))
    if max(degs) > 3 and n_x == 3:
        n_x = 2  # keep the brute force dimension cap satisfied
    nu_w = [draw(st.integers(1, 4)) for _ in range(n_x)]
    nu = tuple(w / sum(nu_w) for w in nu_w)
    hvals = [
        k / 8.0
        for k in draw(
            st.lists(st.integers(0, 16), min_size=n_x, max_size=n_x, unique=True)
        )
    ]
    frac = draw(st.floats(0.15, 0.8))
    p = GibbsProblem(alpha, nu, tuple(hvals), 1.0)
    lo, hi = p.unconditioned_mean(), p.supremum()
    return GibbsProblem(alpha, nu, tuple(hvals), lo + frac * (hi - lo))


@settings(max_examples=25, deadline=None)
@given(small_problems())
def test_solver_properties(p):
    s = solve(p)
    assert s.lam > 0
    assert s.value > 0
    assert s.residuals["stationarity"] <= 1e-9
    assert s.residuals["row_sums"] <= 1e-14
    assert s.residuals["active_constraint"] <= 1e-8
    assert g_of_lambda(p, s.lam) == pytest.approx(p.c, abs=1e-8)
    assert math.fsum(s.psi.values()) == pytest.approx(1.0, abs=1e-12)
    mass = math.fsum(w for _, w in s.mu_star.items())
    assert mass == pytest.approx(1.0, abs=1e-10)
    # the depth-1 law must reproduce the joint degree-mark law at the root
    for (n, x), w in s.gamma.items():
        got = math.fsum(
            wt for t, wt in s.mu_star.items()
            if t.root_degree == n and t.mark == x
        )
        assert got == pytest.approx(w, abs=1e-10)


@settings(max_examples=12, deadline=None)
@given(small_problems())
def test_brute_force_agrees_with_tilted_solution(p):
    s = solve(p)
    gamma_bf, v_bf = brute_force_opt(p)
    assert v_bf == pytest.approx(s.value, abs=1e-5)
