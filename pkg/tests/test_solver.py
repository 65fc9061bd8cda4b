from __future__ import annotations

import math

import numpy as np
import pytest

from trailstop.errors import DomainError, ModelError
from trailstop.scale import w, w_prime, w_second
from trailstop.solver import (LevelOptimum, StrategyCurve, big_f, discount_factor, integral_value, objective,
                              optimize_level, solve_curve, value_surface, verify_qvi)

from conftest import BM, JUMP, make_problem


def test_big_f_no_jumps_is_creeping_term(bm_problem):
    sf, p = bm_problem.sf, bm_problem.bundle.net_reward
    for m, z in ((5.0, 0.3), (4.2, 1.0)):
        expected = 0.005 * (w_prime(sf, z) ** 2 / w(sf, z) - w_second(sf, z)) * p(m - z)
        assert big_f(m, z, bm_problem) == pytest.approx(expected, rel=1e-14)


def test_big_f_closed_matches_quadrature(jump_problem):
    for m, z in ((5.0, 0.5), (4.0, 1.0), (5.2, 0.05)):
        assert big_f(m, z, jump_problem) == pytest.approx(big_f(m, z, jump_problem, method="quad"), rel=1e-8)


def test_big_f_domain(jump_problem):
    with pytest.raises(DomainError):
        big_f(5.0, 1.5, jump_problem)
    assert big_f(5.0, 0.0, jump_problem) == -math.inf


@pytest.mark.parametrize("name", ["bm", "jump"])
def test_objective_limit_at_zero(name, bm_problem, jump_problem):
    prob = bm_problem if name == "bm" else jump_problem
    for s in (4.0, 4.5, 5.0, 5.5):
        p0 = prob.bundle.net_reward(s)
        assert objective(s, 0.0, prob) == p0
        assert objective(s, 1e-6, prob) == pytest.approx(p0, rel=1e-3)


def test_jump_interior_optimum_at_5(jump_problem):
    opt = optimize_level(5.0, jump_problem)
    assert opt.l_star == pytest.approx(0.915551, abs=5e-6)
    zs = np.linspace(0.01, 1.0, 100)
    assert opt.value >= max(objective(5.0, z, jump_problem) for z in zs)


def test_bm_boundary_optima(bm_problem):
    assert optimize_level(5.0, bm_problem).l_star == 1.0
    assert optimize_level(5.3, bm_problem).l_star == 0.0


def test_bm_tie_at_turning_point(bm_problem):
    opt = optimize_level(5.2141, bm_problem)
    found = sorted([opt.l_star, opt.secondary])
    assert found[0] == pytest.approx(0.0, abs=1e-6)
    assert found[1] == pytest.approx(1.0, abs=1e-6)


def test_jump_tie_at_upper_turning_point(jump_problem):
    opt = optimize_level(5.1963, jump_problem)
    assert opt.secondary is not None
    found = sorted([opt.l_star, opt.secondary])
    assert found[0] == pytest.approx(0.0, abs=1e-6)
    assert found[1] == pytest.approx(0.886898, abs=5e-4)


def test_jump_boundary_optimum_at_4(jump_problem):
    assert optimize_level(4.0, jump_problem).l_star == 1.0


def test_solve_result_invariants(jump_solution, jump_problem):
    res, _ = jump_solution
    idx = np.linspace(0, res.grid_s.size - 1, 12).astype(int)
    zs = np.linspace(0.0, 1.0, 64)
    for i in idx:
        s = res.grid_s[i]
        assert res.v_diag[i] == pytest.approx(objective(s, res.grid_l[i], jump_problem), rel=1e-12)
        assert res.v_diag[i] >= max(objective(s, z, jump_problem) for z in zs) - 1e-12 * abs(res.v_diag[i])
    assert np.all((res.curve.l_values >= 0) & (res.curve.l_values <= 1))


def test_turning_points_tie_branches(jump_solution, bm_solution, jump_problem, bm_problem):
    for (res, _), prob in ((jump_solution, jump_problem), (bm_solution, bm_problem)):
        for s_star, kind in zip(res.turning_points, res.turning_kinds):
            if kind != "jump":
                continue
            lo = optimize_level(s_star - 1e-4, prob).l_star
            hi = optimize_level(s_star + 1e-4, prob).l_star
            g_lo = objective(s_star, lo, prob)
            g_hi = objective(s_star, hi, prob)
            assert g_lo == pytest.approx(g_hi, rel=1e-6, abs=1e-9)


def test_solve_curve_degenerate_range(jump_problem):
    res = solve_curve(5.0, 5.0, 2, jump_problem)
    assert res.grid_s.size == 1
    assert res.grid_l[0] == pytest.approx(0.915551, abs=5e-6)


def test_solve_curve_worker_invariance(jump_problem):
    a = solve_curve(4.9, 5.3, 9, jump_problem, workers=1)
    b = solve_curve(4.9, 5.3, 9, jump_problem, workers=2)
    assert np.array_equal(a.grid_l, b.grid_l)
    assert np.array_equal(a.v_diag, b.v_diag)
    assert a.turning_points == b.turning_points


def test_strategy_curve_validation():
    with pytest.raises(ValueError):
        StrategyCurve(np.array([0.0, 1.0]), np.array([0.5, 1.5]), b=1.0)
    with pytest.raises(ValueError):
        StrategyCurve(np.array([1.0, 0.0]), np.array([0.5, 0.5]), b=1.0)
    c = StrategyCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]), b=1.0)
    assert c(0.25) == 0.25
    assert c(5.0) == 1.0


def test_integral_value_immediate_collapse(jump_problem):
    curve = StrategyCurve(np.array([4.5, 4.5 + 1e-9, 6.0]), np.array([1e-7, 0.0, 0.0]), b=1.0)
    assert integral_value(4.5, curve, jump_problem) == pytest.approx(
        jump_problem.bundle.net_reward(4.5), rel=1e-6)


def test_integral_value_constant_depth_closed_form(bm_problem):
    # constant depth l: V = int_s^inf e^{-R (m - s)} F_m(l) dm, with F_m(l) a sum of exponentials in m
    l, s = 0.5, 4.0
    curve = StrategyCurve.constant(l, 1.0, s, 40.0)
    sf = bm_problem.sf
    rate = w_prime(sf, l) / w(sf, l)
    creep = 0.005 * (w_prime(sf, l) ** 2 / w(sf, l) - w_second(sf, l))
    exact = sum(creep * c * math.exp(g * (s - l)) / (rate - g) for c, g in bm_problem.bundle.reward_terms)
    with pytest.warns(RuntimeWarning):
        got = integral_value(s, curve, bm_problem)
    assert got == pytest.approx(exact, rel=1e-5)


def test_integral_value_matches_diagonal_value(jump_solution, jump_problem):
    res, _ = jump_solution
    v = optimize_level(4.5, jump_problem).value
    assert integral_value(4.5, res.curve, jump_problem) == pytest.approx(v, rel=1e-4)


def test_integral_value_perturbation_lowers_value(jump_solution, jump_problem):
    res, _ = jump_solution
    base = integral_value(4.5, res.curve, jump_problem)
    for delta in (-0.05, 0.05):
        assert integral_value(4.5, res.curve.perturbed(delta), jump_problem) < base


def test_discount_factor_constant_depth(jump_problem):
    curve = StrategyCurve.constant(1.0, 1.0, 0.0, 10.0)
    sf = jump_problem.sf
    assert discount_factor(5.0, 5.1, curve, jump_problem) == pytest.approx(
        math.exp(-0.1 * w_prime(sf, 1.0) / w(sf, 1.0)), rel=1e-12)
    assert discount_factor(5.0, 5.0, curve, jump_problem) == 1.0
    zero = StrategyCurve(np.array([0.0, 5.05, 10.0]), np.array([1.0, 0.0, 1.0]), b=1.0)
    assert discount_factor(5.0, 5.1, zero, jump_problem) == 0.0


def test_value_surface_diagonal(jump_problem):
    for s in (4.0, 4.5, 5.0, 5.3):
        level = optimize_level(s, jump_problem)
        assert value_surface(s, s, jump_problem, level) == pytest.approx(
            jump_problem.bundle.f_bar(s) + level.value, rel=1e-12)


def test_value_surface_regions(jump_problem):
    s = 5.0
    level = optimize_level(s, jump_problem)
    x_stop = s - 0.95
    assert value_surface(x_stop, s, jump_problem, level) == jump_problem.bundle.g(x_stop)
    assert value_surface(s - 1.2, s, jump_problem, level) == 0.0
    with pytest.raises(DomainError):
        value_surface(s + 0.1, s, jump_problem)


def test_value_surface_seam_full_depth(jump_problem):
    s = 4.0
    level = optimize_level(s, jump_problem)
    assert level.l_star == 1.0
    assert value_surface(s - 1.0, s, jump_problem, level) == pytest.approx(jump_problem.bundle.g(s - 1.0), rel=1e-6)


def test_value_surface_seam_interior(jump_problem):
    for s in (4.5, 5.0):
        level = optimize_level(s, jump_problem)
        seam = s - level.l_star
        assert value_surface(seam, s, jump_problem, level) == pytest.approx(jump_problem.bundle.g(seam), rel=1e-4)


def test_qvi_no_jump(bm_problem):
    rep = verify_qvi(5.0, bm_problem)
    assert rep.passed["i"] and rep.passed["iv"] and rep.passed["ii_generator"]
    assert rep.margins["ii_generator"] <= 1e-4


def test_qvi_reports_instead_of_raising(jump_problem):
    rep = verify_qvi(5.0, jump_problem, n_grid=21)
    assert set(rep.passed) == {"i", "ii_generator", "ii_dominates", "iii_generator", "iii_equality", "iv"}
    assert rep.passed["i"] and rep.passed["iv"]


def test_penalty_integrability_checked():
    with pytest.raises(ModelError):
        make_problem(JUMP, k=((1.0, -20.0),))
    with pytest.raises(ModelError):
        make_problem(BM, b=0.0)


def test_nonzero_penalty_lowers_value():
    plain = make_problem(JUMP)
    taxed = make_problem(JUMP, k=((5.0, 0.2),))
    for s in (4.5, 5.0):
        assert optimize_level(s, taxed).value < optimize_level(s, plain).value
