from __future__ import annotations

import time

import pytest

from trailstop import ExpJumps, ExpPayoff, LevyModel, Problem, make_bundle, solve_curve
from trailstop.montecarlo import SimConfig, estimate_value, richardson_bias
from trailstop.solver import LevelOptimum, integral_value, optimize_level, value_surface

Q = 0.1
B = 1.0
BM = LevyModel(mu=0.05, sigma=0.1)
JUMP = LevyModel(mu=0.25, sigma=0.1, jumps=ExpJumps(a=2.0, rho=10.0))

BM_RANGE = (4.5, 6.0)
JUMP_RANGE = (3.8, 5.6)

MC_PROBES = ((5.0, 5.0), (4.5, 5.0), (4.2, 4.2))
MC_PATHS = 200_000
MC_DT = 1e-4
MC_BIAS_PATHS = 10_000
MC_SEED = 20240611

ACCEPTANCE_LINES: list[str] = []


def exp_bundle(model, q=Q, f=((1.0, 0.5),), g=((1.0, 1.0),), k=()):
    return make_bundle(model, q, ExpPayoff(f), ExpPayoff(g), ExpPayoff(k))


def make_problem(model, q=Q, b=B, **payoff):
    return Problem.create(model, q, b, exp_bundle(model, q, **payoff))


@pytest.fixture(scope="session")
def bm_problem():
    return make_problem(BM)


@pytest.fixture(scope="session")
def jump_problem():
    return make_problem(JUMP)


@pytest.fixture(scope="session")
def bm_solution(bm_problem):
    t0 = time.perf_counter()
    res = solve_curve(*BM_RANGE, 400, bm_problem)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def jump_solution(jump_problem):
    t0 = time.perf_counter()
    res = solve_curve(*JUMP_RANGE, 400, jump_problem)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def mc_probes(jump_problem, jump_solution):
    """The long Monte Carlo runs at the reference probes, shared across tests."""
    res, _ = jump_solution
    p = jump_problem
    cfg = SimConfig(dt=MC_DT, horizon=200.0, n_paths=MC_PATHS, seed=MC_SEED)
    out = []
    t0 = time.perf_counter()
    for x, s in MC_PROBES:
        level = optimize_level(s, p)
        diag_int = integral_value(s, res.curve, p)
        est = estimate_value(p.model, p.bundle, res.curve, p.b, x, s, cfg, p.q)
        bias = richardson_bias(p.model, p.bundle, res.curve, p.b, x, s, cfg, p.q, n_paths=MC_BIAS_PATHS)
        out.append({
            "x": x,
            "s": s,
            "closed": value_surface(x, s, p, level),
            "closed_integral_diag": value_surface(x, s, p, LevelOptimum(s, level.l_star, diag_int)),
            "est": est,
            "bias": bias,
        })
    return out, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
