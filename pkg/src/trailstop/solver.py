"""Excursion-by-excursion solution of the trailing-boundary stopping problem.

At every running-maximum level s the controller picks an allowed drawdown
depth z in [0, b]. With the optimal policy in force above s, the value of the
level-s choice is

    G_s(z) = F_s(z) * W(z) / W'(z)

where F_s(z) prices the three ways an excursion of height above z can end:
creeping through s - z, jumping into the stop band (s - b, s - z), or jumping
past the ruin line s - b. The optimal depth l*(s) maximises G_s and
V(s, s) = G_s(l*(s)).

For exponential jump sizes every inner jump integral is an exponential in the
pre-jump drawdown y, so F_s(z) reduces to scale-function integrals of the
form int_0^z W(y) e^{rho y} dy. ``method="quad"`` evaluates the outer
y-integral by adaptive quadrature instead, as an independent route.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, ModelError
from .levy import LevyModel
from .numerics import golden_max, quad
from .payoff import PayoffBundle
from .scale import ScaleFunction, build_scale, w, w_prime, w_second

log = logging.getLogger(__name__)

__all__ = [
    "Problem",
    "StrategyCurve",
    "LevelOptimum",
    "SolveResult",
    "QVIReport",
    "big_f",
    "objective",
    "optimize_level",
    "solve_curve",
    "integral_value",
    "discount_factor",
    "value_surface",
    "verify_qvi",
]

Z_GRID_DEFAULT = 512
S_GRID_DEFAULT = 400
GOLDEN_TOL = 1e-8
TIE_RTOL = 1e-3
TURNING_XTOL = 1e-10
TRUNCATION_LEVEL = 1e-6
MAX_PANELS = 200_000


@dataclass(frozen=True)
class Problem:
    """Everything a solve depends on: model, discount, ruin distance, payoffs."""

    model: LevyModel
    q: float
    b: float
    bundle: PayoffBundle
    sf: ScaleFunction = field(repr=False)

    @classmethod
    def create(cls, model: LevyModel, q: float, b: float, bundle: PayoffBundle) -> "Problem":
        if not (b > 0 and math.isfinite(b)):
            raise ModelError(f"ruin distance b must be positive, got {b!r}")
        if model.jumps is not None:
            for c, g in bundle.penalty_terms:
                if not model.jumps.rho + g > 0:
                    raise ModelError(
                        f"penalty term exp({g} x) is not integrable against the jump law (rho + gamma <= 0)"
                    )
        return cls(model=model, q=float(q), b=float(b), bundle=bundle, sf=build_scale(model, q))

    def scaled(self, factor: float) -> "Problem":
        """Same problem with every payoff coefficient multiplied by ``factor``."""
        return Problem(self.model, self.q, self.b, self.bundle.scaled(factor, self.model, self.q), self.sf)


# --------------------------------------------------------------------------- #
# Strategy curves
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class StrategyCurve:
    """Piecewise-linear s -> l(s) in [0, b], constant beyond both ends."""

    s_grid: np.ndarray
    l_values: np.ndarray
    b: float

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        l = np.asarray(self.l_values, dtype=float)
        if s.ndim != 1 or s.shape != l.shape or s.size == 0:
            raise ValueError("s_grid and l_values must be equal-length 1-d arrays")
        if s.size > 1 and np.any(np.diff(s) <= 0):
            raise ValueError("s_grid must be strictly ascending")
        if np.any(l < 0) or np.any(l > self.b):
            raise ValueError("strategy values must lie in [0, b]")
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "l_values", l)

    def __call__(self, s):
        return np.interp(s, self.s_grid, self.l_values)

    @classmethod
    def constant(cls, value: float, b: float, s_lo: float = 0.0, s_hi: float = 1.0) -> "StrategyCurve":
        return cls(np.array([s_lo, s_hi]), np.array([value, value]), b)

    def perturbed(self, delta: float) -> "StrategyCurve":
        return StrategyCurve(self.s_grid, np.clip(self.l_values + delta, 0.0, self.b), self.b)


@dataclass(frozen=True)
class LevelOptimum:
    s: float
    l_star: float
    value: float
    secondary: Optional[float] = None
    secondary_value: Optional[float] = None


@dataclass
class SolveResult:
    curve: StrategyCurve
    v_diag: np.ndarray
    turning_points: list[float]
    turning_kinds: list[str]
    grid_s: np.ndarray
    grid_l: np.ndarray
    objective_samples: Optional[list[tuple[np.ndarray, np.ndarray]]] = None


# --------------------------------------------------------------------------- #
# F_m(z) and the level objective
# --------------------------------------------------------------------------- #

def _stop_band_weight(problem: Problem, m, z):
    """sum_j c_j e^{gamma_j m} int_{z}^{b} e^{-(rho+gamma_j) u} du over (g - f_bar) terms."""
    rho, b = problem.model.jumps.rho, problem.b
    m = np.asarray(m, dtype=float)
    z = np.asarray(z, dtype=float)
    out = np.zeros(np.broadcast(m, z).shape)
    for c, g in problem.bundle.reward_terms:
        k = rho + g
        if k == 0.0:
            band = b - z
        else:
            band = (np.exp(-k * z) - math.exp(-k * b)) / k
        out = out + c * np.exp(g * m) * band
    return out


def _ruin_weight(problem: Problem, m):
    """sum_j d_j e^{gamma_j m} e^{-(rho+gamma_j) b}/(rho+gamma_j) over (k + f_bar) terms."""
    rho, b = problem.model.jumps.rho, problem.b
    m = np.asarray(m, dtype=float)
    out = np.zeros(m.shape)
    for d, g in problem.bundle.penalty_terms:
        k = rho + g
        out = out + d * np.exp(g * m - k * b) / k
    return out


def _jump_integrand_inner(problem: Problem, m: float, y: float, z: float) -> float:
    """Closed-form h-integrals of the stop band minus the ruin tail at pre-jump drawdown y."""
    jumps = problem.model.jumps
    a, rho, b = jumps.a, jumps.rho, problem.b
    total = 0.0
    for c, g in problem.bundle.reward_terms:
        k = rho + g
        # int_{y-b}^{y-z} a rho e^{rho h} c e^{g (m - y + h)} dh
        if k == 0.0:
            band = (b - z)
        else:
            band = (math.exp(k * (y - z)) - math.exp(k * (y - b))) / k
        total += a * rho * c * math.exp(g * (m - y)) * band
    for d, g in problem.bundle.penalty_terms:
        k = rho + g
        total -= a * rho * d * math.exp(g * (m - y)) * math.exp(k * (y - b)) / k
    return total


def big_f(m: float, z: float, problem: Problem, method: str = "closed") -> float:
    """F_m(z): discounted net payoff rate of excursions that end below depth z.

    Diverges like (W'/W)(z) as z -> 0; at z = 0 the signed infinity of the
    limit is returned. Use :func:`objective` for the finite product F*W/W'.
    """
    b, sf, sig = problem.b, problem.sf, problem.model.sigma
    if not (0.0 <= z <= b):
        raise DomainError(f"z must lie in [0, b], got {z!r}")
    p = problem.bundle.net_reward
    if z == 0.0:
        v = p(m)
        return math.copysign(math.inf, v) if v != 0 else math.nan
    wz, w1z, w2z = w(sf, z), w_prime(sf, z), w_second(sf, z)
    creep = 0.5 * sig * sig * (w1z * w1z / wz - w2z) * p(m - z)
    if problem.model.jumps is None:
        return creep
    ratio = w1z / wz
    if method == "closed":
        rho = problem.model.jumps.rho
        a = problem.model.jumps.a
        kern = float(sf.int_w1_exp(z, rho)) - ratio * float(sf.int_w_exp(z, rho))
        weight = float(_stop_band_weight(problem, m, z)) - float(_ruin_weight(problem, m))
        return creep + a * rho * weight * kern
    if method == "quad":
        def integrand(y):
            return (w_prime(sf, y) - ratio * w(sf, y)) * _jump_integrand_inner(problem, m, y, z)
        return creep + quad(integrand, 0.0, z)
    raise ValueError(f"unknown method {method!r}")


def objective_vec(problem: Problem, s: float, z) -> np.ndarray:
    """G_s(z) = F_s(z) W(z)/W'(z) on an array of depths, exact at z = 0."""
    sf, sig = problem.sf, problem.model.sigma
    z = np.asarray(z, dtype=float)
    wz, w1z, w2z = sf.w(z), sf.w1(z), sf.w2(z)
    ratio = wz / w1z
    g_val = 0.5 * sig * sig * (w1z - w2z * ratio) * problem.bundle.net_reward(s - z)
    if problem.model.jumps is not None:
        a, rho = problem.model.jumps.a, problem.model.jumps.rho
        kern = ratio * sf.int_w1_exp(z, rho) - sf.int_w_exp(z, rho)
        weight = _stop_band_weight(problem, s, z) - _ruin_weight(problem, s)
        g_val = g_val + a * rho * weight * kern
    return np.where(z == 0.0, problem.bundle.net_reward(s), g_val)


def objective(s: float, z: float, problem: Problem, method: str = "closed") -> float:
    """Value of stopping at depth z at level s and acting optimally above s."""
    if not (0.0 <= z <= problem.b):
        raise DomainError(f"z must lie in [0, b], got {z!r}")
    if z == 0.0:
        return float(problem.bundle.net_reward(s))
    if method == "closed":
        return float(objective_vec(problem, s, np.array([z]))[0])
    return big_f(s, z, problem, method) * w(problem.sf, z) / w_prime(problem.sf, z)


# --------------------------------------------------------------------------- #
# Level optimisation
# --------------------------------------------------------------------------- #

def _local_maxima(problem: Problem, s: float, n_z: int):
    """Refined local maxima (z, G) of G_s, best first, plus the scan itself."""
    b = problem.b
    zs = np.linspace(0.0, b, n_z)
    gs = objective_vec(problem, s, zs)
    f = lambda z: float(objective_vec(problem, s, np.array([z]))[0])
    idx = []
    for i in range(n_z):
        left = gs[i - 1] if i > 0 else -np.inf
        right = gs[i + 1] if i + 1 < n_z else -np.inf
        if gs[i] >= left and gs[i] >= right:
            idx.append(i)
    cands = []
    for i in idx:
        lo, hi = zs[max(i - 1, 0)], zs[min(i + 1, n_z - 1)]
        z, v = golden_max(f, lo, hi, tol=GOLDEN_TOL)
        if zs[i] == 0.0 and gs[i] >= v:
            z, v = 0.0, float(gs[i])
        cands.append((z, v))
    # merge duplicates that refined onto the same point
    merged: list[tuple[float, float]] = []
    for z, v in sorted(cands):
        if merged and abs(z - merged[-1][0]) <= 2 * b / (n_z - 1):
            if v > merged[-1][1]:
                merged[-1] = (z, v)
        else:
            merged.append((z, v))
    merged.sort(key=lambda t: (-t[1], t[0]))
    return merged, zs, gs


def optimize_level(s: float, problem: Problem, n_z: int = Z_GRID_DEFAULT,
                   tie_rtol: float = TIE_RTOL, keep_samples: bool = False):
    """Maximise G_s over [0, b]: coarse scan, then golden-section polish.

    A second local maximum whose value is within ``tie_rtol`` of the scan's
    value range is reported as ``secondary``. Exact ties go to the smaller z.
    """
    cands, zs, gs = _local_maxima(problem, s, n_z)
    best_z, best_v = cands[0]
    scale = max(float(np.ptp(gs)), abs(best_v), 1e-300)
    for z, v in cands[1:]:
        if abs(v - best_v) <= 1e-12 * scale and z < best_z:
            best_z, best_v = z, v
    sec_z = sec_v = None
    for z, v in cands:
        if z == best_z:
            continue
        if best_v - v <= tie_rtol * scale:
            sec_z, sec_v = z, v
            break
    opt = LevelOptimum(s=float(s), l_star=float(best_z), value=float(best_v),
                       secondary=sec_z, secondary_value=sec_v)
    if keep_samples:
        return opt, (zs, gs)
    return opt


def _branch_value(problem: Problem, s: float, z_ref: float, n_z: int) -> tuple[float, float]:
    cands, _, _ = _local_maxima(problem, s, n_z)
    z, v = min(cands, key=lambda t: abs(t[0] - z_ref))
    return z, v


def _refine_jump(problem: Problem, s_lo: float, s_hi: float, z_lo: float, z_hi: float, n_z: int):
    """Root of G_s(branch near z_lo) - G_s(branch near z_hi) on [s_lo, s_hi]."""
    def diff(s):
        return _branch_value(problem, s, z_lo, n_z)[1] - _branch_value(problem, s, z_hi, n_z)[1]
    d_lo, d_hi = diff(s_lo), diff(s_hi)
    if d_lo * d_hi > 0:
        # branches did not cross inside the cell; report the midpoint
        return 0.5 * (s_lo + s_hi)
    return optimize.brentq(diff, s_lo, s_hi, xtol=TURNING_XTOL)


def _edge_slope(problem: Problem, s: float, edge: float) -> float:
    """One-sided second-order derivative of G_s at z = edge (0 or b), pointing inward."""
    h = 1e-5 * problem.b
    sgn = -1.0 if edge > 0 else 1.0
    z = np.array([edge, edge + sgn * h, edge + 2 * sgn * h])
    g = objective_vec(problem, s, z)
    return sgn * (-3 * g[0] + 4 * g[1] - g[2]) / (2 * h)


def _refine_departure(problem: Problem, s_lo: float, s_hi: float, edge: float):
    f = lambda s: _edge_slope(problem, s, edge)
    f_lo, f_hi = f(s_lo), f(s_hi)
    if f_lo * f_hi > 0:
        return 0.5 * (s_lo + s_hi)
    return optimize.brentq(f, s_lo, s_hi, xtol=TURNING_XTOL)


def _optimize_many(args):
    problem, s, n_z, keep = args
    return optimize_level(s, problem, n_z=n_z, keep_samples=keep)


def solve_curve(s_min: float, s_max: float, n: int, problem: Problem, n_z: int = Z_GRID_DEFAULT,
                keep_samples: bool = False, workers: int = 1) -> SolveResult:
    """Optimal depth curve l*(s) on a uniform s-grid with refined turning points.

    Two kinds of turning point are located. ``jump``: the argmax moves by more
    than b/2 between neighbouring grid points, refined to the level where the
    two branch values tie. ``departure``: l* leaves (or lands on) the boundary
    0 or b continuously, refined to the root of the edge slope of G_s.
    Jump turning points are inserted into the returned curve as a pair of
    nodes so the step is represented exactly.
    """
    if s_max < s_min:
        raise ValueError("s_max must be >= s_min")
    if s_max == s_min:
        grid = np.array([float(s_min)])
    else:
        if n < 2:
            raise ValueError("n must be >= 2")
        grid = np.linspace(s_min, s_max, n)
    jobs = [(problem, float(s), n_z, keep_samples) for s in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_optimize_many, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_optimize_many(j) for j in jobs]
    samples = None
    if keep_samples:
        samples = [r[1] for r in results]
        results = [r[0] for r in results]
    l_vals = np.array([r.l_star for r in results])
    v_vals = np.array([r.value for r in results])

    b = problem.b
    edge_tol = 1e-6 * b
    turning: list[tuple[float, str, float, float]] = []
    for i in range(grid.size - 1):
        la, lb = l_vals[i], l_vals[i + 1]
        if abs(lb - la) > 0.5 * b:
            s_star = _refine_jump(problem, grid[i], grid[i + 1], la, lb, n_z)
            turning.append((s_star, "jump", la, lb))
            continue
        for edge in (0.0, b):
            at_a, at_b = abs(la - edge) <= edge_tol, abs(lb - edge) <= edge_tol
            if at_a != at_b:
                s_star = _refine_departure(problem, grid[i], grid[i + 1], edge)
                turning.append((s_star, "departure", la, lb))

    s_nodes, l_nodes = list(grid), list(l_vals)
    for s_star, kind, la, lb in turning:
        if kind != "jump":
            continue
        eps = 1e-9 * max(1.0, abs(s_star))
        # the exact tie goes to the smaller depth
        if la <= lb:
            pair = [(s_star, la), (s_star + eps, lb)]
        else:
            pair = [(s_star - eps, la), (s_star, lb)]
        for sp, lp in pair:
            j = int(np.searchsorted(s_nodes, sp))
            if (j < len(s_nodes) and s_nodes[j] == sp) or (j > 0 and s_nodes[j - 1] == sp):
                continue
            s_nodes.insert(j, sp)
            l_nodes.insert(j, lp)
    curve = StrategyCurve(np.array(s_nodes), np.clip(np.array(l_nodes), 0.0, b), b)
    return SolveResult(
        curve=curve,
        v_diag=v_vals,
        turning_points=[t[0] for t in turning],
        turning_kinds=[t[1] for t in turning],
        grid_s=grid,
        grid_l=l_vals,
        objective_samples=samples,
    )


# --------------------------------------------------------------------------- #
# Integral representation
# --------------------------------------------------------------------------- #

def _f_on_curve(problem: Problem, m: np.ndarray, z: np.ndarray) -> np.ndarray:
    """F_m(l(m)) and W'/W at l(m), vectorised over matching m and z arrays."""
    sf, sig = problem.sf, problem.model.sigma
    wz, w1z, w2z = sf.w(z), sf.w1(z), sf.w2(z)
    inten = w1z / wz
    val = 0.5 * sig * sig * (w1z * inten - w2z) * problem.bundle.net_reward(m - z)
    if problem.model.jumps is not None:
        a, rho = problem.model.jumps.a, problem.model.jumps.rho
        kern = sf.int_w1_exp(z, rho) - inten * sf.int_w_exp(z, rho)
        weight = _stop_band_weight(problem, m, z) - _ruin_weight(problem, m)
        val = val + a * rho * weight * kern
    return val, inten


def integral_value(s: float, curve: StrategyCurve, problem: Problem, m_max: Optional[float] = None,
                   n_sub: int = 16) -> float:
    """V(s, s) under an arbitrary depth curve via the excursion integral.

    Integrates exp(-int_s^m W'(l)/W(l) du) * F_m(l(m)) over m. Where l drops
    below TRUNCATION_LEVEL the survival factor collapses; the integral stops
    there and the remaining mass is the immediate-stop payoff (g - f_bar)
    at that level, weighted by the survival factor reached.
    """
    if m_max is None:
        m_max = float(curve.s_grid[-1])
    if m_max < s:
        raise ValueError("m_max must be >= s")
    p = problem.bundle.net_reward
    if curve(s) < TRUNCATION_LEVEL:
        return float(p(s))

    inner = curve.s_grid[(curve.s_grid > s) & (curve.s_grid < m_max)]
    knots = np.concatenate(([s], inner, [m_max]))
    l_knots = curve(knots)
    m_end, truncated = m_max, False
    for i in range(1, knots.size):
        if l_knots[i] < TRUNCATION_LEVEL:
            l0, l1 = l_knots[i - 1], l_knots[i]
            frac = (l0 - TRUNCATION_LEVEL) / (l0 - l1)
            m_end = knots[i - 1] + frac * (knots[i] - knots[i - 1])
            knots = np.append(knots[:i], m_end)
            truncated = True
            break
    if not truncated:
        warnings.warn(f"depth curve never reaches 0 before m_max={m_max}; excursion integral truncated",
                      RuntimeWarning, stacklevel=2)

    # at least n_sub panels per curve cell, and enough that the survival
    # factor decays by no more than exp(-1/8) per panel
    sf = problem.sf
    l_pos = np.maximum(curve(knots), TRUNCATION_LEVEL)
    rate = sf.w1(l_pos) / sf.w(l_pos)
    pieces = []
    for i in range(knots.size - 1):
        width = knots[i + 1] - knots[i]
        n = max(n_sub, int(math.ceil(8.0 * width * max(rate[i], rate[i + 1]))))
        n = min(n + n % 2, MAX_PANELS)
        pieces.append(np.linspace(knots[i], knots[i + 1], n + 1)[:-1])
    ms = np.concatenate(pieces + [[knots[-1]]])
    zs = np.clip(curve(ms), TRUNCATION_LEVEL if truncated else 0.0, problem.b)
    if truncated:
        zs[-1] = TRUNCATION_LEVEL
    fvals, inten = _f_on_curve(problem, ms, zs)
    surv = np.exp(-integrate.cumulative_simpson(inten, x=ms, initial=0.0))
    total = float(integrate.simpson(surv * fvals, x=ms))
    if truncated:
        total += surv[-1] * float(p(m_end))
    return total


def discount_factor(s: float, m: float, curve: StrategyCurve, problem: Problem) -> float:
    """E[exp(-q T_m); T_m < tau(l)] from X_0 = S_0 = s, i.e. exp(-int_s^m W'(l)/W(l) du)."""
    if m < s:
        raise ValueError(f"discount factor needs m >= s, got s={s!r}, m={m!r}")
    if m == s:
        return 1.0
    sf = problem.sf
    inner = curve.s_grid[(curve.s_grid > s) & (curve.s_grid < m)]
    knots = np.concatenate(([s], inner, [m]))
    if np.any(curve(knots) <= 0.0):
        return 0.0
    rate = lambda u: float(sf.w1(curve(u)) / sf.w(curve(u)))
    total = math.fsum(quad(rate, lo, hi) for lo, hi in zip(knots[:-1], knots[1:]))
    return math.exp(-total)


# --------------------------------------------------------------------------- #
# Value surface below the diagonal
# --------------------------------------------------------------------------- #

def value_surface(x: float, s: float, problem: Problem, level: Optional[LevelOptimum] = None) -> float:
    """V_bar(x, s) for x <= s under the optimal depth l*(s).

    Continuation band [s - l*, s]: potential plus the discounted diagonal value
    plus the creeping and jump exits of the current excursion. Stop band
    [s - b, s - l*): g(x). Below s - b: -k(x).
    """
    if x > s:
        raise DomainError(f"value surface needs x <= s, got x={x!r}, s={s!r}")
    bundle, sf, b = problem.bundle, problem.sf, problem.b
    if x < s - b:
        return 0.0 - float(bundle.k(x))
    if level is None or level.s != s:
        level = optimize_level(s, problem)
    l = level.l_star
    if x < s - l:
        return float(bundle.g(x))
    if l == 0.0:
        # x == s: stop at once
        return float(bundle.f_bar(s)) + level.value
    u = l + x - s
    wl, w1l = w(sf, l), w_prime(sf, l)
    wu, w1u = w(sf, u), w_prime(sf, u)
    sig = problem.model.sigma
    val = float(bundle.f_bar(x)) + wu / wl * level.value
    val += 0.5 * sig * sig * float(bundle.net_reward(s - l)) * (w1u - w1l / wl * wu)
    if problem.model.jumps is not None:
        a, rho = problem.model.jumps.a, problem.model.jumps.rho
        kern = wu / wl * float(sf.int_w_exp(l, rho)) - math.exp(rho * (s - x)) * float(sf.int_w_exp(u, rho))
        weight = float(_stop_band_weight(problem, s, l)) - float(_ruin_weight(problem, s))
        val += a * rho * weight * kern
    return val


# --------------------------------------------------------------------------- #
# Verification-lemma diagnostic
# --------------------------------------------------------------------------- #

@dataclass
class QVIReport:
    s: float
    K: float
    z_star: float
    passed: dict[str, bool]
    margins: dict[str, float]
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def verify_qvi(s: float, problem: Problem, K: Optional[float] = None, z_star: Optional[float] = None,
               n_grid: int = 201, h: float = 1e-5, tol: float = 1e-4) -> QVIReport:
    """Check the verification-lemma conditions for the candidate w = V_bar - f_bar.

    Conditions (reported, never raised):
      i   w(s) = K
      ii  (A - q) w = 0 and w > g - f_bar on (z*, s)
      iii (A - q) w < 0 and w = g - f_bar on [s - b, z*]
      iv  w = -(k + f_bar) below s - b
    The generator uses central differences of step h for w', w'' and adaptive
    quadrature for the jump part, with w extended by -(k + f_bar) below s - b.
    """
    level = optimize_level(s, problem)
    if K is None:
        K = level.value
    if z_star is None:
        z_star = s - level.l_star
    bundle, b = problem.bundle, problem.b
    model, q = problem.model, problem.q
    level_k = LevelOptimum(s=level.s, l_star=s - z_star, value=K)

    def wfun(x: float) -> float:
        if x > s:
            raise DomainError("candidate is only defined for x <= s")
        return value_surface(x, s, problem, level_k) - float(bundle.f_bar(x))

    def generator(x: float) -> float:
        w0, wp, wm = wfun(x), wfun(x + h), wfun(x - h)
        d1 = (wp - wm) / (2 * h)
        d2 = (wp - 2 * w0 + wm) / (h * h)
        val = model.mu * d1 + 0.5 * model.sigma ** 2 * d2 - q * w0
        if model.jumps is not None:
            dens = lambda y: model.jumps.a * model.jumps.rho * math.exp(model.jumps.rho * y)
            jump_fn = lambda y: dens(y) * (wfun(x + y) - w0)
            breaks = sorted({min(0.0, z_star - x), min(0.0, s - b - x)})
            pieces = [(-math.inf, breaks[0])] + list(zip(breaks, breaks[1:] + [0.0]))
            for lo, hi in pieces:
                if hi > lo:
                    val += integrate.quad(jump_fn, lo, hi, epsabs=1e-10, epsrel=1e-8, limit=200)[0]
        return val

    passed, margins, notes = {}, {}, {}
    passed["i"] = abs(wfun(s) - K) <= 1e-12 * max(1.0, abs(K))
    margins["i"] = abs(wfun(s) - K)

    gap = 4 * h
    xs = np.linspace(z_star + gap, s - gap, n_grid) if s - z_star > 2 * gap else np.array([])
    worst_res, worst_dom = 0.0, math.inf
    for x in xs:
        wx = wfun(x)
        res = abs(generator(x)) / max(1.0, abs(wx))
        worst_res = max(worst_res, res)
        worst_dom = min(worst_dom, wx - float(bundle.net_reward(x)))
    passed["ii_generator"] = worst_res <= tol
    passed["ii_dominates"] = bool(worst_dom > 0) if xs.size else True
    margins["ii_generator"] = worst_res
    margins["ii_dominates"] = worst_dom if xs.size else math.nan
    if not xs.size:
        notes["ii"] = "continuation region is empty"

    lo = s - b
    xs3 = np.linspace(lo + gap, z_star - gap, n_grid) if z_star - lo > 2 * gap else np.array([])
    worst_gen, worst_eq = -math.inf, 0.0
    for x in xs3:
        worst_gen = max(worst_gen, generator(x))
        worst_eq = max(worst_eq, abs(wfun(x) - float(bundle.net_reward(x))))
    passed["iii_generator"] = bool(worst_gen < 0) if xs3.size else True
    passed["iii_equality"] = worst_eq <= 1e-9 * max(1.0, abs(K))
    margins["iii_generator"] = worst_gen if xs3.size else math.nan
    margins["iii_equality"] = worst_eq
    if not xs3.size:
        notes["iii"] = "stopping band is degenerate (z* = s - b)"

    xs4 = np.linspace(lo - 2.0, lo - 1e-9, 25)
    worst4 = max(abs(wfun(x) + float(bundle.net_penalty(x))) for x in xs4)
    passed["iv"] = worst4 <= 1e-12 * max(1.0, max(abs(float(bundle.net_penalty(x))) for x in xs4))
    margins["iv"] = worst4
    return QVIReport(s=s, K=K, z_star=z_star, passed=passed, margins=margins, notes=notes)
