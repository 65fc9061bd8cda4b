"""Monte Carlo oracle for threshold strategies with a trailing ruin line.

Paths of X are simulated on a time grid of step ``dt``. The Gaussian part is
an Euler step, and the compound Poisson jumps happen at their exact
exponential arrival times. When a jump lands inside a step, the continuous
path is split there by a Brownian-bridge draw. The running maximum S and the
drawdown Y = S - X are updated at every grid point and at every jump.

A path ends at the first monitored instant with Y > l(S), or at once when it
sits at a new maximum with l(S) = 0. Ending with Y <= b, or by diffusion,
counts as stopping and credits g(X). A jump past the ruin line (Y > b) counts
as ruin and debits k(X).

Every path draws from two Philox streams keyed by (seed, path_index). One
stream feeds the Gaussian increments and the other feeds the jumps. Results
therefore do not depend on how paths are split across workers. The coarse
and fine runs behind the Richardson bias bound read the same Gaussian stream,
so their paths are coupled.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import DomainError, ModelError
from .levy import LevyModel
from .payoff import PayoffBundle
from .solver import StrategyCurve

__all__ = [
    "SimConfig",
    "PathOutcome",
    "ValueEstimate",
    "BiasEstimate",
    "simulate_path",
    "estimate_value",
    "estimate_discount",
    "richardson_bias",
]

STOP_KINDS = ("stopped", "ruined", "truncated", "reached")
_STOPPED, _RUINED, _TRUNCATED, _REACHED = range(4)
_GAUSS, _JUMP = 0, 1
_MASK64 = (1 << 64) - 1
REFINE = 4


@dataclass(frozen=True)
class SimConfig:
    """Time step, truncation horizon, path count, seed and antithetic flag."""

    dt: float = 1e-4
    horizon: float = 200.0
    n_paths: int = 10_000
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ModelError(f"dt must be positive, got {self.dt!r}")
        if not self.horizon > self.dt:
            raise ModelError(f"horizon must exceed dt, got {self.horizon!r}")
        if self.n_paths < 1:
            raise ModelError(f"n_paths must be >= 1, got {self.n_paths!r}")
        if self.antithetic and self.n_paths % 2:
            raise ModelError("antithetic sampling needs an even n_paths")

    def check_horizon(self, q: float) -> None:
        # discount tail below e^-20 keeps truncation bias out of the error bars
        if self.horizon * q < 20:
            raise ModelError(f"horizon*q = {self.horizon * q:.3g} < 20; lengthen the horizon")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(dt=float(d["dt"]), horizon=float(d["horizon"]), n_paths=int(d["n_paths"]),
                   seed=int(d["seed"]), antithetic=bool(d["antithetic"]))


@dataclass(frozen=True)
class PathOutcome:
    payoff: float
    stop_kind: str
    tau: float
    final_x: float
    final_s: float
    running: float
    terminal: float
    penalty: float


@dataclass
class ValueEstimate:
    mean: float
    se: float
    n: int
    dt: float
    stop_kinds: dict[str, int]
    running: float = 0.0
    terminal: float = 0.0
    penalty: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BiasEstimate:
    """Coupled estimates at dt and dt/REFINE; ``bound`` is their absolute gap."""

    coarse: float
    fine: float
    bound: float
    se_diff: float
    n: int


# --------------------------------------------------------------------------- #
# Random streams
# --------------------------------------------------------------------------- #

def _stream(seed: int, index: int, channel: int) -> np.random.Generator:
    key = (seed & _MASK64) | ((2 * index + channel) << 64)
    return np.random.Generator(np.random.Philox(key=key))


# --------------------------------------------------------------------------- #
# Path kernel
# --------------------------------------------------------------------------- #

@numba.njit(cache=True)
def _eval_terms(coefs, gammas, x):
    out = 0.0
    for i in range(coefs.size):
        out += coefs[i] * math.exp(gammas[i] * x)
    return out


@numba.njit(cache=True)
def _run_path(gauss, jumps, sign, nsub, x0, s0, dt, horizon, q, mu, sigma, a, rho,
              s_grid, l_vals, b, f_c, f_g, g_c, g_g, k_c, k_g, target):
    """One path; returns (kind, tau, x, s, running, terminal, penalty).

    ``nsub`` standard normals are summed per step so that a coarse path with
    nsub = REFINE reads the same numbers as a fine path with dt / REFINE.
    """
    x = x0
    s = s0
    t = 0.0
    lev = np.interp(s, s_grid, l_vals)
    running = 0.0
    if s >= target:
        return _REACHED, 0.0, x, s, 0.0, 0.0, 0.0
    if lev <= 0.0 or s - x > lev:
        return _STOPPED, 0.0, x, s, 0.0, _eval_terms(g_c, g_g, x), 0.0

    has_f = f_c.size > 0
    f_prev = _eval_terms(f_c, f_g, x) if has_f else 0.0
    disc_prev = 1.0
    t_jump_seen = False
    t_jump = t + jumps.exponential(1.0 / a) if a > 0.0 else math.inf
    gscale = sign * sigma * math.sqrt(dt / nsub)
    step_disc = math.exp(-q * dt)

    while t < horizon:
        dw = 0.0
        for _ in range(nsub):
            dw += gauss.standard_normal()
        t_end = t + dt
        x_end = x + mu * dt + gscale * dw
        # exact jump arrivals inside (t, t_end]
        while t_jump <= t_end:
            span = t_end - t
            w = (t_jump - t) / span
            xb = x + w * (x_end - x) + sigma * math.sqrt(w * (1.0 - w) * span) * jumps.standard_normal()
            disc = math.exp(-q * t_jump)
            if has_f:
                f_now = _eval_terms(f_c, f_g, xb)
                running += 0.5 * (disc_prev * f_prev + disc * f_now) * (t_jump - t)
            t = t_jump
            x = xb
            if x > s:
                s = x
                lev = np.interp(s, s_grid, l_vals)
                if s >= target:
                    return _REACHED, t, x, s, running, 0.0, 0.0
                if lev <= 0.0:
                    return _STOPPED, t, x, s, running, disc * _eval_terms(g_c, g_g, x), 0.0
            elif s - x > lev:
                return _STOPPED, t, x, s, running, disc * _eval_terms(g_c, g_g, x), 0.0
            size = jumps.exponential(1.0 / rho)
            x -= size
            x_end -= size
            if s - x > b:
                return _RUINED, t, x, s, running, 0.0, disc * _eval_terms(k_c, k_g, x)
            if s - x > lev:
                return _STOPPED, t, x, s, running, disc * _eval_terms(g_c, g_g, x), 0.0
            if has_f:
                f_prev = _eval_terms(f_c, f_g, x)
            disc_prev = disc
            t_jump_seen = True
            t_jump += jumps.exponential(1.0 / a)
        disc = disc_prev * math.exp(-q * (t_end - t)) if t_jump_seen else disc_prev * step_disc
        t_jump_seen = False
        if has_f:
            f_now = _eval_terms(f_c, f_g, x_end)
            running += 0.5 * (disc_prev * f_prev + disc * f_now) * (t_end - t)
            f_prev = f_now
        disc_prev = disc
        t = t_end
        x = x_end
        if x > s:
            s = x
            lev = np.interp(s, s_grid, l_vals)
            if s >= target:
                return _REACHED, t, x, s, running, 0.0, 0.0
            if lev <= 0.0:
                return _STOPPED, t, x, s, running, disc * _eval_terms(g_c, g_g, x), 0.0
        elif s - x > lev:
            # diffusive crossing; creeping onto the ruin line counts as a stop
            return _STOPPED, t, x, s, running, disc * _eval_terms(g_c, g_g, x), 0.0
    return _TRUNCATED, t, x, s, running, 0.0, 0.0


# --------------------------------------------------------------------------- #
# Python-side plumbing
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class _Job:
    """Picklable bundle of everything the kernel needs besides the streams."""

    model: LevyModel
    q: float
    s_grid: np.ndarray
    l_vals: np.ndarray
    b: float
    terms: tuple = field(repr=False)
    x0: float = 0.0
    s0: float = 0.0
    target: float = math.inf

    def kernel_args(self, dt: float, nsub: int):
        j = self.model.jumps
        a, rho = (j.a, j.rho) if j is not None else (0.0, 1.0)
        return (nsub, self.x0, self.s0, dt, None, self.q, self.model.mu, self.model.sigma, a, rho,
                self.s_grid, self.l_vals, self.b, *self.terms, self.target)


def _term_arrays(bundle: Optional[PayoffBundle]):
    out = []
    for role in ("f", "g", "k"):
        pay = getattr(bundle, role) if bundle is not None else None
        out.append(pay.coefs if pay is not None and pay.terms else np.zeros(0))
        out.append(pay.gammas if pay is not None and pay.terms else np.zeros(0))
    return tuple(out)


def _make_job(model, q, curve, b, x0, s0, bundle=None, target=math.inf) -> _Job:
    if b is None:
        b = curve.b
    if x0 > s0:
        raise DomainError(f"simulation needs x0 <= s0, got x0={x0!r}, s0={s0!r}")
    if s0 - x0 > b:
        raise DomainError(f"start point is already past the ruin line (s0 - x0 = {s0 - x0} > b = {b})")
    return _Job(model=model, q=float(q), s_grid=curve.s_grid, l_vals=curve.l_values, b=float(b),
                terms=_term_arrays(bundle), x0=float(x0), s0=float(s0), target=float(target))


def _path(job: _Job, cfg: SimConfig, index: int, dt: float, nsub: int):
    key, sign = (index // 2, -1.0 if index % 2 else 1.0) if cfg.antithetic else (index, 1.0)
    gauss = _stream(cfg.seed, key, _GAUSS)
    jumps = _stream(cfg.seed, key, _JUMP)
    args = list(job.kernel_args(dt, nsub))
    args[4] = cfg.horizon
    return _run_path(gauss, jumps, sign, *args)


def _run_block(args):
    job, cfg, lo, hi, coupled = args
    n = hi - lo
    kinds = np.empty(n, dtype=np.int64)
    cols = np.empty((n, 3))
    fine = np.empty(n) if coupled else None
    for i in range(n):
        res = _path(job, cfg, lo + i, cfg.dt, REFINE if coupled else 1)
        kinds[i] = res[0]
        cols[i] = res[4:7]
        if coupled:
            res_f = _path(job, cfg, lo + i, cfg.dt / REFINE, 1)
            fine[i] = _total(job, res_f)
    return kinds, cols, fine


def _total(job: _Job, res) -> float:
    kind, tau = res[0], res[1]
    if job.target < math.inf:
        return math.exp(-job.q * tau) if kind == _REACHED else 0.0
    return res[4] + res[5] - res[6]


def _run_all(job: _Job, cfg: SimConfig, n: int, workers: int, coupled: bool = False):
    if workers <= 1:
        return _run_block((job, cfg, 0, n, coupled))
    edges = np.linspace(0, n, workers + 1).astype(int)
    if cfg.antithetic:
        edges = 2 * (edges // 2)
    blocks = [(job, cfg, int(lo), int(hi), coupled) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_block, blocks))
    kinds = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    fine = np.concatenate([p[2] for p in parts]) if coupled else None
    return kinds, cols, fine


def _mean_se(samples: np.ndarray, antithetic: bool) -> tuple[float, float]:
    if antithetic:
        samples = 0.5 * (samples[0::2] + samples[1::2])
    n = samples.size
    if n > 1 and np.all(samples == samples[0]):
        # np.mean can round a constant sample, so report it exactly
        return float(samples[0]), 0.0
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return mean, se


# --------------------------------------------------------------------------- #
# Public API
# --------------------------------------------------------------------------- #

def simulate_path(model: LevyModel, bundle: PayoffBundle, curve: StrategyCurve, b: Optional[float],
                  x0: float, s0: float, cfg: SimConfig, path_index: int, q: float) -> PathOutcome:
    """Run path ``path_index`` of the stream family fixed by ``cfg.seed``."""
    cfg.check_horizon(q)
    job = _make_job(model, q, curve, b, x0, s0, bundle)
    kind, tau, x, s, running, terminal, penalty = _path(job, cfg, path_index, cfg.dt, 1)
    return PathOutcome(payoff=running + terminal - penalty, stop_kind=STOP_KINDS[kind], tau=tau,
                       final_x=x, final_s=s, running=running, terminal=terminal, penalty=penalty)


def estimate_value(model: LevyModel, bundle: PayoffBundle, curve: StrategyCurve, b: Optional[float],
                   x0: float, s0: float, cfg: SimConfig, q: float, workers: int = 1) -> ValueEstimate:
    """Sample mean and standard error of the realised discounted payoff.

    Paths are identified by index, so the estimate is bit-identical for any
    ``workers``. With ``cfg.antithetic`` paths 2i and 2i+1 share streams,
    with the Gaussian increments negated in the second, and the standard
    error is computed from pair averages.
    """
    if cfg.n_paths < 100:
        raise ModelError(f"estimate_value needs n_paths >= 100, got {cfg.n_paths}")
    cfg.check_horizon(q)
    job = _make_job(model, q, curve, b, x0, s0, bundle)
    kinds, cols, _ = _run_all(job, cfg, cfg.n_paths, workers)
    totals = cols[:, 0] + cols[:, 1] - cols[:, 2]
    mean, se = _mean_se(totals, cfg.antithetic)
    hist = Counter(STOP_KINDS[k] for k in kinds)
    return ValueEstimate(mean=mean, se=se, n=cfg.n_paths, dt=cfg.dt,
                         stop_kinds={k: hist.get(k, 0) for k in STOP_KINDS[:3]},
                         running=float(np.mean(cols[:, 0])), terminal=float(np.mean(cols[:, 1])),
                         penalty=float(np.mean(cols[:, 2])))


def estimate_discount(model: LevyModel, curve: StrategyCurve, s: float, m: float, cfg: SimConfig,
                      q: float, workers: int = 1) -> ValueEstimate:
    """MC estimate of E[exp(-q T_m); T_m < tau(l)] started from X_0 = S_0 = s."""
    if m < s:
        raise DomainError(f"estimate_discount needs m >= s, got s={s!r}, m={m!r}")
    cfg.check_horizon(q)
    job = _make_job(model, q, curve, curve.b, s, s, None, target=m)
    kinds, taus = _run_discount(job, cfg, cfg.n_paths, workers)
    samples = np.where(kinds == _REACHED, np.exp(-q * taus), 0.0)
    mean, se = _mean_se(samples, cfg.antithetic)
    if m == s:
        se = 0.0
    hist = Counter(STOP_KINDS[k] for k in kinds)
    return ValueEstimate(mean=mean, se=se, n=cfg.n_paths, dt=cfg.dt, stop_kinds=dict(hist))


def _discount_block(args):
    job, cfg, lo, hi, dt, nsub = args
    kinds = np.empty(hi - lo, dtype=np.int64)
    taus = np.empty(hi - lo)
    for i in range(hi - lo):
        res = _path(job, cfg, lo + i, dt, nsub)
        kinds[i], taus[i] = res[0], res[1]
    return kinds, taus


def _run_discount(job, cfg, n, workers, dt=None, nsub=1):
    dt = cfg.dt if dt is None else dt
    if workers <= 1:
        return _discount_block((job, cfg, 0, n, dt, nsub))
    edges = np.linspace(0, n, workers + 1).astype(int)
    if cfg.antithetic:
        edges = 2 * (edges // 2)
    blocks = [(job, cfg, int(lo), int(hi), dt, nsub) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_discount_block, blocks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def richardson_bias(model: LevyModel, bundle: Optional[PayoffBundle], curve: StrategyCurve,
                    b: Optional[float], x0: float, s0: float, cfg: SimConfig, q: float,
                    n_paths: Optional[int] = None, target: float = math.inf,
                    workers: int = 1) -> BiasEstimate:
    """Discretisation-bias bound |estimate(dt) - estimate(dt/REFINE)|.

    Each coarse path is paired with the fine path that reads the same
    Gaussian and jump streams, so the gap is estimated with far less noise
    than two independent runs would give. ``target`` switches to the
    discount functional E[exp(-q T_target); T_target < tau].
    """
    cfg.check_horizon(q)
    n = cfg.n_paths if n_paths is None else n_paths
    if cfg.antithetic:
        n += n % 2
    job = _make_job(model, q, curve, b, x0, s0, bundle, target=target)
    if target < math.inf:
        kc, tc = _run_discount(job, cfg, n, workers, cfg.dt, REFINE)
        kf, tf = _run_discount(job, cfg, n, workers, cfg.dt / REFINE, 1)
        coarse = np.where(kc == _REACHED, np.exp(-q * tc), 0.0)
        fine = np.where(kf == _REACHED, np.exp(-q * tf), 0.0)
    else:
        _, cols, fine = _run_all(job, cfg, n, workers, coupled=True)
        coarse = cols[:, 0] + cols[:, 1] - cols[:, 2]
    diff = coarse - fine
    mc, _ = _mean_se(coarse, cfg.antithetic)
    mf, _ = _mean_se(fine, cfg.antithetic)
    _, se_diff = _mean_se(diff, cfg.antithetic)
    return BiasEstimate(coarse=mc, fine=mf, bound=abs(mc - mf), se_diff=se_diff, n=n)
