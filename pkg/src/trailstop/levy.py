"""Spectrally negative Lévy models and the real roots of psi(lambda) = q.

A model is a Brownian motion with drift plus an optional compound Poisson
stream of downward jumps. The Laplace exponent is

    psi(lambda) = mu*lambda + sigma**2 * lambda**2 / 2 + jump_term(lambda)

where, for exponentially distributed jump sizes with rate ``rho`` arriving at
intensity ``a``, ``jump_term(lambda) = -a*lambda / (rho + lambda)``.

The jump transform is rational, so ``psi(lambda) - q`` has the same real
roots as a polynomial of low degree. Roots are seeded from that polynomial
and polished with safeguarded Newton steps on ``psi - q`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateRootsError, ModelError, PoleError

__all__ = [
    "ExpJumps",
    "LevyModel",
    "RootSet",
    "laplace_exponent",
    "laplace_exponent_deriv",
    "solve_roots",
    "check_potential_condition",
]

ROOT_GAP_MIN = 1e-8
NEWTON_MAX_STEPS = 20


@dataclass(frozen=True)
class ExpJumps:
    """Downward jumps of size Exp(rho) arriving at Poisson rate ``a``.

    A jump moves the process by ``-xi`` with ``xi ~ Exp(rho)``, so the Lévy
    measure on the negative half-line is ``a * rho * exp(rho*h) dh``.
    """

    a: float
    rho: float

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ModelError(f"jump rate a must be positive, got {self.a!r}")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ModelError(f"jump size parameter rho must be positive, got {self.rho!r}")

    @property
    def pole(self) -> float:
        return -self.rho

    @property
    def mean_size(self) -> float:
        return 1.0 / self.rho

    def transform(self, lam: float, order: int = 0) -> float:
        """Jump part of psi and its first two derivatives."""
        d = self.rho + lam
        if d == 0.0:
            raise PoleError(f"psi has a pole at lambda = -rho = {-self.rho!r}")
        if order == 0:
            return -self.a * lam / d
        if order == 1:
            return -self.a * self.rho / (d * d)
        if order == 2:
            return 2.0 * self.a * self.rho / (d * d * d)
        raise ValueError(f"unsupported derivative order {order!r}")

    def rational_parts(self) -> tuple[np.poly1d, np.poly1d]:
        """Numerator and denominator of the jump transform as polynomials."""
        return np.poly1d([-self.a, 0.0]), np.poly1d([1.0, self.rho])

    def density(self, h):
        """Lévy density at jump size ``h`` (zero for h >= 0)."""
        h = np.asarray(h, dtype=float)
        return np.where(h < 0, self.a * self.rho * np.exp(self.rho * np.minimum(h, 0.0)), 0.0)


@dataclass(frozen=True)
class LevyModel:
    """Drift ``mu``, Gaussian volatility ``sigma`` and optional jumps."""

    mu: float
    sigma: float
    jumps: Optional[ExpJumps] = None

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ModelError(f"drift must be finite, got {self.mu!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ModelError(
                f"sigma must be positive (bounded-variation models are not supported), got {self.sigma!r}"
            )

    @property
    def mean_drift(self) -> float:
        """psi'(0+), the mean increment per unit time."""
        return laplace_exponent_deriv(self, 0.0, 1)

    def psi(self, lam: float) -> float:
        return laplace_exponent(self, lam)

    def to_dict(self) -> dict:
        out = {"mu": self.mu, "sigma": self.sigma, "jumps": None}
        if self.jumps is not None:
            out["jumps"] = {"a": self.jumps.a, "rho": self.jumps.rho}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LevyModel":
        jumps = d.get("jumps")
        if jumps is not None:
            jumps = ExpJumps(a=float(jumps["a"]), rho=float(jumps["rho"]))
        return cls(mu=float(d["mu"]), sigma=float(d["sigma"]), jumps=jumps)


@dataclass(frozen=True)
class RootSet:
    """Real roots of psi(lambda) = q in descending order."""

    q: float
    roots: tuple[float, ...]
    psi_prime_at_roots: tuple[float, ...] = field(repr=False)

    @property
    def phi_q(self) -> float:
        return self.roots[0]


def laplace_exponent(model: LevyModel, lam: float) -> float:
    s2 = model.sigma * model.sigma
    val = model.mu * lam + 0.5 * s2 * lam * lam
    if model.jumps is not None:
        val += model.jumps.transform(lam)
    return val


def laplace_exponent_deriv(model: LevyModel, lam: float, order: int = 1) -> float:
    """Analytic first or second derivative of psi."""
    if order == 1:
        val = model.mu + model.sigma * model.sigma * lam
    elif order == 2:
        val = model.sigma * model.sigma
    else:
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    if model.jumps is not None:
        val += model.jumps.transform(lam, order)
    return val


def _characteristic_polynomial(model: LevyModel, q: float) -> np.poly1d:
    # psi(lambda) - q with the jump denominator cleared
    gauss = np.poly1d([0.5 * model.sigma ** 2, model.mu, -q])
    if model.jumps is None:
        return gauss
    num, den = model.jumps.rational_parts()
    return gauss * den + num


def _polish(model: LevyModel, q: float, x: float, lo: float, hi: float) -> float:
    """Newton on psi - q, falling back to bisection inside [lo, hi]."""
    f = lambda t: laplace_exponent(model, t) - q
    flo, fhi = f(lo), f(hi)
    bracketed = math.isfinite(flo) and math.isfinite(fhi) and flo * fhi < 0
    for _ in range(NEWTON_MAX_STEPS):
        fx = f(x)
        if fx == 0.0:
            return x
        if bracketed:
            if (fx < 0) == (flo < 0):
                lo, flo = x, fx
            else:
                hi, fhi = x, fx
        step = fx / laplace_exponent_deriv(model, x, 1)
        # converged: a rounding-level step may sit on the bracket edge
        if abs(step) <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            return x
        x_new = x - step
        if bracketed and not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        x = x_new
    return x


def solve_roots(model: LevyModel, q: float) -> RootSet:
    """All real roots of psi(lambda) = q, largest (= Phi(q)) first.

    Raises
    ------
    ModelError
        If q < 0, or q == 0 while the process does not drift upwards.
    DegenerateRootsError
        If the roots are not real and pairwise separated by ROOT_GAP_MIN.
    """
    if not (q >= 0 and math.isfinite(q)):
        raise ModelError(f"discount rate must be >= 0, got {q!r}")
    if q == 0 and not model.mean_drift > 0:
        raise ModelError("q = 0 requires psi'(0+) > 0 (process drifting to +infinity)")

    poly = _characteristic_polynomial(model, q)
    raw = np.roots(poly.coeffs)
    scale = max(1.0, float(np.max(np.abs(raw))))
    if np.any(np.abs(raw.imag) > 1e-9 * scale):
        raise DegenerateRootsError(f"psi(lambda) = {q} has complex roots {raw!r}")
    seeds = np.sort(raw.real)[::-1]
    expected = 3 if model.jumps is not None else 2
    if seeds.size != expected:
        raise DegenerateRootsError(f"expected {expected} roots, found {seeds.size}")
    gaps = -np.diff(seeds)
    if np.any(gaps < ROOT_GAP_MIN):
        raise DegenerateRootsError(f"roots closer than {ROOT_GAP_MIN}: {seeds!r}")

    barriers = [np.inf]
    if model.jumps is not None:
        barriers.append(model.jumps.pole)
    barriers.append(-np.inf)
    polished = []
    for i, r in enumerate(seeds):
        lo = 0.5 * (r + seeds[i + 1]) if i + 1 < seeds.size else r - max(1.0, abs(r))
        hi = 0.5 * (r + seeds[i - 1]) if i > 0 else r + max(1.0, abs(r))
        # never let the bracket straddle the pole
        for p in barriers:
            if math.isfinite(p):
                if lo < p < r:
                    lo = 0.5 * (p + r)
                if r < p < hi:
                    hi = 0.5 * (p + r)
        polished.append(_polish(model, q, float(r), lo, hi))
    if q == 0:
        polished[0] = 0.0
    roots = tuple(polished)
    dpsi = tuple(laplace_exponent_deriv(model, r, 1) for r in roots)
    if not dpsi[0] > 0:
        raise DegenerateRootsError(f"psi'(Phi(q)) = {dpsi[0]} is not positive")
    return RootSet(q=float(q), roots=roots, psi_prime_at_roots=dpsi)


def check_potential_condition(model: LevyModel, q: float, gamma: float) -> bool:
    """True iff psi(gamma) < q, i.e. E int e^{-qt} e^{gamma X_t} dt is finite."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma!r}")
    return laplace_exponent(model, gamma) < q
