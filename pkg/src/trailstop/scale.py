"""q-scale functions for models with a rational Laplace exponent.

When psi(lambda) - q has simple real roots theta_i, partial fractions give

    W(x) = sum_i exp(theta_i * x) / psi'(theta_i),    x >= 0,

and W(x) = 0 for x < 0. Everything in this module is an exact closed-form
evaluation of that mixture; no tables or Laplace inversion are involved.

``W`` is evaluated as ``sum_i c_i * expm1(theta_i * x)``. The dropped
constant ``sum_i c_i`` equals W(0) = 0 for every sigma > 0 model, and the
expm1 form keeps full relative accuracy near the origin where the raw mixture
cancels catastrophically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .numerics import quad
from .levy import LevyModel, RootSet, laplace_exponent, solve_roots

__all__ = [
    "ScaleFunction",
    "build_scale",
    "w",
    "w_prime",
    "w_second",
    "z_q",
    "tilted_w",
    "excursion_intensity",
    "exit_up",
    "exit_down_laplace",
    "laplace_transform_check",
    "laplace_transform_numeric",
]


@dataclass(frozen=True)
class ScaleFunction:
    """Exponential-mixture representation of W^(q).

    ``thetas`` are sorted ascending so the dominant (largest) exponent is
    summed last.
    """

    q: float
    thetas: tuple[float, ...]
    coefs: tuple[float, ...]
    phi_q: float
    sigma: float

    @property
    def terms(self) -> list[tuple[float, float]]:
        return list(zip(self.thetas, self.coefs))

    @property
    def psi_prime_phi(self) -> float:
        i = self.thetas.index(self.phi_q)
        return 1.0 / self.coefs[i]

    # Vectorised evaluators. x may be a scalar or ndarray; the x < 0 branch
    # of W is handled by callers that need it (see ``w``).

    def _stack(self, x, fn):
        x = np.asarray(x, dtype=float)
        th = np.asarray(self.thetas)[:, None]
        c = np.asarray(self.coefs)[:, None]
        vals = fn(th, c, x.reshape(1, -1))
        # sequential accumulation in ascending-exponent order
        acc = np.zeros(vals.shape[1])
        for row in vals:
            acc = acc + row
        return acc.reshape(x.shape)

    def w(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.maximum(x, 0.0)
        out = self._stack(pos, lambda th, c, xx: c * np.expm1(th * xx))
        return np.where(x < 0, 0.0, out)

    def w1(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self._stack(x, lambda th, c, xx: c * th * np.exp(th * xx))

    def w2(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self._stack(x, lambda th, c, xx: c * th * th * np.exp(th * xx))

    def int_w_exp(self, x, kappa: float):
        """int_0^x W(y) exp(kappa*y) dy for x >= 0."""
        def term(th, c, xx):
            k = th + kappa
            # c * [ (e^{k x} - 1)/k - (e^{kappa x} - 1)/kappa ]  (expm1 form of W)
            return c * (_expm1_over(k, xx) - _expm1_over(kappa + 0.0 * th, xx))
        return self._stack(np.maximum(np.asarray(x, dtype=float), 0.0), term)

    def int_w1_exp(self, x, kappa: float):
        """int_0^x W'(y) exp(kappa*y) dy for x >= 0."""
        return self._stack(
            np.maximum(np.asarray(x, dtype=float), 0.0),
            lambda th, c, xx: c * th * _expm1_over(th + kappa, xx),
        )


def _expm1_over(k, x):
    """(exp(k*x) - 1)/k with the k -> 0 limit x."""
    k = np.asarray(k, dtype=float)
    safe = np.where(k == 0.0, 1.0, k)
    return np.where(k == 0.0, x, np.expm1(k * x) / safe)


def build_scale(model: LevyModel, q: float, roots: RootSet | None = None) -> ScaleFunction:
    """Closed-form W^(q) for ``model``; propagates root-finder failures."""
    if roots is None:
        roots = solve_roots(model, q)
    order = np.argsort(roots.roots)
    thetas = tuple(float(roots.roots[i]) for i in order)
    coefs = tuple(1.0 / roots.psi_prime_at_roots[i] for i in order)
    return ScaleFunction(q=float(q), thetas=thetas, coefs=coefs, phi_q=roots.phi_q, sigma=model.sigma)


def w(sf: ScaleFunction, x: float) -> float:
    if x < 0:
        return 0.0
    return math.fsum(c * math.expm1(t * x) for t, c in zip(sf.thetas, sf.coefs))


def w_prime(sf: ScaleFunction, x: float) -> float:
    """Right derivative W'_+(x); at x = 0 this is 2/sigma**2."""
    if x < 0:
        return 0.0
    return math.fsum(c * t * math.exp(t * x) for t, c in zip(sf.thetas, sf.coefs))


def w_second(sf: ScaleFunction, x: float) -> float:
    if x < 0:
        return 0.0
    return math.fsum(c * t * t * math.exp(t * x) for t, c in zip(sf.thetas, sf.coefs))


def z_q(sf: ScaleFunction, x: float) -> float:
    """Z^(q)(x) = 1 + q * int_0^x W(y) dy."""
    if x <= 0 or sf.q == 0:
        return 1.0
    integral = math.fsum(
        c * (math.expm1(t * x) / t - x) if t != 0 else 0.0
        for t, c in zip(sf.thetas, sf.coefs)
    )
    return 1.0 + sf.q * integral


def tilted_w(sf: ScaleFunction, x: float) -> float:
    """W_Phi(q)(x) = exp(-Phi(q) x) W(x); increases to 1/psi'(Phi(q))."""
    if x < 0:
        raise DomainError(f"tilted scale function needs x >= 0, got {x!r}")
    # exp(-phi x) * sum c_i (e^{theta_i x} - 1), folded to avoid overflow
    return math.fsum(
        c * (math.exp((t - sf.phi_q) * x) - math.exp(-sf.phi_q * x))
        for t, c in zip(sf.thetas, sf.coefs)
    )


def excursion_intensity(sf: ScaleFunction, u: float) -> float:
    """W'_+(u)/W(u): discount-weighted rate of excursions higher than u."""
    if not u > 0:
        raise DomainError(f"excursion intensity needs u > 0, got {u!r}")
    return w_prime(sf, u) / w(sf, u)


def exit_up(sf: ScaleFunction, x: float, a_level: float) -> float:
    """E_x[exp(-q T_a); T_a < T_0^-] = W(x)/W(a)."""
    if not (0 < x <= a_level):
        raise DomainError(f"exit_up needs 0 < x <= a, got x={x!r}, a={a_level!r}")
    return w(sf, x) / w(sf, a_level)


def exit_down_laplace(sf: ScaleFunction, x: float) -> float:
    """E_x[exp(-q T_0^-)] = Z(x) - q/Phi(q) W(x)."""
    if not x > 0:
        raise DomainError(f"exit_down_laplace needs x > 0, got {x!r}")
    if sf.q == 0:
        raise DomainError("exit_down_laplace needs q > 0")
    return z_q(sf, x) - sf.q / sf.phi_q * w(sf, x)


def laplace_transform_check(model: LevyModel, sf: ScaleFunction, beta: float) -> float:
    """The exact value 1/(psi(beta) - q) that int e^{-beta x} W(x) dx must match."""
    return 1.0 / (laplace_exponent(model, beta) - sf.q)


def laplace_transform_numeric(sf: ScaleFunction, beta: float) -> float:
    """int_0^inf exp(-beta x) W(x) dx by adaptive quadrature; needs beta > Phi(q)."""
    if not beta > sf.phi_q:
        raise DomainError(f"transform of W needs beta > Phi(q) = {sf.phi_q!r}, got {beta!r}")
    integrand = lambda x: math.fsum(
        c * (math.exp((t - beta) * x) - math.exp(-beta * x)) for t, c in zip(sf.thetas, sf.coefs)
    )
    return quad(integrand, 0.0, math.inf, epsabs=1e-13, epsrel=1e-10)
