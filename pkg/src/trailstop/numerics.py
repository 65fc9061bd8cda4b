"""Bounded golden-section maximisation and a tolerance-checked quadrature."""

from __future__ import annotations

import math
import warnings
from typing import Callable

from scipy import integrate

from .errors import QuadratureError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8


def golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8, max_iter: int = 200):
    """Maximise a unimodal ``f`` on [lo, hi] to an interval width <= tol.

    The endpoints are candidates too, so a monotone ``f`` returns the
    better endpoint. Returns ``(x, f(x))``.
    """
    a, b = lo, hi
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
    x, fx = (x1, f1) if f1 >= f2 else (x2, f2)
    for edge in (lo, hi):
        fe = f(edge)
        if fe > fx:
            x, fx = edge, fe
    return x, fx


def quad(f: Callable[[float], float], a: float, b: float, epsabs: float = QUAD_EPSABS,
         epsrel: float = QUAD_EPSREL, limit: int = 200) -> float:
    """Adaptive quadrature that raises instead of silently under-converging."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    if caught:
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {caught[0].message}", err)
    if err > max(epsabs, epsrel * abs(val)) * 10:
        raise QuadratureError(f"quadrature on [{a}, {b}] missed tolerance", err)
    return val
