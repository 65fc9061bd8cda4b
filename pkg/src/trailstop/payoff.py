"""Exponential-family rewards and their closed-form q-potential."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError, PotentialDivergenceError
from .levy import LevyModel, laplace_exponent

__all__ = ["ExpPayoff", "PayoffBundle", "potential", "make_bundle", "net_reward", "net_penalty"]

ROLES = ("f", "g", "k", "f_bar")


@dataclass(frozen=True)
class ExpPayoff:
    """x -> sum_j coef_j * exp(gamma_j * x)."""

    terms: tuple[tuple[float, float], ...]
    role: str = "f"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ModelError(f"unknown payoff role {self.role!r}")
        object.__setattr__(self, "terms", tuple((float(c), float(g)) for c, g in self.terms))

    @classmethod
    def zero(cls, role: str) -> "ExpPayoff":
        return cls((), role)

    @property
    def coefs(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=float)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([g for _, g in self.terms], dtype=float)

    def __call__(self, x):
        if np.ndim(x) == 0:
            return math.fsum(c * math.exp(g * x) for c, g in self.terms)
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c, g in self.terms:
            out = out + c * np.exp(g * x)
        return out

    def scaled(self, factor: float) -> "ExpPayoff":
        return ExpPayoff(tuple((factor * c, g) for c, g in self.terms), self.role)

    def to_list(self) -> list[dict]:
        return [{"coef": c, "gamma": g} for c, g in self.terms]

    @classmethod
    def from_list(cls, items: Iterable[dict], role: str) -> "ExpPayoff":
        return cls(tuple((float(it["coef"]), float(it["gamma"])) for it in items), role)


def potential(f: ExpPayoff, model: LevyModel, q: float) -> ExpPayoff:
    """Closed-form q-potential E_x int_0^inf e^{-qt} f(X_t) dt.

    Each term coef*e^{gamma x} maps to coef*e^{gamma x}/(q - psi(gamma)),
    because E_x e^{gamma X_t} = e^{gamma x + t psi(gamma)}.
    """
    out = []
    for c, g in f.terms:
        if model.jumps is not None and g <= model.jumps.pole:
            # E e^{gamma X_t} is infinite below the pole of the jump transform
            raise PotentialDivergenceError(g, math.inf, q)
        pg = laplace_exponent(model, g)
        if not pg < q:
            raise PotentialDivergenceError(g, pg, q)
        out.append((c / (q - pg), g))
    return ExpPayoff(tuple(out), "f_bar")


@dataclass(frozen=True)
class PayoffBundle:
    """Running reward f, stopping reward g, ruin penalty k and f's potential."""

    f: ExpPayoff
    g: ExpPayoff
    k: ExpPayoff
    f_bar: ExpPayoff
    # (g - f_bar) and (k + f_bar) as merged term lists
    reward_terms: tuple[tuple[float, float], ...] = field(init=False, repr=False)
    penalty_terms: tuple[tuple[float, float], ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "reward_terms", _merge(self.g.terms, self.f_bar.scaled(-1.0).terms))
        object.__setattr__(self, "penalty_terms", _merge(self.k.terms, self.f_bar.terms))

    @property
    def f_bar_terms(self):
        return self.f_bar.terms

    def net_reward(self, x):
        return _eval(self.reward_terms, x)

    def net_penalty(self, x):
        return _eval(self.penalty_terms, x)

    def scaled(self, factor: float, model: LevyModel, q: float) -> "PayoffBundle":
        return make_bundle(model, q, self.f.scaled(factor), self.g.scaled(factor), self.k.scaled(factor))


def _merge(*term_lists: Sequence[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    acc: dict[float, float] = {}
    for terms in term_lists:
        for c, g in terms:
            acc[g] = acc.get(g, 0.0) + c
    return tuple((c, g) for g, c in sorted(acc.items()) if c != 0.0)


def _eval(terms, x):
    if np.ndim(x) == 0:
        return math.fsum(c * math.exp(g * x) for c, g in terms)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c, g in terms:
        out = out + c * np.exp(g * x)
    return out


def make_bundle(model: LevyModel, q: float, f: ExpPayoff, g: ExpPayoff, k: ExpPayoff) -> PayoffBundle:
    f = ExpPayoff(f.terms, "f")
    g = ExpPayoff(g.terms, "g")
    k = ExpPayoff(k.terms, "k")
    return PayoffBundle(f=f, g=g, k=k, f_bar=potential(f, model, q))


def net_reward(bundle: PayoffBundle, x):
    """(g - f_bar)(x), the reward net of the forfeited running income."""
    return bundle.net_reward(x)


def net_penalty(bundle: PayoffBundle, x):
    """(k + f_bar)(x)."""
    return bundle.net_penalty(x)
