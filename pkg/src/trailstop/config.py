"""Run configuration: one JSON document describing model, payoffs and run sizes."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import DomainError, ModelError
from .levy import LevyModel
from .montecarlo import SimConfig
from .payoff import ExpPayoff, make_bundle
from .solver import Problem

__all__ = ["SolveSpec", "SurfaceSpec", "RunConfig", "effective_boundary", "PRESETS"]


def effective_boundary(b: float, alpha: float) -> float:
    """Ruin distance after a deleveraging step that keeps a fraction ``alpha``.

    Returns -log(1 - (1 - e^{-b}) / alpha); ``alpha = 1`` gives back ``b``.
    """
    if not (0 < alpha <= 1):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    ratio = -math.expm1(-b) / alpha
    if not ratio < 1:
        raise DomainError(f"no effective boundary: (1 - e^-b)/alpha = {ratio:.6g} >= 1")
    if alpha == 1:
        return float(b)
    return -math.log1p(-ratio)


@dataclass(frozen=True)
class SolveSpec:
    s_min: float = 3.8
    s_max: float = 5.6
    n_grid: int = 400
    z_grid: int = 512


@dataclass(frozen=True)
class SurfaceSpec:
    """Grid of (x, s): n_s levels in [s_min, s_max], n_x points in [s - depth, s]."""

    s_min: float = 4.0
    s_max: float = 5.5
    n_s: int = 31
    depth: float = 1.5
    n_x: int = 61


@dataclass(frozen=True)
class RunConfig:
    model: LevyModel
    q: float
    b: float
    payoff: dict[str, list[dict]]
    solve: SolveSpec = field(default_factory=SolveSpec)
    surface: SurfaceSpec = field(default_factory=SurfaceSpec)
    sim: SimConfig = field(default_factory=SimConfig)
    probes: tuple[tuple[float, float], ...] = ((5.0, 5.0),)
    bias_paths: int = 10_000
    deleverage_alpha: Optional[float] = None

    def __post_init__(self):
        for role in self.payoff:
            if role not in ("f", "g", "k"):
                raise ModelError(f"unknown payoff role {role!r}; expected f, g or k")
        if self.deleverage_alpha is not None:
            effective_boundary(self.b, self.deleverage_alpha)
        object.__setattr__(self, "probes", tuple((float(x), float(s)) for x, s in self.probes))

    @property
    def ruin_distance(self) -> float:
        if self.deleverage_alpha is None:
            return self.b
        return effective_boundary(self.b, self.deleverage_alpha)

    def payoff_fn(self, role: str) -> ExpPayoff:
        return ExpPayoff.from_list(self.payoff.get(role, []), role)

    def problem(self) -> Problem:
        bundle = make_bundle(self.model, self.q, self.payoff_fn("f"), self.payoff_fn("g"), self.payoff_fn("k"))
        return Problem.create(self.model, self.q, self.ruin_distance, bundle)

    def with_overrides(self, seed: Optional[int] = None) -> "RunConfig":
        if seed is None:
            return self
        return replace(self, sim=replace(self.sim, seed=int(seed)))

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "q": self.q,
            "b": self.b,
            "payoff": {role: [dict(t) for t in terms] for role, terms in self.payoff.items()},
            "solve": asdict(self.solve),
            "surface": asdict(self.surface),
            "sim": self.sim.to_dict(),
            "probes": [list(p) for p in self.probes],
            "bias_paths": self.bias_paths,
            "deleverage_alpha": self.deleverage_alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        payoff = {role: [{"coef": float(t["coef"]), "gamma": float(t["gamma"])} for t in terms]
                  for role, terms in d.get("payoff", {}).items()}
        alpha = d.get("deleverage_alpha")
        return cls(
            model=LevyModel.from_dict(d["model"]),
            q=float(d["q"]),
            b=float(d["b"]),
            payoff=payoff,
            solve=SolveSpec(**d.get("solve", {})),
            surface=SurfaceSpec(**d.get("surface", {})),
            sim=SimConfig.from_dict({**SimConfig().to_dict(), **d.get("sim", {})}),
            probes=tuple(tuple(p) for p in d.get("probes", [(5.0, 5.0)])),
            bias_paths=int(d.get("bias_paths", 10_000)),
            deleverage_alpha=None if alpha is None else float(alpha),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


_PAYOFF = {"f": [{"coef": 1.0, "gamma": 0.5}], "g": [{"coef": 1.0, "gamma": 1.0}], "k": []}

PRESETS = {
    "brownian": {
        "model": {"mu": 0.05, "sigma": 0.1, "jumps": None},
        "q": 0.1,
        "b": 1.0,
        "payoff": _PAYOFF,
        "solve": {"s_min": 4.5, "s_max": 6.0, "n_grid": 400, "z_grid": 512},
        "probes": [[5.0, 5.0]],
    },
    "jump": {
        "model": {"mu": 0.25, "sigma": 0.1, "jumps": {"a": 2.0, "rho": 10.0}},
        "q": 0.1,
        "b": 1.0,
        "payoff": _PAYOFF,
        "solve": {"s_min": 3.8, "s_max": 5.6, "n_grid": 400, "z_grid": 512},
        "probes": [[5.0, 5.0], [4.5, 5.0], [4.2, 4.2]],
    },
}
