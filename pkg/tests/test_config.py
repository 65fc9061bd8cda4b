from __future__ import annotations

import math

import pytest

from trailstop.config import PRESETS, RunConfig, SolveSpec, effective_boundary
from trailstop.errors import DomainError, ModelError


def test_effective_boundary_identity():
    for b in (0.1, 1.0, 3.0):
        assert effective_boundary(b, 1.0) == b


def test_effective_boundary_value():
    assert effective_boundary(1.0, 0.8) == pytest.approx(-math.log(1 - (1 - math.exp(-1)) / 0.8), rel=1e-14)
    assert effective_boundary(1.0, 0.8) == pytest.approx(1.5614, abs=1e-4)


def test_effective_boundary_grows_as_alpha_falls():
    vals = [effective_boundary(1.0, a) for a in (1.0, 0.9, 0.8, 0.7)]
    assert vals == sorted(vals)


@pytest.mark.parametrize("alpha", [1 - math.exp(-1.0), 0.5, 0.0, -0.1, 1.2])
def test_effective_boundary_domain(alpha):
    with pytest.raises(DomainError):
        effective_boundary(1.0, alpha)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip(name):
    cfg = RunConfig.from_dict(PRESETS[name])
    assert RunConfig.loads(cfg.dumps()) == cfg
    assert RunConfig.loads(cfg.dumps()).dumps() == cfg.dumps()


def test_round_trip_with_alpha(tmp_path):
    cfg = RunConfig.from_dict({**PRESETS["jump"], "deleverage_alpha": 0.8})
    path = tmp_path / "run.json"
    path.write_text(cfg.dumps(), encoding="utf-8")
    again = RunConfig.load(path)
    assert again == cfg
    assert again.ruin_distance == pytest.approx(1.5614, abs=1e-4)
    assert again.problem().b == again.ruin_distance


def test_seed_override():
    cfg = RunConfig.from_dict(PRESETS["jump"])
    assert cfg.with_overrides(seed=None) is cfg
    assert cfg.with_overrides(seed=5).sim.seed == 5
    assert cfg.with_overrides(seed=5).solve == cfg.solve


def test_config_validation():
    with pytest.raises(ModelError):
        RunConfig.from_dict({**PRESETS["jump"], "payoff": {"h": []}})
    with pytest.raises(DomainError):
        RunConfig.from_dict({**PRESETS["jump"], "deleverage_alpha": 0.5})
    with pytest.raises(KeyError):
        RunConfig.from_dict({"q": 0.1, "b": 1.0})


def test_partial_sections_take_defaults():
    d = {k: v for k, v in PRESETS["brownian"].items() if k != "solve"}
    cfg = RunConfig.from_dict({**d, "sim": {"seed": 3}})
    assert cfg.solve == SolveSpec()
    assert cfg.sim.seed == 3
    assert cfg.sim.dt == 1e-4
