"""Command-line front end: solve, tabulate and cross-check the stopping problem.

Examples
--------
    trailstop solve --preset jump --out run/
    trailstop simulate --config run.json --seed 7 --threads 4
    trailstop scale-check --preset brownian --out run/
    trailstop solve --preset jump --dump-config > run.json
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, RunConfig
from .errors import TrailStopError
from .montecarlo import estimate_value, richardson_bias
from .scale import laplace_transform_check, laplace_transform_numeric, w, w_prime
from .solver import (LevelOptimum, SolveResult, integral_value, optimize_level, solve_curve,
                     value_surface)

log = logging.getLogger("trailstop")

LT_OFFSETS = (0.5, 1.0, 3.0)


# --------------------------------------------------------------------------- #
# Output helpers
# --------------------------------------------------------------------------- #

def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _gnuplot_lstar(out: Path, turning: list[float]) -> None:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 's'",
        "set ylabel 'l*(s)'",
        "set yrange [-0.05:*]",
    ]
    for s in turning:
        lines.append(f"set arrow from {s},graph 0 to {s},graph 1 nohead dashtype 2")
    lines.append("plot 'lstar.csv' using 1:2 with lines lw 2 title 'l*(s)'")
    (out / "lstar.gp").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _gnuplot_surface(out: Path) -> None:
    lines = [
        "set datafile separator ','",
        "set xlabel 'x'",
        "set ylabel 's'",
        "set key outside",
        "plot 'surface.csv' using 1:(strcol(4) eq 'continue' ? $2 : 1/0) with points pt 7 ps 0.4 title 'continue', \\",
        "     'surface.csv' using 1:(strcol(4) eq 'stop' ? $2 : 1/0) with points pt 7 ps 0.4 title 'stop', \\",
        "     'surface.csv' using 1:(strcol(4) eq 'ruined' ? $2 : 1/0) with points pt 7 ps 0.4 title 'ruined'",
    ]
    (out / "surface.gp").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _solve(cfg: RunConfig, threads: int) -> SolveResult:
    sp = cfg.solve
    return solve_curve(sp.s_min, sp.s_max, sp.n_grid, cfg.problem(), n_z=sp.z_grid, workers=threads)


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #

def cmd_solve(cfg: RunConfig, out: Path, threads: int = 1) -> SolveResult:
    res = _solve(cfg, threads)
    _write_csv(out / "lstar.csv", ["s", "l_star", "v_diag"],
               zip(res.grid_s, res.grid_l, res.v_diag))
    _write_json(out / "turning_points.json",
                {"turning_points": res.turning_points, "kinds": res.turning_kinds})
    _gnuplot_lstar(out, res.turning_points)
    return res


def cmd_surface(cfg: RunConfig, out: Path, threads: int = 1) -> list[tuple]:
    problem = cfg.problem()
    sp = cfg.surface
    b = problem.b
    rows = []
    for s in np.linspace(sp.s_min, sp.s_max, sp.n_s):
        s = float(s)
        level = optimize_level(s, problem, n_z=cfg.solve.z_grid)
        for x in np.linspace(s - sp.depth, s, sp.n_x):
            x = float(x)
            if x < s - b:
                region = "ruined"
            elif x < s - level.l_star:
                region = "stop"
            else:
                region = "continue"
            rows.append((x, s, value_surface(x, s, problem, level), region))
    _write_csv(out / "surface.csv", ["x", "s", "v_bar", "region"], rows)
    _gnuplot_surface(out)
    return rows


def cmd_simulate(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    problem = cfg.problem()
    res = _solve(cfg, threads)
    curve = res.curve
    probes = []
    for x, s in cfg.probes:
        level = optimize_level(s, problem, n_z=cfg.solve.z_grid)
        closed = value_surface(x, s, problem, level)
        # same surface with the diagonal taken from the excursion integral
        diag_int = integral_value(s, curve, problem, m_max=float(curve.s_grid[-1]))
        closed_int = value_surface(x, s, problem, LevelOptimum(s, level.l_star, diag_int))
        est = estimate_value(problem.model, problem.bundle, curve, problem.b, x, s, cfg.sim, problem.q,
                             workers=threads)
        if est.se == 0.0:
            bias = 0.0
        else:
            bias = richardson_bias(problem.model, problem.bundle, curve, problem.b, x, s, cfg.sim, problem.q,
                                   n_paths=min(cfg.bias_paths, cfg.sim.n_paths), workers=threads).bound
        allowance = 3.0 * est.se + bias
        probes.append({
            "x": x,
            "s": s,
            "closed_form": closed,
            "closed_form_integral_diag": closed_int,
            "mc": est.to_dict(),
            "bias_bound": bias,
            "allowance": allowance,
            "pass": bool(abs(closed - est.mean) <= allowance),
            "pass_integral_diag": bool(abs(closed_int - est.mean) <= allowance),
        })
    report = {"sim": cfg.sim.to_dict(), "probes": probes, "all_pass": all(p["pass"] for p in probes)}
    _write_json(out / "mc_report.json", report)
    return report


def cmd_regimes(cfg: RunConfig, out: Path, threads: int = 1) -> list[dict]:
    res = _solve(cfg, threads)
    b = cfg.ruin_distance
    tol = 1e-9 * b

    def label(l):
        if l >= b - tol:
            return "full_depth"
        if l <= tol:
            return "stop_now"
        return "interior"

    regimes = []
    for s, l in zip(res.grid_s, res.grid_l):
        kind = label(l)
        if regimes and regimes[-1]["regime"] == kind:
            regimes[-1]["s_hi"] = float(s)
        else:
            regimes.append({"regime": kind, "s_lo": float(s), "s_hi": float(s)})
    _write_json(out / "regimes.json", {"regimes": regimes, "turning_points": res.turning_points,
                                       "kinds": res.turning_kinds})
    return regimes


def cmd_scale_check(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    problem = cfg.problem()
    sf, model = problem.sf, problem.model
    lt = []
    for off in LT_OFFSETS:
        beta = sf.phi_q + off
        num = laplace_transform_numeric(sf, beta)
        exact = laplace_transform_check(model, sf, beta)
        lt.append({"beta": beta, "numeric": num, "exact": exact, "rel_err": abs(num - exact) / abs(exact)})
    w1_0 = w_prime(sf, 0.0)
    report = {
        "roots": list(sf.thetas),
        "phi_q": sf.phi_q,
        "W(0)": w(sf, 0.0),
        "W'(0+)": w1_0,
        "W'(0+)_rel_err": abs(w1_0 * model.sigma ** 2 / 2 - 1.0),
        "laplace_transform": lt,
    }
    _write_json(out / "scale_check.json", report)
    return report


COMMANDS = {
    "solve": cmd_solve,
    "surface": cmd_surface,
    "simulate": cmd_simulate,
    "regimes": cmd_regimes,
    "scale-check": cmd_scale_check,
}


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="JSON run configuration")
    src.add_argument("--preset", choices=sorted(PRESETS), default="jump",
                     help="built-in parameter set used when --config is absent (default: jump)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=int, help="override the simulation seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes for solves and simulation")
    common.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration as JSON and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trailstop",
                                     description="Optimal stopping with a ruin line trailing the running maximum.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "optimal depth curve l*(s), V(s,s) and turning points",
        "surface": "value surface V(x,s) with region labels",
        "simulate": "Monte Carlo cross-check at the configured probes",
        "regimes": "intervals where l* is b, interior or 0",
        "scale-check": "scale-function identities",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict(PRESETS[args.preset])
    return cfg.with_overrides(seed=args.seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.dump_config:
            sys.stdout.write(cfg.dumps() + "\n")
            return 0
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args.out, args.threads)
    except (TrailStopError, ValueError, KeyError, OSError) as exc:
        print(f"trailstop {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
