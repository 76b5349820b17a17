"""``charflow`` command line.

Subcommands::

    generate   flow a generating curve out into a mesh (OBJ + CSV)
    singular   characteristic points, their kinds and singular curves
    check      minimal-surface residuals on the generated mesh
    intersect  self-intersections (Heisenberg only)
    validate   frame / structural-constant consistency

Exit codes: 0 ok, 2 invalid configuration, 3 degenerate generating curve,
4 a check failed its tolerance (reports are still written).
"""

from __future__ import annotations

import argparse
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import export
from .expr import ExpressionError, compile_scalar
from .frame import get_structure, validate_structure
from .intersect import h1_self_intersections
from .lift import DEFAULT_STEP
from .presets import PRESETS, get_preset
from .singular import (GENERIC, ISOLATED, UNCLASSIFIED, LoopThroughSingular, SingularReport, assemble_curves,
                       classify_many, find_characteristic_points, winding_index)
from .surface import DegenerateGeneratingCurve, curve_from_expressions, residual_levelset, residual_parametric, solve_cauchy

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_TOL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    structure: str
    preset: str | None
    curve: str | None
    t_range: tuple
    s_range: tuple
    grid: tuple  # (t nodes, s nodes)
    step: float
    tol: float | None
    out: Path
    levelset: str | None = None
    seed: int = 0

    def to_dict(self):
        return {
            "command": self.command,
            "structure": self.structure,
            "preset": self.preset,
            "curve": self.curve,
            "t_range": list(self.t_range),
            "s_range": list(self.s_range),
            "grid": list(self.grid),
            "step": self.step,
            "tol": self.tol,
            "levelset": self.levelset,
            "seed": self.seed,
        }


def _range(text):
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    return a, b


def _grid(text):
    try:
        n, m = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from None
    return n, m


def build_parser():
    p = argparse.ArgumentParser(prog="charflow", description="Minimal surfaces in 3D contact sub-Riemannian manifolds by characteristics.")
    p.add_argument("--version", action="version", version=f"charflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("generate", "build the surface mesh"), ("singular", "characteristic points and singular curves"),
                        ("check", "minimality residuals"), ("intersect", "Heisenberg self-intersections"),
                        ("validate", "check the frame and structural constants")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--structure", help="builtin (heisenberg, e2) or definition file; default from the preset")
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--preset", choices=sorted(PRESETS))
        src.add_argument("--curve", help="'x0(s), y0(s), z0(s), phi(s)'")
        sp.add_argument("--t-range", type=_range)
        sp.add_argument("--s-range", type=_range)
        sp.add_argument("--grid", type=_grid, default=(41, 41), help="t nodes x s nodes (default 41x41)")
        sp.add_argument("--step", type=float, default=DEFAULT_STEP)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--out", type=Path, default=Path("charflow-out"))
        sp.add_argument("--seed", type=int, default=0, help="seed for sampled points (validate)")
        if name == "check":
            sp.add_argument("--levelset", help="F(x, y, z) whose zero set is the surface")
    return p


def make_config(args):
    preset = get_preset(args.preset) if args.preset else None
    if preset is None and args.command != "validate" and not args.curve:
        raise ConfigError("give --preset or --curve")
    structure = args.structure or (preset.structure if preset else "heisenberg")
    t_range = args.t_range or (preset.t_range if preset else (-1.0, 1.0))
    s_range = args.s_range or (preset.s_range if preset else (-1.0, 1.0))
    for name, (a, b) in (("t-range", t_range), ("s-range", s_range)):
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ConfigError(f"--{name} must satisfy a < b, got {a}:{b}")
    if min(args.grid) < 2:
        raise ConfigError("--grid dimensions must be at least 2")
    if not args.step > 0:
        raise ConfigError("--step must be positive")
    if args.tol is not None and not args.tol > 0:
        raise ConfigError("--tol must be positive")
    return RunConfig(args.command, structure, args.preset, args.curve, tuple(t_range), tuple(s_range),
                     tuple(args.grid), args.step, args.tol, args.out, getattr(args, "levelset", None), args.seed)


def _load(config):
    try:
        structure = get_structure(config.structure)
    except (OSError, ValueError, ExpressionError) as exc:
        raise ConfigError(f"structure {config.structure!r}: {exc}") from None
    if config.preset:
        curve = get_preset(config.preset).curve(structure)
        curve = type(curve)(structure, curve.position, config.s_range, curve.velocity, curve.name)
    elif config.curve:
        try:
            curve = curve_from_expressions(structure, config.curve, config.s_range)
        except ExpressionError as exc:
            raise ConfigError(str(exc)) from None
    else:
        curve = None
    return structure, curve


def _mesh(config, structure, curve):
    t = np.linspace(*config.t_range, config.grid[0])
    s = np.linspace(*config.s_range, config.grid[1])
    return solve_cauchy(structure, curve, t, s, config.step)


def cmd_generate(config):
    structure, curve = _load(config)
    mesh = _mesh(config, structure, curve)
    files = [export.write_mesh_obj(config.out / "mesh.obj", mesh), export.write_mesh_csv(config.out / "mesh.csv", mesh)]
    return EXIT_OK, files, {"nodes": list(mesh.shape)}


def cmd_singular(config):
    structure, curve = _load(config)
    mesh = _mesh(config, structure, curve)
    tol = config.tol if config.tol is not None else 1e-9
    found = find_characteristic_points(mesh, tol=tol)
    points = classify_many(structure, curve, [(p.s, p) for p in found], config.step, errors="mark")
    failures = [p for p in points if p.kind == UNCLASSIFIED]
    indices = []
    for p in points:
        if p.kind == ISOLATED:
            try:
                indices.append({"t": p.t, "s": p.s, "index": winding_index(structure, mesh, p)})
            except LoopThroughSingular as exc:
                indices.append({"t": p.t, "s": p.s, "index": None, "error": str(exc)})
    report = SingularReport(points, assemble_curves(points, mesh), indices)
    summary = {
        "char_points": len(points),
        "kinds": {k: sum(p.label == k for p in points) for k in sorted({p.label for p in points})},
        "curves": [c.kind for c in report.curves],
        "unclassified": len(failures),
    }
    files = [export.write_json(config.out / "singular.json", report.to_dict()),
             export.write_polylines_csv(config.out / "singular_curves.csv", report.curves)]
    code = EXIT_TOL if failures else EXIT_OK
    if any(p.kind == GENERIC for p in points):
        summary["generic_singular"] = [[p.t, p.s] for p in points if p.kind == GENERIC]
    return code, files, summary


def cmd_check(config):
    structure, curve = _load(config)
    mesh = _mesh(config, structure, curve)
    h = max(mesh.ht, mesh.hs)
    par = residual_parametric(structure, mesh)
    limit = config.tol if config.tol is not None else 10 * h**2
    out = {"parametric": {**par.to_dict(), "h": h, "limit": limit, "passed": par.max_abs < limit}}
    ok = par.max_abs < limit
    if config.levelset:
        try:
            f = compile_scalar(config.levelset, ["q1", "q2", "q3"], aliases={"x": "q1", "y": "q2", "z": "q3"})
        except ExpressionError as exc:
            raise ConfigError(str(exc)) from None
        F = lambda q: f(q[..., 0], q[..., 1], q[..., 2])  # noqa: E731
        pts = mesh.projected.reshape(-1, 3)
        lv = residual_levelset(structure, F, pts)
        on = float(np.max(np.abs(F(pts))))
        lv_limit = config.tol if config.tol is not None else 1e-4
        lv_ok = lv.max_abs < lv_limit and on < lv_limit
        out["levelset"] = {**lv.to_dict(), "expression": config.levelset, "max_abs_F_on_mesh": on,
                           "limit": lv_limit, "passed": lv_ok}
        ok &= lv_ok
    files = [export.write_json(config.out / "residual.json", out)]
    return (EXIT_OK if ok else EXIT_TOL), files, {"passed": bool(ok)}


def cmd_intersect(config):
    structure, curve = _load(config)
    if structure.closed_form != "H1":
        raise ConfigError("intersect needs the Heisenberg structure (straight characteristics)")
    tol = config.tol if config.tol is not None else 1e-8
    locus = h1_self_intersections(curve, grid_n=max(config.grid[1], 400), tol=tol, t_range=config.t_range)
    files = [export.write_json(config.out / "intersections.json", locus.to_dict()),
             export.write_locus_csv(config.out / "intersections.csv", locus)]
    return EXIT_OK, files, {"loci": locus.kinds()}


def cmd_validate(config):
    try:
        structure = get_structure(config.structure)
    except (OSError, ValueError, ExpressionError) as exc:
        raise ConfigError(f"structure {config.structure!r}: {exc}") from None
    rng = np.random.default_rng(config.seed)
    pts = rng.uniform(-2, 2, size=(100, 3))
    rep = validate_structure(structure, pts, tol=config.tol if config.tol is not None else 1e-6)
    files = [export.write_json(config.out / "validation.json", rep.to_dict())]
    return (EXIT_OK if rep.passed else EXIT_TOL), files, {"passed": rep.passed}


COMMANDS = {"generate": cmd_generate, "singular": cmd_singular, "check": cmd_check,
            "intersect": cmd_intersect, "validate": cmd_validate}


def _manifest(config, code, files, summary):
    return {
        "config": config.to_dict(),
        "exit_code": code,
        "summary": summary,
        "outputs": {f.name: export.sha256(f) for f in files},
        "versions": {"charflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = make_config(args)
        config.out.mkdir(parents=True, exist_ok=True)
        code, files, summary = COMMANDS[config.command](config)
    except ConfigError as exc:
        print(f"charflow: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateGeneratingCurve as exc:
        print(f"charflow: degenerate generating curve: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    export.write_json(config.out / "manifest.json", _manifest(config, code, files, summary))
    print(f"{config.command}: {summary} -> {config.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
