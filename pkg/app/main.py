"""
Algebroid Field Engine command line
validate, derive, residual, simulate and preset management over JSON spec files
"""
import argparse
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.algebroid import sample_points, validate
from app.errors import EngineError, MissingFunctionError
from app.expr import index_symbol, to_string
from app.fields import (
    ANTISYMMETRIC_BLOCKS, integrate_1d, integrate_1d_hamiltonian, residual_report, residual_values, trajectory_current,
    trajectory_energy,
)
from app.hamiltonian import hamilton_symbolic, momentum_map
from app.jet import upper_pairs
from app.lagrangian import ModelSpec, lagrangian_system, noether_current
from app.presets import PRESETS, get_preset, list_presets
from app.storage import (
    export_model, fibration_from_file, load_field, load_model, load_spec_file, residual_columns, trajectory_columns,
    write_columns_csv,
)
from config.settings import settings

logger = logging.getLogger(__name__)

SIDES = {"el": ("lagrangian",), "hamilton": ("hamiltonian",), "both": ("lagrangian", "hamiltonian")}


# ==================== OUTPUT ====================

def _emit(args: argparse.Namespace, payload: Dict, lines: Sequence[str]) -> None:
    """JSON payload with --json, status lines otherwise"""
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        for line in lines:
            print(line)


def _mark(passed: bool) -> str:
    return "✅" if passed else "❌"


# ==================== DERIVATION ====================

def derived_blocks(model: ModelSpec, side: str) -> Dict[str, np.ndarray]:
    """Symbolic blocks of the requested side ('el', 'hamilton' or 'both')"""
    blocks: Dict[str, np.ndarray] = {}
    if "lagrangian" in SIDES[side]:
        if model.lagrangian is None:
            raise MissingFunctionError(f"Model '{model.name}' has no Lagrangian")
        blocks.update(lagrangian_system(model))
    if "hamiltonian" in SIDES[side]:
        if model.hamiltonian is None:
            raise MissingFunctionError(f"Model '{model.name}' has no Hamiltonian")
        blocks.update(hamilton_symbolic(model))
    return blocks


def format_blocks(blocks: Dict[str, np.ndarray], fmt: str = "text") -> List[str]:
    """One 'name[i][j] = expr' line per entry; antisymmetric blocks list b < c only"""
    lines = []
    symbol = index_symbol if fmt == "latex" else None
    for name, block in blocks.items():
        if name in ANTISYMMETRIC_BLOCKS:
            indices = [(g, b, c) for g in range(block.shape[0]) for b, c in upper_pairs(block.shape[1])]
        else:
            indices = list(np.ndindex(*block.shape))
        for idx in indices:
            label = name + "".join(f"[{j}]" for j in idx)
            lines.append(f"{label} = {to_string(block[idx], fmt, symbol)}")
    return lines


# ==================== COMMANDS ====================

def cmd_validate(args: argparse.Namespace) -> int:
    sf = load_spec_file(args.spec)
    spec = fibration_from_file(sf)
    tol = args.tol if args.tol is not None else (sf.tolerances.validate_tol or settings.validate_tol)
    sample = sample_points(spec, box=sf.sample_box, seed=args.seed)
    report = validate(spec, sample=sample, tol=tol)
    lines = [
        f"{_mark(report.passed)} {sf.name}: structure equations {'hold' if report.passed else 'fail'} "
        f"at {report.n_points} points (tol {report.tol:.1e})",
        f"  anchor residual:        {report.max_anchor_residual:.3e}",
        f"  jacobi residual:        {report.max_jacobi_residual:.3e}",
        f"  antisymmetry residual:  {report.max_antisymmetry_residual:.3e}",
    ]
    if report.worst_jacobi_index is not None and not report.passed:
        lines.append(f"  worst jacobi index:     {report.worst_jacobi_index}")
    _emit(args, report.model_dump(), lines)
    return 0 if report.passed else 1


def cmd_derive(args: argparse.Namespace) -> int:
    model = load_model(args.spec)
    lines = format_blocks(derived_blocks(model, args.side), args.format)
    if args.json:
        print(json.dumps(dict(line.split(" = ", 1) for line in lines), indent=2))
    else:
        for line in lines:
            print(line)
    return 0


def cmd_residual(args: argparse.Namespace) -> int:
    model = load_model(args.spec)
    field = load_field(args.field, model.spec)
    tol = settings.default_tol if args.tol is None else args.tol
    values = residual_values(model, field)
    report = residual_report(model, field, tol=tol, include_boundary=args.include_boundary or None, values=values)
    if args.csv:
        write_columns_csv(residual_columns(model.spec, field, values, report.include_boundary), args.csv)
    lines = [f"{_mark(report.passed)} {report.side} residuals over {report.n_nodes} nodes (tol {report.tol:.1e})"]
    lines += [f"  {_mark(b.passed)} {b.name:<16} max {b.max:.3e}  rms {b.rms:.3e}" for b in report.blocks]
    _emit(args, report.model_dump(), lines)
    return 0 if report.passed else 1


def _current_exprs(model: ModelSpec, side: str):
    if side == "lagrangian":
        return [(name, noether_current(model, sigma).scalar()) for name, sigma in model.currents]
    return [(name, momentum_map(model.spec, sigma)[0]) for name, sigma in model.currents]


def cmd_simulate(args: argparse.Namespace) -> int:
    model = load_model(args.spec)
    t_span = (args.t0, args.t0 + args.t)
    if args.side == "lagrangian":
        if model.lagrangian is None:
            raise MissingFunctionError(f"Model '{model.name}' has no Lagrangian")
        trajectory = integrate_1d(model, args.u0, args.y0, t_span, args.dt)
    else:
        if model.hamiltonian is None:
            raise MissingFunctionError(f"Model '{model.name}' has no Hamiltonian")
        trajectory = integrate_1d_hamiltonian(model, args.u0, args.mu0, t_span, args.dt)

    columns = trajectory_columns(model.spec, trajectory)
    energy = trajectory_energy(model, trajectory)
    scale = abs(energy[0]) if energy[0] != 0 else 1.0
    columns["energy"] = energy
    columns["energy_drift"] = np.abs(energy - energy[0]) / scale
    for name, current in _current_exprs(model, args.side):
        columns[name] = trajectory_current(model, trajectory, current)

    if args.out is None:
        write_columns_csv(columns, sys.stdout)
        return 0
    write_columns_csv(columns, args.out)
    summary = {
        "steps": len(trajectory.t) - 1,
        "t_end": float(trajectory.t[-1]),
        "max_energy_drift": float(np.max(columns["energy_drift"])),
        "out": args.out,
    }
    _emit(args, summary, [
        f"✅ {model.name}: {summary['steps']} steps to t={summary['t_end']:.6g}, wrote {args.out}",
        f"  max relative energy drift: {summary['max_energy_drift']:.3e}",
    ])
    return 0


def cmd_preset_list(args: argparse.Namespace) -> int:
    names = list_presets()
    if args.json:
        print(json.dumps(names))
        return 0
    for name in names:
        print(name)
    return 0


def cmd_preset_export(args: argparse.Namespace) -> int:
    preset = get_preset(args.name)
    export_model(preset.model, args.path)
    if not args.json:
        print(f"✅ Exported preset '{preset.name}' to {args.path}")
    return 0


# ==================== PARSER ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.main", description=settings.app_name)
    parser.add_argument("--tol", type=float, default=None, help=f"residual tolerance (default {settings.default_tol:g})")
    parser.add_argument("--seed", type=int, default=None, help="seed of the random sample points")
    parser.add_argument("--json", action="store_true", help="machine-readable reports")
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("validate", help="check anchor compatibility and Jacobi identities")
    p.add_argument("spec")
    p.set_defaults(handler=cmd_validate)

    p = commands.add_parser("derive", help="print the field equations")
    p.add_argument("spec")
    p.add_argument("--side", choices=sorted(SIDES), default="el")
    p.add_argument("--format", choices=("text", "latex"), default="text")
    p.set_defaults(handler=cmd_derive)

    p = commands.add_parser("residual", help="evaluate the field equations on a discretized field")
    p.add_argument("spec")
    p.add_argument("field")
    p.add_argument("--csv", default=None, help="write one row per node with its field values and residuals")
    p.add_argument("--include-boundary", action="store_true")
    p.set_defaults(handler=cmd_residual)

    p = commands.add_parser("simulate", help="integrate a mechanical system (nx <= 1, r = 1)")
    p.add_argument("spec")
    p.add_argument("--u0", type=float, nargs="*", default=[])
    p.add_argument("--y0", type=float, nargs="*", default=[])
    p.add_argument("--mu0", type=float, nargs="*", default=[])
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True, help="integration time")
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--side", choices=("lagrangian", "hamilton"), default="lagrangian")
    p.add_argument("--out", default=None, help="CSV output path (stdout when omitted)")
    p.set_defaults(handler=cmd_simulate)

    p = commands.add_parser("preset", help="built-in models")
    presets = p.add_subparsers(dest="preset_command", required=True)
    q = presets.add_parser("list")
    q.set_defaults(handler=cmd_preset_list)
    q = presets.add_parser("export")
    q.add_argument("name", choices=sorted(PRESETS))
    q.add_argument("path")
    q.set_defaults(handler=cmd_preset_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "simulate" and args.side == "hamilton":
        args.side = "hamiltonian"
    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level.upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except EngineError as e:
        print(f"❌ {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
