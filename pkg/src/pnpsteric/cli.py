"""Command line entry point.

Exit codes: 0 success, 1 configuration or validation error, 2 solver
failure, 3 invariant violation.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments
from .config import PRESETS, load_preset, parse_config, preset_names
from .errors import InvariantViolation, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("pnpsteric")


def _load(args):
    if getattr(args, "preset", None):
        return load_preset(args.preset)
    return parse_config(args.config)


def _add_source(p, allow_preset=True):
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="configuration file (TOML)")
    if allow_preset:
        group.add_argument("--preset", choices=preset_names(), help="registered preset")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnpsteric", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a configuration and write snapshots/timeseries")
    _add_source(p)
    p.add_argument("--vtk", action="store_true", help="also write legacy-VTK snapshots")

    p = sub.add_parser("decay", help="relative-entropy decay experiment (pure Neumann)")
    _add_source(p)

    p = sub.add_parser("wsu", help="coarse-vs-reference relative entropy probe")
    _add_source(p)
    p.add_argument("--refinements", type=int, default=3)

    sub.add_parser("selfcheck", help="run the invariant batteries")
    sub.add_parser("presets", help="list preset names")
    return parser


def _cmd_simulate(args):
    cfg = _load(args)
    res = experiments.simulate(cfg, out_dir=args.out, vtk=args.vtk)
    inv = res.summary["invariants"]
    print(f"{cfg.name}: {cfg.run.n_steps} steps to t = {res.final.time:.6g}, "
          f"mass drift {inv['max_relative_mass_drift']:.2e}, min u {inv['min_u']:.4g}")
    return EXIT_OK


def _cmd_decay(args):
    cfg = _load(args)
    report = experiments.decay(cfg, out_dir=args.out)
    if report["status"] == "already equilibrated":
        print("already equilibrated: nothing to fit")
    else:
        print(f"lambda_fit = {report['lambda_fit']:.6g} (r^2 = {report['r_squared']:.5f}), "
              f"lambda_theory = {report['lambda_theory']:.6g}, decay x{report['decay_factor']:.3g}")
    return EXIT_OK


def _cmd_wsu(args):
    cfg = _load(args)
    report = experiments.wsu(cfg, args.refinements, out_dir=args.out)
    for row in report["levels"]:
        print(f"nx = {row['nx']:4d}  dt = {row['dt']:.3e}  e = {row['e']:.6e}")
    print(f"final time {report['final_time']:.6g}")
    return EXIT_OK


def _cmd_selfcheck(args):
    from .selfcheck import run_selfcheck

    return EXIT_OK if run_selfcheck() else EXIT_INVARIANT


def _cmd_presets(args):
    for name in preset_names():
        print(f"{name}\t{PRESETS[name]['output']['dir']}")
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "decay": _cmd_decay,
    "wsu": _cmd_wsu,
    "selfcheck": _cmd_selfcheck,
    "presets": _cmd_presets,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
