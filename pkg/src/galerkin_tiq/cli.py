"""Command line entry point.

    galerkin-tiq run <config>
    galerkin-tiq import-check <matrix-file>
    galerkin-tiq preset list
    galerkin-tiq preset run <name> [--output DIR]

Exit codes: 0 ok, 1 config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as ex
from .matrixio import MatrixFileError, import_matrices


def _cmd_run(args) -> int:
    try:
        cfg = ex.load_config(args.config)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG
    return _execute(cfg, args.output)


def _execute(cfg, output) -> int:
    status = ex.run(cfg, output)
    where = output or cfg.output
    if status == ex.EXIT_OK:
        print(f"wrote results to {where}")
    else:
        print(f"run failed (exit {status}); see {where}/manifest.json", file=sys.stderr)
    return status


def _cmd_import_check(args) -> int:
    try:
        fm = import_matrices(args.path)
    except (MatrixFileError, OSError) as exc:
        print(f"invalid matrix file: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG
    print(f"ok: dim={fm.dim} perturbation={fm.a_hat is not None} "
          f"space_id={fm.space_id!r} mass_cond={fm.mass_condition():.3e}")
    return ex.EXIT_OK


def _cmd_preset(args) -> int:
    if args.action == "list":
        for name, d in ex.PRESETS.items():
            print(f"{name:24s} {d['problem']['kind']:18s} "
                  f"pairs={len(d['coarse_levels']) if d.get('pairing', 'paired') == 'paired' else len(d['coarse_levels']) * len(d['fine_levels'])}")
        return ex.EXIT_OK
    if not args.name:
        print("preset run needs a preset name", file=sys.stderr)
        return ex.EXIT_CONFIG
    try:
        cfg = ex.preset_config(args.name, args.output)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG
    return _execute(cfg, args.output)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="galerkin-tiq",
                                description="Two-stage dissipative Galerkin experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config (JSON or YAML)")
    r.add_argument("config")
    r.add_argument("--output", help="override the output directory")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("import-check", help="validate a matrix container file")
    c.add_argument("path")
    c.set_defaults(func=_cmd_import_check)

    s = sub.add_parser("preset", help="list or run a named preset")
    s.add_argument("action", choices=["list", "run"])
    s.add_argument("name", nargs="?")
    s.add_argument("--output")
    s.set_defaults(func=_cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
