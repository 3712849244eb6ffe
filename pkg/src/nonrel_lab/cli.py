"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 solver abort, 3 I/O error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dynamics import SolverAbort
from .study import (
    ConfigError,
    config_from_mapping,
    emit_outputs,
    parse_config,
    run_convergence,
    run_evolve,
    run_reports,
    snapshot_csv,
    write_files,
)

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 1, 2, 3

# evolve flags -> config keys
_EVOLVE_FLAGS = {
    "c": "c_list", "lam": "lam", "l": "l", "r": "r", "dt": "dt", "T": "T", "N": "N",
    "L": "L", "k": "sobolev_k", "seed": "seed", "amplitude": "amplitude",
    "output": "output_dir", "solver": "solver", "d": "d",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nonrel-lab", description="Nonrelativistic-limit study driver")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in [
        ("derive", "exact normal-form derivation report"),
        ("evolve", "single evolution"),
        ("converge", "c-sweep of approximation errors"),
        ("dispersion", "band-wise kernel decay fits"),
        ("strichartz", "Strichartz ratio table"),
    ]:
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("--config", help="flat YAML config file")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        if name == "evolve":
            sp.add_argument("--c", type=float)
            sp.add_argument("--lambda", dest="lam", type=float)
            sp.add_argument("--l", type=int)
            sp.add_argument("--r", type=int)
            sp.add_argument("--dt", type=float)
            sp.add_argument("--T", type=float)
            sp.add_argument("--N", type=int)
            sp.add_argument("--L", type=float)
            sp.add_argument("--d", type=int)
            sp.add_argument("--k", type=float)
            sp.add_argument("--seed", type=int)
            sp.add_argument("--amplitude", type=float)
            sp.add_argument("--solver", choices=["nlkg", "normalized"])
            sp.add_argument("--output")
    return ap


def _load(args):
    if args.config:
        cfg = parse_config(args.config, args.override)
        data = cfg.to_dict()
    else:
        from .study import parse_overrides

        data = parse_overrides(args.override)
        data.setdefault("c_list", [2.0])
    data["mode"] = args.command
    if args.command == "evolve":
        for flag, key in _EVOLVE_FLAGS.items():
            v = getattr(args, flag, None)
            if v is not None:
                data[key] = [v] if key == "c_list" else v
    return config_from_mapping(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    try:
        if cfg.mode == "converge":
            rep = run_convergence(cfg)
            paths = emit_outputs(rep, out)
            summary = "insufficient points" if rep.slope is None else f"slope {rep.slope:.4f}"
            print(summary)
        elif cfg.mode == "evolve":
            files = run_evolve(cfg)
            final = files.pop("_final")
            if cfg.snapshot:
                files["final_field.csv"] = snapshot_csv(final)
            paths = write_files(files, out)
        else:
            paths = write_files(run_reports(cfg), out)
    except SolverAbort as e:
        print(f"solver abort: {e}", file=sys.stderr)
        rep = getattr(e, "report", None)
        if rep is not None:
            try:
                emit_outputs(rep, out)
            except OSError:
                pass
        return EXIT_ABORT
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
