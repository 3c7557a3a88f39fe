"""Command-line entry point: ``thermophase {run,preset,mms,check}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__

OUT_ENV = "THERMOPHASE_OUT"
DEFAULT_OUT = "runs"

log = logging.getLogger("thermophase")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermophase",
        description="Temperature-coupled Cahn-Hilliard / Stokes / heat simulator.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{run,preset,mms,check}")
    sub.required = True

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", help="YAML config file ('-' reads stdin)")
    run.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT}/<name>)")
    run.add_argument("--seed", type=_seed, help="override the random initial-condition seed")
    run.add_argument("--cadence", type=_positive, help="override the output cadence in steps")
    run.add_argument("--quiet", action="store_true", help="suppress progress output")

    preset = sub.add_parser("preset", help="list or emit the canned experiment configs")
    psub = preset.add_subparsers(dest="action", metavar="{list,emit}")
    psub.required = True
    psub.add_parser("list", help="list preset names")
    emit = psub.add_parser("emit", help="print a fully resolved preset config")
    emit.add_argument("name")
    emit.add_argument("-o", "--output", help="write to this file instead of stdout")

    mms = sub.add_parser("mms", help="manufactured-solution convergence study")
    mms.add_argument("target", choices=["heat", "stokes", "ch-diffusive"])

    sub.add_parser("check", help="run the structural-property suite")
    return parser


def _cmd_run(args) -> int:
    from .config import load_document, resolve_document, build_config
    from .driver import Simulation

    text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text(encoding="utf-8")
    full, notes = resolve_document(load_document(text))
    if args.cadence is not None:
        full["run"]["cadence"] = args.cadence
    cfg = build_config(full, notes)
    out = args.out or os.environ.get(OUT_ENV) or str(Path(DEFAULT_OUT) / cfg.name)
    sim = Simulation(cfg)
    n = cfg.n_steps

    def progress(state):
        if state.step % cfg.cadence == 0:
            print(f"step {state.step}/{n}  t={state.time:.4g}  "
                  f"c in [{state.c.coeffs.min():.4f}, {state.c.coeffs.max():.4f}]", flush=True)

    result = sim.run(out, seed=args.seed, callback=None if args.quiet else progress)
    if not args.quiet:
        print(f"wrote {len(result.files)} files to {out} in {result.wall_time:.1f} s")
    return 0


def _cmd_preset(args) -> int:
    from .config import PRESETS, emit_preset

    if args.action == "list":
        for name in sorted(PRESETS):
            print(name)
        return 0
    text = emit_preset(args.name)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_mms(args) -> int:
    from .mms import STUDIES

    for study_fn in STUDIES[args.target]:
        study = study_fn()
        print(study.table())
        for key in study.errors:
            print(f"min observed order ({key}): {study.min_order(key):.3f}")
        print()
    return 0


def _cmd_check(args) -> int:
    from .checks import run_checks

    def show(res):
        print(f"{'PASS' if res.ok else 'FAIL'}  {res.name}: {res.detail}", flush=True)

    results = run_checks(show)
    failed = [r.name for r in results if not r.ok]
    if failed:
        raise RuntimeError(f"{len(failed)} structural check(s) failed: {', '.join(failed)}")
    return 0


COMMANDS = {"run": _cmd_run, "preset": _cmd_preset, "mms": _cmd_mms, "check": _cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if getattr(args, "quiet", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("thermophase: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one-line reason, no traceback
        reason = " ".join(str(exc).split()) or type(exc).__name__
        print(f"thermophase: error: {reason}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
