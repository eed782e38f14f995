"""Command line entry point: ``run``, ``verify`` and ``suite``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError


def _cmd_run(args) -> int:
    from .runner import PipelineError, emit_report, run

    try:
        man, out_dir = run(args.config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 1
    print(emit_report(man))
    print(f"output: {out_dir}")
    return 0 if man.passed else 1


def _cmd_verify(args) -> int:
    from .runner import RunLoadError, verify

    try:
        checks = verify(args.manifest)
    except RunLoadError as exc:
        print(f"cannot load run: {exc}", file=sys.stderr)
        return 2
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    return 0 if all(c.passed for c in checks) else 1


def _cmd_suite(args) -> int:
    from .acceptance import run_suite

    results = run_suite(args.criteria or None, echo=print)
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    return 0 if n_ok == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="doublephase", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("config")
    r.add_argument("--out", default="runs", help="parent directory for run outputs")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("verify", help="re-check a stored run")
    v.add_argument("manifest", help="run directory or its manifest.json")
    v.set_defaults(func=_cmd_verify)
    s = sub.add_parser("suite", help="run the acceptance criteria")
    s.add_argument("criteria", nargs="*", type=int, help="criterion numbers (default: all)")
    s.set_defaults(func=_cmd_suite)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
