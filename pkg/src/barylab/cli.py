"""Command-line entry point: ``barylab <scenario> [flags]``.

Exit codes: 0 success, 2 theorem-level check failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import BaryLabError
from .scenarios import (
    SCENARIOS,
    ConfigError,
    ScenarioConfig,
    csv_text,
    dumps_row,
    parse_config_text,
    run_scenario,
    spot_check_rows,
)

EXIT_OK = 0
EXIT_THEOREM = 2
EXIT_CONFIG = 3


def _int_list(text: str) -> tuple:
    return tuple(int(p) for p in text.split(",") if p.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="barylab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--m", type=int)
        p.add_argument("--degree", type=_int_list, help="comma-separated simplex degrees")
        p.add_argument("--atoms", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--grid", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key")
    p = sub.add_parser("spot-check", help="re-check stored jacobian rows")
    p.add_argument("path", help="JSON-lines file written by jacobian-sweep or splitrank-blowup")
    return parser


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def make_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig(scenario=args.command)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config_text(fh.read(), cfg)
        cfg.scenario = args.command
    for key in ("m", "degree", "atoms", "seed", "grid", "out", "workers"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    if args.set:
        cfg = parse_config_text("\n".join(args.set), cfg)
    return cfg.validate()


def write_outputs(cfg: ScenarioConfig, rows, summary) -> tuple:
    os.makedirs(cfg.out, exist_ok=True)
    stem = os.path.join(cfg.out, cfg.scenario)
    header = {"type": "header", "schema_version": cfg.schema_version, "config": cfg.as_dict()}
    with open(stem + ".jsonl", "w", encoding="utf-8") as fh:
        fh.write(dumps_row(header) + "\n")
        for row in rows:
            fh.write(dumps_row(row) + "\n")
    with open(stem + ".csv", "w", encoding="utf-8") as fh:
        fh.write(csv_text(summary))
    return stem + ".jsonl", stem + ".csv"


def _spot_check(path: str) -> int:
    with open(path, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    checked, failures = spot_check_rows(rows)
    print(f"checked {checked} rows, {failures} failures")
    return EXIT_THEOREM if failures else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    parser.__class__ = _Parser
    for action in parser._subparsers._group_actions:
        for p in action.choices.values():
            p.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "spot-check":
        try:
            return _spot_check(args.path)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        cfg = make_config(args)
        rows, summary, status = run_scenario(cfg)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BaryLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    jsonl, csv_path = write_outputs(cfg, rows, summary)
    sys.stdout.write(csv_text(summary))
    print(f"wrote {jsonl} and {csv_path}", file=sys.stderr)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
