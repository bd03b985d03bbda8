"""
Command line entry point.

    nullcauchy run CONFIG [--set key=value ...] [--out DIR]
    nullcauchy list
    nullcauchy validate CONFIG [--set key=value ...]

Exit codes: 0 success, 2 configuration error, 3 admissibility failure during
a run, 4 failed built-in check when the configuration sets ``selftest``.
"""

import argparse
import json
import sys

from .constraint import ConstraintError
from .grid import GridError
from .initial_data import InitialDataError
from .scenarios import COMMON, SCENARIOS, ConfigError, apply_overrides, config_hash, run_scenario, \
    validate_config

EXIT_OK, EXIT_CONFIG, EXIT_ADMISSIBILITY, EXIT_SELFTEST = 0, 2, 3, 4


def _load(path, overrides):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate_config(apply_overrides(cfg, overrides))


def cmd_list(args):
    for name, sc in SCENARIOS.items():
        print(f"{name}: {sc.doc}")
        for key, p in {**sc.params, **COMMON}.items():
            extra = f" one of {list(p.choices)}" if p.choices else ""
            print(f"    {key} ({p.type.__name__}, default {p.default!r}): {p.doc}{extra}")
    return EXIT_OK


def cmd_validate(args):
    cfg = _load(args.config, args.set)
    print(json.dumps(cfg, indent=2, sort_keys=True))
    print(f"config hash {config_hash(cfg)}")
    return EXIT_OK


def cmd_run(args):
    cfg = _load(args.config, args.set)
    try:
        out = run_scenario(cfg, args.out)
    except (ConstraintError, InitialDataError, GridError) as exc:
        raise ConfigError(str(exc)) from None
    for c in out.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c['value']:.3e} "
              f"({'<=' if c['kind'] == 'le' else '>='} {c['threshold']:.3e})")
    print(f"status {out.status}, report in {args.out or cfg['out']}/report.json")
    if out.status != "ok":
        print(f"admissibility failure: {out.report['levels'][-1].get('message', '')}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    if cfg["selftest"] and out.failed_checks:
        return EXIT_SELFTEST
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="nullcauchy", description="Null Cauchy problem scenarios")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario configuration")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--out", default=None, help="output directory (overrides the 'out' key)")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("list", help="list scenarios and their parameters")
    p.set_defaults(func=cmd_list)
    p = sub.add_parser("validate", help="check a configuration without running it")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
