"""Command line entry point: ``spectral-covers list`` and ``spectral-covers run``."""
from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .errors import ConfigError
from .scenarios import SCENARIOS, list_scenarios, run_scenario

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2


def read_config(path, scenario: str) -> tuple[dict, dict]:
    """Read an INI file; returns ``(run_options, params)``.

    ``[run]`` may set ``out`` and ``seed``; ``[params]`` holds parameters
    shared by all scenarios and ``[params.<scenario>]`` overrides them.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    allowed = {"run", "params"} | {f"params.{name}" for name in SCENARIOS}
    extra = sorted(set(cp.sections()) - allowed)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(extra)}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    bad = sorted(set(run) - {"out", "seed"})
    if bad:
        raise ConfigError(f"unknown [run] key(s): {', '.join(bad)}")
    params = dict(cp["params"]) if cp.has_section("params") else {}
    own = f"params.{scenario}"
    if cp.has_section(own):
        params.update(cp[own])
    return run, params


def _parse_kv(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectral-covers",
                                 description="Spectral experiments on graph coverings.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list scenarios")
    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario")
    run.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a parameter")
    run.add_argument("--out", help="output directory (default: out/<scenario>)")
    run.add_argument("--seed", type=int, help="random seed (default 0)")
    run.add_argument("--config", help="INI file with [run], [params] and [params.<scenario>]")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in list_scenarios():
            print(f"{name:26s} {SCENARIOS[name].about}")
        return 0
    try:
        if args.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {args.scenario!r}; try 'spectral-covers list'")
        run_opts, params = read_config(args.config, args.scenario) if args.config else ({}, {})
        params.update(_parse_kv(args.param))
        try:
            seed = args.seed if args.seed is not None else int(run_opts.get("seed", 0))
        except ValueError:
            raise ConfigError("seed must be an integer") from None
        out = Path(args.out or run_opts.get("out") or Path("out") / args.scenario)
        result = run_scenario(args.scenario, params, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result.write(out)
    for c in result.checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark}  {c.name}: {c.lhs:.12g} {c.relation} {c.rhs:.12g} (tol {c.tol:g})")
    print(f"{result.scenario}: {'all checks passed' if result.ok else 'some checks failed'}; reports in {out}")
    return 0 if result.ok else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
