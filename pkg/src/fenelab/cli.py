"""Command line entry point: ``fenelab list`` and ``fenelab run <config.toml>``."""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from fenelab.config import KINDS, load_config
from fenelab.errors import ConfigError, FenelabError


def catalog() -> dict:
    text = resources.files("fenelab").joinpath("data/catalog.json").read_text()
    return json.loads(text)


def list_scenarios() -> str:
    cat = catalog()
    return "\n".join(f"{k}: {cat[k]}" for k in KINDS)


def build_parser():
    ap = argparse.ArgumentParser(prog="fenelab", description="FENE Fokker-Planck solver and verification lab")
    sub = ap.add_subparsers(dest="cmd", required=True)
    sub.add_parser("list", help="print the scenario catalog")
    run = sub.add_parser("run", help="run a scenario from a TOML config")
    run.add_argument("config")
    run.add_argument("--out-dir", default=None, help="output directory (default: config's output_dir)")
    run.add_argument("--threads", type=int, default=1, help="worker cap for per-node solves")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config entry, e.g. params.b=3 (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "list":
        print(list_scenarios())
        return 0
    if args.threads < 1:
        print("error: --threads: must be >= 1", file=sys.stderr)
        return 2
    from fenelab.scenarios import run_scenario

    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    cfg.options["threads"] = args.threads
    try:
        res = run_scenario(cfg, args.out_dir)
    except FenelabError as exc:
        print(f"{cfg.kind} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for c in res.checks:
        flag = "PASS" if c.passed else "FAIL"
        print(f"{flag} {c.name}: {c.value:.6g} {c.op} {c.bound:.6g} (margin {c.margin:.3g})")
    print(f"{cfg.kind}: {'passed' if res.passed else 'FAILED'}; summary in {res.artifacts[-1]}")
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
