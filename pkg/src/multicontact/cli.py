"""Command-line scenario runner.

Subcommands:

* ``run <config> [--set path=value]... [--out dir] [--seed n]``
* ``sweep <config> --param path --values v1,v2,... [--parallel k]``
* ``validate <config>``

``<config>`` is a YAML file path or the name of a bundled scenario. The
``MULTICONTACT_LOG_DIR`` environment variable supplies the default output
directory. Exit codes: 0 nominal, 2 fell, 3 solver stalled for over a
second, 4 configuration error, 5 simulation blow-up.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, bundled_scenario_names, load_scenario, parse_override_value
from .harness import run_scenario, sweep, sweep_table


def _parse_sets(pairs: list[str]) -> list[tuple[str, object]]:
    overrides = []
    for item in pairs:
        if "=" not in item:
            raise ConfigError([f"--set '{item}': expected path=value"])
        path, _, value = item.partition("=")
        overrides.append((path.strip(), parse_override_value(value)))
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multicontact",
        description="Multi-contact balance-control scenario harness "
                    f"(bundled scenarios: {', '.join(bundled_scenario_names())})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("config", help="YAML file or bundled scenario name")
    run_p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config field (repeatable)")
    run_p.add_argument("--out", default=os.environ.get("MULTICONTACT_LOG_DIR"),
                       help="output directory for log.csv and metrics.json")
    run_p.add_argument("--seed", type=int, default=None)

    sweep_p = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--param", required=True, help="config path to sweep")
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    sweep_p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE")
    sweep_p.add_argument("--out", default=os.environ.get("MULTICONTACT_LOG_DIR"))
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--parallel", type=int, default=1, metavar="K")

    val_p = sub.add_parser("validate", help="check a scenario file")
    val_p.add_argument("config")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            load_scenario(args.config)
            print(f"{args.config}: OK")
            return 0
        if args.command == "run":
            scenario = load_scenario(args.config, overrides=_parse_sets(args.set), seed=args.seed)
            result = run_scenario(scenario, out_dir=args.out)
            m = result.metrics
            print(f"scenario {m.name} seed {m.seed}: "
                  f"{'FELL at %.2f s' % m.fall_time if m.fell else 'completed %.2f s' % m.completed_time}")
            print(f"  com_rms_m={m.com_rms:.4g} zmp_margin_min_m="
                  f"{'-' if m.zmp_margin_min is None else '%.4g' % m.zmp_margin_min} "
                  f"exit={m.exit_code}")
            if result.log_path is not None:
                print(f"  log: {result.log_path}")
            return m.exit_code
        if args.command == "sweep":
            values = [parse_override_value(v) for v in args.values.split(",") if v.strip() != ""]
            rows = sweep(args.config, args.param, values, overrides=_parse_sets(args.set),
                         seed=args.seed, out_dir=args.out, parallel=args.parallel)
            print(sweep_table(rows))
            return 0
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
