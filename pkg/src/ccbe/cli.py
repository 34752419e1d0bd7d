"""Command line: ``ccbe run|check|converge <scenario.yaml>``.

Exit codes: 0 success, 1 invariant violation, 2 configuration error,
3 integration failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigurationError, DomainError, InadmissibleParameters, IntegrationFailure
from .runner import (
    EXIT_CONFIG,
    EXIT_INTEGRATION,
    EXIT_OK,
    _json_safe,
    convergence_study,
    resolve_output_dir,
    run,
)
from .scenario import parse_scenario

logger = logging.getLogger("ccbe")


def _n_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser():
    p = argparse.ArgumentParser(prog="ccbe", description="Truncated coagulation with collisional breakage.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("scenario", help="YAML scenario file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")

    r = sub.add_parser("run", help="integrate one scenario and write its outputs")
    scenario_args(r)
    r.add_argument("--out", help="output directory (default: output.directory of the scenario)")

    c = sub.add_parser("check", help="admissibility check only")
    scenario_args(c)

    v = sub.add_parser("converge", help="truncation-size convergence study")
    scenario_args(v)
    v.add_argument("--n", dest="n_list", type=_n_list, required=True, help="e.g. 5,10,20")
    v.add_argument("--out", help="directory for convergence.csv")
    return p


def _cmd_run(args):
    sc = parse_scenario(args.scenario, args.overrides)
    res = run(sc, args.out)
    print(f"outputs in {res.directory}")
    for msg in res.violations:
        print(f"violation: {msg}", file=sys.stderr)
    return res.exit_code


def _cmd_check(args):
    sc = parse_scenario(args.scenario, args.overrides)
    print(json.dumps(_json_safe(sc.admissibility().as_dict()), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_converge(args):
    sc = parse_scenario(args.scenario, args.overrides)
    out = args.out if args.out is not None else sc.output.directory
    res = convergence_study(sc, args.n_list, out)
    for p in res.pairs:
        print(f"tau={p['tau']} n={p['n_a']:g} -> {p['n_b']:g}: metric {p['metric']:.6g}")
    for c in res.cross:
        print(f"n={c['n']:g}: tau 0 vs 1 distance {c['cross_distance']:.6g}")
    print(f"wrote {resolve_output_dir(out) / 'convergence.csv'}")
    return res.exit_code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "check": _cmd_check, "converge": _cmd_converge}[args.command]
    try:
        return handler(args)
    except InadmissibleParameters as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(json.dumps(_json_safe(exc.report.as_dict()), indent=2, sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationFailure as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
