"""Command line front end.

Subcommands: gen (write a workload matrix file), run (experiment config to
CSV/JSON), bounds (matrix file to a bound report), audit (density-ratio check
of a named mechanism), lp (optimal-error program on a tiny instance file).

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 audit fail.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audit import AuditConfig, ratio_audit
from .bounds import bound_report_for
from .harness import (ExperimentConfig, compare_to_theory, config_template,
                      load_config, run_experiment)
from .lp import TinyInstance, lp_optimal_error
from .mechanisms import MECHANISM_NAMES, run_mechanism
from .query import (Database, NeighborPair, hypercube_query, load_database,
                    load_matrix, random_bernoulli_query, save_matrix)
from .rng import RngStream

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_AUDIT_FAIL = 3


class UsageError(Exception):
    """Usage/validation failure carrying its message."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for runtime
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="geonoise", description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_gen = sub.add_parser("gen", help="write a workload matrix file")
    p_gen.add_argument("--kind", choices=("bernoulli", "hypercube"), default="bernoulli")
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--n", type=int, default=1024,
                       help="columns for the bernoulli kind (hypercube fixes n=2^d)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", help="key=value config file (omit to use defaults)")
    p_run.add_argument("--template", action="store_true",
                       help="print a default config file and exit")
    p_run.add_argument("--database", help="database vector file overriding x = 0")
    p_run.add_argument("--compare", action="store_true",
                       help="print the trend report after the run (needs >= 3 dims)")

    p_bounds = sub.add_parser("bounds", help="volume lower bounds for a matrix file")
    p_bounds.add_argument("--matrix", required=True)
    p_bounds.add_argument("--eps", type=float, default=1.0)
    p_bounds.add_argument("--trials", type=int, default=50_000)
    p_bounds.add_argument("--cov-samples", type=int, default=2048)
    p_bounds.add_argument("--seed", type=int, default=0)
    p_bounds.add_argument("--out", help="write the JSON report here instead of stdout")

    p_audit = sub.add_parser("audit", help="density-ratio audit of a mechanism")
    p_audit.add_argument("--mechanism", choices=MECHANISM_NAMES, required=True)
    p_audit.add_argument("--matrix", required=True)
    p_audit.add_argument("--eps", type=float, default=1.0,
                         help="budget the mechanism actually runs at")
    p_audit.add_argument("--claim-eps", type=float, default=None,
                         help="audit against this claimed budget instead of --eps")
    p_audit.add_argument("--delta", type=float, default=0.1)
    p_audit.add_argument("--trials", type=int, default=100_000)
    p_audit.add_argument("--tolerance", type=float, default=0.15)
    p_audit.add_argument("--bin-width", type=float, default=0.25)
    p_audit.add_argument("--seed", type=int, default=0)
    p_audit.add_argument("--out", help="write the JSON report here instead of stdout")

    p_lp = sub.add_parser("lp", help="optimal-error linear program on a tiny instance")
    p_lp.add_argument("--instance", required=True, help="TinyInstance JSON file")
    p_lp.add_argument("--eps", type=float, default=1.0)
    p_lp.add_argument("--out", help="write the JSON report here instead of stdout")
    return parser


def _emit(report: dict, out: "str | None") -> None:
    text = json.dumps(report, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_gen(args) -> int:
    if args.d < 1:
        raise UsageError("--d must be positive")
    if args.kind == "hypercube":
        query = hypercube_query(args.d)
    else:
        if args.n < args.d:
            raise UsageError("--n must be at least --d")
        query = random_bernoulli_query(args.d, args.n, RngStream(args.seed).generator())
    save_matrix(query, args.out)
    print(f"wrote {args.kind} workload d={query.d} n={query.n} to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.template:
        sys.stdout.write(config_template())
        return EXIT_OK
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    database = load_database(args.database).values if args.database else None
    rows = run_experiment(cfg, database=database)
    failed = [r for r in rows if r.error]
    for row in rows:
        status = f"  [{row.error}]" if row.error else ""
        print(f"d={row.d} {row.mechanism}: mean={row.mean_error:.4g} "
              f"std={row.std_error:.4g} vol_lb={row.vol_lb:.4g}{status}")
    print(f"wrote {cfg.output} and {Path(cfg.output).with_suffix('.json')}")
    if args.compare:
        report = compare_to_theory(rows)
        sys.stdout.write(json.dumps(report, indent=2) + "\n")
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_bounds(args) -> int:
    query = load_matrix(args.matrix)
    report = bound_report_for(query, args.eps, RngStream(args.seed).generator(),
                              trials=args.trials, cov_samples=args.cov_samples)
    _emit(report.to_dict(), args.out)
    return EXIT_OK


def _make_audit_mechanism(name: str, eps: float, delta: float):
    def single(query, x, rng):
        return run_mechanism(name, query, x, eps, 1, rng, delta=delta)[0]

    def many(query, x, count, rng):
        return run_mechanism(name, query, x, eps, count, rng, delta=delta)

    single.many = many
    return single


def _cmd_audit(args) -> int:
    query = load_matrix(args.matrix)
    x = Database(np.zeros(query.n))
    y_vals = np.zeros(query.n)
    y_vals[0] = 1.0
    pair = NeighborPair(x, Database(y_vals))
    cfg = AuditConfig(bin_width=args.bin_width, trials=args.trials,
                      tolerance=args.tolerance)
    mech = _make_audit_mechanism(args.mechanism, args.eps, args.delta)
    claimed = args.eps if args.claim_eps is None else args.claim_eps
    report = ratio_audit(mech, query, pair, claimed, cfg,
                         RngStream(args.seed).generator(), name=args.mechanism)
    _emit(report.to_dict(), args.out)
    return EXIT_AUDIT_FAIL if report.verdict == "fail" else EXIT_OK


def _cmd_lp(args) -> int:
    instance = TinyInstance.from_json(Path(args.instance).read_text())
    solution = lp_optimal_error(instance, args.eps)
    report = {
        "eps": args.eps,
        "optimal_error": solution.value,
        "iterations": solution.iterations,
        "databases": instance.databases.shape[0],
        "answers": instance.answers.shape[0],
    }
    _emit(report, args.out)
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "bounds": _cmd_bounds,
    "audit": _cmd_audit,
    "lp": _cmd_lp,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"geonoise: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"geonoise: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"geonoise: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
