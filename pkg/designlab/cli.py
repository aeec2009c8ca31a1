"""
Command-line driver.

Exit codes are a stable contract: 0 pass, 1 usage or config error, 2 analytic
or empirical failure (including precondition violations), 3 resource budget.
Every randomized command echoes the seed it ran with on stderr.
"""

import argparse
import json
import logging
import os
import sys

from pathlib import Path
from typing import Any, List, Optional

from pydantic import ValidationError

from designlab import services
from designlab.config import Config
from designlab.db import find_runs_by_hash, init_db, list_runs
from designlab.errors import (
    BudgetExceeded,
    ConvergenceError,
    DimensionError,
    InvariantViolation,
    PreconditionError,
    UnknownNameError,
)
from designlab.models import CertifyRequest, EnsembleSpec, RunSummary


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAIL = 2
EXIT_BUDGET = 3

# Flags the bound subcommand forwards to the evaluator's parameter model
BOUND_FLAGS = {
    "eta": "Lipschitz constant η",
    "d": "total dimension",
    "delta": "deviation δ",
    "C": "tail prefactor",
    "a": "tail rate",
    "mu": "mean μ",
    "eta_shift": "tail shift",
    "K": "polynomial degree",
    "alpha": "coefficient mass (poly) or entropy deficit (entropy bounds)",
    "eps": "design error ε",
    "k": "design order",
    "m": "moment order",
    "n": "qubit count",
    "ds": "subsystem dimension d_S",
    "de": "environment dimension d_E",
    "dr": "constrained subspace dimension d_R",
    "deff": "effective environment dimension",
    "gamma": "net scale γ (netsize) or purity ratio (markov)",
}


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(payload: Any) -> None:
    if hasattr(payload, "model_dump_json"):
        print(payload.model_dump_json(indent=2))
    else:
        print(json.dumps(payload, indent=2, default=str))


def _echo_seed(seed: Optional[int]) -> None:
    print(f"seed: {seed}", file=sys.stderr)


def _ensemble_spec(args: argparse.Namespace, name: Optional[str] = None) -> EnsembleSpec:
    return EnsembleSpec(
        name=name or args.ensemble,
        d=args.d,
        depth=args.depth,
        iterations=args.iterations,
        samples=args.ensemble_samples,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_certify(args: argparse.Namespace) -> int:
    request = CertifyRequest(
        ensemble=_ensemble_spec(args),
        k=args.k,
        eps=args.eps,
        strategy=args.strategy,
        n_monomials=args.n_monomials,
        samples=args.samples,
        seed=args.seed,
    )
    init_db()
    report, path = services.run_certification(
        request, Path(args.output_dir or Config.OUTPUT_DIR)
    )
    _emit(report)
    _echo_seed(report.seed)
    logger.info("Report written to %s", path)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bound(args: argparse.Namespace) -> int:
    params = {flag: getattr(args, flag) for flag in BOUND_FLAGS if hasattr(args, flag)}
    for flag in ("mode", "ensemble"):
        if getattr(args, flag, None) is not None:
            params[flag] = getattr(args, flag)
    try:
        result = services.evaluate_bound(args.name, params)
    except PreconditionError as exc:
        _emit({"name": args.name, "inputs": params, "warnings": [str(exc)]})
        return EXIT_FAIL
    _emit(result)
    return EXIT_FAIL if result.warnings else EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    overrides = {
        "seed": args.seed,
        "samples": args.samples,
        "output_dir": args.output_dir,
    }
    cfg = services.load_experiment_config(Path(args.config), overrides)
    init_db()
    curve, csv_path, json_path = services.run_experiment(
        cfg, workers=args.workers, progress=not args.quiet
    )
    _emit(
        {
            "kind": curve.kind,
            "pass": curve.passed,
            "seed": curve.seed,
            "config_hash": curve.config_hash,
            "csv": str(csv_path),
            "json": str(json_path),
            "stats": curve.stats,
            "warnings": curve.warnings,
        }
    )
    _echo_seed(curve.seed)
    return EXIT_OK if curve.passed else EXIT_FAIL


def cmd_ensemble(args: argparse.Namespace) -> int:
    if args.action == "load":
        _emit(services.load_named(Path(args.target)))
        return EXIT_OK
    spec = _ensemble_spec(args, name=args.target)
    if args.action == "save":
        if not args.path:
            raise PreconditionError("ensemble save needs an output path")
        seed = services.resolve_seed(args.seed)
        path = services.save_named(spec, Path(args.path), seed)
        _emit({"path": str(path), "seed": seed})
        _echo_seed(seed)
        return EXIT_OK
    _emit(services.describe_named(spec, args.seed))
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    payload = services.sample_payload(
        _ensemble_spec(args), args.count, states=args.states, seed=args.seed
    )
    if args.out:
        Path(args.out).write_text(json.dumps(payload))
        logger.info("Wrote %d %s to %s", args.count, payload["kind"], args.out)
    else:
        _emit(payload)
    _echo_seed(payload["seed"])
    return EXIT_OK


def cmd_runs(args: argparse.Namespace) -> int:
    init_db()
    if args.hash:
        rows = find_runs_by_hash(args.hash)
    else:
        rows = list_runs(command=args.command_filter, limit=args.limit)
    _emit([RunSummary.model_validate(row).model_dump() for row in rows])
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("designlab.main:app", host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_ensemble_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d", type=int, help="dimension for dimension-generic ensembles")
    parser.add_argument("--depth", type=int, help="random-circuit depth")
    parser.add_argument("--iterations", type=int, default=1, help="compose t copies")
    parser.add_argument(
        "--ensemble-samples", type=int, help="sample this many Cliffords, not the group"
    )


def build_parser() -> argparse.ArgumentParser:
    common = Parser(add_help=False)
    common.add_argument("--seed", type=int, help=f"falls back to ${Config.SEED_ENV_VAR}")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--output-dir", help=f"default {Config.OUTPUT_DIR}")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = Parser(prog="designlab", description="Unitary design certification toolkit")
    parser.add_argument("--version", action="version", version=Config.VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    certify = sub.add_parser("certify", parents=[common], help="certify a k-design")
    certify.add_argument("--ensemble", required=True, help="builtin name or JSON path")
    _add_ensemble_flags(certify)
    certify.add_argument("--k", type=int, required=True)
    certify.add_argument("--eps", type=float, required=True)
    certify.add_argument(
        "--strategy", choices=["auto", "exhaustive", "random-monomials"], default="auto"
    )
    certify.add_argument("--n-monomials", type=int, default=1000)
    certify.add_argument("--samples", type=int, default=Config.MC_SAMPLES)
    certify.set_defaults(handler=cmd_certify)

    bound = sub.add_parser(
        "bound",
        parents=[common],
        help="evaluate an analytic bound",
        epilog="geoment reports the general bound in log2_bound and log2 of the "
        "closed form 2·n^(-n²) in extras.log2_corollary",
    )
    bound.add_argument("name", help=", ".join(services.BOUNDS))
    for flag, text in BOUND_FLAGS.items():
        option = "--" + flag.replace("_", "-")
        bound.add_argument(
            option, dest=flag, type=float, default=argparse.SUPPRESS, help=text
        )
    bound.add_argument("--mode", choices=["simplified", "messy"])
    bound.add_argument("--ensemble", help="ensemble name for pmin")
    bound.set_defaults(handler=cmd_bound)

    experiment = sub.add_parser("experiment", parents=[common], help="run an experiment")
    experiment.add_argument("config", help="experiment config JSON")
    experiment.add_argument("--samples", type=int)
    experiment.set_defaults(handler=cmd_experiment)

    ensemble = sub.add_parser("ensemble", parents=[common], help="ensemble files")
    ensemble.add_argument("action", choices=["save", "load", "describe"])
    ensemble.add_argument("target", help="ensemble name, or a JSON path for load")
    ensemble.add_argument("path", nargs="?", help="output path for save")
    _add_ensemble_flags(ensemble)
    ensemble.set_defaults(handler=cmd_ensemble)

    sample = sub.add_parser("sample", parents=[common], help="emit random draws as JSON")
    sample.add_argument("--ensemble", default="haar")
    _add_ensemble_flags(sample)
    sample.add_argument("-n", "--count", type=int, required=True)
    sample.add_argument("--states", action="store_true", help="emit U|0…0⟩ instead of U")
    sample.add_argument("--out", help="write to this file instead of stdout")
    sample.set_defaults(handler=cmd_sample)

    runs = sub.add_parser("runs", parents=[common], help="list the run ledger")
    runs.add_argument("--command", dest="command_filter")
    runs.add_argument("--hash", help="only runs with this config hash")
    runs.add_argument("--limit", type=int, default=50)
    runs.set_defaults(handler=cmd_runs)

    serve = sub.add_parser("serve", parents=[common], help="serve the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=cmd_serve)
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        return args.handler(args)
    except BudgetExceeded as exc:
        logger.error("budget exceeded: %s", exc)
        return EXIT_BUDGET
    except (ValidationError, UnknownNameError, DimensionError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        logger.error("cannot read input: %s", exc)
        return EXIT_USAGE
    except (PreconditionError, InvariantViolation, ConvergenceError) as exc:
        logger.error("%s", exc)
        return EXIT_FAIL

