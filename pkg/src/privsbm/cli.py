"""Command-line interface."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .errors import EmptySigma, ValidationError, VerificationFailure
from .experiments import (
    epsilon_trends,
    lower_bound_overlay,
    run_risk_sweep,
    write_overlay_csv,
    write_risk_csv,
)
from .formats import read_graph, write_graph, write_json, write_labeling
from .graph_model import (
    Graph,
    Labeling,
    SbmParams,
    balanced_default,
    sample_sbm,
    sample_uniform_balanced,
)
from .mechanism import run_private_estimator
from .parallel import resolve_workers
from .privacy_audit import (
    audit_group_privacy,
    audit_restricted_dp,
    lower_bound_over_class,
    min_epsilon_for_failure,
    two_point_experiment,
    two_point_instance,
)
from .rng import child_seed, stream
from .theory_verify import run_verification, write_checks_csv, write_junit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2
EXIT_ERROR = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _truth(config: RunConfig, params: SbmParams, seed: int) -> Labeling:
    truth = config.model.truth
    if truth == "default":
        return balanced_default(params)
    if truth == "uniform":
        return sample_uniform_balanced(params, stream(seed, 0))
    return Labeling(truth, params.k)


def _sample(config: RunConfig, seed: int) -> tuple[Labeling, Graph]:
    params = config.model.params
    truth = _truth(config, params, seed)
    return truth, sample_sbm(params, truth, child_seed(seed, 1))


def _cmd_sample(config: RunConfig, args) -> tuple[list[str], bool]:
    config.require("model")
    truth, graph = _sample(config, args.seed)
    write_graph(graph, args.out / "graph.txt")
    write_labeling(truth, args.out / "truth.txt")
    return ["graph.txt", "truth.txt"], True


def _cmd_estimate(config: RunConfig, args) -> tuple[list[str], bool]:
    config.require("model", "mechanism")
    params = config.model.params
    if args.graph is not None:
        graph = read_graph(args.graph)
    else:
        _, graph = _sample(config, args.seed)
    mechanism = config.mechanism.build(params)
    _, record = run_private_estimator(
        graph, mechanism, params, child_seed(args.seed, 2)
    )
    write_json(record.to_json(), args.out / "estimate.json")
    return ["estimate.json"], True


def _audit_mechanism(config: RunConfig, params: SbmParams, epsilon=None):
    mechanism = config.mechanism.build(params)
    changes = {"eta_scale": config.audit.eta_scale}
    if epsilon is not None:
        changes["epsilon"] = epsilon
    return dataclasses.replace(mechanism, **changes)


def _cmd_audit(config: RunConfig, args) -> tuple[list[str], bool]:
    config.require("model", "mechanism")
    params = config.model.params
    mechanism = _audit_mechanism(config, params)
    section = config.audit
    reports = []
    for distance in section.distances:
        if distance == 1:
            report = audit_restricted_dp(
                params, mechanism, section.n_cap, section.domain
            )
        else:
            report = audit_group_privacy(
                params, mechanism, distance, section.domain, section.n_cap
            )
        reports.append(report)
    passed = all(report.passed for report in reports)
    write_json(
        {"reports": [report.to_json() for report in reports], "pass": passed},
        args.out / "audit.json",
    )
    return ["audit.json"], passed


def _lower_bound_row(epsilon: float, params: SbmParams, result) -> dict:
    return {"epsilon": epsilon, "a": params.a, "b": params.b, **result.to_json()}


def _cmd_lower_bound(config: RunConfig, args) -> tuple[list[str], bool]:
    config.require("model", "mechanism")
    params = config.model.params
    section = config.audit
    instance = two_point_instance(params, coupled_seed=args.seed)
    results = []
    for epsilon in section.epsilons:
        mechanism = _audit_mechanism(config, params, epsilon)
        result = two_point_experiment(
            params, mechanism, section.mode, section.replicates, instance, section.n_cap
        )
        results.append(_lower_bound_row(epsilon, params, result))
    if section.class_ab:
        members = [
            SbmParams(params.n, params.k, a, b, params.beta)
            for a, b in section.class_ab
        ]
        for epsilon in section.epsilons:
            outcomes = lower_bound_over_class(
                members,
                epsilon,
                config.mechanism.c,
                section.mode,
                section.replicates,
                sampler=config.mechanism.sampler,
                fallback=config.mechanism.fallback,
            )
            for member, result in zip(members, outcomes):
                results.append(_lower_bound_row(epsilon, member, result))
    passed = all(result["pass"] for result in results)
    record = {
        "results": results,
        "pass": passed,
        "min_epsilon_for_inverse_n_failure": min_epsilon_for_failure(params.n, 1.0),
    }
    write_json(record, args.out / "lower_bound.json")
    return ["lower_bound.json"], passed


def _cmd_verify(config: RunConfig, args) -> tuple[list[str], bool]:
    checks = run_verification(config.verify)
    write_checks_csv(checks, args.out / "verification.csv")
    write_junit(checks, args.out / "verification.xml")
    return ["verification.csv", "verification.xml"], all(c.passed for c in checks)


def _cmd_sweep(config: RunConfig, args) -> tuple[list[str], bool]:
    config.require("sweep")
    workers = resolve_workers(args.threads)
    report = run_risk_sweep(config.sweep, args.seed, workers)
    overlay = lower_bound_overlay(report)
    write_risk_csv(report, args.out / "risk.csv")
    write_overlay_csv(overlay, args.out / "overlay.csv")
    for trend in epsilon_trends(report):
        if not trend.passed:
            logger.warning(
                "risk is not monotone in epsilon for %s: residual %g > CI width %g",
                trend.group,
                trend.residual,
                trend.ci_width,
            )
    return ["risk.csv", "overlay.csv"], all(row["floor_ok"] for row in overlay)


COMMANDS = {
    "sample": _cmd_sample,
    "estimate": _cmd_estimate,
    "audit": _cmd_audit,
    "lower-bound": _cmd_lower_bound,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="privsbm",
        description="Node-private community detection in stochastic block models.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="JSON config file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output dir")
    common.add_argument("--seed", type=int, default=0, help="root random seed")
    common.add_argument("--threads", type=int, default=None, help="max workers")
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        type=str.upper,
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        sub = subparsers.add_parser(name, parents=[common])
        if name == "estimate":
            sub.add_argument("--graph", type=Path, default=None, help="input graph")
    return parser


def _write_manifest(args, config: RunConfig, outputs: list[str], status: str):
    manifest = {
        "command": args.command,
        "config_sha256": config.digest,
        "seed": args.seed,
        "version": __version__,
        "outputs": outputs,
        "status": status,
    }
    write_json(manifest, args.out / "manifest.json")


def dispatch(argv: list[str]) -> int:
    """Run one command and return its exit code."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"privsbm: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID

    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    try:
        if args.seed < 0:
            raise ValidationError(f"seed must be non-negative, got {args.seed}")
        config = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        outputs, passed = COMMANDS[args.command](config, args)
        _write_manifest(args, config, outputs, "pass" if passed else "fail")
        logger.info("wrote %s to %s", ", ".join(outputs), args.out)
        if not passed:
            raise VerificationFailure(f"{args.command} checks failed")
    except (ValidationError, EmptySigma) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except VerificationFailure as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
    except Exception as exc:
        logger.debug("unhandled error", exc_info=True)
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR
    return EXIT_OK


def main():
    """Console entry point."""
    sys.exit(dispatch(sys.argv[1:]))
