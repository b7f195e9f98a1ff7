"""Command-line front end.

Subcommands: estimate, solvability, security, fig1, concentration.

Exit codes: 0 success / predicate holds, 1 predicate fails, 2 computation or
domain error, 3 I/O error, 64 usage error. CSV goes to --out, the human
summary to standard output, logs and errors to standard error.

Example:
    python -m src.cli fig1 --d 100 --s 25 --trials 50 --seed 7 --out results
"""

from typing import Callable, Dict, Optional, Sequence
import argparse
import logging
import sys

from .analysis import (
    CondEstimate,
    check_tbc,
    estimate_expected_cond,
    paired_cond_estimates,
    paired_security_report,
    vic7_breakdown,
)
from .config import COMMANDS, LOG_LEVELS, RunConfig, load_config
from .errors import OtaInverseError, UsageError
from .experiments import (
    run_concentration_sweep,
    run_fig1,
    run_solvability_sweep,
    write_concentration_csv,
    write_estimate_csv,
    write_fig1_csv,
    write_security_csv,
    write_solvability_csv,
)
from .fl_models import FadingKind, ModelKind, load_gradients_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PREDICATE_FAILED = 1
EXIT_COMPUTATION = 2
EXIT_IO = 3
EXIT_USAGE = 64


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports problems as UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    # Values stay strings here; config.validate converts and checks them together.
    parser.add_argument("--config", help="JSON file with settings (keys use underscores)")
    parser.add_argument("--model", help="shared | per-user")
    parser.add_argument("--fading", help="identity | gaussian")
    parser.add_argument("--d", help="parameter-vector length")
    parser.add_argument("--s", help="number of receiver endpoints")
    parser.add_argument("--M", dest="M", help="single number of users")
    parser.add_argument("--M-grid", dest="M_grid", help="comma-separated user counts")
    parser.add_argument("--alphas", help="power coefficient, or comma list (one per user)")
    parser.add_argument("--sigma-gamma", dest="sigma_gamma", help="noise standard deviation")
    parser.add_argument("--delta", help="sparsification threshold")
    parser.add_argument("--epsilon", help="approximation accuracy")
    parser.add_argument("--trials", help="Monte-Carlo trials per grid point")
    parser.add_argument("--transmissions", help="transmissions per concentration point")
    parser.add_argument("--seed", help="master seed (fallback: $OTA_INVERSE_SEED)")
    parser.add_argument("--out", help="output directory for CSV files")
    parser.add_argument("--dof", help="paper-d | physical-s")
    parser.add_argument("--grads-file", dest="grads_file", help="CSV of user gradients")
    parser.add_argument("--workers", help="threads used for independent trials")
    parser.add_argument("--log-level", dest="log_level", help=" | ".join(LOG_LEVELS))


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(
        prog="ota-inverse",
        description="Inverse solvability and security of over-the-air FL forward models",
        allow_abbrev=False,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "estimate": "Monte-Carlo estimate of E[cond] for one model",
        "solvability": "compare E[cond] with the solvability bound F(M)",
        "security": "compare eavesdropper and server E[cond]",
        "fig1": "legitimate vs. eavesdropper E[cond] sweep",
        "concentration": "empirical vs. exact approximation probability",
    }
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=helps[name], allow_abbrev=False)
        _add_common_flags(sub)
    return parser


def _print_estimate(M: int, estimate: CondEstimate) -> None:
    print(f"  M={M:<6d} E[cond] = {estimate.mean:.6g} +/- {estimate.stderr:.3g}"
          + (f"  ({estimate.infinite_count} rank-deficient)" if estimate.infinite_count else ""))


def cmd_estimate(config: RunConfig) -> int:
    """Write estimate.csv with E[cond] of the configured model per M."""
    estimates = [
        (M, estimate_expected_cond(config.model, config.params(M), config.trials, config.seed,
                                   config.fading, config.workers))
        for M in config.M_grid
    ]
    write_estimate_csv(estimates, config.out / "estimate.csv")
    print(f"Estimated E[cond] for the {config.model.name} model ({config.trials} trials):")
    for M, estimate in estimates:
        _print_estimate(M, estimate)
    return EXIT_OK


def cmd_solvability(config: RunConfig) -> int:
    """Write solvability.csv; exit 1 when any grid point exceeds F(M)."""
    report = run_solvability_sweep(config.sweep_spec())
    write_solvability_csv(report, config.out / "solvability.csv")
    print(f"Inverse solvability of the {config.model.name} model (grid-restricted):")
    for row in report.rows:
        verdict = "ok" if row.satisfied else "VIOLATED"
        print(f"  M={row.M:<6d} E[cond] = {row.estimate.mean:.6g} +/- "
              f"{row.estimate.stderr:.3g}  F(M) = {row.bound:.6g}  {verdict}")
    print(f"Verdict: {'inverse solvable' if report.satisfied else 'bound violated'}")
    return EXIT_OK if report.satisfied else EXIT_PREDICATE_FAILED


def cmd_security(config: RunConfig) -> int:
    """Write security.csv; exit 1 unless the eavesdropper is worse off at every M."""
    if config.model is ModelKind.PER_USER_B:
        report = check_tbc(config.d, config.s, config.M_grid, config.trials, config.seed,
                           config.fading, config.workers)
    else:
        report = paired_security_report([
            paired_cond_estimates(ModelKind.SHARED_A, config.params(M), config.trials,
                                  config.seed, config.fading, config.workers)
            for M in config.M_grid
        ])
    write_security_csv(report, config.out / "security.csv")
    print(f"Inverse security of the {config.model.name} model "
          f"({config.fading.name.lower()} fading):")
    for row in report.rows:
        print(f"  M={row.M:<6d} legit {row.legit.mean:.6g}  eaves {row.eaves.mean:.6g}  "
              f"{'secure' if row.secure else 'NOT secure'}")
    if config.model is ModelKind.SHARED_A and config.fading is FadingKind.GAUSSIAN:
        vic7 = vic7_breakdown(config.params(config.M_grid[0]), config.M_grid,
                              config.trials, config.seed, config.workers)
        if vic7.breakdown_M is not None:
            print(f"  Sufficient condition E[cond(H_1..H_M)] > ratio * E[cond(A)]^2 "
                  f"fails from M={vic7.breakdown_M}: security is not guaranteed there")
    print(f"Verdict: {'inverse secure' if report.secure else 'not inverse secure'}")
    return EXIT_OK if report.secure else EXIT_PREDICATE_FAILED


def cmd_fig1(config: RunConfig) -> int:
    """Write fig1.csv with the legitimate and eavesdropper curves."""
    rows = run_fig1(config.sweep_spec())
    path = write_fig1_csv(rows, config.out / "fig1.csv")
    print(f"Condition-number sweep d={config.d} s={config.s} ({config.trials} trials) "
          f"written to {path}")
    for row in rows:
        print(f"  M={row.M:<6d} legit {row.legit_mean:.6g}  eaves {row.eaves_mean:.6g}")
    return EXIT_OK


def cmd_concentration(config: RunConfig) -> int:
    """Write concentration.csv with empirical, exact and bound per M."""
    grads = load_gradients_csv(config.grads_file) if config.grads_file else None
    records = run_concentration_sweep(config.params(config.M_grid[0]), config.M_grid,
                                      config.epsilon, config.transmissions, config.seed,
                                      config.dof, grads, config.workers)
    write_concentration_csv(records, config.out / "concentration.csv")
    print(f"Approximation probability, epsilon={config.epsilon} (dof {config.dof.value}):")
    for r in records:
        print(f"  M={r.M:<6d} z = {r.z:.6g}  empirical {r.empirical:.6g}  "
              f"exact {r.exact:.6g}  bound {r.bound:.6g}")
    return EXIT_OK


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "estimate": cmd_estimate,
    "solvability": cmd_solvability,
    "security": cmd_security,
    "fig1": cmd_fig1,
    "concentration": cmd_concentration,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        config = load_config(args.command, flags, args.config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, config.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        return COMMAND_HANDLERS[config.command](config)
    except OSError as exc:
        logger.error(f"I/O failure: {exc}")
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OtaInverseError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
