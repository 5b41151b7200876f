import argparse
import os
import sys
from typing import List, Optional

from .core.config import RunConfig

DEFAULT_LOG_DIR = os.path.expanduser("~/.frac-rbm")
DEFAULT_LOG_LEVEL_STR = "INFO"

# Commands whose numerical settings come from the run configuration.
CONFIGURED_COMMANDS = ("build-eim", "train", "eval", "certify", "bench", "validate-oracle")


# Helper function for case-insensitive log level
def case_insensitive_log_level(value: str) -> str:
    """Convert input log level to uppercase for case-insensitive comparison."""
    return value.upper()


def _common_parser() -> argparse.ArgumentParser:
    """
    Options shared by every configured command.

    Every override defaults to None so that only flags given on the command
    line replace preset or config-file values.
    """
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("configuration")
    group.add_argument("--config", type=str, default=None, metavar="PATH", help="TOML configuration file.")
    group.add_argument("--preset", choices=RunConfig.VALID_PRESETS, default=None, help="Starting preset (desk).")
    group.add_argument("--output-dir", dest="output_dir", type=str, default=None, metavar="PATH",
                       help="Directory for models and CSV files.")
    group.add_argument("--log-dir", dest="log_dir", type=str, default=None, metavar="PATH",
                       help=f"Directory to store log files (default {DEFAULT_LOG_DIR}).")
    group.add_argument(
        "--log-level",
        dest="log_level",
        type=case_insensitive_log_level,
        default=None,
        choices=RunConfig.VALID_LOG_LEVELS,
        help=f"Console logging level, case-insensitive (default {DEFAULT_LOG_LEVEL_STR}).",
    )
    group.add_argument("--threads", type=int, default=None, metavar="N", help="Worker threads for parameter sweeps.")
    group.add_argument("--seed", type=int, default=None, help="Seed for random choices.")

    mesh = common.add_argument_group("mesh")
    mesh.add_argument("--n", type=int, default=None, help="Cells per side of the unit-square triangulation.")
    mesh.add_argument("--M", type=int, default=None, help="Subintervals of the graded partition in y.")
    mesh.add_argument("--gamma-d1", dest="gamma_d1", type=float, default=None, help="Grading exponent for s <= 1/2.")
    mesh.add_argument("--gamma-d2", dest="gamma_d2", type=float, default=None, help="Grading exponent for s > 1/2.")
    mesh.add_argument("--y-plus", dest="y_plus", type=float, default=None, help="Cylinder truncation height.")

    eim = common.add_argument_group("EIM")
    eim.add_argument("--eim-tol", dest="eim_tol", type=float, default=None, help="EIM stopping tolerance.")
    eim.add_argument("--eim-q-max", dest="eim_q_max", type=int, default=None, help="Maximum EIM terms.")
    eim.add_argument("--eim-s-points", dest="eim_s_points", type=int, default=None, help="EIM training points in s.")

    rb = common.add_argument_group("reduced basis")
    rb.add_argument("--rhs", choices=RunConfig.VALID_RHS, default=None, help="Right-hand side.")
    rb.add_argument("--n-max", dest="n_max", type=int, default=None, help="Maximum reduced dimension.")
    rb.add_argument("--greedy-mode", dest="greedy_mode", choices=RunConfig.VALID_GREEDY_MODES, default=None,
                    help="Greedy objective.")
    rb.add_argument("--rb-tol", dest="rb_tol", type=float, default=None, help="Greedy stopping tolerance.")
    rb.add_argument("--first-snapshot", dest="first_snapshot", choices=RunConfig.VALID_FIRST_SNAPSHOT, default=None,
                    help="Rule for the first snapshot.")
    rb.add_argument("--train-s-points", dest="train_s_points", type=int, default=None, help="Training points in s.")
    rb.add_argument("--test-s-points", dest="test_s_points", type=int, default=None, help="Test points in s.")
    rb.add_argument("--n-constraints", dest="n_constraints", type=int, default=None, help="SCM constraint points.")
    rb.add_argument("--validation-points", dest="validation_points", type=int, default=None,
                    help="Certification grid size.")
    rb.add_argument("--oracle-modes", dest="oracle_modes", type=int, default=None, help="Sine modes per axis.")
    rb.add_argument("--cg-tol", dest="cg_tol", type=float, default=None, help="Truth CG relative tolerance.")
    rb.add_argument("--bench-queries", dest="bench_queries", type=int, default=None, help="Queries in the bench table.")
    return common


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments for the solver suite.

    This function sets up the argument parser with subcommands (build-eim,
    train, eval, certify, bench, validate-oracle, version, help). Configured
    commands share the configuration options; 'help' prints the help of a
    command or the version.

    Args:
        argv: Argument list; defaults to sys.argv[1:].

    Returns:
        An argparse.Namespace object containing the parsed command-line arguments.
        If no command is provided or help is requested, the function may exit the process
        after printing appropriate help text.
    """
    parser = argparse.ArgumentParser(
        prog="frac-rbm",
        description="Certified reduced-basis solver for the parameterized spectral fractional Laplacian.",
    )

    _version_str = RunConfig().version
    parser.version = f"%(prog)s {_version_str}"

    parser.add_argument(
        "-v",
        "--version",
        action="version",
        help="Show program's version number and exit.",
    )

    subparsers = parser.add_subparsers(
        title="Commands",
        dest="command",
        help="Run 'frac-rbm <command> --help' for more information on a command.",
    )
    common = _common_parser()

    build_eim_parser = subparsers.add_parser(
        "build-eim",
        parents=[common],
        help="Build the EIM models of both subdomains.",
        description="Build and save the EIM models, with decay, magic-point and envelope tables.",
    )
    build_eim_parser.set_defaults(command="build-eim")

    train_parser = subparsers.add_parser(
        "train",
        parents=[common],
        help="Train the reduced models and write convergence tables.",
        description="Run SCM and the greedy offline phase per subdomain, then evaluate the test ensembles.",
    )
    train_parser.set_defaults(command="train")

    eval_parser = subparsers.add_parser(
        "eval",
        parents=[common],
        help="Evaluate a trained model at one parameter.",
        description="Solve the reduced problem at (s, nu) and summarize the trace u_N.",
    )
    eval_parser.add_argument("--model", required=True, metavar="PATH", help="Model file written by 'train'.")
    eval_parser.add_argument("--s", type=float, required=True, help="Fractional order.")
    eval_parser.add_argument("--nu", type=float, default=None, help="Load parameter (two-parameter problem).")
    eval_parser.add_argument("--dump", type=str, default=None, metavar="PATH", help="Write (x1, x2, u_N) to a CSV.")
    eval_parser.set_defaults(command="eval")

    certify_parser = subparsers.add_parser(
        "certify",
        parents=[common],
        help="Check error bounds over the validation grid.",
        description="Compare certified bounds with oracle-computed trace errors and exact inf-sup values.",
    )
    certify_parser.add_argument("--model", default=None, metavar="PATH",
                                help="Model file; defaults to the trained models in the output directory.")
    certify_parser.set_defaults(command="certify")

    bench_parser = subparsers.add_parser(
        "bench",
        parents=[common],
        help="Time truth and online solves.",
        description="Write the cumulative cost table and report speedup and crossover.",
    )
    bench_parser.add_argument("--levels", type=int, default=1,
                              help="Resolutions in the scaling table; each doubles n and M.")
    bench_parser.set_defaults(command="bench")

    oracle_parser = subparsers.add_parser(
        "validate-oracle",
        parents=[common],
        help="Refinement study against the analytic solution.",
        description="Compare truth traces with the sine-mode solution on successively refined meshes.",
    )
    oracle_parser.add_argument("--levels", type=int, default=2, help="Number of meshes; each doubles n and M.")
    oracle_parser.set_defaults(command="validate-oracle")

    version_parser = subparsers.add_parser("version", help="Show program's version number and exit.")
    version_parser.set_defaults(command="version")

    help_parser = subparsers.add_parser(
        "help",
        help="Show help for commands or program version.",
        description="Provides help information for other commands, or shows the program version.",
    )
    help_parser.add_argument(
        "cmd_to_help",
        nargs="?",
        metavar="COMMAND_NAME",
        default=None,
        help="Optional command name to show help for (e.g., train, certify).",
    )
    help_parser.add_argument(
        "--version",
        dest="help_cmd_show_version",
        action="store_true",
        help="Show program's version number and exit (when used with the 'help' command).",
    )
    help_parser.set_defaults(command="help")

    subparser_choices_map = subparsers.choices

    parsed_args = parser.parse_args(argv)

    if parsed_args.command is None:
        parser.print_help()
        sys.exit(0)

    if parsed_args.command == "help":
        if getattr(parsed_args, "help_cmd_show_version", False):
            # driver.py prints the version for 'help --version'
            return parsed_args
        elif parsed_args.cmd_to_help:
            if parsed_args.cmd_to_help in subparser_choices_map:
                subparser_choices_map[parsed_args.cmd_to_help].print_help()
            else:
                print(f"Error: Unknown command '{parsed_args.cmd_to_help}' for help.\n", file=sys.stderr)
                parser.print_help(sys.stderr)
                sys.exit(1)
            sys.exit(0)
        else:
            parser.print_help()
            sys.exit(0)

    return parsed_args
