"""
Command-line entry point.

Handles argument parsing, configuration, logging setup, and dispatch of the
command to the provider method that implements it.
"""

import inspect
import json
import sys
from typing import Callable, Dict, List, Optional

from loguru import logger

from .cli import parse_arguments
from .commands import BenchCommands, EIMCommands, EvalCommands, TrainCommands
from .core import branding
from .core.config import RunConfig
from .core.errors import ConfigError, FracRBMError
from .core.logging import setup_logging

COMMAND_PREFIX = "cmd_"


def discover_commands(config: RunConfig) -> Dict[str, Callable]:
    """Collects the public ``cmd_*`` methods of all providers, keyed by command name.

    Args:
        config: The run configuration handed to every provider.

    Returns:
        Mapping from command name (``build-eim``, ``train``, ...) to bound method.
    """
    providers = [
        EIMCommands(config),
        TrainCommands(config),
        EvalCommands(config),
        BenchCommands(config),
    ]
    commands: Dict[str, Callable] = {}
    for provider_instance in providers:
        for name, method in inspect.getmembers(provider_instance, predicate=inspect.ismethod):
            if name.startswith(COMMAND_PREFIX):
                command = name[len(COMMAND_PREFIX) :].replace("_", "-")
                if command in commands:
                    logger.error(f"Duplicate command '{command}' in {provider_instance.__class__.__name__}")
                    continue
                commands[command] = method
    logger.debug(f"Discovered {len(commands)} commands: {', '.join(sorted(commands))}")
    return commands


def _call_with_args(method: Callable, args) -> object:
    """Calls a command method, taking its keyword arguments from the parsed namespace."""
    kwargs = {}
    for name, parameter in inspect.signature(method).parameters.items():
        if hasattr(args, name) and getattr(args, name) is not None:
            kwargs[name] = getattr(args, name)
        elif parameter.default is inspect.Parameter.empty:
            raise ConfigError(f"Missing argument '{name}'")
    return method(**kwargs)


def exit_code_for(error: BaseException) -> int:
    """0 success, 2 configuration, 3 numerical failure, 4 I/O, 1 anything else."""
    if isinstance(error, FracRBMError):
        return error.exit_code
    if isinstance(error, ValueError):
        return ConfigError.exit_code
    return 1


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""

    logger.remove()
    logger.add(sys.stderr, level="INFO", format="{message}")

    args = parse_arguments(argv)

    if args.command == "version" or (args.command == "help" and getattr(args, "help_cmd_show_version", False)):
        print(f"frac-rbm {RunConfig().version}")
        return 0

    try:
        config = RunConfig(args=args)
        setup_logging(config.log_dir, config.log_level)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return e.exit_code
    except Exception as e:
        logger.opt(exception=True).critical(f"Unexpected error during argument parsing or config initialization: {e}")
        return 1

    logger.bind(literal=True).opt(colors=True).info(branding.get_run_banner(config, args.command))

    commands = discover_commands(config)
    method = commands.get(args.command)
    if method is None:
        logger.critical(f"Invalid command: {args.command}. Exiting.")
        return 1

    try:
        result = _call_with_args(method, args)
    except KeyboardInterrupt:
        logger.info("Interrupted (Ctrl+C).")
        return 130
    except (FracRBMError, ValueError) as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed (exit code {code}): {e}")
        return code
    except Exception as e:
        logger.opt(exception=True).critical(f"Critical unexpected error in {args.command}: {e}")
        return 1

    logger.debug(json.dumps(result, default=str, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
