#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Main entry point for the lasso-condition toolkit.
This module serves as the entry point for the Docker container.

Commands:
    python -m app.main check          - Check environment and numerical dependencies
    python -m app.main solve          - Solve one instance to a certified duality gap
    python -m app.main condition      - Sigma-certificate and condition upper bound
    python -m app.main certify        - Variable-precision certified support selection
    python -m app.main ensemble-t24   - Law of the reciprocal condition of random one-row instances
    python -m app.main figure1        - Solver success rates on random one-row instances
    python -m app.main wainwright     - Gaussian-ensemble parameters and hypothesis checks
    python -m app.main adversary      - Finite-precision adversary demonstration
    python -m app.main gaps           - Gap statistic samples
    python -m app.main run            - Run the command named in --config
    python -m app.main docs [command] - Print command documentation
    python -m app.main schema         - Print the experiment config JSON schema

Exit codes: 0 ok or abstained, 1 runtime failure, 2 config error.
"""

import argparse
import json
import logging
import os
import sys
from importlib import import_module
from pathlib import Path
from typing import List, Optional

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Load environment variables from .env file
try:
    from dotenv import load_dotenv

    # Load from .env file in the project root
    root_env_path = Path(__file__).parent.parent / '.env'
    if root_env_path.exists():
        load_dotenv(dotenv_path=root_env_path)
        logger.info(f"Loaded environment variables from {root_env_path}")

    # Check for environment-specific .env files
    env = os.environ.get('ENVIRONMENT', 'development')
    env_specific_path = Path(__file__).parent.parent / f".env.{env}"
    if env_specific_path.exists():
        load_dotenv(dotenv_path=env_specific_path)
        logger.info(f"Loaded environment-specific variables from {env_specific_path}")
except ImportError:
    logger.warning("python-dotenv not installed, skipping .env loading")

from pydantic import ValidationError  # noqa: E402

from app import __version__  # noqa: E402
from app.command_docs import get_all_docs, get_command_docs  # noqa: E402
from app.exceptions import ConfigError  # noqa: E402
from app.scripts.artifact_writer import to_json, write_error  # noqa: E402
from app.scripts.experiment_runner import (  # noqa: E402
    CONFIG_COMMANDS,
    PARAMS_MODELS,
    ExperimentConfig,
    first_error_field,
    load_config_file,
    run_experiment,
)
from app.settings import LOG_LEVELS, get_settings  # noqa: E402

REQUIRED_PACKAGES = ["numpy", "scipy", "pandas", "numba", "joblib", "sklearn", "pydantic", "yaml", "tqdm", "dotenv"]

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def check_environment(out_dir: Optional[Path] = None) -> bool:
    """
    Check that the numerical dependencies import and the output directory is writable.
    """
    logger.info("Checking environment...")
    ok = True
    for name in REQUIRED_PACKAGES:
        try:
            module = import_module(name)
            logger.info(f"  {name} {getattr(module, '__version__', '')}")
        except ImportError as e:
            logger.error(f"Required package '{name}' could not be imported: {e}")
            ok = False

    if out_dir is not None:
        out_dir = Path(out_dir)
        if not out_dir.exists():
            logger.info(f"Creating directory: {out_dir}")
            out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            logger.error(f"Output directory is not writable: {out_dir}")
            ok = False

    if ok:
        logger.info("Environment check completed successfully")
    return ok


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or YAML experiment config")
    common.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    common.add_argument("--workers", type=int, help="Worker processes for Monte Carlo trials")
    common.add_argument("--out", type=Path, help="Output directory for artifacts")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(prog="python -m app.main", description="LASSO support condition toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", help="Command to run")
    subparsers.add_parser("check", parents=[common], help="Check environment and dependencies")
    for command in CONFIG_COMMANDS:
        subparsers.add_parser(command, parents=[common], help=get_command_docs(command)["description"])
    subparsers.add_parser("run", parents=[common], help="Run the command named in --config")
    docs_parser = subparsers.add_parser("docs", help="Print command documentation")
    docs_parser.add_argument("name", nargs="?", help="Command to document")
    subparsers.add_parser("schema", help="Print the experiment config JSON schema")
    return parser


def config_schema() -> dict:
    return {
        "config": ExperimentConfig.model_json_schema(),
        "params": {command: model.model_json_schema(by_alias=True) for command, model in PARAMS_MODELS.items()},
    }


def _resolve_config(args, settings) -> ExperimentConfig:
    data = load_config_file(args.config) if args.config else {}
    if args.command == "run":
        if "command" not in data:
            raise ConfigError("'run' needs a config that names a command", field="command")
    elif data.get("command", args.command) != args.command:
        raise ConfigError(f"Config is for '{data['command']}', not '{args.command}'", field="command")
    else:
        data["command"] = args.command
    if args.seed is not None:
        data["seed"] = args.seed
    config = ExperimentConfig.model_validate(data)
    try:
        config.resolved_params()
    except ValidationError as e:
        field = first_error_field(e)
        raise ConfigError(f"Invalid params for '{config.command}': {e}",
                          field=f"params.{field}" if field else "params")
    return config


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function that runs when the application starts.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command or "check"

    if command == "docs":
        docs = get_command_docs(args.name) if args.name else get_all_docs()
        print(json.dumps(docs, indent=2, default=str))
        return EXIT_OK if "error" not in docs else EXIT_CONFIG
    if command == "schema":
        print(json.dumps(config_schema(), indent=2))
        return EXIT_OK

    out_dir = Path(getattr(args, "out", None) or "artifacts")
    try:
        settings = get_settings()
        level = (getattr(args, "log_level", None) or settings.log_level).upper()
        if level not in LOG_LEVELS:
            raise ConfigError(f"Unknown log level '{level}'", field="log_level")
        logging.getLogger().setLevel(level)
        out_dir = Path(getattr(args, "out", None) or settings.out_dir)
        if command == "check":
            return EXIT_OK if check_environment(out_dir) else EXIT_FAILURE

        args.command = command
        config = _resolve_config(args, settings)
        if args.out is None and config.out_dir:
            out_dir = Path(config.out_dir)
        workers = args.workers if args.workers is not None else settings.workers
        if workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {workers}", field="workers")
        result = run_experiment(config, out_dir, workers=workers, progress=settings.progress and workers == 1)
        print(to_json({"status": result["status"], "out_dir": str(out_dir), "artifacts": result["artifacts"]}))
        return EXIT_OK
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        write_error(out_dir, e, "config_error", e.field)
        return EXIT_CONFIG
    except ValidationError as e:
        logger.error(f"Config error: {e}")
        write_error(out_dir, e, "config_error", first_error_field(e))
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Run failed: {type(e).__name__}: {e}")
        write_error(out_dir, e, "error")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
