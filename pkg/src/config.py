"""
gsdlab Configuration

Runtime settings from the environment (and an optional .env file), logging
setup, and config-file loading for the CLI.
"""

import json
import logging
import os
from pathlib import Path
from typing import Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field
from rich.console import Console
from rich.logging import RichHandler

from src.errors import ConfigError


DEFAULT_DATA_DIR = "gsdlab_data"
MAX_DEFAULT_THREADS = 8


class Settings(BaseModel):
    """Process-wide runtime settings"""
    threads: int = Field(default=1, ge=1)
    log_level: str = "WARNING"
    data_dir: Path = Path(DEFAULT_DATA_DIR)


def _default_threads() -> int:
    return max(1, min(os.cpu_count() or 1, MAX_DEFAULT_THREADS))


def load_settings(env_file: Optional[Path] = None) -> Settings:
    """
    Build Settings from the environment.

    A .env file is loaded first when present; variables already set in the
    environment win over it.
    """
    load_dotenv(dotenv_path=env_file, override=False)

    raw_threads = os.getenv("GSDLAB_THREADS")
    if raw_threads is None or raw_threads.strip() == "":
        threads = _default_threads()
    else:
        try:
            threads = int(raw_threads)
        except ValueError:
            raise ConfigError(f"GSDLAB_THREADS must be an integer, got {raw_threads!r}")
        if threads < 1:
            raise ConfigError(f"GSDLAB_THREADS must be >= 1, got {threads}")

    return Settings(
        threads=threads,
        log_level=os.getenv("GSDLAB_LOG_LEVEL", "WARNING").upper(),
        data_dir=Path(os.getenv("GSDLAB_DATA_DIR", DEFAULT_DATA_DIR)),
    )


def configure_logging(level: str = "WARNING") -> None:
    """Send log records to stderr through rich, keeping stdout for JSON"""
    handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[handler],
        force=True,
    )


def load_config_file(path: Path) -> dict:
    """Parse a JSON or YAML config file into a dict"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    suffix = path.suffix.lower()
    try:
        with open(path, "r") as f:
            if suffix == ".json":
                data = json.load(f)
            elif suffix in (".yaml", ".yml"):
                data = yaml.safe_load(f)
            else:
                raise ConfigError(f"Unsupported config format {suffix!r} (use .json or .yaml)")
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Failed to parse {path}: {e}")

    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data
