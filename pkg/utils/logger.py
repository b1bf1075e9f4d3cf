"""
Logging configuration for the toolkit.

Every module logger hangs under the "axunet" logger, which owns the single
colored handler. The level comes from AXUNET_LOG_LEVEL and can be overridden
per run with `set_level` (the CLI's --log-level).
"""

import logging

import colorlog

from config import settings
from utils.errors import ConfigError

ROOT_NAME = "axunet"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _level_value(level: str) -> int:
    name = level.upper()
    if name not in LEVELS:
        raise ConfigError(f"unknown log level {level!r}; expected one of {', '.join(LEVELS)}")
    return getattr(logging, name)


def _root_logger() -> logging.Logger:
    root = logging.getLogger(ROOT_NAME)
    if not root.handlers:
        root.setLevel(_level_value(settings.log_level))
        handler = colorlog.StreamHandler()
        handler.setFormatter(
            colorlog.ColoredFormatter(
                "%(log_color)s%(levelname)-8s%(reset)s %(blue)s%(name)s%(reset)s - %(message)s",
                log_colors={
                    "DEBUG": "cyan",
                    "INFO": "green",
                    "WARNING": "yellow",
                    "ERROR": "red",
                    "CRITICAL": "red,bg_white",
                },
            )
        )
        root.addHandler(handler)
    return root


def setup_logger(name: str) -> logging.Logger:
    """
    Get the colored logger for a module.

    Args:
        name: The name of the logger (usually __name__)

    Returns:
        Logger "axunet.<name>", inheriting the toolkit level and handler

    Raises:
        ConfigError: If AXUNET_LOG_LEVEL is not a logging level name
    """
    _root_logger()
    return logging.getLogger(f"{ROOT_NAME}.{name}")


def set_level(level: str) -> None:
    """Change the level of every toolkit logger at once."""
    _root_logger().setLevel(_level_value(level))
