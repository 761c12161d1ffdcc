from __future__ import annotations

import logging
from typing import Any

APP_NAME = "ordinal-quality"
FALLBACK_TAG = "state"

# pipeline stage of each module, used when a message carries no tag of its own
MODULE_TAGS = {
    "dataio": "io",
    "utils": "io",
    "weighting": "weights",
    "features": "pca",
    "ordinal": "fit",
    "scoring": "score",
    "evaluation": "eval",
    "synth": "synth",
    "main": "startup",
}


def stage_tag(logger_name: str) -> str:
    module = logger_name.rsplit(".", 1)[-1]
    return MODULE_TAGS.get(module, FALLBACK_TAG)


class StageTagFilter(logging.Filter):
    """Prefixes untagged package messages with the backtick tag of their pipeline stage."""

    def filter(self, record: logging.LogRecord) -> bool:
        if not record.name.startswith(APP_NAME):
            return True
        message = record.getMessage()
        if not message.startswith("`"):
            record.msg = f"`{stage_tag(record.name)}` {message}"
            record.args = ()
        return True


def get_logger(name: str) -> logging.Logger:
    if name == APP_NAME or name.startswith(f"{APP_NAME}."):
        return logging.getLogger(name)
    return logging.getLogger(f"{APP_NAME}.{name.removeprefix('ordinal_quality.')}")


def _rich_handler(config: dict[str, Any]) -> logging.Handler:
    # stdout carries command output (weights YAML, tables), so logs go to stderr
    from rich.console import Console
    from rich.logging import RichHandler

    return RichHandler(
        console=Console(stderr=True),
        show_time=bool(config.get("show_time", True)),
        show_level=bool(config.get("show_level", False)),
        show_path=bool(config.get("show_path", False)),
        log_time_format=str(config.get("time_format", "%H:%M:%S")),
        markup=False,
    )


def setup_logging(config: dict[str, Any]) -> logging.Logger:
    """Configure the package logger through cyberlog, or a rich handler when it is not installed."""
    logger = logging.getLogger(APP_NAME)
    logger.handlers.clear()
    logger.filters.clear()
    logger.propagate = False

    try:
        from cyberlog import LoggingConfig, setup_logger
    except ImportError:
        logger.addHandler(_rich_handler(config))
        logger.setLevel(_level(config.get("level", "INFO")))
    else:
        logger = setup_logger(LoggingConfig(**config), APP_NAME, clear_handlers=True, propagate=False)

    logger.filters.clear()
    for handler in logger.handlers:
        handler.addFilter(StageTagFilter())
    apply_external_logger_levels(config.get("loggers", {}))
    return logger


def apply_external_logger_levels(loggers: dict[str, str]) -> None:
    for logger_name, level_name in loggers.items():
        logging.getLogger(logger_name).setLevel(_level(level_name))


def _level(level_name: object) -> int:
    return getattr(logging, str(level_name).upper(), logging.INFO)
