"""Run logging for pathrank commands.

Records go to stdout through the `pathrank` logger when verbose; otherwise only
warnings surface. Command logging flattens nested run settings into the dotted keys
that `--set` accepts, so a logged value can be pasted back as an override.
"""

from __future__ import annotations

import dataclasses
import logging
import sys
from collections.abc import Mapping, Sequence


LOGGER_NAME = "pathrank"
logger = logging.getLogger(LOGGER_NAME)

_MAX_LOGGED_ITEMS = 8


def configure_logging(verbose: bool) -> None:
    """Send INFO records to stdout when verbose, keep only warnings otherwise."""
    logger.propagate = False
    if not verbose:
        logger.setLevel(logging.WARNING)
        logger.handlers.clear()
        return
    logger.setLevel(logging.INFO)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)


def _brief(value: object) -> object:
    if isinstance(value, (str, bytes)):
        return value
    if isinstance(value, (Mapping, Sequence)) and len(value) > _MAX_LOGGED_ITEMS:
        return f"<{len(value)} items>"
    return value


def setting_items(value: object, prefix: str = "") -> list[tuple[str, object]]:
    """Leaf values of a nested dataclass as (dotted key, value) pairs in field order."""
    if not dataclasses.is_dataclass(value) or isinstance(value, type):
        return [(prefix, _brief(value))]
    items: list[tuple[str, object]] = []
    for item in dataclasses.fields(value):
        key = f"{prefix}.{item.name}" if prefix else item.name
        items.extend(setting_items(getattr(value, item.name), key))
    return items


def log_command(command_name: str, args: object, config: object) -> None:
    """Log the run settings and the command arguments that were given.

    Arguments left at None fall back to the settings and are not repeated.
    """
    if not logger.isEnabledFor(logging.INFO):
        return
    settings = ", ".join(f"{key}={value!r}" for key, value in setting_items(config))
    logger.info("Settings (%s): %s", command_name, settings)
    given = [(key, value) for key, value in setting_items(args) if value is not None]
    if given:
        logger.info(
            "Arguments (%s): %s",
            command_name,
            ", ".join(f"{key}={value!r}" for key, value in given),
        )
