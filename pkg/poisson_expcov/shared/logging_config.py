"""Root logging setup for CLI runs.

Records go to stderr only; stdout carries the run summary. JSON lines are the
default off a terminal so sampler and cross-validation logs can be filtered by
``run_id``, ``phi``, ``chain_id`` or ``replication``.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from datetime import datetime, timezone
from typing import Any

import numpy as np

from .log_context import CONTEXT_FIELD_NAMES, get_all_context_fields

PACKAGE_LOGGER = "poisson_expcov"

# attributes every LogRecord has; anything else arrived through ``extra=``
_RECORD_ATTRS = frozenset(vars(logging.LogRecord("", 0, "", 0, "", (), None))) | {
    "message",
    "asctime",
    "taskName",
    *CONTEXT_FIELD_NAMES,
}


def _parse_level(level: int | str | None) -> int:
    if isinstance(level, int):
        return level
    name = (level if level is not None else os.getenv("LOG_LEVEL", "INFO")).strip().upper()
    value = logging.getLevelName(name)
    return value if isinstance(value, int) else logging.INFO


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class _ContextFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        for key, value in get_all_context_fields().items():
            record.__dict__.setdefault(key, value)
        return True


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "source": f"{record.module}:{record.lineno}",
        }
        entry.update(get_all_context_fields())
        entry.update(
            (key, value)
            for key, value in vars(record).items()
            if key not in _RECORD_ATTRS and not key.startswith("_")
        )
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False, default=_json_default)


class _TextFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        head = f"{self.formatTime(record, '%H:%M:%S')} {record.levelname:<7} {record.name}"
        context = get_all_context_fields()
        if context:
            head += " [" + ", ".join(f"{k}={v}" for k, v in context.items()) + "]"
        line = f"{head} {record.getMessage()}"
        if record.exc_info:
            line += "\n" + self.formatException(record.exc_info)
        return line


def _resolve_format(format_type: str | None) -> str:
    if format_type is not None:
        return format_type
    requested = os.getenv("LOG_FORMAT", "").strip().lower()
    if requested in ("json", "text"):
        return requested
    if os.getenv("DOCKER_CONTAINER"):
        return "json"
    return "text" if getattr(sys.stderr, "isatty", lambda: False)() else "json"


def configure_logging(
    *,
    level: int | str | None = None,
    format_type: str | None = None,
    logger_names: list[str] | None = None,
) -> None:
    """Replace the root handlers with one stderr handler at ``level`` (``LOG_LEVEL`` when omitted)."""
    resolved = _parse_level(level)
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if _resolve_format(format_type) == "json" else _TextFormatter())
    handler.addFilter(_ContextFilter())
    root.addHandler(handler)
    root.setLevel(resolved)

    for name in [*(logger_names or []), PACKAGE_LOGGER]:
        logging.getLogger(name).setLevel(resolved)
