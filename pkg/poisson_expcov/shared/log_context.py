from __future__ import annotations

import contextvars
from contextlib import contextmanager
from typing import Any, Iterator

_run_id: contextvars.ContextVar[str | None] = contextvars.ContextVar("run_id", default=None)
_command: contextvars.ContextVar[str | None] = contextvars.ContextVar("command", default=None)
_phi: contextvars.ContextVar[str | None] = contextvars.ContextVar("phi", default=None)
_chain_id: contextvars.ContextVar[str | None] = contextvars.ContextVar("chain_id", default=None)
_replication: contextvars.ContextVar[str | None] = contextvars.ContextVar("replication", default=None)

_NAMED_VARS: dict[str, contextvars.ContextVar[str | None]] = {
    "run_id": _run_id,
    "command": _command,
    "phi": _phi,
    "chain_id": _chain_id,
    "replication": _replication,
}

CONTEXT_FIELD_NAMES: tuple[str, ...] = tuple(_NAMED_VARS)

_EXTRA_VARS: dict[str, contextvars.ContextVar[str | None]] = {}


def _get_or_create_var(name: str) -> contextvars.ContextVar[str | None]:
    if name in _NAMED_VARS:
        return _NAMED_VARS[name]
    if name not in _EXTRA_VARS:
        _EXTRA_VARS[name] = contextvars.ContextVar(name, default=None)
    return _EXTRA_VARS[name]


def get_run_id() -> str | None:
    return _run_id.get()


@contextmanager
def bind_context(**fields: Any) -> Iterator[None]:
    """Bind run context fields for every log line emitted inside the block.

    ``None`` values are skipped so callers can pass optional fields through.
    """
    tokens: list[contextvars.Token[str | None]] = []
    try:
        for key, value in fields.items():
            if value is None:
                continue
            tokens.append(_get_or_create_var(key).set(str(value)))
        yield
    finally:
        for token in reversed(tokens):
            token.var.reset(token)


def get_all_context_fields() -> dict[str, str]:
    result: dict[str, str] = {}
    for name, var in list(_NAMED_VARS.items()) + list(_EXTRA_VARS.items()):
        value = var.get()
        if value is not None:
            result[name] = value
    return result
