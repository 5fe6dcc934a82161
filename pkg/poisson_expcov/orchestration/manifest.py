from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from poisson_expcov import __version__
from poisson_expcov.shared.errors import io_error, schema_error

MANIFEST_PREFIX = "# "


def file_digest(path: Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise io_error(f"cannot read {path}: {exc}", path=str(path)) from exc


def payload_digest(payload: Any) -> str:
    encoded = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def times_digest(times: Iterable[float]) -> str:
    return hashlib.sha256(",".join(repr(float(t)) for t in times).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Provenance written as the first line of every result table.

    ``timings`` holds work counters (sweeps, draws, fits), not wall-clock
    time, so identical runs write identical files.
    """

    command: str
    config: dict[str, Any]
    input_digest: str
    seed: int
    version: str = __version__
    timings: dict[str, Any] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def to_line(self) -> str:
        return MANIFEST_PREFIX + json.dumps(asdict(self), sort_keys=True, ensure_ascii=False, allow_nan=True)

    @classmethod
    def from_line(cls, line: str) -> "RunManifest":
        if not line.startswith(MANIFEST_PREFIX.strip()):
            raise schema_error("result file has no manifest line")
        try:
            payload = json.loads(line.lstrip("#").strip())
            return cls(**payload)
        except (json.JSONDecodeError, TypeError) as exc:
            raise schema_error(f"malformed manifest line: {exc}") from exc
