"""Seeded random streams.

Every stream is identified by ``(root_seed, stream_id)`` where the stream id is a
tuple of ints/strings/floats. The id is hashed into a ``SeedSequence`` spawn key,
so the same id always yields the same PCG64 generator and different ids yield
independent generators, regardless of which thread builds them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..shared.errors import invalid_parameter

StreamPart = Union[int, str, float]


def _part_key(part: StreamPart) -> int:
    if isinstance(part, (bool, np.bool_)):
        raise invalid_parameter(f"stream id parts must be int, str or float, got {part!r}")
    if isinstance(part, (int, np.integer)) and int(part) >= 0:
        return int(part)
    digest = hashlib.sha256(f"{type(part).__name__}:{part!r}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RngStream:
    root_seed: int
    stream_id: tuple[StreamPart, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if int(self.root_seed) < 0:
            raise invalid_parameter(f"root seed must be unsigned, got {self.root_seed}")
        object.__setattr__(self, "stream_id", tuple(self.stream_id))
        sequence = np.random.SeedSequence(
            entropy=int(self.root_seed),
            spawn_key=tuple(_part_key(part) for part in self.stream_id),
        )
        object.__setattr__(self, "generator", np.random.Generator(np.random.PCG64(sequence)))

    @classmethod
    def create(cls, root_seed: int, *stream_id: StreamPart) -> "RngStream":
        return cls(int(root_seed), tuple(stream_id))

    def child(self, *parts: StreamPart) -> "RngStream":
        return RngStream(self.root_seed, self.stream_id + tuple(parts))

    def uniform(self, size: int | tuple[int, ...] | None = None) -> np.ndarray | float:
        return self.generator.uniform(size=size)

    def standard_normal(self, size: int | tuple[int, ...] | None = None) -> np.ndarray | float:
        return self.generator.standard_normal(size=size)
