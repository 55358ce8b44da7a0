"""Named random substreams derived from one master seed.

Each stochastic consumer (fading, exploration, replay sampling, ...) draws
from its own stream, so switching the attacker on or off never shifts the
fading realisation of a run.
"""

from __future__ import annotations

import zlib

import numpy as np


class RandomStream:
    """A numpy ``Generator`` keyed by ``(master seed, name)``.

    Attribute access falls through to the underlying generator, so a stream
    can be used anywhere a ``np.random.Generator`` is expected.
    """

    def __init__(self, seed: int, name: str):
        self.seed = int(seed)
        self.name = name
        key = zlib.crc32(name.encode("utf-8"))
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, key])))

    def __getattr__(self, attr):
        return getattr(self.generator, attr)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, name={self.name!r})"


class StreamFactory:
    """Hands out one :class:`RandomStream` per name, creating it on first use."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, RandomStream] = {}

    def __getitem__(self, name: str) -> RandomStream:
        if name not in self._streams:
            self._streams[name] = RandomStream(self.seed, name)
        return self._streams[name]

    def names(self) -> list[str]:
        return sorted(self._streams)
