"""Reproducible random streams.

Every replication owns one ``Philox`` generator keyed by the master seed and
its replication index, so results never depend on which worker ran it or in
what order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAX_SEED = 2**64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < MAX_SEED:
        msg = f"seed must be an unsigned 64-bit integer, got {seed}"
        raise ConfigError(msg)
    return seed


@dataclass(frozen=True)
class RngStream:
    """Opaque handle on the draws of one replication.

    ``generator()`` always starts from the beginning of the stream: two calls
    return generators producing identical sequences. Callers that need
    several independent draws within a replication take them from one
    generator in a fixed order.
    """

    seed: int
    replication: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", check_seed(self.seed))
        if self.replication < 0:
            msg = f"replication index must be non-negative, got {self.replication}"
            raise ValueError(msg)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.replication,))
        return np.random.Generator(np.random.Philox(sequence))

    def spawn(self, replication: int) -> RngStream:
        return RngStream(self.seed, replication)


def as_generator(stream: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    return stream.generator()
