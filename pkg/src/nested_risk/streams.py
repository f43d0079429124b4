"""Reproducible random streams.

All randomness flows from one non-negative integer seed. A :class:`Stream` is
that seed plus a key of integer tags; the key is passed to
:class:`numpy.random.SeedSequence` as its ``spawn_key``, so streams with
different keys are statistically independent. Within a stream, paths are
drawn in fixed-size chunks and every chunk gets its own counter-based
:class:`numpy.random.Philox` generator. Results therefore depend only on the
seed, the key and the chunk size, never on how work is spread across workers.
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Tuple

import numpy as np


class Domain(IntEnum):
    """Domain-separation tags that make the top-level streams disjoint."""

    OUTER = 1
    POOLED_INNER = 2
    CONDITIONAL_INNER = 3
    BENCHMARK = 4


@dataclass(frozen=True)
class Stream:
    seed: int
    key: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("'seed' must be a non-negative integer")
        if any(tag < 0 for tag in self.key):
            raise ValueError("stream key tags must be non-negative integers")

    @property
    def tag(self) -> str:
        return ":".join([str(self.seed), *(str(int(tag)) for tag in self.key)])

    def child(self, *tags: int) -> "Stream":
        return Stream(self.seed, self.key + tuple(int(tag) for tag in tags))

    def generator(self, chunk: int = 0) -> np.random.Generator:
        """Returns the generator for one chunk of this stream.

        Args:
            chunk (int): Index of the chunk of paths being drawn.

        Returns:
            numpy.random.Generator: A Philox-backed generator. Calling this
            twice with the same chunk gives generators producing identical
            draws.
        """
        sequence = np.random.SeedSequence(
            self.seed, spawn_key=self.key + (int(chunk),)
        )
        return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class EstimationStreams:
    """The three independent streams used by one estimation run."""

    outer: Stream
    pooled_inner: Stream
    conditional_inner: Stream

    @classmethod
    def from_seed(cls, seed: int, *tags: int) -> "EstimationStreams":
        """Derives estimation streams for a run identified by ``tags``.

        Macro replications pass ``(cell, replication)`` as tags so that every
        replication draws from its own substreams.
        """
        root = Stream(seed)
        return cls(
            outer=root.child(Domain.OUTER, *tags),
            pooled_inner=root.child(Domain.POOLED_INNER, *tags),
            conditional_inner=root.child(Domain.CONDITIONAL_INNER, *tags),
        )


def benchmark_stream(seed: int) -> Stream:
    return Stream(seed, (Domain.BENCHMARK,))


def chunk_bounds(total: int, size: int) -> Iterator[Tuple[int, int, int]]:
    """Yields ``(chunk, start, stop)`` covering ``range(total)`` in chunks."""
    if size < 1:
        raise ValueError("'size' must be at least 1")
    for chunk, start in enumerate(range(0, total, size)):
        yield chunk, start, min(start + size, total)
