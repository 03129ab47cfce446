"""Keyed, reproducible random streams and the sample container shared by all samplers.

Every random quantity in the package is drawn from a :class:`RandomStream`,
which is a seed plus a key path. Children are derived by extending the key, so a
weight row can be regenerated from ``(block, layer, node)`` alone without storing
anything, and the same draw comes out whatever order the blocks run in.
"""
from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigError

Key = Union[int, str]

MAX_SEED = 2**64 - 1


def _key_part(part: Key) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ConfigError(f"stream key parts must be non-negative, got {part}")
    return int(part)


@dataclass(frozen=True)
class RandomStream:
    """A seed plus a key path identifying one counter-based Philox stream."""

    seed: int
    key: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise ConfigError(f"seed must lie in [0, 2**64), got {self.seed}")

    def child(self, *parts: Key) -> "RandomStream":
        """Derive an independent stream by extending the key path."""
        return RandomStream(int(self.seed), self.key + tuple(_key_part(p) for p in parts))

    def spawn(self, n: int) -> list["RandomStream"]:
        """``n`` sibling streams keyed ``0..n-1`` below this one."""
        return [self.child(i) for i in range(n)]

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(seq))

    def derive_seed(self) -> int:
        """A 64-bit seed drawn from this stream's seed sequence, for runs that restart from a bare seed."""
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.key)
        return int(seq.generate_state(1, dtype=np.uint64)[0])

    @property
    def lineage(self) -> Tuple[int, Tuple[int, ...]]:
        return int(self.seed), self.key


def as_stream(rng: Union["RandomStream", int]) -> RandomStream:
    """Accept either a stream or a bare integer seed."""
    if isinstance(rng, RandomStream):
        return rng
    return RandomStream(int(rng))


@dataclass(frozen=True)
class SampleBatch:
    """i.i.d. replicate draws with their provenance.

    ``values`` has shape ``(m,)`` for scalar draws, ``(m, k)`` for k-vectors and
    ``(m, nodes, k)`` for network pre-activations.
    """

    values: np.ndarray
    lineage: Tuple[int, Tuple[int, ...]]
    layer: Optional[int] = None
    widths: Tuple[int, ...] = ()
    nodes: Tuple[int, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def replicates(self) -> int:
        return len(self)

    def node(self, index: int, input_index: int = 0) -> np.ndarray:
        """Draws for one (1-based) node and one input, as a flat array."""
        cube = self._as_cube()
        try:
            pos = self.nodes.index(index) if self.nodes else index - 1
        except ValueError:
            raise KeyError(f"node {index} was not materialized; available: {self.nodes}") from None
        return cube[:, pos, input_index]

    def joint(self, index: int) -> np.ndarray:
        """``(m, k)`` draws of one node across all inputs."""
        cube = self._as_cube()
        pos = self.nodes.index(index) if self.nodes else index - 1
        return cube[:, pos, :]

    def _as_cube(self) -> np.ndarray:
        v = self.values
        if v.ndim == 1:
            return v[:, None, None]
        if v.ndim == 2:
            return v[:, None, :]
        return v

    def rows(self) -> Iterator[Tuple[int, int, int, float]]:
        cube = self._as_cube()
        nodes: Sequence[int] = self.nodes or tuple(range(1, cube.shape[1] + 1))
        for r in range(cube.shape[0]):
            for a, node in enumerate(nodes):
                for s in range(cube.shape[2]):
                    yield r, node, s, float(cube[r, a, s])

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write ``replicate,node,input_index,value`` rows."""
        path = Path(path)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["replicate", "node", "input_index", "value"])
            for r, node, s, value in self.rows():
                writer.writerow([r, node, s, repr(value)])
        return path
