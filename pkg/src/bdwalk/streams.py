"""Counter-based random streams keyed by (seed, role, item).

Every Monte Carlo item (replica, passage, trajectory) owns a private Philox
stream: the 128-bit key is derived from (seed, role) and the item id is
placed in a high word of the 256-bit counter, so streams never overlap and
results do not depend on scheduling or batch layout.  Uniforms are produced
in fixed-size blocks; block b of item j starts at counter (b * BLOCK/4, 0,
j, 0).  Both the scalar and the vectorised engines consume the same blocks,
which makes their outputs bit-identical.
"""

from __future__ import annotations

import numpy as np

BLOCK = 512  # uniforms per refill; part of the stream contract
_DRAWS_PER_COUNTER = 4  # philox4x64 yields four 64-bit words per counter step

ROLE_TRAJECTORY = 0
ROLE_HITTING = 1
ROLE_EXPLOSION = 2
ROLE_IMPLOSION = 3
ROLE_EXIT = 4
ROLE_SAMPLING = 5


def stream_key(seed: int, role: int) -> np.ndarray:
    """Philox key for a (seed, role) pair via the SeedSequence hash."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(role),))
    return ss.generate_state(2, np.uint64)


def uniform_block(key: np.ndarray, item: int, block_index: int) -> np.ndarray:
    """Block ``block_index`` of item ``item``'s uniform stream (length BLOCK)."""
    counter = np.array(
        [block_index * (BLOCK // _DRAWS_PER_COUNTER), 0, item, 0], dtype=np.uint64
    )
    bg = np.random.Philox(key=key, counter=counter)
    return np.random.Generator(bg).random(BLOCK)


class ReplicaStream:
    """Scalar-friendly view of one item's uniform stream."""

    def __init__(self, seed: int, *, role: int = ROLE_TRAJECTORY, item: int = 0):
        self.seed = int(seed)
        self.role = int(role)
        self.item = int(item)
        self._key = stream_key(seed, role)
        self._block_index = 0
        self._buf = uniform_block(self._key, self.item, 0)
        self._pos = 0

    def next_uniforms(self, k: int) -> np.ndarray:
        """Next ``k`` uniforms (k <= BLOCK), refilling block-aligned."""
        if k > BLOCK:
            raise ValueError(f"cannot draw more than {BLOCK} uniforms at once")
        if self._pos + k > BLOCK:
            self._block_index += 1
            self._buf = uniform_block(self._key, self.item, self._block_index)
            self._pos = 0
        out = self._buf[self._pos : self._pos + k]
        self._pos += k
        return out

    def next_uniform(self) -> float:
        return float(self.next_uniforms(1)[0])


class GeneratorStream:
    """Adapter exposing ``next_uniforms`` on top of a numpy Generator."""

    def __init__(self, generator: np.random.Generator):
        self.generator = generator

    def next_uniforms(self, k: int) -> np.ndarray:
        return self.generator.random(k)

    def next_uniform(self) -> float:
        return float(self.generator.random())


def as_stream(rng) -> ReplicaStream | GeneratorStream:
    """Accept either a stream or a bare numpy Generator."""
    if hasattr(rng, "next_uniforms"):
        return rng
    if isinstance(rng, np.random.Generator):
        return GeneratorStream(rng)
    raise TypeError(f"cannot use {type(rng).__name__} as a random stream")
