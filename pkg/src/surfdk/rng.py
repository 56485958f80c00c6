"""
Counter-based random streams
============================

Every random number used by a simulation is addressable by
``(seed, stream name, block index)``.  A block holds the draws for a fixed
number of consecutive steps and is generated by a Philox bit generator whose
key is derived from the seed and stream name and whose counter is set from the
block index.  The draws for step ``n`` therefore never depend on how many
other steps, streams or workers were evaluated before it.
"""

import zlib

import numpy as np

__all__ = ["stream_key", "block_generator", "NoiseStream"]


def stream_key(seed, name):
    """128-bit Philox key (two uint64 words) for a named substream."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.SeedSequence([int(seed), tag]).generate_state(2, np.uint64)


def block_generator(seed, name, block):
    """A fresh Generator positioned at the start of ``block`` of a stream."""
    counter = np.array([0, 0, int(block), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name), counter=counter))


class NoiseStream:
    """Standard normal draws of a fixed shape, one array per step.

    Parameters
    ----------
    seed : int
        Global run seed.
    name : str
        Substream name, e.g. ``"fvm-noise"``.
    shape : tuple of int
        Shape of the array returned for each step.
    block_steps : int
        Number of steps generated per Philox block.
    """

    def __init__(self, seed, name, shape, block_steps=256):
        self.seed = int(seed)
        self.name = name
        self.shape = tuple(shape)
        self.block_steps = int(block_steps)
        self._block = -1
        self._buffer = None

    def draw(self, step):
        block, offset = divmod(int(step), self.block_steps)
        if block != self._block:
            gen = block_generator(self.seed, self.name, block)
            self._buffer = gen.standard_normal((self.block_steps,) + self.shape)
            self._block = block
        return self._buffer[offset]
