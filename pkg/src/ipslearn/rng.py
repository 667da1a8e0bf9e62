"""Counter-based random number streams.

Every consumer of randomness owns an independent Philox stream identified by
a (seed, stream_id) pair.  Identical pairs reproduce identical sequences
bit-for-bit; distinct pairs are statistically independent.  Trajectories use
one stream per particle (stream_id = particle index) plus a reserved stream
for parameter initialisation, so results do not depend on how many particles
or replicates run alongside each other.
"""

from __future__ import annotations

import math

import numpy as np

# Stream id reserved for drawing initial parameter estimates; particle
# stream ids are always < 2**32, so there is no collision.
PARAM_INIT_STREAM = 2**63

GENERATOR_NAME = "numpy-philox4x64"

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


class InvalidConfiguration(ValueError):
    """Raised when an operation is called with inadmissible arguments."""


class RngStream:
    """An independent Gaussian increment stream keyed by (seed, stream_id).

    The underlying generator is Philox (counter-based); the key is the
    (seed, stream_id) pair, so streams with distinct ids never overlap.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise InvalidConfiguration("seed and stream_id must be non-negative")
        self.seed = seed & _MASK64
        self.stream_id = stream_id & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=_U64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def standard_normals(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniforms(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def replicate_seed(base_seed: int, replicate: int) -> int:
    """Seed ladder: replicate r uses base_seed + r (mod 2**64)."""
    return (base_seed + replicate) & _MASK64


def particle_streams(seed: int, n_particles: int, first: int = 0) -> list[RngStream]:
    """One stream per particle, stream_id = particle index."""
    return [RngStream(seed, first + i) for i in range(n_particles)]


def generate_increments(rng: RngStream, n: int, d: int, dt: float) -> np.ndarray:
    """Draw an n-by-d matrix of i.i.d. Normal(0, dt) Brownian increments.

    Deterministic given (seed, stream_id, position in the stream).
    """
    if dt <= 0:
        raise InvalidConfiguration(f"dt must be positive, got {dt}")
    if n < 1 or d < 1:
        raise InvalidConfiguration("n and d must be >= 1")
    return rng.standard_normals((n, d)) * math.sqrt(dt)


class BlockedNoise:
    """Per-step (S, d) Gaussian increments from S streams, drawn in blocks.

    Drawing a block of steps per stream amortises generator-call overhead;
    the per-stream value sequence is identical to drawing one step at a time.
    """

    def __init__(self, streams: list[RngStream], d: int, dt: float, block: int = 512):
        if dt <= 0:
            raise InvalidConfiguration(f"dt must be positive, got {dt}")
        self.streams = streams
        self.d = d
        self.sqrt_dt = math.sqrt(dt)
        self.block = block
        self._buf = np.empty((len(streams), block, d))
        self._pos = block  # force a refill on first use

    def initial_positions(self) -> np.ndarray:
        """Draw (S, d) standard normals, one d-vector per stream.

        Consumed before any increments so the initial condition and the
        noise path come from the same per-particle stream.
        """
        out = np.empty((len(self.streams), self.d))
        for k, s in enumerate(self.streams):
            out[k] = s.standard_normals(self.d)
        return out

    def next_step(self) -> np.ndarray:
        if self._pos == self.block:
            for k, s in enumerate(self.streams):
                self._buf[k] = s.standard_normals((self.block, self.d))
            self._buf *= self.sqrt_dt
            self._pos = 0
        out = self._buf[:, self._pos, :].copy()
        self._pos += 1
        return out
