"""Counter-based random streams and the noise samplers built on them.

Streams are backed by Philox-4x64 keyed with ``(seed, stream)``.  The
``counter`` of an :class:`RngStream` counts consumed 64-bit words, so the
value drawn at a given position is a pure function of
``(seed, stream, counter)`` and does not depend on how the work was split.
Every noise kind consumes exactly one word per draw; this keeps draws of
different kinds coupled when taken from the same position (a half-logistic
draw is the logistic draw at that position divided by two).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

_WORDS_PER_BLOCK = 4
_TWO_M53 = 2.0**-53
_UINT64 = 2**64

NOISE_KINDS = ("logistic", "half_logistic", "uniform", "bernoulli")


@dataclass(frozen=True)
class NoiseDraw:
    kind: str
    value: float
    provenance: tuple[int, int, int]


class RngStream:
    """Deterministic stream of random words addressed by ``(seed, stream, counter)``."""

    def __init__(self, seed: int, stream: int = 0, counter: int = 0):
        if not (0 <= seed < _UINT64 and 0 <= stream < _UINT64 and counter >= 0):
            raise ValueError("seed and stream must be 64-bit unsigned, counter >= 0")
        self.seed = int(seed)
        self.stream = int(stream)
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        block, offset = divmod(int(counter), _WORDS_PER_BLOCK)
        if block:
            self._bitgen.advance(block)
        if offset:
            self._bitgen.random_raw(offset)
        self.counter = int(counter)
        self._tape = None

    def spawn(self, stream: int) -> "RngStream":
        """Fresh stream with the same seed and a different stream index."""
        return RngStream(self.seed, stream)

    @contextlib.contextmanager
    def recording(self):
        """Collect a :class:`NoiseDraw` for every value drawn inside the block."""
        tape: list[NoiseDraw] = []
        previous, self._tape = self._tape, tape
        try:
            yield tape
        finally:
            self._tape = previous

    def _words(self, size) -> np.ndarray:
        n = int(np.prod(size, dtype=np.int64))
        raw = self._bitgen.random_raw(n) if n else np.empty(0, dtype=np.uint64)
        self.counter += n
        return np.asarray(raw, dtype=np.uint64).reshape(size)

    def _open_uniform(self, size) -> np.ndarray:
        # 53-bit mantissa offset by half a step: strictly inside (0, 1).
        return ((self._words(size) >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53

    def _record(self, kind: str, start: int, values: np.ndarray) -> None:
        if self._tape is None:
            return
        for k, v in enumerate(np.ravel(values)):
            self._tape.append(NoiseDraw(kind, float(v), (self.seed, self.stream, start + k)))

    def uniform(self, size=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        start = self.counter
        u = self._open_uniform(size)
        out = np.minimum(low + (high - low) * u, high)
        self._record("uniform", start, out)
        return out

    def logistic(self, size=()) -> np.ndarray:
        start = self.counter
        u = self._open_uniform(size)
        z = np.log(u) - np.log1p(-u)
        self._record("logistic", start, z)
        return z

    def half_logistic(self, size=()) -> np.ndarray:
        start = self.counter
        u = self._open_uniform(size)
        d = 0.5 * (np.log(u) - np.log1p(-u))
        self._record("half_logistic", start, d)
        return d

    def bernoulli(self, p, size=None) -> np.ndarray:
        """0/1 draws with ``P(1) = p``; ``size`` defaults to the shape of ``p``."""
        p = np.asarray(p, dtype=float)
        shape = p.shape if size is None else size
        start = self.counter
        bits = (self._open_uniform(shape) < p).astype(np.float64)
        self._record("bernoulli", start, bits)
        return bits


def sample_noise(kind: str, rng: RngStream, *, low: float = 0.0, high: float = 1.0,
                 p: float = 0.5) -> NoiseDraw:
    """Draw a single value of the given noise kind and return it with provenance."""
    position = (rng.seed, rng.stream, rng.counter)
    if kind == "logistic":
        value = rng.logistic()
    elif kind == "half_logistic":
        value = rng.half_logistic()
    elif kind == "uniform":
        value = rng.uniform(low=low, high=high)
    elif kind == "bernoulli":
        value = rng.bernoulli(p)
    else:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    return NoiseDraw(kind, float(value), position)
