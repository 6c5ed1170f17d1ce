import numpy as np
import pytest


class FixedNoise:
    """Stand-in for RngStream that returns preset values, for unrolled examples."""

    def __init__(self, logistic=0.0, half_logistic=0.0, uniform=0.5, bits=1.0):
        self.values = {"logistic": logistic, "half_logistic": half_logistic,
                       "uniform": uniform, "bernoulli": bits}
        self.seed, self.stream, self.counter = 0, 0, 0

    def _fill(self, kind, size):
        return np.broadcast_to(np.asarray(self.values[kind], dtype=float), size).copy()

    def logistic(self, size=()):
        return self._fill("logistic", size)

    def half_logistic(self, size=()):
        return self._fill("half_logistic", size)

    def uniform(self, size=(), low=0.0, high=1.0):
        return low + (high - low) * self._fill("uniform", size)

    def bernoulli(self, p, size=None):
        shape = np.shape(p) if size is None else size
        return self._fill("bernoulli", shape)

    def recording(self):
        import contextlib

        return contextlib.nullcontext([])


@pytest.fixture
def fixed_noise():
    return FixedNoise
