"""Trivial processors: passthrough, oracle, silence and a peak limiter."""

from __future__ import annotations

import numpy as np

from ..dsp import as_samples
from .base import Suppressor


class Passthrough(Suppressor):
    """No howling suppression at all."""

    name = "passthrough"

    def process(self, y, r=None, x=None):
        return np.array(y, dtype=np.float64, copy=True)


class Zero(Suppressor):
    name = "zero"

    def process(self, y, r=None, x=None):
        return np.zeros(len(y))


class Oracle(Suppressor):
    """Emits the true target, block by block (the teacher signal)."""

    name = "oracle"

    def __init__(self, target):
        super().__init__()
        self.target = as_samples(target)
        self.pos = 0

    def reset(self, sample_rate=16000, hop=256):
        super().reset(sample_rate, hop)
        self.pos = 0

    def process(self, y, r=None, x=None):
        n = len(y)
        out = np.zeros(n)
        chunk = self.target[self.pos:self.pos + n]
        out[:chunk.size] = chunk
        self.pos += n
        return out


class GainLimiter(Suppressor):
    """Block peak limiter: gain drops instantly above ``threshold``, recovers slowly."""

    name = "gain_limiter"

    def __init__(self, threshold: float = 0.25, release_db_per_s: float = 6.0):
        super().__init__()
        self.threshold = threshold
        self.release_db_per_s = release_db_per_s
        self.gain = 1.0

    def reset(self, sample_rate=16000, hop=256):
        super().reset(sample_rate, hop)
        self.gain = 1.0

    def process(self, y, r=None, x=None):
        y = np.asarray(y, dtype=np.float64)
        peak = float(np.max(np.abs(y))) if y.size else 0.0
        step = 10 ** (self.release_db_per_s * len(y) / self.sample_rate / 20)
        target = min(1.0, self.threshold / peak) if peak > 0 else 1.0
        self.gain = min(target, self.gain * step)
        return self.gain * y
