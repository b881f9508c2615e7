"""Block-processing interface shared by every howling suppressor."""

from __future__ import annotations

import numpy as np

from ..dsp import DEFAULT_SR


class Suppressor:
    """Causal, stateful block processor.

    ``process`` receives one hop of microphone samples ``y``, the matching
    reference block ``r`` (the microphone itself in the closed loop) and the
    loudspeaker block ``x`` that produced the current playback. It returns one
    hop of output. ``latency`` is the algorithmic delay in samples between
    input and output; lookahead is never allowed.
    """

    name = "base"
    lookahead = 0
    latency = 0
    needs_loudspeaker = False

    def __init__(self):
        self.sample_rate = DEFAULT_SR
        self.hop = 256

    def reset(self, sample_rate: int = DEFAULT_SR, hop: int = 256):
        self.sample_rate = sample_rate
        self.hop = hop

    def process(self, y: np.ndarray, r: np.ndarray | None = None,
                x: np.ndarray | None = None) -> np.ndarray:
        raise NotImplementedError

    def events(self) -> list[str]:
        return []


def process_signal(supp: Suppressor, y, r=None, x=None, hop: int = 256,
                   sample_rate: int = DEFAULT_SR) -> np.ndarray:
    """Run ``supp`` open-loop over whole signals; output aligned to the input."""
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    n_blocks = -(-n // hop) + (-(-supp.latency // hop) if supp.latency else 0)
    total = n_blocks * hop

    def padded(a):
        if a is None:
            return None
        out = np.zeros(total)
        a = np.asarray(a, dtype=np.float64)
        out[:a.size] = a
        return out

    yp, rp, xp = padded(y), padded(r), padded(x)
    supp.reset(sample_rate, hop)
    out = np.zeros(total)
    for m in range(n_blocks):
        sl = slice(m * hop, (m + 1) * hop)
        out[sl] = supp.process(yp[sl], None if rp is None else rp[sl],
                               None if xp is None else xp[sl])
    return out[supp.latency:supp.latency + n]
