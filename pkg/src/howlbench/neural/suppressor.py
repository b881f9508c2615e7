"""Block-streaming wrapper that runs the network inside the closed loop."""

from __future__ import annotations

import numpy as np

from ..dsp import ConfigurationError, FrameParams
from ..suppressors.base import Suppressor
from .model import DeepAHSNet
from .weights import ModelWeights, load_weights, random_init

REF_MODES = ("mic", "delayed", "none")


class DeepAHS(Suppressor):
    """STFT analysis, one network step per hop, weighted overlap-add synthesis.

    ``ref_mode`` picks the second network input: ``mic`` uses the reference
    block handed over by the engine (the microphone itself), ``delayed`` uses
    the microphone delayed by ``ref_delay`` samples (e.g. an estimated loop
    delay), ``none`` feeds zeros. Latency is frame_len - hop samples.
    """

    name = "deep_ahs"

    def __init__(self, weights: ModelWeights | str | None = None, ref_mode: str = "mic",
                 ref_delay: int = 0, frame: FrameParams | None = None, seed: int = 0):
        super().__init__()
        if ref_mode not in REF_MODES:
            raise ConfigurationError(f"ref_mode must be one of {REF_MODES}")
        if ref_mode == "delayed" and ref_delay <= 0:
            raise ConfigurationError("delayed reference needs a positive ref_delay")
        if weights is None:
            weights = random_init(seed=seed)
        elif not isinstance(weights, ModelWeights):
            weights = load_weights(weights)
        self.weights = weights
        self.net = DeepAHSNet(weights.arch, weights.tensors)
        self.ref_mode = ref_mode
        self.ref_delay = int(ref_delay)
        self.frame = frame or FrameParams()
        if self.frame.n_bins != weights.arch.n_bins:
            raise ConfigurationError("frame size does not match the network's bin count")
        self.latency = self.frame.frame_len - self.frame.hop
        self.name = f"deep_ahs[{ref_mode}]"
        self.reset()

    def reset(self, sample_rate=16000, hop=None):
        hop = self.frame.hop if hop is None else hop
        if hop != self.frame.hop:
            raise ConfigurationError(f"network runs at hop {self.frame.hop}, engine asked for {hop}")
        super().reset(sample_rate, hop)
        n = self.frame.frame_len
        self.win = self.frame.analysis_window()
        self.syn = self.frame.synthesis_window()
        self.ybuf = np.zeros(n)
        self.rbuf = np.zeros(n)
        self.ola = np.zeros(n)
        self.yhist = np.zeros(self.ref_delay + hop)
        self.net.reset()

    def _ref_block(self, y, r):
        if self.ref_mode == "none":
            return np.zeros_like(y)
        if self.ref_mode == "mic":
            return y if r is None else np.asarray(r, dtype=np.float64)
        self.yhist = np.concatenate([self.yhist[y.size:], y])
        return self.yhist[:y.size].copy()

    def process(self, y, r=None, x=None):
        y = np.asarray(y, dtype=np.float64)
        hop, n, nfft = self.frame.hop, self.frame.frame_len, self.frame.fft_size
        if y.size != hop:
            raise ConfigurationError(f"block length must equal hop ({hop})")
        rb = self._ref_block(y, r)
        self.ybuf = np.concatenate([self.ybuf[hop:], y])
        self.rbuf = np.concatenate([self.rbuf[hop:], rb])
        Y = np.fft.rfft(self.ybuf * self.win, n=nfft)
        R = np.fft.rfft(self.rbuf * self.win, n=nfft)
        s = self.net.step(Y, R).s_hat
        frame = np.fft.irfft(s, n=nfft)[:n] * self.syn
        self.ola += frame
        out = self.ola[:hop].copy()
        self.ola = np.concatenate([self.ola[hop:], np.zeros(hop)])
        return out
