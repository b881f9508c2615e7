"""Three-part recurrent suppressor network, evaluated one frame at a time.

Part 1: fused features -> GRU -> two frequency-axis convolution heads giving
causal complex filters for the microphone (playback suppression, Y~) and the
reference (playback estimate, R~).

Part 2: fused {part-1 input, LPS(Y~), LPS(R~)} -> GRU -> per channel of
(Y, Y~, R~) two convolution heads giving complex masks for a speech and a
playback/noise component; their recursive covariances Phi_SS and Phi_NN are
compressed into features.

Part 3: fused covariance features -> causal self-attention -> GRU -> dense
head producing the three-channel enhancement filter W applied to (Y, Y~, R~).

Running every frame through :meth:`DeepAHSNet.step` makes the whole network
causal by construction; :meth:`forward` is that loop over an utterance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..dsp import ConfigurationError, Spectrogram
from .features import FeatureConfig, FeatureExtractor, RunningNorm, log_power
from .filters import FrameFilter, RecursiveCovariance, covariance_features
from .layers import CausalAttention, conv1d_same, gru_cell, linear

CHANNELS = ("y", "y_tilde", "r_tilde")


@dataclass(frozen=True)
class Architecture:
    n_bins: int = 257
    hidden: int = 257
    temporal_lags: int = 5
    freq_offsets: int = 4
    conv_kernel: int = 3
    inter_taps: int = 3
    enh_taps: int = 1
    attn_dim: int = 64
    cov_smoothing: float = 0.9
    lps_decay: float = 0.99
    version: str = "1"

    def __post_init__(self):
        if self.conv_kernel % 2 != 1:
            raise ConfigurationError("conv_kernel must be odd")
        if min(self.hidden, self.inter_taps, self.enh_taps, self.attn_dim) < 1:
            raise ConfigurationError("layer sizes must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def features(self) -> FeatureConfig:
        return FeatureConfig(self.n_bins, self.temporal_lags, self.freq_offsets,
                             "running", self.lps_decay)

    @property
    def n_cov_features(self) -> int:
        c = len(CHANNELS)
        return 2 * self.n_bins * (c + c * (c - 1))

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        """Every parameter tensor in storage order."""
        h, f, k = self.hidden, self.n_bins, self.conv_kernel
        shapes: dict[str, tuple[int, ...]] = {}

        def gru(name, n_in):
            shapes[f"{name}.weight_ih"] = (3 * h, n_in)
            shapes[f"{name}.weight_hh"] = (3 * h, h)
            shapes[f"{name}.bias_ih"] = (3 * h,)
            shapes[f"{name}.bias_hh"] = (3 * h,)

        def dense(name, n_out, n_in):
            shapes[f"{name}.weight"] = (n_out, n_in)
            shapes[f"{name}.bias"] = (n_out,)

        def conv(name, n_out):
            shapes[f"{name}.weight"] = (n_out, 1, k)
            shapes[f"{name}.bias"] = (n_out,)

        dense("fuse1", h, self.features.dim)
        gru("gru1", h)
        conv("head_y", 2 * self.inter_taps)
        conv("head_r", 2 * self.inter_taps)
        dense("fuse2", h, h + 2 * f)
        gru("gru2", h)
        for ch in CHANNELS:
            conv(f"est_{ch}.speech", 2)
            conv(f"est_{ch}.noise", 2)
        dense("fuse3", h, self.n_cov_features)
        dense("attn.query", self.attn_dim, h)
        dense("attn.key", self.attn_dim, h)
        dense("attn.value", h, h)
        gru("gru3", 2 * h)
        dense("filter", 2 * len(CHANNELS) * self.enh_taps * f, h)
        return shapes


def _complex_taps(out: np.ndarray, taps: int, n_bins: int) -> np.ndarray:
    """Conv head output (2*taps x L) -> F x taps complex, cropping/padding L to F."""
    re, im = out[:taps], out[taps:]
    w = (re + 1j * im).T
    if w.shape[0] >= n_bins:
        return w[:n_bins]
    return np.pad(w, ((0, n_bins - w.shape[0]), (0, 0)))


@dataclass
class FrameOutput:
    s_hat: np.ndarray
    y_tilde: np.ndarray
    r_tilde: np.ndarray
    W: np.ndarray
    phi_ss: np.ndarray
    phi_nn: np.ndarray


class DeepAHSNet:
    """Inference-only network. ``params`` maps tensor names to float arrays."""

    def __init__(self, arch: Architecture, params: dict[str, np.ndarray]):
        expected = arch.tensor_shapes()
        missing = set(expected) - set(params)
        if missing:
            raise ConfigurationError(f"missing tensors: {sorted(missing)}")
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise ConfigurationError(
                    f"tensor {name} has shape {params[name].shape}, expected {shape}")
        self.arch = arch
        self.p = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.reset()

    def reset(self):
        a, p = self.arch, self.p
        f, h = a.n_bins, a.hidden
        self.feat = FeatureExtractor(a.features)
        self.norm_yt = RunningNorm(f, a.lps_decay)
        self.norm_rt = RunningNorm(f, a.lps_decay)
        self.h1 = np.zeros(h)
        self.h2 = np.zeros(h)
        self.h3 = np.zeros(h)
        self.filt_y = FrameFilter(1, f, a.inter_taps)
        self.filt_r = FrameFilter(1, f, a.inter_taps)
        self.filt_w = FrameFilter(len(CHANNELS), f, a.enh_taps)
        self.cov_ss = RecursiveCovariance(f, len(CHANNELS), a.cov_smoothing)
        self.cov_nn = RecursiveCovariance(f, len(CHANNELS), a.cov_smoothing)
        self.attn = CausalAttention(p["attn.query.weight"], p["attn.query.bias"],
                                    p["attn.key.weight"], p["attn.key.bias"],
                                    p["attn.value.weight"], p["attn.value.bias"])

    def _gru(self, name, x, h):
        p = self.p
        return gru_cell(x, h, p[f"{name}.weight_ih"], p[f"{name}.weight_hh"],
                        p[f"{name}.bias_ih"], p[f"{name}.bias_hh"])

    def _conv(self, name, x):
        return conv1d_same(x, self.p[f"{name}.weight"], self.p[f"{name}.bias"])

    def _dense(self, name, x):
        return linear(x, self.p[f"{name}.weight"], self.p[f"{name}.bias"])

    def step(self, y: np.ndarray, r: np.ndarray) -> FrameOutput:
        a = self.arch
        f = a.n_bins

        # part 1: playback suppression and playback estimation filters
        z1 = self._dense("fuse1", self.feat.step(y, r))
        self.h1 = self._gru("gru1", z1, self.h1)
        wy = _complex_taps(self._conv("head_y", self.h1), a.inter_taps, f)
        wr = _complex_taps(self._conv("head_r", self.h1), a.inter_taps, f)
        y_t = self.filt_y.step(y[None], wy[:, None, :])
        r_t = self.filt_r.step(r[None], wr[:, None, :])

        # part 2: speech and playback/noise components per channel
        z2 = self._dense("fuse2", np.concatenate([
            z1, self.norm_yt(log_power(y_t)), self.norm_rt(log_power(r_t))]))
        self.h2 = self._gru("gru2", z2, self.h2)
        chans = np.stack([y, y_t, r_t], axis=1)  # F x C
        sp = np.empty_like(chans)
        no = np.empty_like(chans)
        for i, ch in enumerate(CHANNELS):
            ms = _complex_taps(self._conv(f"est_{ch}.speech", self.h2), 1, f)[:, 0]
            mn = _complex_taps(self._conv(f"est_{ch}.noise", self.h2), 1, f)[:, 0]
            sp[:, i] = ms * chans[:, i]
            no[:, i] = mn * chans[:, i]
        phi_ss = self.cov_ss.step(sp)
        phi_nn = self.cov_nn.step(no)

        # part 3: self-attentive recurrent enhancement filter
        z3 = self._dense("fuse3", np.concatenate([covariance_features(phi_ss),
                                                  covariance_features(phi_nn)]))
        ctx = self.attn.step(z3)
        self.h3 = self._gru("gru3", np.concatenate([z3, ctx]), self.h3)
        raw = self._dense("filter", self.h3).reshape(2, f, len(CHANNELS), a.enh_taps)
        W = raw[0] + 1j * raw[1]
        s_hat = self.filt_w.step(chans.T, W)
        return FrameOutput(s_hat, y_t, r_t, W, phi_ss.copy(), phi_nn.copy())

    def forward(self, Y, R, keep: bool = False):
        """Run an utterance. Returns S_hat (F x T), plus per-frame outputs if ``keep``."""
        y = Y.data if isinstance(Y, Spectrogram) else np.asarray(Y)
        r = R.data if isinstance(R, Spectrogram) else np.asarray(R)
        if y.shape != r.shape or y.shape[0] != self.arch.n_bins:
            raise ConfigurationError(
                f"inputs must both be {self.arch.n_bins} x T, got {y.shape} and {r.shape}")
        self.reset()
        out = np.zeros(y.shape, dtype=np.complex128)
        frames = []
        for t in range(y.shape[1]):
            fo = self.step(y[:, t], r[:, t])
            out[:, t] = fo.s_hat
            if keep:
                frames.append(fo)
        if isinstance(Y, Spectrogram):
            out = Spectrogram(out, Y.params, Y.sample_rate)
        return (out, frames) if keep else out


def identity_filter_params(params: dict[str, np.ndarray], arch: Architecture,
                           channel: int = 0) -> dict[str, np.ndarray]:
    """Copy of ``params`` whose filter head emits W = 1 on ``channel`` tap 0, else 0.

    The head is affine, W = A h + b, so zeroing A and setting b to the wanted
    constant makes W independent of everything upstream.
    """
    out = dict(params)
    f, c, taps = arch.n_bins, len(CHANNELS), arch.enh_taps
    out["filter.weight"] = np.zeros_like(params["filter.weight"])
    bias = np.zeros((2, f, c, taps))
    bias[0, :, channel, 0] = 1.0
    out["filter.bias"] = bias.reshape(-1).astype(params["filter.bias"].dtype)
    return out
