"""Input features for the neural suppressor.

Per frame the feature vector is the concatenation of

* normalized log-power spectra of the microphone Y and reference R,
* temporal correlation: |<X_t, X_{t-k}>| / (||X_t|| ||X_{t-k}||) for k = 1..K,
  for X = Y then X = R,
* frequency correlation: the same normalized magnitude between the frame and
  its copy shifted up by b bins, b = 1..B, for Y then R,
* channel covariance Y(f) conj(R(f)) / (|Y(f)| |R(f)|) as real and imaginary
  parts.

Any correlation whose normalizer is zero is defined as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dsp import ConfigurationError, Spectrogram

LPS_EPS = 1e-10
NORM_EPS = 1e-8


@dataclass(frozen=True)
class FeatureConfig:
    n_bins: int = 257
    temporal_lags: int = 5
    freq_offsets: int = 4
    lps_norm: str = "running"      # "running" (causal) or "utterance"
    lps_decay: float = 0.99        # per-frame forgetting of the running statistics

    def __post_init__(self):
        if self.lps_norm not in ("running", "utterance"):
            raise ConfigurationError(f"unknown LPS normalization {self.lps_norm!r}")
        if self.temporal_lags < 0 or self.freq_offsets < 0:
            raise ConfigurationError("lag counts must be non-negative")
        if not (0 <= self.lps_decay < 1):
            raise ConfigurationError("lps_decay must lie in [0, 1)")

    @property
    def dim(self) -> int:
        f = self.n_bins
        return 2 * f + 2 * self.temporal_lags + 2 * self.freq_offsets + 2 * f

    def layout(self) -> dict[str, tuple[int, int]]:
        """Name -> (start, stop) of each feature group inside the vector."""
        f, k, b = self.n_bins, self.temporal_lags, self.freq_offsets
        edges = {}
        pos = 0
        for name, size in [("lps_y", f), ("lps_r", f), ("tcorr_y", k), ("tcorr_r", k),
                           ("fcorr_y", b), ("fcorr_r", b), ("chancov", 2 * f)]:
            edges[name] = (pos, pos + size)
            pos += size
        return edges


def log_power(x: np.ndarray) -> np.ndarray:
    return np.log(np.abs(x) ** 2 + LPS_EPS)


def _ncorr(a: np.ndarray, b: np.ndarray) -> float:
    den = np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)
    if den <= NORM_EPS:
        return 0.0
    return float(abs(np.vdot(b, a)) / den)


def temporal_correlation(frame: np.ndarray, past: list[np.ndarray], lags: int) -> np.ndarray:
    """Normalized correlation with the frames 1..lags back (``past[-1]`` is t-1)."""
    out = np.zeros(lags)
    for k in range(1, lags + 1):
        if k <= len(past):
            out[k - 1] = _ncorr(frame, past[-k])
    return out


def frequency_correlation(frame: np.ndarray, offsets: int) -> np.ndarray:
    out = np.zeros(offsets)
    for b in range(1, offsets + 1):
        if b < frame.size:
            out[b - 1] = _ncorr(frame[:-b], frame[b:])
    return out


def channel_covariance(y: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Normalized cross-spectrum per bin, zero where either channel is silent."""
    den = np.abs(y) * np.abs(r)
    ok = den > NORM_EPS
    c = np.zeros(y.shape, dtype=np.complex128)
    c[ok] = y[ok] * np.conj(r[ok]) / den[ok]
    return c


class RunningNorm:
    """Exponentially weighted per-bin mean/variance normalizer.

    The first frame seeds the mean (so it normalizes to zero) and a unit
    variance; afterwards both statistics forget with ``decay`` per frame and
    each frame is normalized with statistics that include it.
    """

    def __init__(self, n: int, decay: float):
        self.n = n
        self.decay = decay
        self.reset()

    def reset(self):
        self.mean = None
        self.var = np.ones(self.n)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        a = self.decay
        if self.mean is None:
            self.mean = v.copy()
        else:
            diff = v - self.mean
            self.mean = self.mean + (1 - a) * diff
            self.var = a * self.var + (1 - a) * diff * diff
        return (v - self.mean) / np.sqrt(self.var + NORM_EPS)


class FeatureExtractor:
    """Frame-by-frame (causal) feature computation with running LPS statistics."""

    def __init__(self, cfg: FeatureConfig | None = None):
        self.cfg = cfg or FeatureConfig()
        if self.cfg.lps_norm != "running":
            raise ConfigurationError("streaming features need running LPS normalization")
        self.reset()

    def reset(self):
        c = self.cfg
        self.norm_y = RunningNorm(c.n_bins, c.lps_decay)
        self.norm_r = RunningNorm(c.n_bins, c.lps_decay)
        self.past_y: list[np.ndarray] = []
        self.past_r: list[np.ndarray] = []

    def step(self, y: np.ndarray, r: np.ndarray) -> np.ndarray:
        c = self.cfg
        y = np.asarray(y, dtype=np.complex128)
        r = np.asarray(r, dtype=np.complex128)
        if y.shape != (c.n_bins,) or r.shape != (c.n_bins,):
            raise ConfigurationError(f"expected frames of {c.n_bins} bins")
        cov = channel_covariance(y, r)
        feat = np.concatenate([
            self.norm_y(log_power(y)), self.norm_r(log_power(r)),
            temporal_correlation(y, self.past_y, c.temporal_lags),
            temporal_correlation(r, self.past_r, c.temporal_lags),
            frequency_correlation(y, c.freq_offsets), frequency_correlation(r, c.freq_offsets),
            cov.real, cov.imag,
        ])
        if c.temporal_lags:
            self.past_y = (self.past_y + [y])[-c.temporal_lags:]
            self.past_r = (self.past_r + [r])[-c.temporal_lags:]
        return feat


def _utterance_norm(lps: np.ndarray) -> np.ndarray:
    # lps is F x T; per-bin statistics over the whole utterance
    mu = lps.mean(axis=1, keepdims=True)
    sd = lps.std(axis=1, keepdims=True)
    return (lps - mu) / np.sqrt(sd * sd + NORM_EPS)


def extract_features(Y, R, cfg: FeatureConfig | None = None) -> np.ndarray:
    """T x D feature matrix for spectrograms ``Y`` and ``R`` (F x T each)."""
    cfg = cfg or FeatureConfig()
    y = Y.data if isinstance(Y, Spectrogram) else np.asarray(Y)
    r = R.data if isinstance(R, Spectrogram) else np.asarray(R)
    if y.shape != r.shape:
        raise ConfigurationError(f"Y and R differ in shape: {y.shape} vs {r.shape}")
    if y.shape[0] != cfg.n_bins:
        raise ConfigurationError(f"expected {cfg.n_bins} bins, got {y.shape[0]}")
    if cfg.lps_norm == "running":
        ext = FeatureExtractor(cfg)
        feats = [ext.step(y[:, t], r[:, t]) for t in range(y.shape[1])]
        return np.array(feats).reshape(y.shape[1], cfg.dim)

    out = np.zeros((y.shape[1], cfg.dim))
    out[:, :cfg.n_bins] = _utterance_norm(log_power(y)).T
    out[:, cfg.n_bins:2 * cfg.n_bins] = _utterance_norm(log_power(r)).T
    # the remaining groups are frame-local, reuse the streaming code for them
    ext = FeatureExtractor(FeatureConfig(cfg.n_bins, cfg.temporal_lags, cfg.freq_offsets))
    for t in range(y.shape[1]):
        out[t, 2 * cfg.n_bins:] = ext.step(y[:, t], r[:, t])[2 * cfg.n_bins:]
    return out
