"""Signal primitives: framing, STFT/iSTFT, convolution, integer delay, WAV I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

DEFAULT_SR = 16000


class ConfigurationError(ValueError):
    """Invalid parameters passed to a primitive or generator."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SR

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise ConfigurationError("sample_rate must be positive")
        self.sample_rate = int(self.sample_rate)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def as_samples(x) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _rate_of(x, default=DEFAULT_SR) -> int:
    return x.sample_rate if isinstance(x, Waveform) else default


def sqrt_hann(n: int) -> np.ndarray:
    # periodic Hann: squared window overlap-adds to exactly 1 at hop = n/2
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n))


_WINDOWS = {"sqrt_hann": sqrt_hann}


@dataclass(frozen=True)
class FrameParams:
    frame_len: int = 512
    hop: int = 256
    fft_size: int = 512
    window: str = "sqrt_hann"

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len <= self.fft_size):
            raise ConfigurationError(
                f"need 0 < hop <= frame_len <= fft_size, got "
                f"{self.hop}/{self.frame_len}/{self.fft_size}")
        if self.window not in _WINDOWS:
            raise ConfigurationError(f"unknown window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def analysis_window(self) -> np.ndarray:
        return _WINDOWS[self.window](self.frame_len)

    synthesis_window = analysis_window

    def n_frames(self, n_samples: int) -> int:
        """Frames whose start lies inside the signal, last one zero-padded."""
        if n_samples <= 0:
            return 0
        if n_samples <= self.frame_len:
            return 1
        return 1 + -(-(n_samples - self.frame_len) // self.hop)

    def ola_gain(self) -> np.ndarray:
        """Overlap-added product of analysis and synthesis windows over one hop."""
        w = self.analysis_window() * self.synthesis_window()
        acc = np.zeros(self.hop)
        for start in range(0, self.frame_len, self.hop):
            seg = w[start:start + self.hop]
            acc[:seg.size] += seg
        return acc


@dataclass
class Spectrogram:
    data: np.ndarray  # complex, F x T
    params: FrameParams = field(default_factory=FrameParams)
    sample_rate: int = DEFAULT_SR

    @property
    def n_bins(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.params.fft_size


def frame_signal(x: np.ndarray, params: FrameParams) -> np.ndarray:
    """Return a T x frame_len matrix of (unwindowed) frames, zero-padding the tail."""
    t = params.n_frames(x.size)
    if t == 0:
        return np.zeros((0, params.frame_len))
    total = (t - 1) * params.hop + params.frame_len
    padded = np.zeros(total)
    padded[:x.size] = x
    idx = np.arange(params.frame_len)[None, :] + params.hop * np.arange(t)[:, None]
    return padded[idx]


def stft(wave, params: FrameParams | None = None) -> Spectrogram:
    params = params or FrameParams()
    x = as_samples(wave)
    frames = frame_signal(x, params) * params.analysis_window()
    data = np.fft.rfft(frames, n=params.fft_size, axis=1).T
    return Spectrogram(np.ascontiguousarray(data), params, _rate_of(wave))


def istft(spec: Spectrogram, length: int | None = None) -> Waveform:
    """Weighted overlap-add synthesis; output length (T-1)*hop + frame_len unless given."""
    p = spec.params
    t = spec.n_frames
    if t == 0:
        return Waveform(np.zeros(0 if length is None else length), spec.sample_rate)
    frames = np.fft.irfft(spec.data.T, n=p.fft_size, axis=1)[:, :p.frame_len]
    frames = frames * p.synthesis_window()
    out = np.zeros((t - 1) * p.hop + p.frame_len)
    for i in range(t):
        out[i * p.hop:i * p.hop + p.frame_len] += frames[i]
    if length is not None:
        out = np.pad(out, (0, max(0, length - out.size)))[:length]
    return Waveform(out, spec.sample_rate)


def convolve(x, h, full: bool = False) -> Waveform:
    """Linear convolution, truncated to len(x) unless ``full``."""
    xs = as_samples(x)
    hs = np.asarray(h, dtype=np.float64).reshape(-1)
    if hs.size == 0:
        raise ConfigurationError("impulse response is empty")
    if xs.size == 0:
        y = np.zeros(hs.size - 1 if full else 0)
    elif xs.size * hs.size < 1 << 16:
        y = np.convolve(xs, hs)
    else:
        y = fftconvolve(xs, hs)
    if not full:
        y = y[:xs.size]
    return Waveform(y, _rate_of(x))


def delay(x, k: int) -> Waveform:
    if k < 0:
        raise ConfigurationError("delay must be non-negative")
    xs = as_samples(x)
    y = np.zeros_like(xs)
    if k < xs.size:
        y[k:] = xs[:xs.size - k]
    return Waveform(y, _rate_of(x))


def read_wav(path) -> Waveform:
    sr, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ConfigurationError(f"{path}: only mono audio is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise ConfigurationError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, sr)


def write_wav(path, wave: Waveform, fmt: str = "float32") -> Path:
    path = Path(path)
    if fmt == "float32":
        data = wave.samples.astype(np.float32)
    elif fmt == "int16":
        data = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ConfigurationError(f"unknown WAV format {fmt!r}")
    wavfile.write(str(path), wave.sample_rate, data)
    return path
