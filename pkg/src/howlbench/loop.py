"""Recurrent closed-loop simulation: the suppressor's output is delayed,
amplified, saturated, passed through the room and added back into the next
microphone block. Also delay estimation and loop-gain bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .acoustics import MixtureBundle, NonlinearitySpec, RoomImpulseResponse, apply_nonlinearity
from .detection import DetectorConfig, HowlingDetector
from .dsp import ConfigurationError, FrameParams, Waveform, as_samples
from .suppressors.base import Suppressor


class StreamingAbort(RuntimeError):
    """The suppressor produced a non-finite block."""

    def __init__(self, frame: int, message: str):
        super().__init__(f"frame {frame}: {message}")
        self.frame = frame


@dataclass
class LoopConfig:
    delta_t: float
    gain: float
    nl: NonlinearitySpec
    rir: RoomImpulseResponse
    frame: FrameParams = field(default_factory=FrameParams)
    max_output_amplitude: float = 1.0

    def __post_init__(self):
        fs = self.rir.sample_rate
        if self.gain < 0:
            raise ConfigurationError("loop gain must be non-negative")
        if self.delay_samples < self.frame.hop:
            raise ConfigurationError(
                f"system delay {self.delta_t}s is shorter than one hop ({self.frame.hop / fs}s)")

    @property
    def sample_rate(self) -> int:
        return self.rir.sample_rate

    @property
    def delay_samples(self) -> int:
        return int(round(self.delta_t * self.rir.sample_rate))

    def loudspeaker_nl(self) -> NonlinearitySpec:
        # a relative clip level refers to the loudspeaker's full scale in a live loop
        if self.nl.kind == "hard_clip" and self.nl.ref_level is None:
            return replace(self.nl, ref_level=self.max_output_amplitude)
        return self.nl

    def peak_loop_gain(self) -> tuple[float, float]:
        """Peak of |G * NL'(0) * H(f)| and the frequency (Hz) where it occurs."""
        h = self.rir.frequency_response()
        mag = self.gain * self.nl.small_signal_slope() * np.abs(h)
        k = int(np.argmax(mag))
        return float(mag[k]), k * self.sample_rate / (2 * (h.size - 1))


def gain_for_margin(rir: RoomImpulseResponse, nl: NonlinearitySpec, margin: float) -> float:
    """Amplifier gain that puts the loop's peak magnitude response at ``margin``."""
    peak = float(np.max(np.abs(rir.frequency_response()))) * nl.small_signal_slope()
    if peak <= 0:
        raise ConfigurationError("acoustic path has no energy")
    return margin / peak


def loop_config_for(bundle: MixtureBundle, gain: float | None = None,
                    frame: FrameParams | None = None) -> LoopConfig:
    """Closed loop whose one-time playback reproduces ``bundle``'s playback exactly."""
    spec = bundle.spec
    return LoopConfig(delta_t=spec.delta_t, gain=spec.gain if gain is None else gain,
                      nl=bundle.nl, rir=bundle.effective_rir(), frame=frame or FrameParams(),
                      max_output_amplitude=spec.max_output_amplitude)


@dataclass
class StreamReport:
    s_hat: Waveform
    microphone_trace: Waveform
    loudspeaker: Waveform
    frame_rms: np.ndarray
    frame_papr_db: np.ndarray
    peak_bins: np.ndarray
    howling_flags: np.ndarray
    suppressor: str = ""
    events: list[str] = field(default_factory=list)

    def rms_ratio(self, window: float = 0.5, signal: str = "microphone_trace") -> float:
        """RMS of the final ``window`` seconds over RMS of the first ``window`` seconds."""
        w = getattr(self, signal)
        k = int(window * w.sample_rate)
        head, tail = w.samples[:k], w.samples[-k:]
        head_rms = np.sqrt(np.mean(head ** 2))
        tail_rms = np.sqrt(np.mean(tail ** 2))
        return float(tail_rms / head_rms) if head_rms > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "suppressor": self.suppressor,
            "n_samples": len(self.s_hat),
            "sample_rate": self.s_hat.sample_rate,
            "frame_rms": [float(v) for v in self.frame_rms],
            "frame_papr_db": [float(v) for v in self.frame_papr_db],
            "peak_bins": [int(v) for v in self.peak_bins],
            "howling_flags": [bool(v) for v in self.howling_flags],
            "events": list(self.events),
        }


def run_streaming(cfg: LoopConfig, supp: Suppressor, s, n=None,
                  detector: DetectorConfig | None = None) -> StreamReport:
    """Frame-by-frame closed loop.

    For every hop ``m`` the loudspeaker block is the suppressor output from
    ``delta_t`` earlier (minus the suppressor's own latency), scaled by the
    gain and clamped to the loudspeaker's full scale. Its playback is added to
    ``s + n`` to form microphone block ``m``, which (with the reference
    ``r = y``) is handed to the suppressor.
    """
    s = as_samples(s)
    n = np.zeros_like(s) if n is None else as_samples(n)
    if n.size != s.size:
        raise ConfigurationError("target and noise lengths differ")
    fs = cfg.sample_rate
    hop = cfg.frame.hop
    lag = cfg.delay_samples - supp.latency
    if lag < hop:
        raise ConfigurationError(
            f"suppressor latency {supp.latency} leaves less than one hop of loop delay")

    length = s.size
    n_blocks = -(-length // hop) + (-(-supp.latency // hop) if supp.latency else 0)
    total = n_blocks * hop
    taps = cfg.rir.taps
    nl = cfg.loudspeaker_nl()
    ceiling = cfg.max_output_amplitude

    src = np.zeros(total)
    src[:length] = s + n
    mic = np.zeros(total)
    out = np.zeros(total)
    spk = np.zeros(total)
    playback = np.zeros(total + taps.size + hop)

    window = cfg.frame.analysis_window()
    analysis = np.zeros(cfg.frame.frame_len)
    det = HowlingDetector(cfg.frame, detector, fs)
    rms = np.zeros(n_blocks)
    papr = np.zeros(n_blocks)
    peaks = np.zeros(n_blocks, dtype=np.int64)
    flags = np.zeros(n_blocks, dtype=bool)

    supp.reset(fs, hop)
    for m in range(n_blocks):
        lo, hi = m * hop, (m + 1) * hop
        # loudspeaker block from past output only (lag >= hop)
        a, b = lo - lag, hi - lag
        if b > 0:
            seg = np.zeros(hop)
            seg[max(0, -a):] = out[max(a, 0):b]
            x_blk = np.clip(cfg.gain * seg, -ceiling, ceiling)
            spk[lo:hi] = x_blk
            if np.any(x_blk):
                d_blk = fftconvolve(apply_nonlinearity(x_blk, nl).samples, taps)
                playback[lo:lo + d_blk.size] += d_blk
        y_blk = src[lo:hi] + playback[lo:hi]
        mic[lo:hi] = y_blk

        o = supp.process(y_blk, y_blk, spk[lo:hi])
        o = np.asarray(o, dtype=np.float64)
        if o.shape != (hop,):
            raise StreamingAbort(m, f"suppressor returned shape {o.shape}, expected ({hop},)")
        if not np.all(np.isfinite(o)):
            raise StreamingAbort(m, f"suppressor {supp.name!r} emitted non-finite samples")
        out[lo:hi] = o

        analysis = np.concatenate([analysis[hop:], y_blk])
        dec = det.update(np.fft.rfft(analysis * window, n=cfg.frame.fft_size))
        rms[m] = np.sqrt(np.mean(y_blk ** 2))
        papr[m], peaks[m], flags[m] = dec.papr_db, dec.peak_bin, dec.flag

    s_hat = out[supp.latency:supp.latency + length]
    return StreamReport(
        s_hat=Waveform(s_hat, fs), microphone_trace=Waveform(mic[:length], fs),
        loudspeaker=Waveform(spk[:length], fs), frame_rms=rms, frame_papr_db=papr,
        peak_bins=peaks, howling_flags=flags, suppressor=supp.name, events=supp.events())


def gcc_phat_self(y, min_lag: int, max_lag: int, beta: float = 0.7) -> np.ndarray:
    """PHAT-beta weighted correlation between the tail of ``y`` and its own history.

    Entry ``i`` is the correlation at lag ``min_lag + i``, formed from
    y[t] * y[t - lag] over t >= max_lag. The cross-spectrum is divided by its
    magnitude to the power ``beta``: beta = 1 is the classic phase transform,
    which gives bins holding nothing but noise as much say as the bins the
    echo lives in; a partial transform keeps some of the magnitude weighting.
    """
    y = as_samples(y)
    n = y.size
    if n <= max_lag + 1:
        raise ConfigurationError("signal shorter than the largest lag searched")
    a = y[max_lag:]
    nfft = 1 << int(np.ceil(np.log2(n + a.size)))
    spec = np.conj(np.fft.rfft(a, nfft)) * np.fft.rfft(y, nfft)
    mag = np.abs(spec)
    spec = np.where(mag > 1e-12 * (mag.max() + 1e-300), spec / np.maximum(mag, 1e-300) ** beta, 0.0)
    cc = np.fft.irfft(spec, nfft)
    # cc[j] pairs y[max_lag + i] with y[i + j], i.e. lag = max_lag - j
    lags = np.arange(min_lag, max_lag + 1)
    return cc[max_lag - lags]


def _peak(ys: np.ndarray, min_lag: int, max_lag: int, beta: float) -> tuple[int, float]:
    """Best lag and its height in robust standard deviations of the correlation."""
    cc = gcc_phat_self(ys, min_lag, max_lag, beta)
    k = int(np.argmax(cc))
    spread = 1.4826 * np.median(np.abs(cc - np.median(cc)))
    return min_lag + k, (float(cc[k] / spread) if spread > 0 else 0.0)


def estimate_delay(y, probe_window: float | None = None, sample_rate: int | None = None,
                   search: tuple[float, float] = (0.05, 0.6), threshold: float = 8.0,
                   strong: float = 11.0, beta: float = 0.7) -> float | None:
    """Loop delay (seconds) from the self-similarity of a microphone recording.

    The correlation peak is scored in robust standard deviations. Speech is
    self-similar over syllable-length lags, so a moderate peak is accepted
    only if the first and second halves of the recording (each with a full
    search range) put their own peaks at the same lag within 2 ms. A peak of
    ``strong`` or more is accepted on its own. Otherwise returns None.
    """
    fs = sample_rate or (y.sample_rate if isinstance(y, Waveform) else 16000)
    ys = as_samples(y)
    if probe_window is not None:
        ys = ys[:int(round(probe_window * fs))]
    min_lag = int(round(search[0] * fs))
    max_lag = int(round(search[1] * fs))
    if ys.size <= max_lag + 1 or not np.any(ys):
        return None
    lag, z = _peak(ys, min_lag, max_lag, beta)
    if z >= strong:
        return lag / fs
    if z < threshold:
        return None
    half = ys.size // 2
    tol = int(round(0.002 * fs))
    for part in (ys[:half + max_lag], ys[max(0, half - max_lag):]):
        if part.size <= max_lag + 1 or not np.any(part):
            return None
        if abs(_peak(part, min_lag, max_lag, beta)[0] - lag) > tol:
            return None
    return lag / fs
