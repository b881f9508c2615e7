"""Notch-filter howling suppression: detect sustained narrowband peaks on the
microphone spectrum and cut each one with a peaking-EQ biquad."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import sosfilt

from ..detection import DetectorConfig, HowlingDetector
from ..dsp import ConfigurationError, FrameParams
from .base import Suppressor

# a notch carves a hole in the signal for hundreds of frames, so placement
# uses a tight frequency match: a false notch on a vowel costs more than a
# howl caught a few frames late
NOTCH_DETECTOR = DetectorConfig(persist_frames=20, persist_fraction=0.9, freq_tol_hz=4.0,
                                presence_db=-10.0)


@dataclass
class Notch:
    center: float          # Hz
    bandwidth: float = 50.0
    depth_db: float = 30.0
    age: int = 0           # frames since last re-detection
    zi: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def sos(self, sample_rate: int) -> np.ndarray:
        return notch_sos(self.center, self.bandwidth, self.depth_db, sample_rate)


def notch_sos(center: float, bandwidth: float, depth_db: float, sample_rate: int) -> np.ndarray:
    """Peaking-EQ cut of ``depth_db`` at ``center`` as one second-order section.

    The gain is -depth_db at the centre and unity far away; ``bandwidth`` is
    the width Q = center / bandwidth of the classic audio-EQ cookbook filter.
    """
    nyq = sample_rate / 2
    if not (0 < center < nyq):
        raise ConfigurationError(f"notch centre {center} Hz outside (0, {nyq})")
    if bandwidth <= 0 or depth_db < 0:
        raise ConfigurationError("notch bandwidth must be positive and depth non-negative")
    a_lin = 10 ** (-depth_db / 40)
    w0 = 2 * np.pi * center / sample_rate
    alpha = np.sin(w0) * bandwidth / (2 * center)
    cw = np.cos(w0)
    b = np.array([1 + alpha * a_lin, -2 * cw, 1 - alpha * a_lin])
    a = np.array([1 + alpha / a_lin, -2 * cw, 1 - alpha / a_lin])
    return np.concatenate([b / a[0], a / a[0]])


def sos_response(sos: np.ndarray, freqs, sample_rate: int) -> np.ndarray:
    """Complex response of a cascade of sections evaluated at ``freqs`` (Hz)."""
    sos = np.atleast_2d(sos)
    z = np.exp(-1j * 2 * np.pi * np.asarray(freqs, dtype=np.float64) / sample_rate)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return h


def pole_radius(sos: np.ndarray) -> float:
    """Largest pole magnitude of a cascade (< 1 means stable)."""
    sos = np.atleast_2d(sos)
    if sos.shape[0] == 0:
        return 0.0
    return float(max(np.max(np.abs(np.roots(row[3:]))) for row in sos))


class NotchBank:
    def __init__(self, max_notches: int = 8):
        if max_notches < 1:
            raise ConfigurationError("max_notches must be at least 1")
        self.max_notches = max_notches
        self.notches: list[Notch] = []

    def __len__(self):
        return len(self.notches)

    def find(self, freq: float) -> Notch | None:
        for n in self.notches:
            if abs(n.center - freq) <= 0.5 * n.bandwidth:
                return n
        return None

    def sos(self, sample_rate: int) -> np.ndarray:
        if not self.notches:
            return np.zeros((0, 6))
        return np.array([n.sos(sample_rate) for n in self.notches])

    def response(self, freqs, sample_rate: int) -> np.ndarray:
        if not self.notches:
            return np.ones(np.shape(freqs), dtype=complex)
        return sos_response(self.sos(sample_rate), freqs, sample_rate)


class NotchAHS(Suppressor):
    """Adaptive notch bank driven by the howling detector.

    Each frame the detector looks at the last ``frame_len`` microphone samples.
    A detected howl that no active notch covers gets a new notch at its
    instantaneous frequency; a covered one refreshes that notch's age. Notches
    not refreshed for ``release_frames`` frames are removed, and when the bank
    is full the stalest notch makes room.
    """

    name = "notch"

    def __init__(self, bandwidth: float = 50.0, depth_db: float = 30.0, max_notches: int = 8,
                 release_frames: int = 300, detector: DetectorConfig | None = None,
                 frame: FrameParams | None = None):
        super().__init__()
        self.bandwidth = bandwidth
        self.depth_db = depth_db
        self.max_notches = max_notches
        self.release_frames = release_frames
        self.detector_config = detector or NOTCH_DETECTOR
        self.frame = frame or FrameParams()
        self.reset()

    def reset(self, sample_rate=16000, hop=256):
        super().reset(sample_rate, hop)
        self.frame = FrameParams(self.frame.frame_len, hop, self.frame.fft_size, self.frame.window)
        self.bank = NotchBank(self.max_notches)
        self.detector = HowlingDetector(self.frame, self.detector_config, sample_rate)
        self.buf = np.zeros(self.frame.frame_len)
        self.win = self.frame.analysis_window()
        self.count = 0
        self.log: list[str] = []

    def _place(self, freq: float):
        hit = self.bank.find(freq)
        if hit is not None:
            hit.age = 0
            return
        if len(self.bank) >= self.bank.max_notches:
            old = max(self.bank.notches, key=lambda n: n.age)
            self.bank.notches.remove(old)
            self.log.append(f"frame {self.count}: notch budget exhausted, evicted {old.center:.1f} Hz")
        self.bank.notches.append(Notch(freq, self.bandwidth, self.depth_db))
        self.log.append(f"frame {self.count}: notch at {freq:.1f} Hz")

    def process(self, y, r=None, x=None):
        y = np.asarray(y, dtype=np.float64)
        self.buf = np.concatenate([self.buf[y.size:], y])
        dec = self.detector.update(np.fft.rfft(self.buf * self.win, n=self.frame.fft_size))
        for n in self.bank.notches:
            n.age += 1
        nyq = self.sample_rate / 2
        for f in dec.howling_freqs:
            if 0.5 * self.bandwidth < f < nyq - 0.5 * self.bandwidth:
                self._place(f)
        for n in list(self.bank.notches):
            if n.age > self.release_frames:
                self.bank.notches.remove(n)
                self.log.append(f"frame {self.count}: released {n.center:.1f} Hz")
        self.count += 1

        out = y
        for n in self.bank.notches:
            out, n.zi = sosfilt(n.sos(self.sample_rate)[None, :], out, zi=n.zi[None, :])
            n.zi = n.zi[0]
        return np.array(out, dtype=np.float64)

    def events(self):
        return list(self.log)
