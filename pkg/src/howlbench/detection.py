"""Howling detection from frame spectra.

A frame is flagged when one of its strongest spectral peaks stands
``papr_db`` above the frame's mean power, the same sinusoid has been present
in most of the last ``persist_frames`` frames, and its level has not fallen
over that window. "Same sinusoid" is judged from the phase-vocoder
instantaneous frequency in a +-1 bin neighbourhood rather than from the raw
bin index: a saturated feedback loop settles into a limit cycle where several
modes trade places from one loop trip to the next, so the strongest bin
jumps around while each mode's frequency stays put. Neighbouring loop modes
a few Hz apart share one bin and beat, which scatters the per-frame estimate
by up to about 10 Hz, hence the tolerance. The window is long (about 1 s) so
that runs of voiced syllables with a steady pitch do not qualify.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .dsp import DEFAULT_SR, FrameParams, as_samples, stft


@dataclass(frozen=True)
class DetectorConfig:
    papr_db: float = 10.0          # peak must exceed the frame's mean bin power by this much
    persist_frames: int = 60       # length of the persistence window (about 1 s)
    persist_fraction: float = 0.7  # share of the window in which the sinusoid must be present
    freq_tol_hz: float = 12.0      # instantaneous-frequency match tolerance
    presence_db: float = -5.0      # level (re frame mean) for a past frame to count as present
    drop_tol_db: float = 3.0       # largest allowed net fall in level across the window
    bin_tolerance: int = 1
    n_peaks: int = 3               # strongest qualifying local maxima examined per frame
    floor_db: float = -100.0       # frames with mean power below this are never flagged


@dataclass
class FrameDecision:
    flag: bool
    papr_db: float
    peak_bin: int
    howling_bins: list[int]
    howling_freqs: list[float]


class HowlingDetector:
    """Streaming detector fed one complex half-spectrum per hop."""

    def __init__(self, frame: FrameParams | None = None, config: DetectorConfig | None = None,
                 sample_rate: int = DEFAULT_SR):
        self.frame = frame or FrameParams()
        self.config = config or DetectorConfig()
        self.sample_rate = sample_rate
        self.n_bins = self.frame.n_bins
        k = np.arange(self.n_bins)
        # expected phase advance of bin k over one hop
        self._omega = 2 * np.pi * k * self.frame.hop / self.frame.fft_size
        self._bin_hz = sample_rate / self.frame.fft_size
        self.reset()

    def reset(self):
        p = self.config.persist_frames
        self.prev = None
        self.freqs = deque(maxlen=p)
        self.rel_db = deque(maxlen=p)
        self.level_db = deque(maxlen=p)

    def instantaneous_frequency(self, spec: np.ndarray) -> np.ndarray:
        k = np.arange(self.n_bins)
        if self.prev is None:
            return k * self._bin_hz
        dphi = np.angle(spec * np.conj(self.prev)) - self._omega
        dev = np.angle(np.exp(1j * dphi))
        return (k + dev * self.frame.fft_size / (2 * np.pi * self.frame.hop)) * self._bin_hz

    def update(self, spec: np.ndarray) -> FrameDecision:
        cfg = self.config
        spec = np.asarray(spec, dtype=np.complex128)
        power = np.abs(spec) ** 2
        mean = float(np.mean(power))
        finst = self.instantaneous_frequency(spec)
        self.prev = spec
        level = 10 * np.log10(np.maximum(power, 1e-300))
        rel = level - 10 * np.log10(max(mean, 1e-300))
        if mean <= 10 ** (cfg.floor_db / 10):
            # a silent frame is never evidence that a sinusoid persists
            rel = np.full_like(rel, -np.inf)
        self.freqs.append(finst)
        self.rel_db.append(rel)
        self.level_db.append(level)
        peak_bin = int(np.argmax(power))
        if mean <= 10 ** (cfg.floor_db / 10):
            return FrameDecision(False, 0.0, peak_bin, [], [])

        local_max = np.ones(power.size, dtype=bool)
        local_max[1:] &= power[1:] >= power[:-1]
        local_max[:-1] &= power[:-1] >= power[1:]
        cand = np.flatnonzero(local_max & (rel > cfg.papr_db))
        cand = cand[np.argsort(power[cand])[::-1][:cfg.n_peaks]]

        bins, hz = [], []
        if len(self.freqs) == cfg.persist_frames:
            fh = np.array(self.freqs)
            rh = np.array(self.rel_db)
            first = self.level_db[0]
            need = cfg.persist_fraction * cfg.persist_frames - 1e-9
            w = cfg.bin_tolerance
            for b in cand:
                lo, hi = max(0, b - w), min(self.n_bins, b + w + 1)
                present = (np.abs(fh[:, lo:hi] - finst[b]) < cfg.freq_tol_hz) \
                    & (rh[:, lo:hi] > cfg.presence_db)
                if np.count_nonzero(present.any(axis=1)) < need:
                    continue
                if level[b] < first[lo:hi].max() - cfg.drop_tol_db:
                    continue
                bins.append(int(b))
                hz.append(float(finst[b]))
        return FrameDecision(bool(bins), float(rel[peak_bin]), peak_bin, bins, hz)


def howling_flags(wave, frame: FrameParams | None = None,
                  config: DetectorConfig | None = None) -> np.ndarray:
    frame = frame or FrameParams()
    fs = getattr(wave, "sample_rate", DEFAULT_SR)
    if as_samples(wave).size == 0:
        return np.zeros(0, dtype=bool)
    spec = stft(wave, frame).data.T
    det = HowlingDetector(frame, config, fs)
    return np.array([det.update(s).flag for s in spec], dtype=bool)


def howling_score(wave, frame: FrameParams | None = None,
                  config: DetectorConfig | None = None) -> float:
    """Fraction of frames flagged as howling."""
    flags = howling_flags(wave, frame, config)
    return float(flags.mean()) if flags.size else 0.0
