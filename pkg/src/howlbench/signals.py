"""Test signals: a speech-like surrogate, white noise, synthetic howls and tones.

The surrogate stands in for a speech corpus when none is supplied. It is built
from syllables of formant-shaped harmonics with a drifting pitch contour, fast
attacks and slow decays, plus occasional fricatives, so that it has the
spectral peakiness and non-stationarity of running speech.
"""

from __future__ import annotations

import numpy as np

from .dsp import DEFAULT_SR, Waveform


def _formant_gain(freq, formants, bandwidths):
    g = np.zeros_like(freq)
    for f, b in zip(formants, bandwidths):
        g += 1.0 / (1.0 + ((freq - f) / (0.5 * b)) ** 2)
    return g


def _envelope(n: int, fs: int, rng) -> np.ndarray:
    attack = max(1, int(rng.uniform(0.015, 0.04) * fs))
    release = max(1, int(rng.uniform(0.03, 0.07) * fs))
    attack = min(attack, n // 3 or 1)
    release = min(release, n // 3 or 1)
    env = np.ones(n)
    env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    env[n - release:] *= 0.5 + 0.5 * np.cos(np.pi * np.arange(release) / release)
    # slow decay across the nucleus
    env *= np.exp(-np.linspace(0.0, rng.uniform(0.5, 1.5), n))
    return env


def _voiced(n: int, fs: int, f0: float, rng) -> np.ndarray:
    t = np.arange(n) / fs
    glide = rng.uniform(-0.2, 0.2)
    jitter = np.cumsum(rng.normal(0.0, 0.004, n // 64 + 2))
    jitter = np.interp(np.arange(n), np.arange(jitter.size) * 64, jitter)
    vib = 0.02 * np.sin(2 * np.pi * rng.uniform(4.0, 7.0) * t + rng.uniform(0, 2 * np.pi))
    f0_track = f0 * (1 + glide * t / max(t[-1], 1e-3)) * (1 + jitter + vib)
    phase = 2 * np.pi * np.cumsum(f0_track) / fs

    f_start = np.array([rng.uniform(300, 850), rng.uniform(900, 2300), rng.uniform(2300, 3300)])
    f_end = f_start * rng.uniform(0.75, 1.3, 3)
    frac = np.linspace(0.0, 1.0, n)[:, None]
    formants = f_start * (1 - frac) + f_end * frac
    bws = np.array([90.0, 140.0, 220.0])

    out = np.zeros(n)
    n_harm = int(0.45 * fs / f0)
    for k in range(1, n_harm + 1):
        fk = k * f0_track
        amp = _formant_gain(fk, formants.T, bws) / k ** 0.7
        amp[fk > 0.45 * fs] = 0.0
        out += amp * np.sin(k * phase)
    out += 0.02 * np.std(out) * rng.standard_normal(n)
    return out


def _fricative(n: int, fs: int, rng) -> np.ndarray:
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    f = np.fft.rfftfreq(n, 1 / fs)
    centre = rng.uniform(2500, 6000)
    spec *= np.exp(-0.5 * ((f - centre) / 1200.0) ** 2)
    return np.fft.irfft(spec, n) * 0.5


def synthetic_speech(seed, duration: float = 4.0, sample_rate: int = DEFAULT_SR,
                     rms: float = 0.05) -> Waveform:
    """Speech-like surrogate of ``duration`` seconds normalized to ``rms``."""
    rng = np.random.default_rng(seed)
    fs = sample_rate
    n_total = int(round(duration * fs))
    out = np.zeros(n_total)
    f0 = rng.uniform(95, 230)
    pos = int(rng.uniform(0.0, 0.03) * fs)
    while pos < n_total:
        n = int(rng.uniform(0.12, 0.30) * fs)
        n = min(n, n_total - pos)
        if n < int(0.03 * fs):
            break
        if rng.random() < 0.8:
            seg = _voiced(n, fs, f0 * rng.uniform(0.9, 1.12), rng)
        else:
            seg = _fricative(n, fs, rng)
        seg = seg / (np.std(seg) + 1e-12) * 10 ** (rng.uniform(-3, 3) / 20)
        out[pos:pos + n] += seg * _envelope(n, fs, rng)
        pos += n + int(rng.uniform(0.03, 0.11) * fs)
    out *= rms / (np.sqrt(np.mean(out ** 2)) + 1e-12)
    return Waveform(out, fs)


def white_noise(seed, duration: float, sample_rate: int = DEFAULT_SR, rms: float = 1.0) -> Waveform:
    rng = np.random.default_rng(seed)
    return Waveform(rms * rng.standard_normal(int(round(duration * sample_rate))), sample_rate)


def tone(freq: float, duration: float, sample_rate: int = DEFAULT_SR, amplitude: float = 0.5,
         growth_db_per_s: float = 0.0) -> Waveform:
    """Sine, optionally with an exponentially growing envelope (a synthetic howl)."""
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    env = 10 ** (growth_db_per_s * t / 20)
    return Waveform(amplitude * env * np.sin(2 * np.pi * freq * t), sample_rate)
