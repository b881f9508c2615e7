"""Signal-level metrics: SI-SDR and the composite training loss."""

from __future__ import annotations

import numpy as np

from .dsp import ConfigurationError, Spectrogram, as_samples

SI_SDR_CAP = 60.0


def si_sdr(est, ref, cap: float = SI_SDR_CAP) -> float:
    """Scale-invariant SDR in dB, clipped to [-cap, cap].

    alpha = <est, ref> / ||ref||^2 and the result is
    10 log10(||alpha ref||^2 / ||alpha ref - est||^2). No mean removal.
    """
    e = as_samples(est)
    r = as_samples(ref)
    if e.shape != r.shape:
        raise ConfigurationError(f"length mismatch: {e.size} vs {r.size}")
    rr = float(np.dot(r, r))
    if rr == 0.0:
        raise ConfigurationError("SI-SDR undefined reference: reference is all zeros")
    alpha = float(np.dot(e, r)) / rr
    target = alpha * r
    err = target - e
    num = float(np.dot(target, target))
    den = float(np.dot(err, err))
    if den <= num * 10 ** (-cap / 10):
        return cap
    if num <= den * 10 ** (-cap / 10):
        return -cap
    return float(10 * np.log10(num / den))


def composite_loss(s_hat, s, S_hat, S, lam: float = 10000.0) -> float:
    """-SI-SDR(s_hat, s) + lam * mean(| |S_hat| - |S| |)."""
    a = S_hat.data if isinstance(S_hat, Spectrogram) else np.asarray(S_hat)
    b = S.data if isinstance(S, Spectrogram) else np.asarray(S)
    if a.shape != b.shape:
        raise ConfigurationError(f"spectrogram shapes differ: {a.shape} vs {b.shape}")
    mae = float(np.mean(np.abs(np.abs(a) - np.abs(b)))) if a.size else 0.0
    return -si_sdr(s_hat, s) + lam * mae
