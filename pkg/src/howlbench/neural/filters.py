"""Complex deep filtering and recursive channel covariance."""

from __future__ import annotations

import numpy as np

from ..dsp import ConfigurationError, Spectrogram


def deep_filter_apply(X, W) -> np.ndarray:
    """S(f, t) = sum_c sum_tau W(f, t, c, tau) X_c(f, t - tau).

    ``X`` is C x F x T (or a list of C spectrograms / F x T arrays), ``W`` is
    F x T x C x taps with tap 0 the current frame. Frames before the start are
    zero.
    """
    if isinstance(X, (list, tuple)):
        X = np.stack([x.data if isinstance(x, Spectrogram) else np.asarray(x) for x in X])
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    W = np.asarray(W)
    c, f, t = X.shape
    if W.shape[:3] != (f, t, c):
        raise ConfigurationError(f"filter shape {W.shape} does not fit input {X.shape}")
    out = np.zeros((f, t), dtype=np.complex128)
    for tau in range(W.shape[3]):
        if tau >= t:
            break
        shifted = np.zeros_like(X, dtype=np.complex128)
        shifted[:, :, tau:] = X[:, :, :t - tau]
        out += np.einsum("ftc,cft->ft", W[:, :, :, tau], shifted)
    return out


class FrameFilter:
    """Streaming counterpart of :func:`deep_filter_apply` for one frame at a time."""

    def __init__(self, n_channels: int, n_bins: int, taps: int):
        self.taps = taps
        self.hist = np.zeros((taps, n_channels, n_bins), dtype=np.complex128)

    def step(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``x`` is C x F (current frame), ``w`` is F x C x taps."""
        self.hist = np.roll(self.hist, 1, axis=0)
        self.hist[0] = x
        # hist[tau] is the frame tau steps back
        return np.einsum("fct,tcf->f", w, self.hist)


class RecursiveCovariance:
    """Phi(f) <- a Phi(f) + (1 - a) v(f) v(f)^H for C-channel vectors v(f)."""

    def __init__(self, n_bins: int, n_channels: int, smoothing: float):
        if not (0 <= smoothing < 1):
            raise ConfigurationError("covariance smoothing must lie in [0, 1)")
        self.a = smoothing
        self.phi = np.zeros((n_bins, n_channels, n_channels), dtype=np.complex128)

    def step(self, v: np.ndarray) -> np.ndarray:
        """``v`` is F x C; returns the updated F x C x C estimate."""
        outer = v[:, :, None] * np.conj(v[:, None, :])
        self.phi = self.a * self.phi + (1 - self.a) * outer
        return self.phi


def covariance_features(phi: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    """Compress F x C x C Hermitian matrices to real features per bin.

    The diagonal becomes log(power + eps); each upper off-diagonal entry is
    normalized to a coherence and split into real and imaginary parts. The
    output is ordered feature-major: (C + C(C-1)) blocks of F values.
    """
    f, c, _ = phi.shape
    diag = np.real(np.einsum("fii->fi", phi))
    parts = [np.log(np.maximum(diag, 0.0) + eps).T]
    iu, ju = np.triu_indices(c, k=1)
    den = np.sqrt(diag[:, iu] * diag[:, ju] + eps)
    coh = phi[:, iu, ju] / den
    parts += [coh.real.T, coh.imag.T]
    return np.concatenate(parts, axis=0).reshape(-1)
