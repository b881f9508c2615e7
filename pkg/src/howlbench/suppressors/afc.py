"""Adaptive feedback cancellation: identify the loudspeaker-to-microphone
path from the loudspeaker signal and subtract its estimate from the
microphone. Two identifiers are provided, sample-by-sample NLMS in the time domain and a
partitioned-block frequency-domain Kalman filter."""

from __future__ import annotations

import numpy as np

from ..dsp import ConfigurationError
from .base import Suppressor


def misalignment_db(h_hat, h) -> float:
    """20 log10(||h_hat - h|| / ||h||), zero-padding the shorter vector."""
    h_hat = np.asarray(h_hat, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n = max(h_hat.size, h.size)
    a = np.pad(h_hat, (0, n - h_hat.size))
    b = np.pad(h, (0, n - h.size))
    return float(20 * np.log10(np.linalg.norm(a - b) / np.linalg.norm(b)))


class AFCNLMS(Suppressor):
    """Sample-by-sample NLMS with ``n_taps`` coefficients.

    For each sample, e = y - h^T x_t and h <- h + mu x_t e / (||x_t||^2 + L eps),
    where x_t holds the last L = ``n_taps`` loudspeaker samples and the
    regressor energy is tracked recursively. ``eps`` is a per-tap power floor:
    an absolute regularizer lets the first faint samples after a silent
    loudspeaker kick the coefficients far off.
    """

    name = "afc_nlms"
    needs_loudspeaker = True

    def __init__(self, n_taps: int = 2048, mu: float = 0.2, eps: float = 1e-6):
        super().__init__()
        if n_taps < 1:
            raise ConfigurationError("n_taps must be positive")
        if mu < 0:
            raise ConfigurationError("step size must be non-negative")
        self.n_taps = n_taps
        self.mu = mu
        self.eps = eps
        self.reset()

    def reset(self, sample_rate=16000, hop=256):
        super().reset(sample_rate, hop)
        self.h = np.zeros(self.n_taps)
        self.hist = np.zeros(self.n_taps - 1)

    def set_taps(self, h):
        h = np.asarray(h, dtype=np.float64)
        self.h = np.zeros(self.n_taps)
        self.h[:min(h.size, self.n_taps)] = h[:self.n_taps]

    @property
    def taps(self) -> np.ndarray:
        return self.h.copy()

    def process(self, y, r=None, x=None):
        y = np.asarray(y, dtype=np.float64)
        if x is None:
            raise ConfigurationError("AFC needs the loudspeaker signal")
        x = np.asarray(x, dtype=np.float64)
        L = self.n_taps
        full = np.concatenate([self.hist, x])
        rev = full[::-1].copy()
        n = y.size
        e = np.empty(n)
        h = self.h
        # x_t = rev[n-1-t : n-1-t+L], newest sample first
        energy = float(np.dot(full[:L - 1], full[:L - 1]))
        reg = L * self.eps
        for t in range(n):
            new = full[L - 1 + t]
            energy += new * new
            xt = rev[n - 1 - t:n - 1 - t + L]
            e[t] = y[t] - np.dot(h, xt)
            if self.mu > 0 and energy > 0:
                h += (self.mu * e[t] / (energy + reg)) * xt
            old = full[t]
            energy = max(energy - old * old, 0.0)
        self.h = h
        self.hist = full[full.size - (L - 1):] if L > 1 else full[:0]
        return e


class AFCKalman(Suppressor):
    """Partitioned-block frequency-domain Kalman filter (diagonal state model).

    The path is split into P partitions of B = hop taps, each held as an
    overlap-save spectrum W_p of length 2B. Per bin the state follows
    W <- A W + noise, observed through the current loudspeaker spectra, and
    the error covariance is kept diagonal. Output is the prediction residual
    of the current block, so there is no added latency.
    """

    name = "afc_kalman"
    needs_loudspeaker = True

    def __init__(self, n_taps: int = 2048, forgetting: float = 0.9995, p_init: float = 1.0,
                 process_noise: float = 0.0, psd_smoothing: float = 0.5,
                 psd_floor: float = 1e-12, cov_floor: float = 0.0):
        super().__init__()
        if n_taps < 1:
            raise ConfigurationError("n_taps must be positive")
        if not (0 < forgetting <= 1):
            raise ConfigurationError("forgetting factor must lie in (0, 1]")
        self.n_taps = n_taps
        self.forgetting = forgetting
        self.p_init = p_init
        self.process_noise = process_noise
        self.psd_smoothing = psd_smoothing
        self.psd_floor = psd_floor
        self.cov_floor = cov_floor
        self.reset()

    def reset(self, sample_rate=16000, hop=256):
        super().reset(sample_rate, hop)
        self.parts = -(-self.n_taps // hop)
        nb = hop + 1
        self.W = np.zeros((self.parts, nb), dtype=np.complex128)
        self.P = np.full((self.parts, nb), float(self.p_init))
        self.X = np.zeros((self.parts, nb), dtype=np.complex128)
        self.psd = np.zeros(nb)
        self.xprev = np.zeros(hop)
        self.log: list[str] = []
        self.count = 0

    def set_taps(self, h):
        h = np.asarray(h, dtype=np.float64)[:self.parts * self.hop]
        h = np.pad(h, (0, self.parts * self.hop - h.size)).reshape(self.parts, self.hop)
        self.W = np.fft.rfft(np.concatenate([h, np.zeros_like(h)], axis=1), axis=1)

    @property
    def taps(self) -> np.ndarray:
        w = np.fft.irfft(self.W, n=2 * self.hop, axis=1)[:, :self.hop]
        return w.reshape(-1)[:self.n_taps]

    def process(self, y, r=None, x=None):
        y = np.asarray(y, dtype=np.float64)
        if x is None:
            raise ConfigurationError("AFC needs the loudspeaker signal")
        x = np.asarray(x, dtype=np.float64)
        b = self.hop
        if y.size != b or x.size != b:
            raise ConfigurationError(f"block length must equal hop ({b})")
        a = self.forgetting

        self.X = np.roll(self.X, 1, axis=0)
        self.X[0] = np.fft.rfft(np.concatenate([self.xprev, x]))
        self.xprev = x.copy()

        # time update (prediction)
        self.W = a * self.W
        self.P = a * a * self.P + (1 - a * a) * np.abs(self.W) ** 2 + self.process_noise

        y_hat = np.fft.irfft(np.sum(self.X * self.W, axis=0), n=2 * b)[b:]
        e = y - y_hat
        E = np.fft.rfft(np.concatenate([np.zeros(b), e]))

        # measurement update
        lam = self.psd_smoothing
        self.psd = np.maximum(lam * self.psd + (1 - lam) * np.abs(E) ** 2, self.psd_floor)
        x2 = np.abs(self.X) ** 2
        denom = np.sum(x2 * self.P, axis=0) + 2 * self.psd
        mu = self.P / denom
        grad = np.fft.irfft(mu * np.conj(self.X) * E, n=2 * b, axis=1)
        grad[:, b:] = 0.0
        self.W = self.W + np.fft.rfft(grad, axis=1)
        self.P = (1 - 0.5 * mu * x2) * self.P

        bad = ~np.isfinite(self.P) | (self.P < self.cov_floor)
        if np.any(bad):
            self.P[bad] = max(self.cov_floor, 0.0)
            self.log.append(f"frame {self.count}: covariance floored in {int(bad.sum())} cells")
        self.count += 1
        return e

    def events(self):
        return list(self.log)
