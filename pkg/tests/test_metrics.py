import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from howlbench.dsp import ConfigurationError, Spectrogram, Waveform, stft
from howlbench.metrics import SI_SDR_CAP, composite_loss, si_sdr


def orthogonal_pair(rng, n, ratio):
    """ref and noise with <noise, ref> = 0 and ||noise||^2 = ||ref||^2 / ratio."""
    ref = rng.standard_normal(n)
    noise = rng.standard_normal(n)
    noise -= np.dot(noise, ref) / np.dot(ref, ref) * ref
    noise *= np.sqrt(np.dot(ref, ref) / ratio / np.dot(noise, noise))
    return ref, noise


def test_perfect_match_hits_cap(rng):
    x = rng.standard_normal(1000)
    assert si_sdr(x, x) == SI_SDR_CAP == 60.0
    assert si_sdr(2 * x, x) == 60.0
    assert si_sdr(-x, x) == 60.0


def test_orthogonal_noise_closed_form(rng):
    for ratio_db in (10.0, 0.0, -20.0, 35.0):
        ref, noise = orthogonal_pair(rng, 16000, 10 ** (ratio_db / 10))
        assert si_sdr(ref + noise, ref) == pytest.approx(ratio_db, abs=0.01)


def test_independent_estimate_is_floored(rng):
    x = rng.standard_normal(4000)
    ref, noise = orthogonal_pair(rng, 4000, 1e-7)
    assert si_sdr(noise, ref) == -60.0
    assert -60.0 <= si_sdr(rng.standard_normal(4000), x) < -10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.booleans())
def test_scale_invariance(seed, alpha, negate):
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal(2000)
    est = ref + rng.uniform(0.05, 3) * rng.standard_normal(2000)
    a = -alpha if negate else alpha
    assert abs(si_sdr(a * est, ref) - si_sdr(est, ref)) <= 1e-9


def test_accepts_waveforms(rng):
    x = rng.standard_normal(500)
    y = x + 0.1 * rng.standard_normal(500)
    assert si_sdr(Waveform(y, 16000), Waveform(x, 16000)) == si_sdr(y, x)


def test_errors(rng):
    with pytest.raises(ConfigurationError, match="undefined reference"):
        si_sdr(rng.standard_normal(10), np.zeros(10))
    with pytest.raises(ConfigurationError):
        si_sdr(np.ones(10), np.ones(11))
    s = np.ones((3, 4))
    with pytest.raises(ConfigurationError):
        composite_loss(np.ones(10), np.ones(10), s, np.ones((3, 5)))
    with pytest.raises(ConfigurationError, match="undefined reference"):
        composite_loss(np.ones(10), np.zeros(10), s, s)


def test_loss_examples(rng):
    s = rng.standard_normal(8000)
    S = stft(Waveform(s, 16000))
    assert composite_loss(s, s, S, S) == -60.0
    s_hat = s + 0.3 * rng.standard_normal(8000)
    S_hat = stft(Waveform(s_hat, 16000))
    assert composite_loss(s_hat, s, S_hat, S, lam=0.0) == -si_sdr(s_hat, s)
    # magnitudes shifted by exactly 1e-4 per bin, phases kept
    mag = np.abs(S.data) + 1e-4
    shifted = Spectrogram(mag * np.exp(1j * np.angle(S.data)), S.params, S.sample_rate)
    assert composite_loss(s, s, shifted, S) == pytest.approx(-59.0, abs=1e-9)


def test_loss_default_weight(rng):
    a = rng.standard_normal((5, 6)) + 0j
    s = rng.standard_normal(100)
    assert composite_loss(s, s, a + 0.5, a + 0.5) == -60.0
    b = np.abs(a) + 2e-4
    assert composite_loss(s, s, b, np.abs(a)) == pytest.approx(-60.0 + 2.0, abs=1e-9)
