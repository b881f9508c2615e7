import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from howlbench.dsp import FrameParams, Spectrogram, Waveform, stft
from howlbench.neural import (Architecture, ChecksumError, DeepAHS, DeepAHSNet, FeatureConfig,
                              RecursiveCovariance, ShapeMismatchError, TruncatedPayloadError,
                              UnknownTensorError, WeightsError, covariance_features,
                              deep_filter_apply, extract_features, identity_filter_params,
                              load_weights, random_init, save_weights)
from howlbench.neural.filters import FrameFilter
from howlbench.neural.layers import CausalAttention, conv1d_same, gru_cell
from howlbench.signals import synthetic_speech
from howlbench.suppressors import process_signal

SMALL = Architecture(n_bins=17, hidden=12, attn_dim=8)
FROZEN_CHECKSUM = "3721afbbdec831be453a1585c19351d0b6db9ca59b60d14580eeedbbe20fcd7c"


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="module")
def weights():
    return random_init(seed=0)


# layers against torch

def test_gru_cell_matches_torch(rng):
    cell = torch.nn.GRUCell(10, 7).double()
    x = rng.standard_normal(10)
    h = rng.standard_normal(7)
    ref = cell(torch.from_numpy(x)[None], torch.from_numpy(h)[None])[0].detach().numpy()
    got = gru_cell(x, h, cell.weight_ih.detach().numpy(), cell.weight_hh.detach().numpy(),
                   cell.bias_ih.detach().numpy(), cell.bias_hh.detach().numpy())
    assert np.allclose(got, ref, atol=1e-12)


def test_conv1d_matches_torch(rng):
    w = rng.standard_normal((6, 1, 3))
    b = rng.standard_normal(6)
    x = rng.standard_normal(257)
    ref = torch.nn.functional.conv1d(torch.from_numpy(x)[None, None], torch.from_numpy(w),
                                     torch.from_numpy(b), padding=1)[0].numpy()
    assert np.allclose(conv1d_same(x, w, b), ref, atol=1e-12)


def test_causal_attention_matches_masked_softmax(rng):
    d, k, t = 6, 4, 9
    wq, wk, wv = rng.standard_normal((k, d)), rng.standard_normal((k, d)), rng.standard_normal((d, d))
    bq, bk, bv = rng.standard_normal(k), rng.standard_normal(k), rng.standard_normal(d)
    xs = rng.standard_normal((t, d))
    att = CausalAttention(wq, bq, wk, bk, wv, bv)
    got = np.array([att.step(x) for x in xs])
    q, kk, v = xs @ wq.T + bq, xs @ wk.T + bk, xs @ wv.T + bv
    s = q @ kk.T / np.sqrt(k)
    s[np.triu_indices(t, 1)] = -np.inf
    p = np.exp(s - s.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    assert np.allclose(got, p @ v, atol=1e-12)


# features

def brute_features(y, r, cfg):
    """Every feature group from its definition with explicit loops (running LPS norm)."""
    f, t = y.shape
    a = cfg.lps_decay
    out = np.zeros((t, cfg.dim))

    def ncorr(u, v):
        num = abs(sum(u[i] * np.conj(v[i]) for i in range(len(u))))
        den = np.sqrt(sum(abs(z) ** 2 for z in u) * sum(abs(z) ** 2 for z in v))
        return 0.0 if den <= 1e-8 else num / den

    stats = {}
    for j in range(t):
        row = []
        for name, x in (("y", y), ("r", r)):
            v = np.log(np.abs(x[:, j]) ** 2 + 1e-10)
            if name not in stats:
                mean, var = v.copy(), np.ones(f)
            else:
                mean, var = stats[name]
                diff = v - mean
                mean = mean + (1 - a) * diff
                var = a * var + (1 - a) * diff ** 2
            stats[name] = (mean, var)
            row.extend((v - mean) / np.sqrt(var + 1e-8))
        for x in (y, r):
            row.extend(ncorr(x[:, j], x[:, j - k]) if j - k >= 0 else 0.0
                       for k in range(1, cfg.temporal_lags + 1))
        for x in (y, r):
            row.extend(ncorr(x[:f - b, j], x[b:, j]) for b in range(1, cfg.freq_offsets + 1))
        cov = [y[i, j] * np.conj(r[i, j]) / (abs(y[i, j]) * abs(r[i, j]))
               if abs(y[i, j]) * abs(r[i, j]) > 1e-8 else 0.0 for i in range(f)]
        row.extend(np.real(cov))
        row.extend(np.imag(cov))
        out[j] = row
    return out


def test_features_match_brute_force(rng):
    cfg = FeatureConfig(n_bins=33)
    y, r = crandn(rng, 33, 12), crandn(rng, 33, 12)
    y[:, 5] = 0.0
    got = extract_features(y, r, cfg)
    assert got.shape == (12, cfg.dim)
    assert np.max(np.abs(got - brute_features(y, r, cfg))) < 1e-5


def test_feature_examples(rng):
    cfg = FeatureConfig(n_bins=33)
    lay = cfg.layout()
    y = crandn(rng, 33, 6)
    y[:, 3] = y[:, 2]
    y[4, :] = 0.0
    feats = extract_features(y, y, cfg)
    cov = feats[:, slice(*lay["chancov"])]
    mag = np.hypot(cov[:, :33], cov[:, 33:])
    energy = np.abs(y.T) > 0
    assert np.allclose(mag[energy], 1.0) and np.all(mag[~energy] == 0)
    assert feats[3, lay["tcorr_y"][0]] == pytest.approx(1.0)
    silent = extract_features(np.zeros((33, 4)), np.zeros((33, 4)), cfg)
    assert np.all(np.isfinite(silent))
    assert not np.any(silent[:, 2 * 33:])


def test_utterance_lps_normalization(rng):
    cfg = FeatureConfig(n_bins=33, lps_norm="utterance")
    y = crandn(rng, 33, 50)
    lps = extract_features(y, y, cfg)[:, :33]
    assert np.allclose(lps.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(lps.std(axis=0), 1, atol=1e-6)


# deep filtering

def brute_deep_filter(x, w):
    c, f, t = x.shape
    out = np.zeros((f, t), dtype=complex)
    for fi in range(f):
        for ti in range(t):
            for ci in range(c):
                for tau in range(w.shape[3]):
                    if ti - tau >= 0:
                        out[fi, ti] += w[fi, ti, ci, tau] * x[ci, fi, ti - tau]
    return out


def test_deep_filter_identity_and_delay(rng):
    x = crandn(rng, 3, 9, 7)
    w = np.zeros((9, 7, 3, 3), dtype=complex)
    w[:, :, 0, 0] = 1.0
    assert np.array_equal(deep_filter_apply(x, w), x[0])
    w = np.zeros((9, 7, 1, 3), dtype=complex)
    w[:, :, 0, 1] = 1.0
    out = deep_filter_apply(x[:1], w)
    assert np.array_equal(out[:, 1:], x[0, :, :-1]) and not np.any(out[:, 0])


def test_deep_filter_matches_brute_force(rng):
    x, w = crandn(rng, 3, 11, 8), crandn(rng, 11, 8, 3, 4)
    assert np.max(np.abs(deep_filter_apply(x, w) - brute_deep_filter(x, w))) < 1e-5


def test_frame_filter_matches_batch(rng):
    x, w = crandn(rng, 3, 11, 8), crandn(rng, 11, 8, 3, 4)
    ff = FrameFilter(3, 11, 4)
    stream = np.stack([ff.step(x[:, :, t], w[:, t]) for t in range(8)], axis=1)
    assert np.allclose(stream, deep_filter_apply(x, w), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=3, allow_nan=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False))
def test_deep_filter_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    x1, x2, w = crandn(rng, 3, 5, 6), crandn(rng, 3, 5, 6), crandn(rng, 5, 6, 3, 3)
    lhs = deep_filter_apply(a * x1 + b * x2, w)
    rhs = a * deep_filter_apply(x1, w) + b * deep_filter_apply(x2, w)
    assert np.max(np.abs(lhs - rhs)) < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.99))
def test_recursive_covariance_is_hermitian_psd(seed, smoothing):
    rng = np.random.default_rng(seed)
    cov = RecursiveCovariance(7, 3, smoothing)
    for _ in range(5):
        phi = cov.step(crandn(rng, 7, 3) * rng.uniform(0, 10))
    assert np.allclose(phi, np.conj(np.transpose(phi, (0, 2, 1))))
    assert np.all(np.linalg.eigvalsh(phi) >= -1e-9 * max(1.0, np.abs(phi).max()))
    assert np.all(np.isfinite(covariance_features(phi)))


# full network

def test_forward_shape(weights):
    net = DeepAHSNet(weights.arch, weights.tensors)
    for t in (1, 5):
        y = crandn(np.random.default_rng(t), 257, t)
        out = net.forward(y, y)
        assert out.shape == (257, t) and np.all(np.isfinite(out))
    s = stft(synthetic_speech(1, 0.5))
    assert net.forward(s, s).data.shape == (257, s.n_frames)


def test_forward_is_prefix_causal(weights, rng):
    net = DeepAHSNet(weights.arch, weights.tensors)
    y, r = crandn(rng, 257, 12), crandn(rng, 257, 12)
    short = net.forward(y, r)
    longer = net.forward(np.concatenate([y, crandn(rng, 257, 10)], axis=1),
                         np.concatenate([r, crandn(rng, 257, 10)], axis=1))
    assert np.array_equal(longer[:, :12], short)


def test_identity_filter_weights_reproduce_input(weights, rng):
    params = identity_filter_params(weights.tensors, weights.arch)
    net = DeepAHSNet(weights.arch, params)
    y, r = crandn(rng, 257, 8), crandn(rng, 257, 8)
    out, frames = net.forward(y, r, keep=True)
    assert np.array_equal(out, y)
    for fo in frames:
        for phi in (fo.phi_ss, fo.phi_nn):
            assert np.allclose(phi, np.conj(np.transpose(phi, (0, 2, 1))))
            assert np.all(np.linalg.eigvalsh(phi) >= -1e-9 * max(1.0, np.abs(phi).max()))


def test_small_architecture_causality(rng):
    w = random_init(SMALL, seed=3)
    net = DeepAHSNet(SMALL, w.tensors)
    y = crandn(rng, 17, 20)
    assert np.array_equal(net.forward(y, y)[:, :15], net.forward(y[:, :15], y[:, :15]))


def test_deep_ahs_identity_round_trip(weights):
    ident = type(weights)(weights.arch, identity_filter_params(weights.tensors, weights.arch))
    s = synthetic_speech(2, 1.0).samples
    for mode, delay in (("mic", 0), ("delayed", 1600), ("none", 0)):
        supp = DeepAHS(ident, ref_mode=mode, ref_delay=delay)
        assert supp.latency == 256
        out = process_signal(supp, s)
        assert np.max(np.abs(out[256:-512] - s[256:-512])) < 1e-9


def test_deep_ahs_argument_errors(weights):
    from howlbench.dsp import ConfigurationError
    with pytest.raises(ConfigurationError):
        DeepAHS(weights, ref_mode="delayed", ref_delay=0)
    with pytest.raises(ConfigurationError):
        DeepAHS(weights, ref_mode="future")


# weight files

def test_random_init_is_frozen(weights):
    assert weights.checksum() == FROZEN_CHECKSUM
    assert weights.n_params == 3_545_539
    assert random_init(seed=0).checksum() == FROZEN_CHECKSUM
    assert random_init(seed=1).checksum() != FROZEN_CHECKSUM
    bound = np.sqrt(6.0 / weights.arch.features.dim)
    assert np.abs(weights.tensors["fuse1.weight"]).max() <= bound
    assert not np.any(weights.tensors["gru1.bias_ih"])


def test_save_load_round_trip(weights, tmp_path):
    path = save_weights(weights, tmp_path / "w.bin")
    back = load_weights(path)
    assert back.arch == weights.arch
    assert all(np.array_equal(back.tensors[k], v) for k, v in weights.tensors.items())
    assert back.checksum() == weights.checksum()


def edit_manifest(path, fn):
    import json
    head, _, payload = path.read_bytes().partition(b"\n")
    m = json.loads(head)
    fn(m)
    path.write_bytes(json.dumps(m).encode() + b"\n" + payload)


def test_hidden_size_mismatch(tmp_path):
    w = random_init(SMALL, seed=0)
    path = save_weights(w, tmp_path / "w.bin")
    edit_manifest(path, lambda m: m["architecture"].update(hidden=13))
    with pytest.raises(ShapeMismatchError):
        load_weights(path)


def test_full_size_hidden_mismatch(weights, tmp_path):
    path = save_weights(weights, tmp_path / "w.bin")
    edit_manifest(path, lambda m: m["architecture"].update(hidden=258))
    with pytest.raises(ShapeMismatchError):
        load_weights(path)


def test_truncated_payload(tmp_path):
    path = save_weights(random_init(SMALL), tmp_path / "w.bin")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TruncatedPayloadError):
        load_weights(path)


def test_unknown_tensor(tmp_path):
    path = save_weights(random_init(SMALL), tmp_path / "w.bin")
    edit_manifest(path, lambda m: m["tensors"][0].update(name="fuse0.weight"))
    with pytest.raises(UnknownTensorError):
        load_weights(path)


def test_checksum_and_garbage(tmp_path):
    path = save_weights(random_init(SMALL), tmp_path / "w.bin")
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_weights(path)
    assert isinstance(load_weights(path, verify=False), type(random_init(SMALL)))
    (tmp_path / "bad.bin").write_bytes(b"not json\n")
    with pytest.raises(WeightsError):
        load_weights(tmp_path / "bad.bin")
    for err in (ShapeMismatchError, TruncatedPayloadError, UnknownTensorError, ChecksumError):
        assert issubclass(err, WeightsError)
    assert len({ShapeMismatchError, TruncatedPayloadError, UnknownTensorError, ChecksumError}) == 4
