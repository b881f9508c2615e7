"""Acoustic world: room impulse responses, loudspeaker nonlinearity, playback
and the one-time-playback training mixtures."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import butter, sosfilt

from .dsp import ConfigurationError, DEFAULT_SR, Waveform, as_samples, convolve, delay

SPEED_OF_SOUND = 343.0
MIN_CALIBRATED_RT60 = 0.1
CALIBRATION_STEPS = 4


@dataclass(frozen=True)
class RirGeometry:
    room: tuple[float, float, float]
    source: tuple[float, float, float]
    mic: tuple[float, float, float]
    rt60: float

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(np.subtract(self.source, self.mic)))


@dataclass
class RoomImpulseResponse:
    taps: np.ndarray
    sample_rate: int = DEFAULT_SR
    geometry: RirGeometry | None = None

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64).reshape(-1)
        if self.taps.size == 0:
            raise ConfigurationError("impulse response is empty")

    def __len__(self):
        return self.taps.size

    def scaled(self, factor: float) -> "RoomImpulseResponse":
        return RoomImpulseResponse(self.taps * factor, self.sample_rate, self.geometry)

    def frequency_response(self, n_fft: int | None = None) -> np.ndarray:
        n = n_fft or max(1 << 14, 1 << int(np.ceil(np.log2(self.taps.size))))
        return np.fft.rfft(self.taps, n=n)

    @classmethod
    def impulse(cls, lag: int = 0, gain: float = 1.0, sample_rate: int = DEFAULT_SR):
        taps = np.zeros(lag + 1)
        taps[lag] = gain
        return cls(taps, sample_rate)


def wall_reflection(room, rt60: float) -> float:
    """Uniform pressure reflection coefficient from Eyring's reverberation formula."""
    if rt60 == 0:
        return 0.0
    lx, ly, lz = room
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    alpha = 1.0 - math.exp(-24 * math.log(10) * volume / (SPEED_OF_SOUND * surface * rt60))
    return math.sqrt(1.0 - alpha)


def decay_time(taps: np.ndarray, sample_rate: int, lo_db: float = -5.0,
               hi_db: float = -25.0) -> float | None:
    """RT60 extrapolated from a line fit to the Schroeder decay between two levels."""
    energy = np.cumsum(taps[::-1] ** 2)[::-1]
    if energy.size == 0 or energy[0] <= 0:
        return None
    with np.errstate(divide="ignore"):
        edc = 10 * np.log10(energy / energy[0])
    i0 = int(np.argmax(edc < lo_db))
    i1 = int(np.argmax(edc < hi_db))
    if i1 <= i0 + 2:
        return None
    idx = np.arange(i0, i1)
    slope = np.polyfit(idx / sample_rate, edc[idx], 1)[0]
    return -60.0 / slope if slope < 0 else None


def _image_sum(room, src, mic, beta: float, sample_rate: int, length: int) -> np.ndarray:
    taps = np.zeros(length)
    max_dist = length / sample_rate * SPEED_OF_SOUND
    if beta == 0.0:
        orders = [np.array([0])] * 3
    else:
        orders = [np.arange(-int(max_dist // (2 * d)) - 1, int(max_dist // (2 * d)) + 2)
                  for d in room]
    nx, ny, nz = orders
    for px, py, pz in itertools.product((0, 1), repeat=3):
        dx = (1 - 2 * px) * src[0] + 2 * nx * room[0] - mic[0]
        dy = (1 - 2 * py) * src[1] + 2 * ny * room[1] - mic[1]
        dz = (1 - 2 * pz) * src[2] + 2 * nz * room[2] - mic[2]
        kx = np.abs(nx - px) + np.abs(nx)
        ky = np.abs(ny - py) + np.abs(ny)
        kz = np.abs(nz - pz) + np.abs(nz)
        dist = np.sqrt(dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2)
        k = kx[:, None, None] + ky[None, :, None] + kz[None, None, :]
        idx = np.rint(dist / SPEED_OF_SOUND * sample_rate).astype(np.int64)
        keep = idx < length
        if beta == 0.0:
            keep &= k == 0
        amp = np.power(beta, k[keep]) / (4 * np.pi * dist[keep])
        taps += np.bincount(idx[keep], weights=amp, minlength=length)
    return taps


def generate_rir(room, src, mic, rt60: float, sample_rate: int = DEFAULT_SR,
                 length: int | None = None, highpass: float | None = 100.0) -> RoomImpulseResponse:
    """Shoebox image-method impulse response from ``src`` to ``mic``.

    Image contributions are placed on the nearest integer sample with amplitude
    beta**k / (4 pi r). The wall reflection starts from Eyring's formula and is
    then corrected until the Schroeder decay of the result matches ``rt60``.
    The response is at least ``rt60 * sample_rate`` long and, unless
    ``highpass`` is None, passed through a 2nd-order Butterworth high-pass at
    that frequency (transducers do not pass DC).
    """
    room = tuple(float(v) for v in room)
    src = tuple(float(v) for v in src)
    mic = tuple(float(v) for v in mic)
    if len(room) != 3 or min(room) <= 0:
        raise ConfigurationError("room dimensions must be three positive lengths")
    for name, pos in (("source", src), ("mic", mic)):
        if len(pos) != 3 or any(not (0 < p < d) for p, d in zip(pos, room)):
            raise ConfigurationError(f"{name} position {pos} outside room {room}")
    if rt60 < 0:
        raise ConfigurationError("rt60 must be non-negative")

    geometry = RirGeometry(room, src, mic, float(rt60))
    direct = geometry.distance / SPEED_OF_SOUND * sample_rate
    if length is None:
        length = max(int(math.ceil(rt60 * sample_rate)), int(math.ceil(direct)) + 64)
    beta = wall_reflection(room, rt60)
    if highpass:
        sos = butter(2, highpass, "highpass", fs=sample_rate, output="sos")
        image_sum = lambda b: sosfilt(sos, _image_sum(room, src, mic, b, sample_rate, length))
    else:
        image_sum = lambda b: _image_sum(room, src, mic, b, sample_rate, length)
    taps = image_sum(beta)
    if beta > 0 and rt60 >= MIN_CALIBRATED_RT60:
        for _ in range(CALIBRATION_STEPS):
            measured = decay_time(taps, sample_rate)
            if measured is None or abs(measured / rt60 - 1) < 0.02:
                break
            beta = beta ** (measured / rt60)
            taps = image_sum(beta)
    return RoomImpulseResponse(taps, sample_rate, geometry)


def sample_geometry(rng: np.random.Generator, rt60: float,
                    distance_range=(0.5, 2.0)) -> RirGeometry:
    """Random shoebox room with a loudspeaker near the microphone."""
    room = (rng.uniform(3.0, 10.0), rng.uniform(3.0, 8.0), rng.uniform(2.5, 4.0))
    margin = 0.3
    mic = tuple(rng.uniform(margin, d - margin) for d in room)
    while True:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        src = np.asarray(mic) + rng.uniform(*distance_range) * direction
        if all(margin < p < d - margin for p, d in zip(src, room)):
            return RirGeometry(room, tuple(float(v) for v in src), mic, float(rt60))


def rir_from_geometry(geometry: RirGeometry, sample_rate: int = DEFAULT_SR) -> RoomImpulseResponse:
    return generate_rir(geometry.room, geometry.source, geometry.mic, geometry.rt60, sample_rate)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Memoryless loudspeaker saturation.

    ``hard_clip`` clips at ``clip_threshold * ref_level``; when ``ref_level`` is
    None the input's own peak is used. ``sigmoid`` is the symmetric saturating
    map ``ceiling * (2 / (1 + exp(-slope * x)) - 1)``.
    """
    kind: str = "identity"
    clip_threshold: float = 0.8
    ref_level: float | None = None
    ceiling: float = 1.0
    slope: float = 2.0

    KINDS = ("identity", "hard_clip", "sigmoid")
    ALIASES = {"sigmoid_memoryless": "sigmoid", "clip": "hard_clip"}

    def __post_init__(self):
        if self.kind in self.ALIASES:
            object.__setattr__(self, "kind", self.ALIASES[self.kind])
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown nonlinearity {self.kind!r}")
        if self.clip_threshold <= 0 or self.ceiling <= 0 or self.slope <= 0:
            raise ConfigurationError("nonlinearity parameters must be positive")

    def resolved(self, x) -> "NonlinearitySpec":
        """Pin a relative clip level to an absolute one using ``x``'s peak."""
        if self.kind != "hard_clip" or self.ref_level is not None:
            return self
        xs = as_samples(x)
        return replace(self, ref_level=float(np.max(np.abs(xs))) if xs.size else 0.0)

    def small_signal_slope(self) -> float:
        return self.ceiling * self.slope / 2 if self.kind == "sigmoid" else 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "clip_threshold": self.clip_threshold,
                "ref_level": self.ref_level, "ceiling": self.ceiling, "slope": self.slope}


def apply_nonlinearity(x, nl: NonlinearitySpec) -> Waveform:
    xs = as_samples(x)
    rate = x.sample_rate if isinstance(x, Waveform) else DEFAULT_SR
    if nl.kind == "identity":
        return Waveform(xs.copy(), rate)
    if nl.kind == "hard_clip":
        level = nl.ref_level if nl.ref_level is not None else (np.max(np.abs(xs)) if xs.size else 0.0)
        thr = nl.clip_threshold * level
        return Waveform(np.clip(xs, -thr, thr), rate)
    return Waveform(nl.ceiling * np.tanh(0.5 * nl.slope * xs), rate)


def make_playback(x, nl: NonlinearitySpec, rir: RoomImpulseResponse) -> Waveform:
    """d = NL[x] * h, truncated to len(x)."""
    rate = x.sample_rate if isinstance(x, Waveform) else rir.sample_rate
    if rate != rir.sample_rate:
        raise ConfigurationError("sample rate mismatch between signal and RIR")
    return convolve(apply_nonlinearity(x, nl), rir.taps)


@dataclass
class MixtureSpec:
    spr_db: float
    snr_db: float
    delta_t: float
    gain: float = 1.0
    nl: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    rir: RoomImpulseResponse | None = None
    geometry: RirGeometry | None = None
    max_output_amplitude: float = 1.0

    def ensure_rir(self, sample_rate: int = DEFAULT_SR) -> RoomImpulseResponse:
        if self.rir is None:
            if self.geometry is None:
                raise ConfigurationError("mixture spec has neither RIR nor geometry")
            self.rir = rir_from_geometry(self.geometry, sample_rate)
        return self.rir

    def delay_samples(self, sample_rate: int) -> int:
        return int(round(self.delta_t * sample_rate))

    def to_dict(self) -> dict:
        out = {"spr_db": self.spr_db, "snr_db": self.snr_db, "delta_t": self.delta_t,
               "gain": self.gain, "nl": self.nl.to_dict(),
               "max_output_amplitude": self.max_output_amplitude}
        geo = self.geometry or (self.rir.geometry if self.rir is not None else None)
        if geo is not None:
            out["rir"] = {"room": list(geo.room), "source": list(geo.source),
                          "mic": list(geo.mic), "rt60": geo.rt60}
        return out


@dataclass
class MixtureBundle:
    y: Waveform
    s: Waveform
    n: Waveform
    d: Waveform
    r: Waveform | None = None
    x: Waveform | None = None          # loudspeaker signal before the nonlinearity
    spec: MixtureSpec | None = None
    playback_scale: float = 1.0        # d = playback_scale * NL[x] * h
    nl: NonlinearitySpec | None = None  # nonlinearity with its clip level pinned

    def __post_init__(self):
        n = len(self.y)
        if not (len(self.s) == len(self.n) == len(self.d) == n):
            raise ConfigurationError("mixture components differ in length")

    def effective_rir(self) -> RoomImpulseResponse:
        return self.spec.ensure_rir(self.y.sample_rate).scaled(self.playback_scale)


def _power(x: np.ndarray) -> float:
    return float(np.mean(x * x)) if x.size else 0.0


def active_region(d: np.ndarray, rel: float = 1e-9) -> slice:
    """Span where the playback is non-negligible (FFT round-off is not playback)."""
    peak = float(np.max(np.abs(d))) if d.size else 0.0
    nz = np.flatnonzero(np.abs(d) > rel * peak)
    if nz.size == 0:
        return slice(0, 0)
    return slice(int(nz[0]), int(nz[-1]) + 1)


def loudspeaker_signal(s, spec: MixtureSpec, sample_rate: int) -> np.ndarray:
    """Teacher-forced loudspeaker feed: clamp(G * s(t - dt))."""
    k = spec.delay_samples(sample_rate)
    x = spec.gain * delay(as_samples(s), k).samples
    a = spec.max_output_amplitude
    return np.clip(x, -a, a)


def make_teacher_mixture(s, n, spec: MixtureSpec, seed: int | None = None) -> MixtureBundle:
    """One-time playback mixture y = s + n + NL[G s(t - dt)] * h at the requested SPR/SNR.

    ``n`` may be None, in which case white Gaussian noise is drawn from ``seed``.
    Powers are measured over the span where the playback is nonzero.
    """
    s_w = s if isinstance(s, Waveform) else Waveform(s)
    fs = s_w.sample_rate
    ss = s_w.samples
    if n is None:
        ns = np.random.default_rng(seed).standard_normal(ss.size)
    else:
        ns = as_samples(n)
    if ns.size != ss.size:
        raise ConfigurationError("target and noise lengths differ")
    if not np.any(ss):
        raise ConfigurationError("degenerate target: silent s")

    rir = spec.ensure_rir(fs)
    x = loudspeaker_signal(ss, spec, fs)
    nl = spec.nl.resolved(x)
    d_raw = make_playback(Waveform(x, fs), nl, rir).samples
    region = active_region(d_raw)
    p_s = _power(ss[region])
    p_d = _power(d_raw[region])
    if p_s == 0.0:
        raise ConfigurationError("degenerate target: silent over the playback region")
    if p_d == 0.0:
        raise ConfigurationError("degenerate playback: no playback reaches the microphone")
    scale = math.sqrt(p_s / p_d * 10 ** (-spec.spr_db / 10))
    d = scale * d_raw

    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        n_scaled = np.zeros_like(ss)
    else:
        p_n = _power(ns[region])
        if p_n == 0.0:
            raise ConfigurationError("degenerate noise: silent n with finite SNR")
        n_scaled = ns * math.sqrt(p_s / p_n * 10 ** (-spec.snr_db / 10))
    y = ss + n_scaled + d
    return MixtureBundle(Waveform(y, fs), Waveform(ss.copy(), fs), Waveform(n_scaled, fs),
                         Waveform(d, fs), x=Waveform(x, fs), spec=spec,
                         playback_scale=scale, nl=nl)


def distorted_playback(s_hat, bundle: MixtureBundle) -> Waveform:
    """Playback the bundle's audio system would produce from an estimate ``s_hat``."""
    spec = bundle.spec
    fs = bundle.y.sample_rate
    x = loudspeaker_signal(as_samples(s_hat), spec, fs)
    d = make_playback(Waveform(x, fs), bundle.nl, spec.ensure_rir(fs)).samples
    return Waveform(bundle.playback_scale * d, fs)


def make_finetune_mixture(s, n, d_distorted) -> MixtureBundle:
    """y' = s + n + d' with a playback d' generated from an estimated target."""
    ss, ns, ds = as_samples(s), as_samples(n), as_samples(d_distorted)
    if not (ss.size == ns.size == ds.size):
        raise ConfigurationError("fine-tune mixture components differ in length")
    fs = s.sample_rate if isinstance(s, Waveform) else DEFAULT_SR
    return MixtureBundle(Waveform(ss + ns + ds, fs), Waveform(ss.copy(), fs),
                         Waveform(ns.copy(), fs), Waveform(ds.copy(), fs))


@dataclass(frozen=True)
class DatasetRanges:
    delta_t: tuple[float, float] = (0.1, 0.5)
    spr_db: tuple[float, float] = (-15.0, 20.0)
    snr_db: tuple[float, float] = (-10.0, 40.0)
    rt60: tuple[float, float] = (0.0, 0.6)
    gain: tuple[float, float] = (0.5, 2.0)
    nl_kinds: tuple[str, ...] = ("hard_clip", "sigmoid")

    def __post_init__(self):
        for name in ("delta_t", "spr_db", "snr_db", "rt60", "gain"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigurationError(f"empty range for {name}: [{lo}, {hi}]")
        if not self.nl_kinds:
            raise ConfigurationError("no nonlinearity kinds to choose from")
        if self.rt60[0] < 0:
            raise ConfigurationError("rt60 range must be non-negative")


def sample_dataset_spec(seed, ranges: DatasetRanges | None = None,
                        realize_rir: bool = True, sample_rate: int = DEFAULT_SR) -> MixtureSpec:
    """Draw one scene uniformly from ``ranges``; deterministic per seed."""
    ranges = ranges or DatasetRanges()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    delta_t = rng.uniform(*ranges.delta_t)
    spr = rng.uniform(*ranges.spr_db)
    snr = rng.uniform(*ranges.snr_db)
    rt60 = rng.uniform(*ranges.rt60)
    gain = rng.uniform(*ranges.gain)
    kind = ranges.nl_kinds[rng.integers(len(ranges.nl_kinds))]
    geometry = sample_geometry(rng, rt60)
    spec = MixtureSpec(spr_db=spr, snr_db=snr, delta_t=delta_t, gain=gain,
                       nl=NonlinearitySpec(kind=kind), geometry=geometry)
    if realize_rir:
        spec.ensure_rir(sample_rate)
    return spec


def dataset_seeds(seed: int, count: int) -> list[int]:
    """Independent per-utterance seeds spawned from one master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]
