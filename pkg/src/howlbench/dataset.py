"""Dataset generation and manifest I/O.

A dataset directory holds one JSON-lines manifest plus, per utterance, WAV
files for the target s, scaled noise n, playback d, microphone mixture y,
loudspeaker feed x and the delayed-microphone reference r.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acoustics import (DatasetRanges, MixtureBundle, MixtureSpec, NonlinearitySpec, RirGeometry,
                        dataset_seeds, make_teacher_mixture, rir_from_geometry, sample_dataset_spec)
from .config import Config
from .dsp import ConfigurationError, Waveform, delay, read_wav, write_wav
from .signals import synthetic_speech

MANIFEST = "manifest.jsonl"
STREAMS = ("s", "n", "d", "y", "x", "r")


def ranges_from_config(cfg: Config) -> DatasetRanges:
    def pair(key):
        v = cfg.floats(key)
        if len(v) != 2:
            raise ConfigurationError(f"{key} needs two comma-separated values")
        return v
    return DatasetRanges(delta_t=pair("dataset.delta_t"), spr_db=pair("dataset.spr_db"),
                         snr_db=pair("dataset.snr_db"), rt60=pair("dataset.rt60"),
                         gain=pair("dataset.gain"), nl_kinds=cfg.strings("dataset.nl_kinds"))


def nl_from_config(kind: str, cfg: Config) -> NonlinearitySpec:
    return NonlinearitySpec(kind=kind, clip_threshold=cfg.float("nl.clip_threshold"),
                            ceiling=cfg.float("nl.ceiling"), slope=cfg.float("nl.slope"))


def _wav_files(directory: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigurationError(f"source directory not found: {d}")
    files = sorted(d.rglob("*.wav"))
    if not files:
        raise ConfigurationError(f"no WAV files under {d}")
    return files


def _fit(x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random excerpt of length n, looping short files."""
    if x.size == 0:
        raise ConfigurationError("empty source file")
    if x.size < n:
        x = np.tile(x, -(-n // x.size))
    start = int(rng.integers(0, x.size - n + 1))
    return x[start:start + n]


class SourcePool:
    """Speech and noise sources: WAV directories, or seeded synthetic stand-ins."""

    def __init__(self, cfg: Config):
        self.fs = cfg.int("dataset.sample_rate")
        self.duration = cfg.float("dataset.duration")
        self.rms = cfg.float("dataset.speech_rms")
        sd, nd = cfg.get("dataset.speech_dir"), cfg.get("dataset.noise_dir")
        self.speech = _wav_files(sd) if sd else None
        self.noise = _wav_files(nd) if nd else None

    def _load(self, path: Path) -> np.ndarray:
        w = read_wav(path)
        if w.sample_rate != self.fs:
            raise ConfigurationError(f"{path}: sample rate {w.sample_rate}, expected {self.fs}")
        return w.samples

    def draw(self, seed: int) -> tuple[np.ndarray, np.ndarray | None, dict]:
        rng = np.random.default_rng([seed, 1])
        n = int(round(self.duration * self.fs))
        info: dict = {}
        if self.speech is None:
            s = synthetic_speech(seed, self.duration, self.fs, rms=self.rms).samples
            info["speech"] = f"synthetic:{seed}"
        else:
            path = self.speech[int(rng.integers(len(self.speech)))]
            s = _fit(self._load(path), n, rng)
            info["speech"] = str(path)
        if self.noise is None:
            noise = None
            info["noise"] = "white"
        else:
            path = self.noise[int(rng.integers(len(self.noise)))]
            noise = _fit(self._load(path), n, rng)
            info["noise"] = str(path)
        return s, noise, info


def spec_to_record(spec: MixtureSpec) -> dict:
    return spec.to_dict()


def spec_from_record(rec: dict) -> MixtureSpec:
    nl = dict(rec["nl"])
    nl.pop("ref_level", None)
    geo = rec.get("rir")
    geometry = None
    if geo is not None:
        geometry = RirGeometry(tuple(geo["room"]), tuple(geo["source"]), tuple(geo["mic"]),
                               float(geo["rt60"]))
    return MixtureSpec(spr_db=rec["spr_db"], snr_db=rec["snr_db"], delta_t=rec["delta_t"],
                       gain=rec["gain"], nl=NonlinearitySpec(**nl), geometry=geometry,
                       max_output_amplitude=rec.get("max_output_amplitude", 1.0))


def generate_one(cfg: Config, index: int, seed: int, pool: SourcePool) -> tuple[dict, MixtureBundle]:
    spec = sample_dataset_spec(seed, ranges_from_config(cfg), realize_rir=False,
                               sample_rate=pool.fs)
    spec.nl = nl_from_config(spec.nl.kind, cfg)
    spec.max_output_amplitude = cfg.float("loop.max_output_amplitude")
    spec.rir = rir_from_geometry(spec.geometry, pool.fs)
    s, noise, info = pool.draw(seed)
    bundle = make_teacher_mixture(Waveform(s, pool.fs), noise, spec, seed=seed)
    bundle.r = delay(bundle.y, spec.delay_samples(pool.fs))
    rec = {"index": index, "seed": seed, "spec": spec_to_record(spec),
           "playback_scale": bundle.playback_scale, "sources": info,
           "n_samples": len(bundle.y), "sample_rate": pool.fs}
    return rec, bundle


def write_bundle(bundle: MixtureBundle, out_dir: Path, index: int, fmt: str) -> dict:
    files = {}
    for name in STREAMS:
        w = getattr(bundle, name)
        rel = f"{index:05d}_{name}.wav"
        write_wav(out_dir / rel, w, fmt)
        files[name] = rel
    return files


def gen_dataset(cfg: Config, seed: int, out_dir, count: int | None = None) -> Path:
    """Generate ``count`` teacher mixtures under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    count = cfg.int("dataset.count") if count is None else count
    if count < 0:
        raise ConfigurationError("count must be non-negative")
    pool = SourcePool(cfg)
    fmt = cfg.get("dataset.wav_format")
    lines = []
    for i, child in enumerate(dataset_seeds(seed, count)):
        rec, bundle = generate_one(cfg, i, child, pool)
        rec["files"] = write_bundle(bundle, out, i, fmt)
        lines.append(json.dumps(rec, sort_keys=True))
    path = out / MANIFEST
    path.write_text("".join(line + "\n" for line in lines))
    return path


@dataclass
class Record:
    index: int
    seed: int
    spec: MixtureSpec
    playback_scale: float
    files: dict
    root: Path
    sample_rate: int

    def load(self, name: str) -> Waveform:
        return read_wav(self.root / self.files[name])


def read_manifest(path) -> list[Record]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    if not path.is_file():
        raise ConfigurationError(f"manifest not found: {path}")
    out = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(Record(rec["index"], rec["seed"], spec_from_record(rec["spec"]),
                          rec["playback_scale"], rec["files"], path.parent, rec["sample_rate"]))
    return out
