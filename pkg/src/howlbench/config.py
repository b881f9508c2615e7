"""Flat key-value configuration.

Files are INI-style. Keys may be written either dotted at the top of the
file (``notch.depth_db = 24``) or inside a section (``[notch]`` then
``depth_db = 24``); both spell the same key. Unknown keys are rejected so that
typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .dsp import ConfigurationError

DEFAULTS: dict[str, str] = {
    # dataset generation
    "dataset.count": "100",
    "dataset.duration": "4.0",
    "dataset.sample_rate": "16000",
    "dataset.speech_dir": "",
    "dataset.noise_dir": "",
    "dataset.speech_rms": "0.05",
    "dataset.delta_t": "0.1,0.5",
    "dataset.spr_db": "-15,20",
    "dataset.snr_db": "-10,40",
    "dataset.rt60": "0.0,0.6",
    "dataset.gain": "0.5,2.0",
    "dataset.nl_kinds": "hard_clip,sigmoid",
    "dataset.wav_format": "float32",
    # loudspeaker model
    "nl.clip_threshold": "0.8",
    "nl.ceiling": "1.0",
    "nl.slope": "2.0",
    "loop.max_output_amplitude": "1.0",
    # framing
    "stft.frame_len": "512",
    "stft.hop": "256",
    "stft.fft_size": "512",
    # gain levels as loop-gain margins
    "gain.soft": "0.5",
    "gain.moderate": "1.0",
    "gain.severe": "2.0",
    # evaluation
    "eval.spr_buckets": "-5,0,5",
    "eval.snr_db": "30",
    "eval.streaming_snr_db": "30",
    "eval.ref_mode": "delayed",
    "eval.dump_audio": "false",
    # howling detector
    "detector.papr_db": "10",
    "detector.persist_frames": "60",
    "detector.persist_fraction": "0.7",
    "detector.freq_tol_hz": "12.0",
    "detector.presence_db": "-5",
    "detector.drop_tol_db": "3.0",
    "detector.n_peaks": "3",
    # suppressors
    "suppressor.kind": "passthrough",
    "suppressor.mu": "0.2",
    "suppressor.n_taps": "2048",
    "afc.forgetting": "0.9995",
    "afc.p_init": "1.0",
    "afc.psd_smoothing": "0.5",
    "notch.depth_db": "30",
    "notch.bandwidth": "50",
    "notch.max_notches": "8",
    "notch.release_frames": "300",
    "limiter.threshold": "0.25",
    "model.seed": "0",
    # single RIR generation
    "rir.room": "",
    "rir.source": "",
    "rir.mic": "",
    "rir.rt60": "0.3",
    # spectrogram export
    "spectrogram.db_min": "-100",
    "spectrogram.db_max": "0",
}

ROOT = "__root__"


class Config:
    def __init__(self, values: dict[str, str] | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    @classmethod
    def load(cls, path=None, overrides: dict[str, str] | None = None) -> "Config":
        values: dict[str, str] = {}
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigurationError(f"config file not found: {p}")
            parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
            parser.optionxform = str
            parser.read_string(f"[{ROOT}]\n" + p.read_text())
            for section in parser.sections():
                for key, val in parser.items(section):
                    name = key if section == ROOT else f"{section}.{key}"
                    values[name] = val
        values.update(overrides or {})
        return cls(values)

    def set(self, key: str, value):
        if key not in DEFAULTS:
            raise ConfigurationError(f"unknown config key {key!r}")
        self.values[key] = str(value).strip()

    def get(self, key: str) -> str:
        return self.values[key]

    def int(self, key: str) -> int:
        return int(self.values[key])

    def float(self, key: str) -> float:
        return float(self.values[key])

    def bool(self, key: str) -> bool:
        return self.values[key].lower() in ("1", "true", "yes", "on")

    def floats(self, key: str) -> tuple[float, ...]:
        raw = self.values[key]
        return tuple(float(v) for v in raw.split(",") if v.strip()) if raw else ()

    def strings(self, key: str) -> tuple[str, ...]:
        return tuple(v.strip() for v in self.values[key].split(",") if v.strip())

    def to_dict(self) -> dict[str, str]:
        return dict(sorted(self.values.items()))


def thread_count() -> int:
    """Worker processes allowed by HOWLBENCH_THREADS (default 1)."""
    raw = os.environ.get("HOWLBENCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"HOWLBENCH_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)
