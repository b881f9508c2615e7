"""Log-magnitude spectrogram export: 8-bit PGM image, CSV matrix, JSON axes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dsp import ConfigurationError, FrameParams, Waveform, stft


def log_magnitude(wave: Waveform, frame: FrameParams | None = None) -> np.ndarray:
    """F x T magnitude in dB re a full-scale sinusoid (a unit-amplitude sine peaks at 0 dB)."""
    frame = frame or FrameParams()
    spec = stft(wave, frame)
    ref = frame.analysis_window().sum() / 2
    mag = np.abs(spec.data) / ref
    return 20 * np.log10(np.maximum(mag, 1e-12))


def to_pixels(db: np.ndarray, db_min: float = -100.0, db_max: float = 0.0) -> np.ndarray:
    """Map dB to 0..255 on a fixed range; the highest frequency becomes the top row."""
    if not db_max > db_min:
        raise ConfigurationError("db_max must exceed db_min")
    scaled = (np.clip(db, db_min, db_max) - db_min) / (db_max - db_min)
    return np.round(255 * scaled).astype(np.uint8)[::-1]


def write_pgm(path, pixels: np.ndarray) -> Path:
    path = Path(path)
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ConfigurationError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ConfigurationError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(parts[4][:w * h], dtype=np.uint8).reshape(h, w)


def export_spectrogram(wave: Waveform, out_prefix, frame: FrameParams | None = None,
                       db_min: float = -100.0, db_max: float = 0.0, source: str = "") -> dict:
    """Write ``<prefix>.pgm``, ``<prefix>.csv`` and ``<prefix>.json``; returns the paths."""
    frame = frame or FrameParams()
    db = log_magnitude(wave, frame)
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {k: prefix.with_suffix(f".{k}") for k in ("pgm", "csv", "json")}
    if db.shape[1] == 0:
        raise ConfigurationError("signal is shorter than one frame")
    write_pgm(paths["pgm"], to_pixels(db, db_min, db_max))
    # CSV rows follow bin order (row 0 = 0 Hz); the image is flipped for display
    paths["csv"].write_text("\n".join(",".join(f"{v:.4f}" for v in row) for row in db) + "\n")
    fs = wave.sample_rate
    meta = {
        "source": source,
        "sample_rate": fs,
        "frame_len": frame.frame_len, "hop": frame.hop, "fft_size": frame.fft_size,
        "n_bins": int(db.shape[0]), "n_frames": int(db.shape[1]),
        "bin_hz": fs / frame.fft_size,
        "frame_seconds": frame.hop / fs,
        "db_range": [db_min, db_max],
        "csv_rows": "frequency bins, row 0 = 0 Hz",
        "image_rows": "frequency bins, top row = Nyquist",
        "image_cols": "frames, left = earliest",
    }
    paths["json"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths
