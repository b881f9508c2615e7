"""Offline and streaming evaluation over a dataset manifest.

Offline runs a processor open-loop on teacher mixtures rebuilt at each SPR
bucket. Streaming runs it inside the closed loop at each named gain level.
Every run yields one record per (utterance, condition); records are written
as JSON lines in manifest order and summarised as per-cell means. Wall-clock
runtime goes to a separate timing file so that reports stay byte-identical
across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .acoustics import make_teacher_mixture
from .config import Config, thread_count
from .dataset import Record, read_manifest
from .detection import DetectorConfig, howling_score
from .dsp import ConfigurationError, FrameParams, Waveform, delay, write_wav
from .loop import LoopConfig, estimate_delay, gain_for_margin, run_streaming
from .metrics import si_sdr
from .suppressors import REGISTRY, Oracle, make_suppressor, process_signal

GAIN_LEVELS = ("soft", "moderate", "severe")
SUPPRESSORS = tuple(sorted(REGISTRY)) + ("oracle", "deep_ahs")


def frame_from_config(cfg: Config) -> FrameParams:
    return FrameParams(cfg.int("stft.frame_len"), cfg.int("stft.hop"), cfg.int("stft.fft_size"))


def detector_from_config(cfg: Config) -> DetectorConfig:
    return DetectorConfig(papr_db=cfg.float("detector.papr_db"),
                          persist_frames=cfg.int("detector.persist_frames"),
                          persist_fraction=cfg.float("detector.persist_fraction"),
                          freq_tol_hz=cfg.float("detector.freq_tol_hz"),
                          presence_db=cfg.float("detector.presence_db"),
                          drop_tol_db=cfg.float("detector.drop_tol_db"),
                          n_peaks=cfg.int("detector.n_peaks"))


def build_suppressor(kind: str, cfg: Config, weights=None, target=None, ref_delay: int = 0):
    """Suppressor ``kind`` with its parameters taken from ``cfg``."""
    if kind == "oracle":
        if target is None:
            raise ConfigurationError("oracle suppressor needs the target signal")
        return Oracle(target)
    if kind == "deep_ahs":
        from .neural import DeepAHS
        mode = cfg.get("eval.ref_mode")
        if mode == "delayed" and ref_delay <= 0:
            raise ConfigurationError("delayed reference needs a positive delay")
        return DeepAHS(weights, ref_mode=mode, ref_delay=ref_delay, frame=frame_from_config(cfg),
                       seed=cfg.int("model.seed"))
    params = {
        "gain_limiter": {"threshold": cfg.float("limiter.threshold")},
        "notch": {"bandwidth": cfg.float("notch.bandwidth"), "depth_db": cfg.float("notch.depth_db"),
                  "max_notches": cfg.int("notch.max_notches"),
                  "release_frames": cfg.int("notch.release_frames"),
                  "frame": frame_from_config(cfg)},
        "afc_nlms": {"n_taps": cfg.int("suppressor.n_taps"), "mu": cfg.float("suppressor.mu")},
        "afc_kalman": {"n_taps": cfg.int("suppressor.n_taps"),
                       "forgetting": cfg.float("afc.forgetting"), "p_init": cfg.float("afc.p_init"),
                       "psd_smoothing": cfg.float("afc.psd_smoothing")},
    }.get(kind, {})
    return make_suppressor(kind, **params)


def _check_kind(kind: str):
    if kind not in SUPPRESSORS:
        raise ConfigurationError(f"unknown suppressor {kind!r}; choose from {sorted(SUPPRESSORS)}")


def _dump(out_dir, stem: str, waves: dict):
    if out_dir is None:
        return
    for name, w in waves.items():
        write_wav(Path(out_dir) / f"{stem}_{name}.wav", w)


def offline_record(rec: Record, cfg: Config, kind: str, spr: float, weights=None,
                   audio_dir=None) -> tuple[dict, float]:
    """One open-loop run of ``kind`` on ``rec``'s mixture rebuilt at ``spr`` dB."""
    fs = rec.sample_rate
    spec = replace(rec.spec, spr_db=float(spr), snr_db=cfg.float("eval.snr_db"))
    spec.ensure_rir(fs)
    s = rec.load("s")
    bundle = make_teacher_mixture(s, rec.load("n").samples, spec, seed=rec.seed)
    y = bundle.y.samples
    k = spec.delay_samples(fs)
    mode = cfg.get("eval.ref_mode")
    r = {"delayed": delay(y, k).samples, "mic": y, "none": None}[mode]
    supp = build_suppressor(kind, cfg, weights, target=s.samples, ref_delay=k)
    if kind == "deep_ahs":
        # the reference block is already the one the mode asks for
        supp.ref_mode = "none" if mode == "none" else "mic"
    hop = cfg.int("stft.hop")
    t0 = time.perf_counter()
    out = process_signal(supp, y, r, bundle.x.samples, hop=hop, sample_rate=fs)
    elapsed = time.perf_counter() - t0
    frame, det = frame_from_config(cfg), detector_from_config(cfg)
    out_w = Waveform(out, fs)
    row = {
        "index": rec.index, "suppressor": kind, "condition": f"spr={spr:g}",
        "spr_db": float(spr), "snr_db": spec.snr_db, "ref_mode": mode,
        "si_sdr_in": si_sdr(y, s.samples), "si_sdr_out": si_sdr(out, s.samples),
        "howling_in": howling_score(bundle.y, frame, det),
        "howling_out": howling_score(out_w, frame, det),
    }
    _dump(audio_dir, f"{rec.index:05d}_{kind}_spr{spr:g}", {"y": bundle.y, "s_hat": out_w})
    n_frames = max(1, -(-len(y) // hop))
    return row, elapsed / n_frames


def streaming_scene(rec: Record, cfg: Config, level: str):
    """Loop configuration, target and rescaled noise for ``rec`` at a named gain level."""
    if level not in GAIN_LEVELS:
        raise ConfigurationError(f"gain level must be one of {GAIN_LEVELS}")
    fs = rec.sample_rate
    spec = rec.spec
    rir = spec.ensure_rir(fs)
    energy = float(np.linalg.norm(rir.taps))
    if energy == 0:
        raise ConfigurationError(f"record {rec.index}: silent RIR")
    rir = rir.scaled(1.0 / energy)
    margin = cfg.float(f"gain.{level}")
    gain = gain_for_margin(rir, spec.nl, margin)
    loop = LoopConfig(spec.delta_t, gain, spec.nl, rir, frame_from_config(cfg),
                      cfg.float("loop.max_output_amplitude"))
    s = rec.load("s").samples
    n = rec.load("n").samples
    pn, ps = float(np.mean(n * n)), float(np.mean(s * s))
    snr = cfg.float("eval.streaming_snr_db")
    n = np.zeros_like(s) if pn == 0 or math.isinf(snr) else n * math.sqrt(ps / pn * 10 ** (-snr / 10))
    return loop, s, n, margin


def streaming_record(rec: Record, cfg: Config, kind: str, level: str, weights=None,
                     audio_dir=None) -> tuple[dict, float]:
    loop, s, n, margin = streaming_scene(rec, cfg, level)
    fs = rec.sample_rate
    ref_delay = 0
    ref_source = ""
    if kind == "deep_ahs" and cfg.get("eval.ref_mode") == "delayed":
        # the delay is estimated once from the record's teacher mixture
        est = estimate_delay(rec.load("y"))
        ref_source = "estimated" if est is not None else "ground_truth"
        ref_delay = int(round((est if est is not None else rec.spec.delta_t) * fs))
        ref_delay = max(ref_delay, 1)
    supp = build_suppressor(kind, cfg, weights, target=s, ref_delay=ref_delay)
    t0 = time.perf_counter()
    rep = run_streaming(loop, supp, s, n, detector_from_config(cfg))
    elapsed = time.perf_counter() - t0
    frame, det = frame_from_config(cfg), detector_from_config(cfg)
    row = {
        "index": rec.index, "suppressor": kind, "condition": f"gain={level}",
        "gain_level": level, "margin": margin, "gain": loop.gain,
        "si_sdr_in": si_sdr(rep.microphone_trace, s), "si_sdr_out": si_sdr(rep.s_hat, s),
        "howling_in": howling_score(rep.microphone_trace, frame, det),
        "howling_out": howling_score(rep.s_hat, frame, det),
        "rms_ratio": rep.rms_ratio(),
        "n_events": len(rep.events),
    }
    if ref_source:
        row["ref_delay"] = ref_delay
        row["ref_delay_source"] = ref_source
    _dump(audio_dir, f"{rec.index:05d}_{kind}_{level}",
          {"mic": rep.microphone_trace, "s_hat": rep.s_hat})
    return row, elapsed / len(rep.frame_rms)


METRICS = ("si_sdr_in", "si_sdr_out", "howling_in", "howling_out")


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean of each metric per (suppressor, condition) cell, in first-seen order."""
    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["suppressor"], r["condition"]), []).append(r)
    out = []
    for (kind, cond), members in cells.items():
        cell = {"suppressor": kind, "condition": cond, "count": len(members)}
        for m in METRICS:
            cell[m] = float(np.mean([r[m] for r in members]))
        out.append(cell)
    return out


def check_aggregates(rows: list[dict], cells: list[dict], tol: float = 1e-9):
    """Raise if any cell mean differs from the recomputed mean of its members."""
    for cell in cells:
        members = [r for r in rows
                   if r["suppressor"] == cell["suppressor"] and r["condition"] == cell["condition"]]
        if len(members) != cell["count"]:
            raise AssertionError(f"cell {cell['condition']} count mismatch")
        for m in METRICS:
            ref = math.fsum(r[m] for r in members) / len(members)
            if abs(ref - cell[m]) > tol * max(1.0, abs(ref)):
                raise AssertionError(f"cell {cell['condition']} {m}: {cell[m]} != {ref}")


def summary_csv(cells: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suppressor", "condition", "count", *METRICS])
    for c in cells:
        w.writerow([c["suppressor"], c["condition"], c["count"], *(repr(c[m]) for m in METRICS)])
    return buf.getvalue()


def write_report(rows: list[dict], timing: list[dict], out_dir, stem: str, meta: dict) -> dict:
    """Write records, summary and timing; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = aggregate(rows)
    check_aggregates(rows, cells)
    paths = {"records": out / f"{stem}.jsonl", "summary": out / f"{stem}_summary.csv",
             "report": out / f"{stem}.json", "timing": out / f"{stem}_timing.json"}
    paths["records"].write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
    paths["summary"].write_text(summary_csv(cells))
    paths["report"].write_text(json.dumps({"meta": meta, "cells": cells}, indent=2,
                                          sort_keys=True) + "\n")
    paths["timing"].write_text(json.dumps(timing, indent=2) + "\n")
    return paths


def _run_task(args):
    fn, rec, values, kind, cond, weights, audio_dir = args
    return fn(rec, Config(values), kind, cond, weights, audio_dir)


def _run_all(fn, records, cfg: Config, kind: str, conditions, weights, audio_dir):
    tasks = [(fn, rec, cfg.values, kind, c, weights, audio_dir)
             for rec in records for c in conditions]
    workers = min(thread_count(), len(tasks)) if tasks else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    # map() already preserves submission order; sort anyway so the order is explicit
    order = sorted(range(len(tasks)), key=lambda i: (tasks[i][1].index, i))
    rows = [results[i][0] for i in order]
    timing = [{"index": rows[j]["index"], "condition": rows[j]["condition"],
               "seconds_per_frame": results[i][1]} for j, i in enumerate(order)]
    return rows, timing


def _load_weights(weights):
    if weights is None:
        return None
    from .neural import load_weights
    return load_weights(weights)


def eval_offline(manifest, cfg: Config, kind: str, out_dir, weights=None,
                 spr_buckets=None) -> dict:
    _check_kind(kind)
    records = read_manifest(manifest)
    buckets = cfg.floats("eval.spr_buckets") if spr_buckets is None else tuple(spr_buckets)
    w = _load_weights(weights)
    audio = Path(out_dir) / "audio" if cfg.bool("eval.dump_audio") else None
    if audio is not None:
        audio.mkdir(parents=True, exist_ok=True)
    rows, timing = _run_all(offline_record, records, cfg, kind, buckets, w, audio)
    meta = {"mode": "offline", "suppressor": kind, "spr_buckets": list(buckets),
            "snr_db": cfg.float("eval.snr_db"), "ref_mode": cfg.get("eval.ref_mode"),
            "n_records": len(records)}
    return write_report(rows, timing, out_dir, f"offline_{kind}", meta)


def eval_streaming(manifest, cfg: Config, kind: str, out_dir, weights=None,
                   gain_levels=None) -> dict:
    _check_kind(kind)
    levels = GAIN_LEVELS if gain_levels is None else tuple(gain_levels)
    for lv in levels:
        if lv not in GAIN_LEVELS:
            raise ConfigurationError(f"gain level must be one of {GAIN_LEVELS}, got {lv!r}")
    records = read_manifest(manifest)
    w = _load_weights(weights)
    audio = Path(out_dir) / "audio" if cfg.bool("eval.dump_audio") else None
    if audio is not None:
        audio.mkdir(parents=True, exist_ok=True)
    rows, timing = _run_all(streaming_record, records, cfg, kind, levels, w, audio)
    meta = {"mode": "streaming", "suppressor": kind, "gain_levels": list(levels),
            "margins": {lv: cfg.float(f"gain.{lv}") for lv in levels},
            "snr_db": cfg.float("eval.streaming_snr_db"), "n_records": len(records)}
    return write_report(rows, timing, out_dir, f"streaming_{kind}", meta)
