import json

import numpy as np
import pytest

from howlbench.cli import EXIT_USAGE, main
from howlbench.dsp import Waveform, read_wav, write_wav
from howlbench.export import read_pgm
from howlbench.signals import tone


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


# spectrogram

def spectrogram(tmp_path, capsys, wave, name="x"):
    wav = tmp_path / f"{name}.wav"
    write_wav(wav, wave)
    code, _ = run(capsys, "spectrogram", wav, "--out", tmp_path / "spec")
    assert code == 0
    prefix = tmp_path / "spec" / name
    csv = np.loadtxt(prefix.with_suffix(".csv"), delimiter=",")
    return read_pgm(prefix.with_suffix(".pgm")), csv, json.loads(prefix.with_suffix(".json").read_text())


def test_silence_gives_uniform_minimum(tmp_path, capsys):
    img, _, meta = spectrogram(tmp_path, capsys, Waveform(np.zeros(16000), 16000))
    assert img.shape == (257, meta["n_frames"]) and meta["n_frames"] == 62
    assert np.all(img == 0)


def test_sine_gives_line_at_its_bin(tmp_path, capsys):
    img, db, meta = spectrogram(tmp_path, capsys, tone(1000.0, 1.0, amplitude=1.0))
    assert meta["bin_hz"] == 31.25
    interior = slice(2, -2)
    assert np.all(np.argmax(db[:, interior], axis=0) == 32)
    assert np.all(np.argmax(img[:, interior], axis=0) == 256 - 32)
    assert np.all(np.abs(db[32, interior]) < 0.1)
    assert np.all(img[256 - 32, interior] == 255)


def test_growing_howl_brightens(tmp_path, capsys):
    t = np.arange(3 * 16000) / 16000
    x = 1e-4 * np.exp(np.log(5000) * t / 3) * np.sin(2 * np.pi * 2000 * t)
    img, db, _ = spectrogram(tmp_path, capsys, Waveform(x, 16000))
    line = img[256 - 64, 2:-2].astype(int)
    assert np.all(np.diff(line) >= 0) and line[-1] - line[0] > 150
    assert np.all(np.diff(db[64, 2:-2]) > 0)


def test_spectrogram_errors(tmp_path, capsys):
    (tmp_path / "bad.wav").write_bytes(b"RIFFjunk")
    code, io = run(capsys, "spectrogram", tmp_path / "bad.wav", "--out", tmp_path)
    assert code == EXIT_USAGE and "cannot read" in io.err
    code, _ = run(capsys, "spectrogram", tmp_path / "none.wav", "--out", tmp_path)
    assert code == EXIT_USAGE
    write_wav(tmp_path / "short.wav", Waveform(np.zeros(0), 16000))
    code, io = run(capsys, "spectrogram", tmp_path / "short.wav", "--out", tmp_path)
    assert code == EXIT_USAGE and "shorter than one frame" in io.err


# other commands

def test_gen_rir(tmp_path, capsys):
    code, io = run(capsys, "gen-rir", "--seed", 3, "--out", tmp_path,
                   "--set", "rir.rt60=0.2", "--set", "rir.room=5,4,3",
                   "--set", "rir.source=1,1,1.5", "--set", "rir.mic=3,2,1.5")
    assert code == 0 and io.out.strip().endswith("rir.wav")
    meta = json.loads((tmp_path / "rir.json").read_text())
    assert meta["room"] == [5.0, 4.0, 3.0] and meta["rt60"] == 0.2
    assert len(read_wav(tmp_path / "rir.wav")) == meta["n_taps"]
    code, io = run(capsys, "gen-rir", "--out", tmp_path, "--set", "rir.room=5,4")
    assert code == EXIT_USAGE and "three" in io.err


def test_usage_errors(tmp_path, capsys):
    code, io = run(capsys, "gen-dataset", "--out", tmp_path, "--set", "nope.key=1")
    assert code == EXIT_USAGE and "unknown config key" in io.err
    code, io = run(capsys, "gen-dataset", "--out", tmp_path, "--set", "dataset.count")
    assert code == EXIT_USAGE and "key=value" in io.err
    code, io = run(capsys, "eval-offline", "--manifest", tmp_path, "--out", tmp_path)
    assert code == EXIT_USAGE and "manifest not found" in io.err
    with pytest.raises(SystemExit):
        main(["eval-streaming", "--manifest", ".", "--out", ".", "--gain-level", "loud"])
    with pytest.raises(SystemExit):
        main([])
    capsys.readouterr()


def test_config_file_and_weights(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[dataset]\nduration = 1.5\ncount = 2\n")
    code, _ = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "ds")
    assert code == 0
    lines = (tmp_path / "ds" / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 2 and json.loads(lines[0])["n_samples"] == 24000
    code, io = run(capsys, "init-weights", "--seed", 0, "--out", tmp_path / "w.bin")
    assert code == 0
    code, io = run(capsys, "eval-offline", "--manifest", tmp_path / "ds", "--out", tmp_path / "r",
                   "--suppressor", "deep_ahs", "--weights", tmp_path / "w.bin",
                   "--set", "eval.spr_buckets=0")
    assert code == 0 and io.out.startswith("suppressor,condition")
    (tmp_path / "w.bin").write_bytes((tmp_path / "w.bin").read_bytes()[:-4])
    code, io = run(capsys, "eval-offline", "--manifest", tmp_path / "ds", "--out", tmp_path / "r",
                   "--suppressor", "deep_ahs", "--weights", tmp_path / "w.bin")
    assert code == EXIT_USAGE


def test_dump_audio(tmp_path, capsys):
    run(capsys, "gen-dataset", "--count", 1, "--set", "dataset.duration=1.5", "--out", tmp_path / "ds")
    code, _ = run(capsys, "eval-streaming", "--manifest", tmp_path / "ds", "--out", tmp_path / "r",
                  "--gain-level", "soft", "--set", "eval.dump_audio=true")
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "r" / "audio").iterdir())
    assert names == ["00000_passthrough_soft_mic.wav", "00000_passthrough_soft_s_hat.wav"]
