"""``howlbench`` command line."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .acoustics import generate_rir, sample_geometry
from .config import Config
from .dsp import ConfigurationError, Waveform, read_wav, write_wav

EXIT_USAGE = 2


def _parse_sets(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = val
    return out


def _config(args) -> Config:
    return Config.load(args.config, _parse_sets(args.set))


def _triple(cfg: Config, key: str):
    v = cfg.floats(key)
    if v and len(v) != 3:
        raise ConfigurationError(f"{key} needs three comma-separated values")
    return v or None


def cmd_gen_rir(args) -> int:
    cfg = _config(args)
    fs = cfg.int("dataset.sample_rate")
    rt60 = cfg.float("rir.rt60")
    room, src, mic = (_triple(cfg, f"rir.{k}") for k in ("room", "source", "mic"))
    if room is None or src is None or mic is None:
        geo = sample_geometry(np.random.default_rng(args.seed), rt60)
        room, src, mic = room or geo.room, src or geo.source, mic or geo.mic
    rir = generate_rir(room, src, mic, rt60, fs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "rir.wav", Waveform(rir.taps, fs))
    g = rir.geometry
    meta = {"room": list(g.room), "source": list(g.source), "mic": list(g.mic), "rt60": g.rt60,
            "sample_rate": fs, "n_taps": len(rir), "seed": args.seed}
    (out / "rir.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(out / "rir.wav")
    return 0


def cmd_gen_dataset(args) -> int:
    from .dataset import gen_dataset
    cfg = _config(args)
    path = gen_dataset(cfg, args.seed, args.out, args.count)
    print(path)
    return 0


def cmd_eval_offline(args) -> int:
    from .evaluation import eval_offline
    cfg = _config(args)
    kind = args.suppressor or cfg.get("suppressor.kind")
    paths = eval_offline(args.manifest, cfg, kind, args.out, args.weights)
    print(paths["summary"].read_text(), end="")
    return 0


def cmd_eval_streaming(args) -> int:
    from .evaluation import eval_streaming
    cfg = _config(args)
    kind = args.suppressor or cfg.get("suppressor.kind")
    paths = eval_streaming(args.manifest, cfg, kind, args.out, args.weights, args.gain_level)
    print(paths["summary"].read_text(), end="")
    return 0


def cmd_spectrogram(args) -> int:
    from .evaluation import frame_from_config
    from .export import export_spectrogram
    cfg = _config(args)
    try:
        wave = read_wav(args.wav)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read {args.wav}: {exc}") from None
    out = Path(args.out)
    prefix = out / Path(args.wav).stem if out.suffix == "" else out.with_suffix("")
    paths = export_spectrogram(wave, prefix, frame_from_config(cfg),
                               cfg.float("spectrogram.db_min"), cfg.float("spectrogram.db_max"),
                               source=Path(args.wav).name)
    print(paths["pgm"])
    return 0


def cmd_init_weights(args) -> int:
    from .neural import random_init, save_weights
    w = random_init(seed=args.seed)
    print(save_weights(w, args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="howlbench",
                                description="Closed-loop howling simulation and suppression.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="INI-style config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True, help=out_help)

    sp = sub.add_parser("gen-rir", help="generate one image-method room impulse response")
    common(sp, "output directory")
    sp.set_defaults(fn=cmd_gen_rir)

    sp = sub.add_parser("gen-dataset", help="generate teacher-forced mixtures and a manifest")
    common(sp, "output directory")
    sp.add_argument("--count", type=int, default=None, help="number of utterances")
    sp.set_defaults(fn=cmd_gen_dataset)

    for name, fn, help_ in (("eval-offline", cmd_eval_offline, "open-loop evaluation per SPR"),
                            ("eval-streaming", cmd_eval_streaming,
                             "closed-loop evaluation per gain level")):
        sp = sub.add_parser(name, help=help_)
        common(sp, "report directory")
        sp.add_argument("--manifest", required=True, help="manifest file or dataset directory")
        sp.add_argument("--suppressor", help="suppressor id (default from config)")
        sp.add_argument("--weights", help="network weights for deep_ahs")
        if name == "eval-streaming":
            sp.add_argument("--gain-level", action="append",
                            choices=("soft", "moderate", "severe"),
                            help="gain level (repeatable; default all three)")
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("spectrogram", help="export a log-magnitude spectrogram")
    common(sp, "output directory or file prefix")
    sp.add_argument("wav", help="input WAV file")
    sp.set_defaults(fn=cmd_spectrogram)

    sp = sub.add_parser("init-weights", help="write seeded random network weights")
    common(sp, "weights file")
    sp.set_defaults(fn=cmd_init_weights)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .neural.weights import WeightsError
    try:
        return args.fn(args)
    except (ConfigurationError, WeightsError) as exc:
        print(f"howlbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
