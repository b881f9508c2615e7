"""Closed-loop howling with and without suppression.

Runs one scene at a chosen loop-gain margin through passthrough, notch,
NLMS and Kalman AFC, writes the microphone traces and their spectrograms,
and prints the howling score and SI-SDR for each.

    python demos/howling_demo.py --out demo_out --margin 2.0
"""

import argparse
from pathlib import Path

import numpy as np

from howlbench.acoustics import NonlinearitySpec, generate_rir
from howlbench.detection import howling_score
from howlbench.dsp import write_wav
from howlbench.export import export_spectrogram
from howlbench.loop import LoopConfig, gain_for_margin, run_streaming
from howlbench.metrics import si_sdr
from howlbench.signals import synthetic_speech
from howlbench.suppressors import make_suppressor


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--margin", type=float, default=2.0)
    ap.add_argument("--seconds", type=float, default=8.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    rir = generate_rir((6.0, 5.0, 3.0), (2.0, 2.0, 1.5), (3.0, 2.6, 1.4), 0.3)
    rir = rir.scaled(1.0 / np.linalg.norm(rir.taps))
    nl = NonlinearitySpec("hard_clip")
    cfg = LoopConfig(0.2, gain_for_margin(rir, nl, args.margin), nl, rir)
    s = synthetic_speech(args.seed, args.seconds, rms=0.05)
    n = np.random.default_rng(args.seed).standard_normal(len(s)) * 0.05 * 10 ** (-30 / 20)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"loop gain {cfg.gain:.2f} (margin {args.margin})")
    print(f"{'suppressor':<12} {'howling':>8} {'SI-SDR':>8} {'rms ratio':>10}")
    for kind in ("passthrough", "notch", "afc_nlms", "afc_kalman"):
        rep = run_streaming(cfg, make_suppressor(kind), s, n)
        write_wav(out / f"{kind}_mic.wav", rep.microphone_trace)
        export_spectrogram(rep.microphone_trace, out / f"{kind}_mic", source=f"{kind}_mic.wav")
        print(f"{kind:<12} {howling_score(rep.s_hat):>8.3f} {si_sdr(rep.s_hat, s):>8.2f} "
              f"{rep.rms_ratio():>10.1f}")


if __name__ == "__main__":
    main()
