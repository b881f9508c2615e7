"""Offline SI-SDR per SPR bucket for several processors on a generated set.

    python demos/offline_table.py --out offline_out --count 20
"""

import argparse
import json
from pathlib import Path

from howlbench.config import Config
from howlbench.dataset import gen_dataset
from howlbench.evaluation import eval_offline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="offline_out")
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--linear", action="store_true", help="identity loudspeaker nonlinearity")
    args = ap.parse_args()

    values = {"dataset.duration": "4.0"}
    if args.linear:
        values["dataset.nl_kinds"] = "identity"
    cfg = Config(values)
    out = Path(args.out)
    manifest = gen_dataset(cfg, args.seed, out / "data", args.count)
    buckets = cfg.floats("eval.spr_buckets")
    print("processor".ljust(12) + "".join(f"SPR {b:+g}".rjust(10) for b in buckets))
    for kind in ("passthrough", "notch", "afc_nlms", "afc_kalman", "deep_ahs", "oracle"):
        paths = eval_offline(manifest, cfg, kind, out / kind)
        cells = json.loads(paths["report"].read_text())["cells"]
        print(kind.ljust(12) + "".join(f"{c['si_sdr_out']:10.2f}" for c in cells))


if __name__ == "__main__":
    main()
