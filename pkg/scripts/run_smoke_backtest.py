#!/usr/bin/env python3
"""Run the whole pipeline on a small synthetic dataset.

Generates data, then drives every CLI stage with a reduced model config
so the run finishes in minutes on one core.
"""

import argparse
import subprocess
import sys
import tempfile
from pathlib import Path

SMALL_CONFIG = """\
data:
  lookahead: 5
  normalization_window: 20
model:
  lookback: 8
  proj_dim: 12
  conv_channels: 12
  hidden_dim: 12
  memory_dim: 8
  dgf_hidden: 12
  conv_layers: 1
  poly_order: 2
  head_hidden: 12
phases:
  max_phases: 2
train:
  learning_rate: 0.002
  epochs: 3
  patience: 3
"""


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/smoke")
    parser.add_argument("--stocks", type=int, default=30)
    parser.add_argument("--days", type=int, default=756)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    subprocess.run([sys.executable, str(Path(__file__).parent /
                                        "make_synthetic_data.py"),
                    "--stocks", str(args.stocks), "--days", str(args.days),
                    "--out", str(data_dir)], check=True)
    cfg = out / "config.yaml"
    cfg.write_text(SMALL_CONFIG)

    base = [sys.executable, "-m", "hgwave.cli"]
    common = ["--config", str(cfg), "--out", str(out)]
    for stage in ("ingest", "features", "graph", "train", "predict",
                  "backtest"):
        cmd = base + [stage] + common
        if stage == "ingest":
            cmd += ["--data", str(data_dir / "ohlcv.csv"),
                    "--meta", str(data_dir / "meta.csv")]
        print("::", " ".join(cmd))
        subprocess.run(cmd, check=True)
    print(f"done; report at {out / 'report.json'}")


if __name__ == "__main__":
    main()
