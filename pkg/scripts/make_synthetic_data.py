#!/usr/bin/env python3
"""Generate a synthetic OHLCV dataset + metadata CSV for experiments."""

import argparse
from pathlib import Path

from hgwave.synthetic import generate_ohlcv, write_csvs


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--stocks", type=int, default=30)
    parser.add_argument("--days", type=int, default=756)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="data", help="output directory")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    calendar, symbols, arrays, meta = generate_ohlcv(
        n_stocks=args.stocks, n_days=args.days, seed=args.seed)
    data_path = out / "ohlcv.csv"
    meta_path = out / "meta.csv"
    write_csvs(data_path, meta_path, calendar, symbols, arrays, meta)
    print(f"wrote {data_path} ({args.stocks} stocks x {args.days} days) "
          f"and {meta_path}")


if __name__ == "__main__":
    main()
