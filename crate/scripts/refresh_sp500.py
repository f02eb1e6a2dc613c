#!/usr/bin/env python3
"""Regenerate crates/core/data/sp500_close.csv from the skfolio wheel.

    pip download skfolio --no-deps -d /tmp/skf
    python3 scripts/refresh_sp500.py /tmp/skf/skfolio-*.whl

Only the standard library is used. The window is clipped to 2020-01-01..2023-12-31;
the skfolio series currently ends on 2022-12-28.
"""
import csv
import gzip
import io
import sys
import zipfile
from pathlib import Path

MEMBER = "skfolio/datasets/data/sp500_index.csv.gz"
FIRST, LAST = "2020-01-01", "2023-12-31"
OUT = Path(__file__).resolve().parent.parent / "crates/core/data/sp500_close.csv"


def main(wheel: str) -> None:
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read(MEMBER)).decode()
    rows = [r for r in csv.DictReader(io.StringIO(raw)) if FIRST <= r["Date"] <= LAST]
    with OUT.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["date", "close"])
        for r in rows:
            w.writerow([r["Date"], r["SP500"]])
    print(f"{len(rows)} rows, {rows[0]['Date']}..{rows[-1]['Date']} -> {OUT}")


if __name__ == "__main__":
    main(sys.argv[1])
