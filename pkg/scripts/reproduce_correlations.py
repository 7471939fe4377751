#!/usr/bin/env python3
"""Measure every image in a dataset and report the measures-vs-score
correlation matrix (full set and with the empty category removed), plus
per-category histogram bundles with dependence tests.

    python3 scripts/reproduce_correlations.py path/to/dataset --size 256
"""

import argparse
import json
from pathlib import Path

from speciescope.cli import main as cli_main
from speciescope.cli import read_measures_csv
from speciescope.dataset import load_manifest
from speciescope.stats import category_histograms, correlation_table


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", help="dataset root containing manifest.csv")
    parser.add_argument("--size", type=int, default=512, help="measuring raster size")
    parser.add_argument("--histogram-measure", default="acomplex")
    args = parser.parse_args()
    root = Path(args.root)
    measures_csv = root / "measures.csv"
    code = cli_main(
        ["measure", str(root / "manifest.csv"), "--out", str(measures_csv), "--size", str(args.size)]
    )
    if code != 0:
        raise SystemExit(code)
    ds = load_manifest(root / "manifest.csv")
    records = read_measures_csv(measures_csv)
    for label, excluded in (("full", set()), ("non-empty", {"empty", "black"})):
        rated = [
            s
            for s in ds.specimens
            if s.evaluation is not None and s.id in records and s.category not in excluded
        ]
        table = correlation_table([records[s.id] for s in rated], [s.score for s in rated])
        out = root / f"correlations_{label.replace('-', '_')}.csv"
        table.to_csv(out)
        print(f"--- {label} (n={len(rated)}) -> {out}")
        print(f"  top score correlate: {table.top_score_correlate()} "
              f"(r={table.cell(table.top_score_correlate(), 'score'):.3f})")
        print(f"  entropy-energy r = {table.cell('entropy', 'energy'):.3f}")
        print(f"  contours-euler r = {table.cell('contours', 'euler'):.3f}")
    rated = [s for s in ds.specimens if s.evaluation is not None and s.id in records]
    bundles = category_histograms(rated, records, args.histogram_measure)
    hist_out = root / "category_histograms.json"
    hist_out.write_text(
        json.dumps({c: b.as_dict() for c, b in bundles.items()}, indent=2),
        encoding="utf-8",
    )
    print(f"per-category histograms ({args.histogram_measure}) -> {hist_out}")
    for cat, b in sorted(bundles.items()):
        p = f", p={b.p_value:.2e}" if b.p_value is not None else ""
        print(f"  {cat:>10}: n={b.count:4d}  {b.statistic}={b.value:.3f}{p}")


if __name__ == "__main__":
    main()
