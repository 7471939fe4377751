#!/usr/bin/env python3
"""Benchmark the tabular genotype predictor against the k-NN baseline on
a dataset's train/validation split, sweeping k.

    python3 scripts/benchmark_predictors.py path/to/dataset --seed 0
"""

import argparse
import json
from pathlib import Path

from speciescope.dataset import load_manifest
from speciescope.genopredict import TabularConfig, compare_predictors, report_rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", help="dataset root containing manifest.csv")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    root = Path(args.root)
    ds = load_manifest(root / "manifest.csv")
    report = compare_predictors(ds, TabularConfig(seed=args.seed))
    print(f"{'predictor':<12} {'cat. accuracy':>14} {'score rmse':>12}")
    print(
        f"{'tabular':<12} {report['tabular']['category_accuracy']:>14.3f} "
        f"{report['tabular']['score_rmse']:>12.3f}"
    )
    for k, acc in report["knn"]["category_accuracy_by_k"].items():
        print(f"{f'knn (k={k})':<12} {acc:>14.3f} {report['knn']['score_rmse_by_k'][k]:>12.3f}")
    out = root / "benchmark.json"
    out.write_text(json.dumps(report, indent=2, default=float), encoding="utf-8")
    csv_out = root / "benchmark.csv"
    with csv_out.open("w", encoding="utf-8") as fh:
        fh.write("predictor,target,metric,value,config_hash\n")
        for row in report_rows(report):
            fh.write(
                f"{row['predictor']},{row['target']},{row['metric']},"
                f"{row['value']},{row['config_hash']}\n"
            )
    print(f"wrote {out} and {csv_out}")


if __name__ == "__main__":
    main()
