#!/usr/bin/env python3
"""Build a persistent synthetic dataset (toy renders + scripted ratings)
so the CLI, service and web UI have something to chew on.

    python3 scripts/make_synthetic_dataset.py out/dataset --n 600 --seed 11
"""

import argparse
from pathlib import Path

from speciescope import synth
from speciescope.features import write_features


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", help="output directory")
    parser.add_argument("--n", type=int, default=600)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--image-size", type=int, default=256)
    parser.add_argument(
        "--features",
        action="store_true",
        help="also write a synthetic separable features.fvec sidecar",
    )
    args = parser.parse_args()
    ds = synth.build_dataset(
        args.root, n=args.n, seed=args.seed, image_size=args.image_size
    )
    print(f"built {len(ds)} specimens under {args.root}")
    print(f"categories: {sorted(ds.category_set)}")
    if args.features:
        fs = synth.separable_features(ds, seed=args.seed)
        write_features(Path(args.root) / "features.fvec", fs.ids, fs.matrix)
        print("wrote features.fvec")


if __name__ == "__main__":
    main()
