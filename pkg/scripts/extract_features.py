#!/usr/bin/env python3
"""Populate a 2048-d feature sidecar from a pretrained image network.

Runs every dataset image through a torchvision ResNet-50 (final pooling
layer, 512x512 input) and writes the binary FVEC sidecar the features
module ingests.  Needs torch/torchvision and downloadable weights; when
those are unavailable the script says so and exits nonzero.

    python3 scripts/extract_features.py path/to/dataset
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from speciescope.dataset import load_manifest
from speciescope.features import FEATURE_DIM, write_features


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", help="dataset root containing manifest.csv")
    parser.add_argument("--out", default=None, help="sidecar path (default <root>/features.fvec)")
    parser.add_argument("--batch", type=int, default=16)
    args = parser.parse_args()
    root = Path(args.root)
    out = Path(args.out) if args.out else root / "features.fvec"
    try:
        import torch
        import torchvision.models as models
        import torchvision.transforms as T
        from PIL import Image

        weights = models.ResNet50_Weights.IMAGENET1K_V2
        net = models.resnet50(weights=weights)
    except Exception as exc:
        print(f"cannot load a pretrained extractor here: {exc}", file=sys.stderr)
        print("provide a sidecar computed elsewhere, or use synth.separable_features", file=sys.stderr)
        return 1
    net.fc = torch.nn.Identity()
    net.eval()
    transform = T.Compose(
        [
            T.Resize((512, 512)),
            T.ToTensor(),
            T.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
        ]
    )
    ds = load_manifest(root / "manifest.csv")
    specimens = [s for s in ds.specimens if s.image_path]
    ids, rows = [], []
    with torch.no_grad():
        for start in range(0, len(specimens), args.batch):
            chunk = specimens[start : start + args.batch]
            batch = torch.stack(
                [transform(Image.open(root / s.image_path).convert("RGB")) for s in chunk]
            )
            feats = net(batch).numpy()
            ids += [s.id for s in chunk]
            rows.append(feats)
            print(f"\r{len(ids)}/{len(specimens)}", end="", flush=True)
    matrix = np.vstack(rows)
    assert matrix.shape[1] == FEATURE_DIM
    write_features(out, ids, matrix)
    print(f"\nwrote {out} ({len(ids)} vectors)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
