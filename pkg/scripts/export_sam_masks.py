#!/usr/bin/env python3
"""Export mask-set files from a real Segment Anything automatic-mask run.

Needs the external ``segment_anything`` package and a model checkpoint;
neither ships with this repository. Grid density and the generator's
filtering thresholds are user-set parameters with no claim of being optimal:
the defaults below (32x32 grid prompt, the generator's stock thresholds)
are a starting point to tune per dataset.

Writes one ``<image-stem>.masks.json`` per image into --out, in the format
consumed by the rest of the pipeline (see README, "Mask-set files").
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from samaug.masks import InstanceMask, MaskSet, save_mask_set

IMAGE_SUFFIXES = (".png", ".tif", ".tiff", ".bmp", ".jpg", ".jpeg")


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--images", type=Path, required=True, help="directory of images")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--checkpoint", type=Path, required=True,
                   help="segment-anything model checkpoint (.pth)")
    p.add_argument("--model-type", default="vit_h",
                   help="segment-anything backbone name (default vit_h)")
    p.add_argument("--points-per-side", type=int, default=32,
                   help="grid prompt density (default 32x32 points)")
    p.add_argument("--pred-iou-thresh", type=float, default=None,
                   help="generator quality threshold (default: generator's own)")
    p.add_argument("--stability-score-thresh", type=float, default=None,
                   help="generator stability threshold (default: generator's own)")
    return p.parse_args()


def main():
    args = parse_args()
    try:
        from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
    except ImportError:
        print("error: the segment_anything package is not installed; "
              "install it and download a checkpoint to use this adapter",
              file=sys.stderr)
        return 1

    sam = sam_model_registry[args.model_type](checkpoint=str(args.checkpoint))
    gen_kwargs = {"points_per_side": args.points_per_side}
    if args.pred_iou_thresh is not None:
        gen_kwargs["pred_iou_thresh"] = args.pred_iou_thresh
    if args.stability_score_thresh is not None:
        gen_kwargs["stability_score_thresh"] = args.stability_score_thresh
    generator = SamAutomaticMaskGenerator(sam, **gen_kwargs)

    args.out.mkdir(parents=True, exist_ok=True)
    images = sorted(p for p in args.images.iterdir()
                    if p.suffix.lower() in IMAGE_SUFFIXES)
    for path in images:
        rgb = np.asarray(Image.open(path).convert("RGB"))
        annotations = generator.generate(rgb)
        masks = tuple(
            InstanceMask(
                bitmap=np.asarray(ann["segmentation"], dtype=bool),
                stability=float(np.clip(ann["stability_score"], 0.0, 1.0)),
            )
            for ann in annotations
            if np.asarray(ann["segmentation"]).any()
        )
        ms = MaskSet(width=rgb.shape[1], height=rgb.shape[0], masks=masks,
                     source="external-sam")
        save_mask_set(ms, args.out / f"{path.stem}.masks.json")
        print(f"{path.stem}: {len(masks)} masks")
    return 0


if __name__ == "__main__":
    sys.exit(main())
