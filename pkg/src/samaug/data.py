"""Dataset ingestion, synthetic data, label schemes, and prior caching.

Three directory layouts are understood:

* generic: ``images/<id>.png``, ``labels/<id>.png`` (instance ids or
  binary), optional ``masks/<id>.masks.json`` and ``priors/`` cache.
* monuseg: ``Tissue Images/<id>.tif`` plus ``Annotations/<id>.xml`` polygon
  annotations, rasterized to instance maps; point the root at one split's
  directory. Optional ``masks/`` and ``priors/`` as in the generic layout.
* glas: ``<name>.bmp`` with ``<name>_anno.bmp`` instance annotations;
  ``train_*`` files form the train split and ``testA_*`` + ``testB_*`` are
  merged into a single test split.

Images are normalized to [0, 1] on load. Missing mask sets degrade to
all-zero priors with a warning.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from samaug.fusion import RawImage, augment, model_input
from samaug.masks import MaskSet, load_mask_set, save_mask_set, synth_masks
from samaug.priors import (
    PriorMap,
    build_boundary_prior,
    build_seg_prior,
    exterior_boundary,
    load_prior,
    zero_priors,
)
from samaug.training import TrainSample

logger = logging.getLogger(__name__)

LAYOUTS = ("generic", "monuseg", "glas")
SPLITS = ("train", "test")
CLASS_SCHEMES = ("binary", "three-class")
SCHEME_CLASSES = {"binary": 2, "three-class": 3}
IMAGE_SUFFIXES = (".png", ".tif", ".tiff", ".bmp", ".jpg", ".jpeg")


@dataclass(frozen=True)
class DatasetManifest:
    """Where and how to read a dataset."""

    root: Path
    layout: str = "generic"
    split: str = "train"
    class_scheme: str = "binary"

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}; known: {LAYOUTS}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}; known: {SPLITS}")
        if self.class_scheme not in CLASS_SCHEMES:
            raise ValueError(
                f"unknown class scheme {self.class_scheme!r}; known: {CLASS_SCHEMES}"
            )


@dataclass(frozen=True)
class Sample:
    """One image with its label, mask set (if any) and prior maps."""

    id: str
    image: RawImage
    label: np.ndarray
    mask_set: MaskSet | None
    seg_prior: PriorMap
    bnd_prior: PriorMap

    def __post_init__(self):
        label = np.asarray(self.label)
        object.__setattr__(self, "label", label)
        shape = self.image.shape
        if label.shape != shape:
            raise ValueError(f"label shape {label.shape} != image shape {shape}")
        if self.seg_prior.values.shape != shape or self.bnd_prior.values.shape != shape:
            raise ValueError("prior shapes do not match the image")


def label_onehot(label: np.ndarray, scheme: str) -> np.ndarray:
    """One-hot label channels for the configured class scheme.

    binary: (background, foreground). three-class: (background, interior,
    boundary) where the boundary channel is the union of each instance's
    exterior boundary and the interior is the rest of the instance, so
    interior and boundary partition the original foreground exactly.
    """
    if scheme not in CLASS_SCHEMES:
        raise ValueError(f"unknown class scheme {scheme!r}")
    label = np.asarray(label)
    fg = label > 0
    if scheme == "binary":
        channels = [~fg, fg]
    else:
        boundary = np.zeros_like(fg)
        for lid in np.unique(label[fg]):
            boundary |= exterior_boundary(label == lid)
        channels = [~fg, fg & ~boundary, boundary]
    return np.stack(channels, axis=-1).astype(np.float64)


def _load_image(path: Path) -> RawImage:
    img = Image.open(path)
    if img.mode in ("I", "I;16"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    else:
        if img.mode in ("RGBA", "P", "CMYK"):
            img = img.convert("RGB")
        elif img.mode == "LA":
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        return RawImage(pixels=arr, colorspace="gray")
    if arr.ndim == 3 and arr.shape[2] >= 3:
        return RawImage(pixels=arr[:, :, :3], colorspace="rgb")
    raise ValueError(f"{path}: unsupported image shape {arr.shape}")


def _load_label(path: Path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        if not (arr == arr[:, :, :1]).all():
            raise ValueError(f"{path}: label file must be single-channel")
        arr = arr[:, :, 0]
    return arr.astype(np.int32)


def _resolve_priors(stem: str, shape: tuple[int, int], mask_set: MaskSet | None,
                    priors_dir: Path, use_prior_cache: bool) -> tuple[PriorMap, PriorMap]:
    h, w = shape
    seg_path = priors_dir / f"{stem}.seg.png"
    bnd_path = priors_dir / f"{stem}.bnd.png"
    if use_prior_cache and seg_path.is_file() and bnd_path.is_file():
        return load_prior(seg_path, "segmentation"), load_prior(bnd_path, "boundary")
    if mask_set is not None:
        return build_seg_prior(mask_set), build_boundary_prior(mask_set)
    return zero_priors(width=w, height=h)


def _assemble_sample(stem: str, image: RawImage, label: np.ndarray, root: Path,
                     use_prior_cache: bool) -> Sample:
    if label.shape != image.shape:
        raise ValueError(
            f"{stem}: label shape {label.shape} != image shape {image.shape}"
        )
    mask_path = root / "masks" / f"{stem}.masks.json"
    mask_set = None
    if mask_path.is_file():
        mask_set = load_mask_set(mask_path)
        if (mask_set.height, mask_set.width) != image.shape:
            raise ValueError(
                f"{stem}: mask set is {mask_set.width}x{mask_set.height}, "
                f"image is {image.shape[1]}x{image.shape[0]}"
            )
    else:
        logger.warning("no mask set for %s; priors default to zero maps", stem)
    seg, bnd = _resolve_priors(stem, image.shape, mask_set, root / "priors",
                               use_prior_cache)
    return Sample(id=stem, image=image, label=label, mask_set=mask_set,
                  seg_prior=seg, bnd_prior=bnd)


def _find_label_file(labels_dir: Path, stem: str) -> Path:
    for suffix in IMAGE_SUFFIXES:
        candidate = labels_dir / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"missing label file for image {stem!r} in {labels_dir}")


def _load_generic(manifest: DatasetManifest, use_prior_cache: bool) -> list[Sample]:
    images_dir = manifest.root / "images"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"generic layout needs an images/ directory in {manifest.root}")
    files = sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        logger.warning("no images found in %s", images_dir)
        return []
    samples = []
    for path in files:
        image = _load_image(path)
        label = _load_label(_find_label_file(manifest.root / "labels", path.stem))
        samples.append(_assemble_sample(path.stem, image, label, manifest.root,
                                        use_prior_cache))
    return samples


def _monuseg_polygons(xml_path: Path) -> list[list[tuple[float, float]]]:
    tree = ET.parse(xml_path)
    polygons = []
    for region in tree.iter("Region"):
        verts = [
            (float(v.get("X")), float(v.get("Y")))
            for v in region.iter("Vertex")
        ]
        if len(verts) >= 3:
            polygons.append(verts)
    return polygons


def _rasterize_polygons(polygons, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    canvas = Image.new("I", (w, h), 0)
    draw = ImageDraw.Draw(canvas)
    for i, poly in enumerate(polygons, start=1):
        draw.polygon(poly, fill=i)
    return np.asarray(canvas, dtype=np.int32)


def _load_monuseg(manifest: DatasetManifest, use_prior_cache: bool) -> list[Sample]:
    tissue_dir = manifest.root / "Tissue Images"
    ann_dir = manifest.root / "Annotations"
    if not tissue_dir.is_dir() or not ann_dir.is_dir():
        raise FileNotFoundError(
            f"monuseg layout needs 'Tissue Images/' and 'Annotations/' in {manifest.root}"
        )
    files = sorted(p for p in tissue_dir.iterdir() if p.suffix.lower() in (".tif", ".tiff", ".png"))
    if not files:
        logger.warning("no tissue images found in %s", tissue_dir)
        return []
    samples = []
    for path in files:
        xml_path = ann_dir / f"{path.stem}.xml"
        if not xml_path.is_file():
            raise FileNotFoundError(f"missing annotation XML for {path.stem!r}")
        image = _load_image(path)
        label = _rasterize_polygons(_monuseg_polygons(xml_path), image.shape)
        samples.append(_assemble_sample(path.stem, image, label, manifest.root,
                                        use_prior_cache))
    return samples


def _load_glas(manifest: DatasetManifest, use_prior_cache: bool) -> list[Sample]:
    if not manifest.root.is_dir():
        raise FileNotFoundError(f"dataset root {manifest.root} does not exist")
    # test parts A and B are evaluated together as one merged split
    prefixes = ("train_",) if manifest.split == "train" else ("testA_", "testB_")
    files = sorted(
        p for p in manifest.root.iterdir()
        if p.suffix.lower() == ".bmp"
        and not p.stem.endswith("_anno")
        and p.stem.startswith(prefixes)
    )
    if not files:
        logger.warning("no %s images found in %s", manifest.split, manifest.root)
        return []
    samples = []
    for path in files:
        anno = manifest.root / f"{path.stem}_anno.bmp"
        if not anno.is_file():
            raise FileNotFoundError(f"missing annotation bmp for {path.stem!r}")
        image = _load_image(path)
        label = _load_label(anno)
        samples.append(_assemble_sample(path.stem, image, label, manifest.root,
                                        use_prior_cache))
    return samples


_LOADERS = {"generic": _load_generic, "monuseg": _load_monuseg, "glas": _load_glas}


def load_dataset(manifest: DatasetManifest, use_prior_cache: bool = True) -> list[Sample]:
    """Load every sample under the manifest, building priors as needed.

    Priors come from the on-disk cache when present (unless disabled), else
    from the mask set, else zero maps with a warning.
    """
    if not manifest.root.is_dir():
        raise FileNotFoundError(f"dataset root {manifest.root} does not exist")
    return _LOADERS[manifest.layout](manifest, use_prior_cache)


def random_crop(sample: Sample, size: int, rng: np.random.Generator) -> Sample:
    """Crop one random size x size window, same offset for image, label, priors.

    The mask set is dropped from the result (proposals refer to the full
    frame). Deterministic given the generator state.
    """
    h, w = sample.image.shape
    if size > h or size > w:
        raise ValueError(f"crop size {size} exceeds image size {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))

    def cut(a: np.ndarray) -> np.ndarray:
        return a[top:top + size, left:left + size]

    image = RawImage(pixels=cut(sample.image.pixels), colorspace=sample.image.colorspace)
    return Sample(
        id=sample.id,
        image=image,
        label=cut(sample.label),
        mask_set=None,
        seg_prior=PriorMap(values=cut(sample.seg_prior.values), kind="segmentation"),
        bnd_prior=PriorMap(values=cut(sample.bnd_prior.values), kind="boundary"),
    )


def _ellipse_mask(shape: tuple[int, int], cx: float, cy: float,
                  ax: float, bx: float, theta: float) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    ct, st = np.cos(theta), np.sin(theta)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    return (u / ax) ** 2 + (v / bx) ** 2 <= 1.0


def synth_dataset(
    n_images: int,
    image_size: int,
    blobs_per_image: int,
    seed: int,
    noise_sigma: float = 0.3,
    background: float = 0.4,
    contrast_range: tuple[float, float] = (0.03, 0.22),
    mask_dilate_px: int = 1,
    mask_drop_prob: float = 0.2,
    stability_range: tuple[float, float] = (0.7, 1.0),
) -> list[Sample]:
    """Seeded synthetic dataset of noisy elliptical blobs on a flat background.

    Blobs are placed by rejection sampling so instances never touch (a blob
    that cannot be placed after 30 attempts is skipped); each gets an
    intensity background + U(contrast_range). The defaults make the raw
    image deliberately hard (blob contrast well below the noise level) while
    mask-derived priors stay noiseless. Mask sets come from synth_masks with
    the given dilation/drop parameters, and priors are built from them.
    Fully deterministic given the seed.
    """
    if n_images < 0 or image_size < 8 or blobs_per_image < 0:
        raise ValueError("synthetic dataset parameters must be positive")
    rng = np.random.default_rng(seed)
    ax_min = max(2.0, image_size / 16.0)
    ax_max = max(3.0, image_size / 8.0)
    samples = []
    for i in range(n_images):
        label = np.zeros((image_size, image_size), dtype=np.int32)
        occupied = np.zeros_like(label, dtype=bool)
        placed = 0
        for _ in range(blobs_per_image):
            for _ in range(30):
                cx = rng.uniform(ax_max, image_size - ax_max)
                cy = rng.uniform(ax_max, image_size - ax_max)
                ax = rng.uniform(ax_min, ax_max)
                bx = rng.uniform(ax_min, ax_max)
                theta = rng.uniform(0.0, np.pi)
                region = _ellipse_mask(label.shape, cx, cy, ax, bx, theta)
                if not region.any():
                    continue
                if (ndimage.binary_dilation(region) & occupied).any():
                    continue
                placed += 1
                label[region] = placed
                occupied |= ndimage.binary_dilation(region)
                break
        pixels = np.full(label.shape, background, dtype=np.float64)
        for lid in range(1, placed + 1):
            pixels[label == lid] = background + rng.uniform(*contrast_range)
        pixels = np.clip(pixels + rng.normal(0.0, noise_sigma, label.shape), 0.0, 1.0)
        mask_seed = int(rng.integers(2**31 - 1))
        ms = synth_masks(label, dilate_px=mask_dilate_px, drop_prob=mask_drop_prob,
                         stability_range=stability_range, seed=mask_seed)
        samples.append(Sample(
            id=f"synth-{i:03d}",
            image=RawImage(pixels=pixels, colorspace="gray"),
            label=label,
            mask_set=ms,
            seg_prior=build_seg_prior(ms),
            bnd_prior=build_boundary_prior(ms),
        ))
    return samples


def write_dataset(samples: list[Sample], root) -> None:
    """Write samples in the generic layout (images/, labels/, masks/)."""
    root = Path(root)
    for sub in ("images", "labels", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for s in samples:
        pixels = np.round(s.image.pixels * 255.0).astype(np.uint8)
        Image.fromarray(pixels).save(root / "images" / f"{s.id}.png")
        Image.fromarray(s.label.astype(np.uint16)).save(root / "labels" / f"{s.id}.png")
        if s.mask_set is not None:
            save_mask_set(s.mask_set, root / "masks" / f"{s.id}.masks.json")


def to_train_samples(samples: list[Sample], scheme: str) -> list[TrainSample]:
    """Build (raw presentation, augmented image, one-hot label) triples."""
    out = []
    for s in samples:
        out.append(TrainSample(
            raw=model_input(s.image),
            aug=augment(s.image, s.seg_prior, s.bnd_prior).pixels,
            onehot=label_onehot(s.label, scheme),
        ))
    return out
