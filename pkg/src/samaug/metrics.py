"""Pixel- and object-level segmentation metrics.

Pixel level: Dice and F-score on binary maps. Object level: the aggregated
Jaccard index (greedy per-ground-truth matching by Jaccard, unmatched
prediction areas penalize the denominator) and the area-weighted
bidirectional object Dice used for gland segmentation evaluation. Instance
maps are 2-D integer arrays, 0 = background, positive = instance id; ids may
be arbitrary (both metrics are invariant to relabeling).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

METRIC_NAMES = ("dice", "fscore", "aji", "object_dice")


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P & G| / (|P| + |G|) on binary maps; 1.0 when both are empty."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    _check_same_shape(p, g)
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / total


def pixel_fscore(pred: np.ndarray, gt: np.ndarray) -> float:
    """Harmonic mean of pixel precision and recall.

    0 when precision + recall is 0; 1.0 when both maps are empty (an empty
    prediction of an empty target is a perfect one).
    """
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    _check_same_shape(p, g)
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    if tp + fp + fn == 0:
        return 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def label_instances(pred: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Connected-component labeling of a binary map (8-connectivity default)."""
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = np.ones((3, 3), dtype=bool) if connectivity == 8 else None
    labels, _ = ndimage.label(np.asarray(pred, dtype=bool), structure=structure)
    return labels


def _instance_ids_areas(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ids, counts = np.unique(labels[labels > 0], return_counts=True)
    return ids, counts.astype(np.int64)


def _overlap_matrix(gt: np.ndarray, pred: np.ndarray,
                    gt_ids: np.ndarray, pred_ids: np.ndarray) -> np.ndarray:
    """Pairwise intersection areas, rows = gt ids, cols = pred ids (both sorted)."""
    inter = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    both = (gt > 0) & (pred > 0)
    if both.any():
        g = np.searchsorted(gt_ids, gt[both])
        p = np.searchsorted(pred_ids, pred[both])
        np.add.at(inter, (g, p), 1)
    return inter


def _as_instance_map(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"instance map must be 2-D, got shape {m.shape}")
    if not np.issubdtype(m.dtype, np.integer):
        if not np.issubdtype(m.dtype, np.bool_):
            raise ValueError(f"instance map must be integer-typed, got {m.dtype}")
        m = m.astype(np.int32)
    if m.size and m.min() < 0:
        raise ValueError("instance ids must be non-negative")
    return m


def aji(pred: np.ndarray, gt: np.ndarray) -> float:
    """Aggregated Jaccard index between instance maps.

    Every ground-truth instance greedily matches the overlapping prediction
    with the highest Jaccard (ties broken by lowest prediction id; a
    prediction may be matched more than once); matched intersections
    accumulate in the numerator and matched unions in the denominator.
    Ground-truth instances with no overlapping prediction add their own area
    to the denominator, as do predictions never matched. 1.0 when both maps
    are empty.
    """
    pred = _as_instance_map(pred)
    gt = _as_instance_map(gt)
    _check_same_shape(pred, gt)
    gt_ids, gt_areas = _instance_ids_areas(gt)
    pred_ids, pred_areas = _instance_ids_areas(pred)
    if len(gt_ids) == 0 and len(pred_ids) == 0:
        return 1.0
    inter = _overlap_matrix(gt, pred, gt_ids, pred_ids)
    numer = 0
    denom = 0
    matched = np.zeros(len(pred_ids), dtype=bool)
    for i in range(len(gt_ids)):
        cand = np.flatnonzero(inter[i])
        if cand.size == 0:
            denom += int(gt_areas[i])
            continue
        union = gt_areas[i] + pred_areas[cand] - inter[i, cand]
        jaccard = inter[i, cand] / union
        k = int(np.argmax(jaccard))  # first max = lowest pred id (ids sorted)
        numer += int(inter[i, cand[k]])
        denom += int(union[k])
        matched[cand[k]] = True
    denom += int(pred_areas[~matched].sum())
    return numer / denom


def object_dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """Area-weighted bidirectional object-level Dice between instance maps.

    Each instance is paired with the maximally overlapping counterpart on
    the other side (Dice 0 if none overlaps); per-side sums weight each
    instance by its area fraction, and the two directions are averaged.
    1.0 when both maps are empty.
    """
    pred = _as_instance_map(pred)
    gt = _as_instance_map(gt)
    _check_same_shape(pred, gt)
    gt_ids, gt_areas = _instance_ids_areas(gt)
    pred_ids, pred_areas = _instance_ids_areas(pred)
    if len(gt_ids) == 0 and len(pred_ids) == 0:
        return 1.0
    inter = _overlap_matrix(gt, pred, gt_ids, pred_ids)

    def directed(areas_a, areas_b, overlaps):
        # overlaps rows follow areas_a; counterpart = max-overlap column
        total = int(areas_a.sum())
        if total == 0:
            return 0.0
        weighted = 0.0
        for i in range(len(areas_a)):
            j = int(np.argmax(overlaps[i])) if overlaps.shape[1] else 0
            best = int(overlaps[i, j]) if overlaps.shape[1] else 0
            if best > 0:
                d = 2.0 * best / (int(areas_a[i]) + int(areas_b[j]))
            else:
                d = 0.0
            weighted += int(areas_a[i]) * d
        # single division keeps identical maps at exactly 1.0
        return weighted / total

    s_gt = directed(gt_areas, pred_areas, inter)
    s_pred = directed(pred_areas, gt_areas, inter.T)
    return 0.5 * (s_gt + s_pred)


@dataclass
class EvalReport:
    """Per-image metric records plus their arithmetic means.

    per_image entries are dicts with an "id" key and a subset of the metric
    names; the aggregate holds the mean of each metric over the images where
    it is present.
    """

    per_image: list[dict] = field(default_factory=list)

    @property
    def aggregate(self) -> dict:
        out = {}
        for name in METRIC_NAMES:
            values = [r[name] for r in self.per_image if name in r]
            if values:
                out[name] = float(np.mean(values))
        return out

    def to_dict(self) -> dict:
        return {"per_image": self.per_image, "aggregate": self.aggregate}


def evaluate_sample(pred_fg: np.ndarray, gt_instances: np.ndarray) -> dict:
    """All four metrics for one image.

    pred_fg is the binary predicted foreground; its instances are its
    8-connected components. gt_instances is the ground-truth instance map
    (a binary ground truth is relabeled by connectivity the same way).
    """
    gt_instances = _as_instance_map(gt_instances)
    gt_fg = gt_instances > 0
    ids = np.unique(gt_instances)
    if ids.size and ids.max() == 1:
        gt_instances = label_instances(gt_fg)
    pred_instances = label_instances(np.asarray(pred_fg, dtype=bool))
    return {
        "dice": dice(pred_fg, gt_fg),
        "fscore": pixel_fscore(pred_fg, gt_fg),
        "aji": aji(pred_instances, gt_instances),
        "object_dice": object_dice(pred_instances, gt_instances),
    }
