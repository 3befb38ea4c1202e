import numpy as np
import pytest

from samaug.metrics import (
    EvalReport,
    aji,
    dice,
    evaluate_sample,
    label_instances,
    object_dice,
    pixel_fscore,
)


def aji_oracle(pred, gt):
    """Pixel-set brute force of the greedy aggregated Jaccard matching."""
    gt_sets = {int(i): set(map(tuple, np.argwhere(gt == i)))
               for i in np.unique(gt) if i > 0}
    pred_sets = {int(j): set(map(tuple, np.argwhere(pred == j)))
                 for j in np.unique(pred) if j > 0}
    if not gt_sets and not pred_sets:
        return 1.0
    numer = 0
    denom = 0
    used = set()
    for i in sorted(gt_sets):
        best_j = None
        best_jac = -1.0
        for j in sorted(pred_sets):
            inter = len(gt_sets[i] & pred_sets[j])
            if inter == 0:
                continue
            jac = inter / len(gt_sets[i] | pred_sets[j])
            if jac > best_jac:
                best_jac = jac
                best_j = j
        if best_j is None:
            denom += len(gt_sets[i])
            continue
        numer += len(gt_sets[i] & pred_sets[best_j])
        denom += len(gt_sets[i] | pred_sets[best_j])
        used.add(best_j)
    denom += sum(len(s) for j, s in pred_sets.items() if j not in used)
    return numer / denom


def object_dice_oracle(pred, gt):
    """Pixel-set brute force of the area-weighted bidirectional object Dice."""
    def sets_of(m):
        return {int(i): set(map(tuple, np.argwhere(m == i)))
                for i in np.unique(m) if i > 0}

    gt_sets, pred_sets = sets_of(gt), sets_of(pred)
    if not gt_sets and not pred_sets:
        return 1.0

    def directed(a_sets, b_sets):
        total = sum(len(s) for s in a_sets.values())
        if total == 0:
            return 0.0
        acc = 0.0
        for i in sorted(a_sets):
            best, best_inter = None, 0
            for j in sorted(b_sets):
                inter = len(a_sets[i] & b_sets[j])
                if inter > best_inter:
                    best, best_inter = j, inter
            d = 0.0
            if best is not None:
                d = 2.0 * best_inter / (len(a_sets[i]) + len(b_sets[best]))
            acc += len(a_sets[i]) * d
        return acc / total

    return 0.5 * (directed(gt_sets, pred_sets) + directed(pred_sets, gt_sets))


def random_instance_map(rng, shape=(16, 16), n=4):
    out = np.zeros(shape, dtype=np.int32)
    for k in range(1, n + 1):
        h = rng.integers(2, 6)
        w = rng.integers(2, 6)
        y = rng.integers(0, shape[0] - h)
        x = rng.integers(0, shape[1] - w)
        out[y:y + h, x:x + w] = k
    return out


def test_dice_trivials():
    a = np.zeros((4, 4), dtype=bool)
    a[:2] = True
    assert dice(a, a) == 1.0
    b = np.zeros((4, 4), dtype=bool)
    b[3:] = True
    assert dice(a, b) == 0.0
    assert dice(np.zeros((4, 4), dtype=bool), np.zeros((4, 4), dtype=bool)) == 1.0


def test_dice_half_overlap():
    pred = np.zeros((4, 4), dtype=bool)
    gt = np.zeros((4, 4), dtype=bool)
    pred[0, :4] = True            # |P| = 4
    gt[0, 2:] = True
    gt[1, :2] = True              # |G| = 4, overlap = 2
    assert dice(pred, gt) == 0.5


def test_dice_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.random((8, 8)) < 0.4
        b = rng.random((8, 8)) < 0.4
        assert dice(a, b) == dice(b, a)


def test_fscore_trivials():
    gt = np.zeros((4, 4), dtype=bool)
    gt[:2] = True
    assert pixel_fscore(gt, gt) == 1.0
    assert pixel_fscore(np.zeros_like(gt), gt) == 0.0
    assert pixel_fscore(np.zeros_like(gt), np.zeros_like(gt)) == 1.0


def test_fscore_counts():
    pred = np.zeros((4, 4), dtype=bool)
    gt = np.zeros((4, 4), dtype=bool)
    pred[0, :4] = True            # TP=2 on (0,2),(0,3); FP=2 on (0,0),(0,1)
    gt[0, 2:] = True
    gt[1, :2] = True              # FN=2 on (1,0),(1,1)
    assert pixel_fscore(pred, gt) == 0.5


def test_fscore_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.random((8, 8)) < 0.4
        b = rng.random((8, 8)) < 0.4
        assert pixel_fscore(a, b) == pytest.approx(pixel_fscore(b, a), abs=1e-15)


def test_label_instances_trivials():
    assert not label_instances(np.zeros((5, 5), dtype=bool)).any()
    two = np.zeros((5, 5), dtype=bool)
    two[0, 0] = True
    two[4, 4] = True
    labeled = label_instances(two)
    assert len(np.unique(labeled[labeled > 0])) == 2


def test_label_instances_connectivity():
    diag = np.zeros((4, 4), dtype=bool)
    diag[0, 0] = True
    diag[1, 1] = True
    assert len(np.unique(label_instances(diag, 8)[diag])) == 1
    assert len(np.unique(label_instances(diag, 4)[diag])) == 2
    with pytest.raises(ValueError):
        label_instances(diag, 6)


def test_aji_identical_and_disjoint():
    gt = random_instance_map(np.random.default_rng(2))
    assert aji(gt, gt) == 1.0
    pred = np.zeros_like(gt)
    pred[gt == 0] = 1  # complement: zero overlap with every instance
    assert aji(pred, gt) == 0.0
    assert aji(np.zeros_like(gt), np.zeros_like(gt)) == 1.0


def test_aji_hand_case():
    gt = np.zeros((6, 6), dtype=np.int32)
    gt[0:2, 0:2] = 1                    # 4 px
    pred = np.zeros((6, 6), dtype=np.int32)
    pred[0, 0:2] = 1                    # 2 px overlapping
    pred[4, 0:2] = 1                    # 2 px outside
    # intersection 2, union 4 + 4 - 2 = 6
    assert aji(pred, gt) == pytest.approx(2.0 / 6.0, abs=1e-15)


def test_aji_unmatched_prediction_penalizes():
    gt = np.zeros((8, 8), dtype=np.int32)
    gt[0:2, 0:2] = 1
    pred = np.zeros((8, 8), dtype=np.int32)
    pred[0:2, 0:2] = 1                  # perfect match
    pred[6:8, 6:8] = 2                  # spurious 4-px prediction
    assert aji(pred, gt) == pytest.approx(4.0 / 8.0)


def test_aji_matches_bruteforce_on_random_maps():
    rng = np.random.default_rng(3)
    for _ in range(30):
        gt = random_instance_map(rng, n=int(rng.integers(0, 5)))
        pred = random_instance_map(rng, n=int(rng.integers(0, 5)))
        assert aji(pred, gt) == pytest.approx(aji_oracle(pred, gt), abs=1e-12)


def test_aji_relabeling_invariance():
    rng = np.random.default_rng(4)
    gt = random_instance_map(rng)
    pred = random_instance_map(rng)
    base = aji(pred, gt)
    for _ in range(10):
        gt_perm = rng.permutation(np.arange(1, gt.max() + 2))
        pred_perm = rng.permutation(np.arange(1, pred.max() + 2))
        gt2 = np.where(gt > 0, gt_perm[gt - 1], 0)
        pred2 = np.where(pred > 0, pred_perm[pred - 1], 0)
        assert aji(pred2, gt2) == pytest.approx(base, abs=1e-12)


def test_object_dice_identical_and_disjoint():
    gt = random_instance_map(np.random.default_rng(5))
    assert object_dice(gt, gt) == 1.0
    pred = np.zeros_like(gt)
    pred[gt == 0] = 1
    assert object_dice(pred, gt) == 0.0
    assert object_dice(np.zeros_like(gt), np.zeros_like(gt)) == 1.0


def test_object_dice_hand_case():
    gt = np.zeros((8, 8), dtype=np.int32)
    gt[0:2, 0:4] = 1                    # 8 px
    pred = np.zeros((8, 8), dtype=np.int32)
    pred[0:2, 2:6] = 1                  # 8 px, overlap 4
    # Dice = 2*4/(8+8) = 0.5 in both directions
    assert object_dice(pred, gt) == 0.5


def test_object_dice_matches_bruteforce():
    rng = np.random.default_rng(6)
    for _ in range(30):
        gt = random_instance_map(rng, n=int(rng.integers(0, 5)))
        pred = random_instance_map(rng, n=int(rng.integers(0, 5)))
        assert object_dice(pred, gt) == pytest.approx(
            object_dice_oracle(pred, gt), abs=1e-12)


def test_object_dice_relabeling_invariance():
    rng = np.random.default_rng(7)
    gt = random_instance_map(rng)
    pred = random_instance_map(rng)
    base = object_dice(pred, gt)
    for _ in range(10):
        gt_perm = rng.permutation(np.arange(1, gt.max() + 2))
        pred_perm = rng.permutation(np.arange(1, pred.max() + 2))
        gt2 = np.where(gt > 0, gt_perm[gt - 1], 0)
        pred2 = np.where(pred > 0, pred_perm[pred - 1], 0)
        assert object_dice(pred2, gt2) == pytest.approx(base, abs=1e-12)


def test_metrics_shape_mismatch():
    with pytest.raises(ValueError):
        dice(np.zeros((3, 3), dtype=bool), np.zeros((3, 4), dtype=bool))
    with pytest.raises(ValueError):
        pixel_fscore(np.zeros((3, 3), dtype=bool), np.zeros((4, 3), dtype=bool))
    with pytest.raises(ValueError):
        aji(np.zeros((3, 3), dtype=np.int32), np.zeros((3, 4), dtype=np.int32))
    with pytest.raises(ValueError):
        object_dice(np.zeros((3, 3), dtype=np.int32), np.zeros((3, 4), dtype=np.int32))


def test_eval_report_aggregate_is_mean():
    report = EvalReport(per_image=[
        {"id": "a", "dice": 0.5, "fscore": 0.4, "aji": 0.3, "object_dice": 0.2},
        {"id": "b", "dice": 1.0, "fscore": 0.6, "aji": 0.5, "object_dice": 0.4},
    ])
    agg = report.aggregate
    assert agg["dice"] == pytest.approx(0.75)
    assert agg["fscore"] == pytest.approx(0.5)
    assert agg["aji"] == pytest.approx(0.4)
    assert agg["object_dice"] == pytest.approx(0.3)


def test_evaluate_sample_perfect():
    # instances must be 8-separated for a binary prediction to recover them
    gt = np.zeros((16, 16), dtype=np.int32)
    gt[1:4, 1:4] = 1
    gt[8:11, 2:6] = 2
    gt[3:7, 9:14] = 3
    record = evaluate_sample(gt > 0, gt)
    assert record == {"dice": 1.0, "fscore": 1.0, "aji": 1.0, "object_dice": 1.0}


def test_evaluate_sample_binary_gt_relabeled():
    gt = np.zeros((8, 8), dtype=np.int32)
    gt[0:2, 0:2] = 1
    gt[6:8, 6:8] = 1  # binary ground truth: two separate components
    record = evaluate_sample(gt > 0, gt)
    assert record["aji"] == 1.0 and record["object_dice"] == 1.0
