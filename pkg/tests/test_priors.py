import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from samaug.masks import InstanceMask, MaskSet
from samaug.priors import (
    PriorMap,
    build_boundary_prior,
    build_seg_prior,
    exterior_boundary,
    load_prior,
    save_prior,
    zero_priors,
)


def seg_prior_oracle(ms):
    """Per-pixel brute force: max stability over covering masks."""
    out = np.zeros((ms.height, ms.width))
    for y in range(ms.height):
        for x in range(ms.width):
            best = 0.0
            for m in ms.masks:
                if m.bitmap[y, x] and m.stability > best:
                    best = m.stability
            out[y, x] = best
    return out


def boundary_oracle(bitmap):
    """Per-pixel brute force of the 4-neighbor exterior-boundary rule."""
    h, w = bitmap.shape
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            if not bitmap[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ny, nx = y + dy, x + dx
                if ny < 0 or ny >= h or nx < 0 or nx >= w or not bitmap[ny, nx]:
                    out[y, x] = True
                    break
    return out


def _mask(bitmap, stability):
    return InstanceMask(bitmap=np.asarray(bitmap, dtype=bool), stability=stability)


@st.composite
def small_mask_sets(draw):
    h = draw(st.integers(1, 10))
    w = draw(st.integers(1, 10))
    n = draw(st.integers(0, 4))
    rng = np.random.default_rng(draw(st.integers(0, 2**31 - 1)))
    masks = []
    for _ in range(n):
        bm = rng.random((h, w)) < 0.4
        if not bm.any():
            bm[rng.integers(0, h), rng.integers(0, w)] = True
        masks.append(_mask(bm, float(rng.random())))
    return MaskSet(width=w, height=h, masks=tuple(masks), source="synthetic")


def test_empty_mask_set_gives_zero_priors():
    ms = MaskSet(width=6, height=4)
    seg = build_seg_prior(ms)
    bnd = build_boundary_prior(ms)
    assert seg.kind == "segmentation" and bnd.kind == "boundary"
    assert seg.values.shape == (4, 6)
    assert not seg.values.any()
    assert not bnd.values.any()


def test_single_mask_seg_prior():
    bm = np.zeros((5, 5), dtype=bool)
    bm[1:3, 1:4] = True
    ms = MaskSet(width=5, height=5, masks=(_mask(bm, 0.8),))
    seg = build_seg_prior(ms)
    assert np.array_equal(seg.values, np.where(bm, 0.8, 0.0))


def test_overlapping_masks_take_max():
    a = np.zeros((6, 6), dtype=bool)
    a[0:4, 0:4] = True
    b = np.zeros((6, 6), dtype=bool)
    b[2:6, 2:6] = True
    ms = MaskSet(width=6, height=6, masks=(_mask(a, 0.8), _mask(b, 0.9)))
    seg = build_seg_prior(ms)
    assert np.array_equal(seg.values, seg_prior_oracle(ms))
    assert seg.values[3, 3] == 0.9  # overlap
    assert seg.values[0, 0] == 0.8
    assert seg.values[5, 5] == 0.9
    assert seg.values[0, 5] == 0.0


def test_exterior_boundary_all_zero():
    assert not exterior_boundary(np.zeros((5, 5), dtype=bool)).any()


def test_exterior_boundary_full_frame():
    bm = np.ones((8, 8), dtype=bool)
    boundary = exterior_boundary(bm)
    assert np.array_equal(boundary, boundary_oracle(bm))
    assert boundary.sum() == 28  # one-pixel frame of an 8x8 block


def test_exterior_boundary_interior_square():
    bm = np.zeros((7, 7), dtype=bool)
    bm[2:5, 2:5] = True
    boundary = exterior_boundary(bm)
    assert np.array_equal(boundary, boundary_oracle(bm))
    assert boundary.sum() == 8  # all but the center of the 3x3 square
    assert not boundary[3, 3]


def test_boundary_prior_single_mask_matches_exterior():
    bm = np.zeros((6, 7), dtype=bool)
    bm[1:5, 2:6] = True
    ms = MaskSet(width=7, height=6, masks=(_mask(bm, 0.4),))
    bnd = build_boundary_prior(ms)
    assert np.array_equal(bnd.values.astype(bool), exterior_boundary(bm))


def test_boundary_prior_union_of_disjoint_masks():
    a = np.zeros((8, 8), dtype=bool)
    a[0:3, 0:3] = True
    b = np.zeros((8, 8), dtype=bool)
    b[5:8, 5:8] = True
    ms = MaskSet(width=8, height=8, masks=(_mask(a, 0.5), _mask(b, 0.6)))
    bnd = build_boundary_prior(ms)
    expected = boundary_oracle(a) | boundary_oracle(b)
    assert np.array_equal(bnd.values.astype(bool), expected)


@given(small_mask_sets())
def test_seg_prior_matches_bruteforce(ms):
    assert np.array_equal(build_seg_prior(ms).values, seg_prior_oracle(ms))


@given(small_mask_sets())
def test_prior_properties(ms):
    seg = build_seg_prior(ms)
    bnd = build_boundary_prior(ms)
    # outputs in [0, 1]; boundary binary
    assert seg.values.min() >= 0.0 and seg.values.max() <= 1.0
    assert set(np.unique(bnd.values)) <= {0.0, 1.0}
    # boundary is inside some mask's support
    support = np.zeros((ms.height, ms.width), dtype=bool)
    for m in ms.masks:
        support |= m.bitmap
    assert not (bnd.values.astype(bool) & ~support).any()
    # permutation invariance
    flipped = MaskSet(width=ms.width, height=ms.height, masks=ms.masks[::-1],
                      source=ms.source)
    assert np.array_equal(build_seg_prior(flipped).values, seg.values)
    assert np.array_equal(build_boundary_prior(flipped).values, bnd.values)


@given(small_mask_sets(), st.integers(0, 2**31 - 1))
def test_seg_prior_monotone_in_masks(ms, seed):
    rng = np.random.default_rng(seed)
    bm = rng.random((ms.height, ms.width)) < 0.5
    if not bm.any():
        bm[0, 0] = True
    extra = MaskSet(width=ms.width, height=ms.height,
                    masks=ms.masks + (_mask(bm, float(rng.random())),),
                    source=ms.source)
    before = build_seg_prior(ms).values
    after = build_seg_prior(extra).values
    assert (after >= before).all()


def test_prior_png_cache_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    values = rng.random((17, 13))
    pm = PriorMap(values=values, kind="segmentation")
    path = tmp_path / "x.seg.png"
    save_prior(pm, path)
    back = load_prior(path, "segmentation")
    assert back.kind == "segmentation"
    assert np.abs(back.values - values).max() <= 1.0 / 131070.0
    # a second save of the loaded values is byte-identical (idempotence)
    path2 = tmp_path / "y.seg.png"
    save_prior(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_zero_priors_shapes():
    seg, bnd = zero_priors(width=9, height=4)
    assert seg.values.shape == (4, 9) and bnd.values.shape == (4, 9)
    assert seg.kind == "segmentation" and bnd.kind == "boundary"


def test_prior_map_validation():
    with pytest.raises(ValueError):
        PriorMap(values=np.full((3, 3), 1.5), kind="segmentation")
    with pytest.raises(ValueError):
        PriorMap(values=np.zeros((3, 3)), kind="other")
    with pytest.raises(ValueError):
        PriorMap(values=np.zeros(3), kind="boundary")
