import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landseg.errors import ConfigError, DataError
from landseg.raster import (Band, LabelMask, MultiBandImage, TileLayout,
                            derive_ndvi, load_band, load_label_mask,
                            merge_tiles, mirror_pad, save_band,
                            save_label_mask, split_tiles)


def band(values, name="t"):
    return Band(values=np.asarray(values, dtype=np.float64), name=name)


# ---------------------------------------------------------------------------
# containers

def test_band_rejects_non_finite():
    with pytest.raises(DataError):
        band([[1.0, np.nan]])


def test_band_rejects_empty():
    with pytest.raises(DataError):
        Band(values=np.zeros((0, 3)))


def test_image_rejects_mismatched_bands():
    with pytest.raises(DataError):
        MultiBandImage(bands=(band(np.zeros((2, 2))), band(np.zeros((3, 2)))))


def test_mask_rejects_labels_beyond_k():
    with pytest.raises(DataError):
        LabelMask(labels=np.array([[0, 3]]), class_count=2)


def test_band_values_are_read_only():
    b = band([[1.0, 2.0]])
    with pytest.raises(ValueError):
        b.values[0, 0] = 5.0


# ---------------------------------------------------------------------------
# file formats

def test_pgm_decode_2x2(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    b = load_band(p)
    assert np.array_equal(b.values, [[0, 255], [128, 64]])


def test_pgm_comment_and_16bit(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n65535\n" + (1000).to_bytes(2, "big") + (2).to_bytes(2, "big"))
    b = load_band(p)
    assert np.array_equal(b.values, [[1000, 2]])


def test_float_raster_all_zeros(tmp_path):
    p = tmp_path / "z.lsf"
    save_band(np.zeros((4, 4)), p)
    b = load_band(p)
    assert b.shape == (4, 4) and np.all(b.values == 0)


def test_truncated_raster_is_an_error(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n3 3\n255\n" + bytes(8))  # 8 samples, 9 declared
    with pytest.raises(DataError, match="truncated"):
        load_band(p)


def test_lsf_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    values = rng.normal(size=(5, 3)).astype(np.float32).astype(np.float64)
    p1, p2 = tmp_path / "a.lsf", tmp_path / "b.lsf"
    save_band(values, p1)
    save_band(load_band(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_png_round_trip(tmp_path):
    p = tmp_path / "m.png"
    mask = LabelMask(labels=np.array([[0, 1], [2, 2]]), class_count=2)
    save_label_mask(mask, p)
    back = load_label_mask(p, class_count=2)
    assert np.array_equal(back.labels, mask.labels)


def test_load_band_expected_shape_mismatch(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
    with pytest.raises(DataError, match="expected"):
        load_band(p, expect_shape=(3, 3))


def test_unreadable_file():
    with pytest.raises(DataError):
        load_band("/nonexistent/nowhere.pgm")


# ---------------------------------------------------------------------------
# NDVI

def test_ndvi_basic_pixel():
    out = derive_ndvi(band([[0.8]]), band([[0.2]]))
    assert np.allclose(out.values, 0.6)
    assert out.name == "NDVI"


def test_ndvi_symmetric_inputs_zero():
    out = derive_ndvi(band(np.full((3, 3), 0.5)), band(np.full((3, 3), 0.5)))
    assert np.all(out.values == 0)


def test_ndvi_guarded_zero_denominator():
    out = derive_ndvi(band([[0.0, 1.0]]), band([[0.0, 0.0]]))
    assert out.values[0, 0] == 0.0 and out.values[0, 1] == 1.0


def test_ndvi_dimension_mismatch():
    with pytest.raises(DataError):
        derive_ndvi(band(np.zeros((2, 2))), band(np.zeros((3, 3))))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ndvi_range_for_nonnegative_inputs(seed):
    rng = np.random.default_rng(seed)
    ir = band(rng.uniform(0, 10, (4, 4)))
    red = band(rng.uniform(0, 10, (4, 4)))
    out = derive_ndvi(ir, red)
    assert np.all(out.values >= -1 - 1e-12) and np.all(out.values <= 1 + 1e-12)


# ---------------------------------------------------------------------------
# padding

def test_mirror_pad_hand_example():
    out = mirror_pad(band([[1, 2], [3, 4]]), 1)
    expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
    assert np.array_equal(out.values, expected)


def test_mirror_pad_zero_margin_rejected():
    with pytest.raises(ConfigError):
        mirror_pad(band([[1, 2], [3, 4]]), 0)


def test_mirror_pad_margin_too_large():
    with pytest.raises(ConfigError, match="too large"):
        mirror_pad(band([[1, 2], [3, 4]]), 2)


def test_mirror_pad_constant_band_stays_constant():
    out = mirror_pad(band(np.full((4, 5), 3.25)), 2)
    assert np.all(out.values == 3.25) and out.shape == (8, 9)


def test_mirror_pad_symmetry_about_each_edge():
    rng = np.random.default_rng(3)
    b = band(rng.normal(size=(6, 7)))
    m = 3
    p = mirror_pad(b, m).values
    for k in range(m):
        # row m-1-k mirrors row m+k about the top boundary, etc.
        assert np.array_equal(p[m - 1 - k, :], p[m + k, :])
        assert np.array_equal(p[-m + k, :], p[-m - 1 - k, :])
        assert np.array_equal(p[:, m - 1 - k], p[:, m + k])
        assert np.array_equal(p[:, -m + k], p[:, -m - 1 - k])


# ---------------------------------------------------------------------------
# tiling

def _image_mask(h, w, k=4, seed=0):
    rng = np.random.default_rng(seed)
    bands = tuple(band(rng.normal(size=(h, w)), name=f"B{i}") for i in range(2))
    labels = rng.integers(1, k + 1, size=(h, w))
    return MultiBandImage(bands=bands), LabelMask(labels=labels, class_count=k)


def test_split_400_into_quadrants():
    image, mask = _image_mask(400, 400)
    layout = TileLayout.regular(400, 400, 200, 200)
    tiles = split_tiles(image, mask, layout)
    assert [t.origin for t in tiles] == [(0, 0), (0, 200), (200, 0), (200, 200)]
    assert all(t.image.height == 200 and t.image.width == 200 for t in tiles)


def test_split_single_tile_identity():
    image, mask = _image_mask(10, 12)
    tiles = split_tiles(image, mask, TileLayout.single(10, 12))
    assert len(tiles) == 1
    assert np.array_equal(tiles[0].image.bands[0].values, image.bands[0].values)
    assert np.array_equal(tiles[0].mask.labels, mask.labels)


def test_split_edge_tiles_are_smaller():
    image, mask = _image_mask(300, 220)
    tiles = split_tiles(image, mask, TileLayout.regular(300, 220, 200, 200))
    shapes = {t.origin: (t.image.height, t.image.width) for t in tiles}
    assert shapes == {(0, 0): (200, 200), (0, 200): (200, 20),
                      (200, 0): (100, 200), (200, 200): (100, 20)}


def test_split_then_merge_is_identity():
    image, mask = _image_mask(30, 44, k=5, seed=9)
    layout = TileLayout.regular(30, 44, 13, 17)
    tiles = split_tiles(image, mask, layout)
    merged = merge_tiles([(t.origin, t.mask.labels) for t in tiles], (30, 44), 5)
    assert np.array_equal(merged.labels, mask.labels)


def test_merge_quadrant_constants():
    tiles = [((0, 0), np.full((2, 2), 1)), ((0, 2), np.full((2, 2), 2)),
             ((2, 0), np.full((2, 2), 3)), ((2, 2), np.full((2, 2), 4))]
    merged = merge_tiles(tiles, (4, 4), 4)
    assert merged.labels[0, 0] == 1 and merged.labels[0, 3] == 2
    assert merged.labels[3, 0] == 3 and merged.labels[3, 3] == 4


def test_merge_gap_is_an_error():
    with pytest.raises(DataError, match="uncovered"):
        merge_tiles([((0, 0), np.ones((2, 2), dtype=int))], (4, 4), 1)


def test_merge_overlap_is_an_error():
    tiles = [((0, 0), np.ones((3, 4), dtype=int)), ((2, 0), np.ones((2, 4), dtype=int))]
    with pytest.raises(DataError, match="overlap"):
        merge_tiles(tiles, (4, 4), 1)
