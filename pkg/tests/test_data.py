import io

import numpy as np
import pytest
from PIL import Image

from cortex.data import (
    DEFAULT_LABEL_MAP,
    build_dataset,
    dataset_from_bytes,
    decode_image,
    load_dataset,
    make_synthetic,
    normalize,
    resize_bilinear,
    write_image_tree,
)
from cortex.data.synthetic import PATTERNS, pattern
from cortex.errors import DatasetFormatError, IngestionError, ValidationError
from oracles import bilinear_pixel


def png_bytes(array, mode=None, fmt="PNG"):
    buf = io.BytesIO()
    Image.fromarray(array, mode).save(buf, format=fmt)
    return buf.getvalue()


# ---------------------------------------------------------------- decoding


def test_decode_white_pixel():
    out = decode_image(png_bytes(np.full((1, 1, 3), 255, np.uint8)))
    assert out.tolist() == [[[255, 255, 255]]]


def test_decode_grayscale_replicates():
    out = decode_image(png_bytes(np.array([[128]], np.uint8)))
    assert out.tolist() == [[[128, 128, 128]]]


def test_decode_jpeg():
    out = decode_image(png_bytes(np.full((8, 8, 3), 200, np.uint8), fmt="JPEG"))
    assert out.shape == (8, 8, 3) and abs(int(out[4, 4, 0]) - 200) <= 2


def test_decode_rejects_damage_and_depth():
    payload = png_bytes(np.zeros((16, 16, 3), np.uint8))
    with pytest.raises(IngestionError) as exc:
        decode_image(payload[:40], source="cut.png")
    assert "cut.png" in str(exc.value)
    with pytest.raises(IngestionError, match="bit depth"):
        decode_image(png_bytes(np.zeros((2, 2), np.uint16)))
    with pytest.raises(IngestionError):
        decode_image(b"not an image")


# ---------------------------------------------------------------- resize / normalize


def test_resize_identity_at_target_size(rng):
    grid = rng.integers(0, 256, (200, 200, 3), dtype=np.uint8)
    assert np.array_equal(resize_bilinear(grid, 200), grid)


@pytest.mark.parametrize("shape", [(1, 1), (7, 13), (300, 250)])
def test_resize_constant(shape):
    grid = np.full(shape + (3,), 77, np.uint8)
    out = resize_bilinear(grid, 200)
    assert out.shape == (200, 200, 3) and (out == 77).all()


def test_resize_checkerboard_matches_direct_formula():
    src = np.array([[0.0, 255.0], [255.0, 0.0]])
    out = resize_bilinear(src, 4, 4)
    expected = [[bilinear_pixel(src.tolist(), y, x, 4, 4) for x in range(4)] for y in range(4)]
    np.testing.assert_allclose(out, expected, atol=1e-9)
    # the same values, rounded, for 8-bit input
    out8 = resize_bilinear(src.astype(np.uint8), 4, 4)
    assert np.array_equal(out8, np.floor(np.array(expected) + 0.5).astype(np.uint8))


def test_resize_non_square_oracle(rng):
    src = rng.uniform(0, 255, (5, 9))
    out = resize_bilinear(src, 7, 4)
    expected = [[bilinear_pixel(src.tolist(), y, x, 7, 4) for x in range(4)] for y in range(7)]
    np.testing.assert_allclose(out, expected, atol=1e-9)


def test_normalize_values():
    t = normalize(np.array([[[255, 0, 128]]], np.uint8))
    assert t.shape == (3, 1, 1)
    assert t.array[0, 0, 0] == 1.0 and t.array[1, 0, 0] == 0.0
    assert t.array[2, 0, 0] == pytest.approx(128 / 255, abs=1e-6)


# ---------------------------------------------------------------- dataset files


def test_dataset_bytes_round_trip(tiny_synthetic):
    buf = tiny_synthetic.to_bytes()
    ds = dataset_from_bytes(buf)
    assert ds.to_bytes() == buf
    assert ds.source_ids == tiny_synthetic.source_ids
    assert np.array_equal(ds.images, tiny_synthetic.images)


def test_dataset_corruption_detected(tiny_synthetic):
    buf = bytearray(tiny_synthetic.to_bytes())
    buf[100] ^= 0x01
    with pytest.raises(DatasetFormatError, match="checksum"):
        dataset_from_bytes(bytes(buf))
    with pytest.raises(DatasetFormatError):
        dataset_from_bytes(tiny_synthetic.to_bytes()[:-20])
    good = tiny_synthetic.to_bytes()
    with pytest.raises(DatasetFormatError, match="version"):
        dataset_from_bytes(good[:4] + b"\x02\x00" + good[6:])
    with pytest.raises(DatasetFormatError, match="magic"):
        dataset_from_bytes(b"JUNK" + good[4:])


def test_loaded_examples_satisfy_invariants(tiny_synthetic):
    ds = dataset_from_bytes(tiny_synthetic.to_bytes())
    assert ds.images.min() >= 0 and ds.images.max() <= 1
    assert set(ds.labels.tolist()) <= {0, 1, 2, 3}
    assert sum(ds.class_counts().values()) == len(ds)


def test_label_map_order():
    assert list(DEFAULT_LABEL_MAP.items()) == [("healthy", 0), ("glioma", 1), ("meningioma", 2), ("pituitary", 3)]


# ---------------------------------------------------------------- directory ingestion


@pytest.fixture
def image_tree(tmp_path, tiny_synthetic):
    root = tmp_path / "tree"
    write_image_tree(tiny_synthetic, root)
    return root


def test_build_counts_and_order(tmp_path, image_tree):
    summary = build_dataset(image_tree, tmp_path / "ds.cfds", size=16)
    assert summary.counts == {"healthy": 3, "glioma": 3, "meningioma": 3, "pituitary": 3}
    assert summary.total == 12 and not summary.skipped
    ds = load_dataset(tmp_path / "ds.cfds")
    assert ds.labels.tolist() == [0] * 3 + [1] * 3 + [2] * 3 + [3] * 3
    assert ds.source_ids == sorted(ds.source_ids, key=lambda s: (DEFAULT_LABEL_MAP[s.split("/")[0]], s))
    assert ds.image_shape == (3, 16, 16)


def test_build_is_deterministic_and_round_trips(tmp_path, image_tree):
    build_dataset(image_tree, tmp_path / "a.cfds", size=16)
    build_dataset(image_tree, tmp_path / "b.cfds", size=16)
    a = (tmp_path / "a.cfds").read_bytes()
    assert a == (tmp_path / "b.cfds").read_bytes()
    load_dataset(tmp_path / "a.cfds").save(tmp_path / "c.cfds")
    assert (tmp_path / "c.cfds").read_bytes() == a


def test_build_skips_unreadable_files(tmp_path, image_tree):
    (image_tree / "glioma" / "zz_broken.png").write_bytes(b"\x89PNG\r\n\x1a\ntruncated")
    summary = build_dataset(image_tree, tmp_path / "ds.cfds", size=16)
    assert summary.counts["glioma"] == 3
    assert [p for p, _ in summary.skipped] == ["glioma/zz_broken.png"]


def test_build_resizes_other_sizes(tmp_path):
    root = tmp_path / "mixed"
    for name in DEFAULT_LABEL_MAP:
        (root / name).mkdir(parents=True)
    Image.fromarray(np.full((31, 17), 90, np.uint8)).save(root / "healthy" / "a.png")
    Image.fromarray(np.full((40, 40, 3), 10, np.uint8)).save(root / "pituitary" / "b.jpg")
    summary = build_dataset(root, tmp_path / "m.cfds", size=200)
    assert summary.total == 2 and sorted(summary.empty_classes) == ["glioma", "meningioma"]
    ds = load_dataset(tmp_path / "m.cfds")
    assert ds.image_shape == (3, 200, 200)
    assert np.allclose(ds.images[0], 90 / 255)


def test_build_errors(tmp_path, image_tree):
    with pytest.raises(ValidationError):
        build_dataset(tmp_path / "nope", tmp_path / "x.cfds")
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValidationError):
        build_dataset(tmp_path / "empty", tmp_path / "x.cfds")
    (image_tree / "glioma").rename(image_tree / "other")
    with pytest.raises(ValidationError, match="missing class directory"):
        build_dataset(image_tree, tmp_path / "x.cfds")


# ---------------------------------------------------------------- synthetic set


def test_synthetic_patterns_distinct():
    pats = [pattern(p, 64) for p in PATTERNS]
    for i in range(4):
        for j in range(i + 1, 4):
            assert np.abs(pats[i] - pats[j]).mean() > 0.05


def test_synthetic_noise_level_and_determinism():
    a = make_synthetic(n_per_class=2, size=64, seed=1)
    b = make_synthetic(n_per_class=2, size=64, seed=1)
    assert a.to_bytes() == b.to_bytes()
    resid = a.images[6, 0] - pattern("gradient", 64)
    # clipping only bites near the ends of the ramp
    assert 0.04 < resid[:, 8:56].std() < 0.06
