import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dualview.data import (AugmentConfig, DatasetSplit, DualViewCase, ManifestError, augment_view, crop224,
                           crop_seed, load_case, normalize, parse_manifest, prepare, resize_bilinear,
                           rotate_integer, split_patients, write_case)


def make_case(pid="p001", label=1, size=40):
    img = (np.arange(size * size).reshape(size, size) % 251).astype(np.uint8)
    return DualViewCase(pid, img, img[::-1].copy(), (5, 7), (30, 2), label)


# ---------------------------------------------------------------- manifest

def test_empty_root(tmp_path):
    assert parse_manifest(tmp_path) == ([], [])


def test_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope"):
        parse_manifest(tmp_path / "nope")


@pytest.mark.parametrize("fmt", ["png", "pgm"])
def test_case_round_trip(tmp_path, fmt):
    case = make_case()
    write_case(tmp_path, case, fmt)
    cases, errors = parse_manifest(tmp_path)
    assert errors == [] and len(cases) == 1
    got = cases[0]
    assert (got.patient_id, got.label, got.cc_seed, got.mlo_seed) == ("p001", 1, (5, 7), (30, 2))
    np.testing.assert_array_equal(got.cc_image, case.cc_image)
    np.testing.assert_array_equal(got.mlo_image, case.mlo_image)


def test_sorted_by_patient(tmp_path):
    for pid in ("b", "c", "a"):
        write_case(tmp_path, make_case(pid))
    assert [c.patient_id for c in parse_manifest(tmp_path)[0]] == ["a", "b", "c"]


def test_missing_view_reported(tmp_path):
    d = write_case(tmp_path, make_case("p9"))
    (d / "mlo.png").unlink()
    write_case(tmp_path, make_case("p1"))
    cases, errors = parse_manifest(tmp_path)
    assert [c.patient_id for c in cases] == ["p1"]
    assert len(errors) == 1 and "p9" in errors[0] and "mlo.png" in errors[0]
    with pytest.raises(ManifestError, match="p9"):
        parse_manifest(tmp_path, strict=True)


@pytest.mark.parametrize("meta, field", [
    ("label=benign\ncc_seed=1,1\n", "mlo_seed"),
    ("label=maybe\ncc_seed=1,1\nmlo_seed=1,1\n", "label"),
    ("label=benign\ncc_seed=1;1\nmlo_seed=1,1\n", "seed"),
    ("label=benign\ncc_seed=1,1\nmlo_seed=1,99\n", "mlo_seed"),
    ("label=benign\ncolour=red\n", "malformed"),
])
def test_meta_errors_name_field(tmp_path, meta, field):
    d = write_case(tmp_path, make_case("p2"))
    (d / "meta.txt").write_text(meta)
    with pytest.raises(ManifestError) as exc:
        load_case(d)
    assert field in str(exc.value) and "meta.txt" in str(exc.value)


def test_meta_order_insensitive(tmp_path):
    d = write_case(tmp_path, make_case("p3", label=0))
    (d / "meta.txt").write_text("mlo_seed=30,2\nlabel=benign\ncc_seed=5,7\n")
    assert load_case(d).label == 0


def test_case_validation():
    img = np.zeros((10, 10))
    with pytest.raises(ValueError):
        DualViewCase("x", img, img, (0, 0), (0, 0), 2)
    with pytest.raises(ValueError):
        DualViewCase("x", img, img, (10, 0), (0, 0), 0)


# ----------------------------------------------------------- preprocessing

def test_crop_seed_centred():
    img = np.arange(2000 * 2000, dtype=np.float64).reshape(2000, 2000)
    out = crop_seed(img, (1000, 1000))
    np.testing.assert_array_equal(out, img[625:1375, 625:1375])


def test_crop_seed_shifts_inward():
    img = np.arange(2000 * 2000, dtype=np.float64).reshape(2000, 2000)
    np.testing.assert_array_equal(crop_seed(img, (10, 10)), img[:750, :750])
    np.testing.assert_array_equal(crop_seed(img, (1999, 1990)), img[1250:, 1250:])


def test_crop_seed_pads_small_image():
    img = np.ones((500, 500))
    out = crop_seed(img, (250, 250))
    assert out.shape == (750, 750)
    assert out[125:625, 125:625].all() and out.sum() == 500 * 500


def test_normalize_examples():
    np.testing.assert_array_equal(normalize(np.full((5, 5), 3.0)), 0)
    np.testing.assert_array_equal(normalize(np.array([0.0, 2.0, 0.0, 2.0])), [-1, 1, -1, 1])


@given(arrays(np.float64, (12, 12), elements=st.floats(-1e3, 1e3)))
def test_normalize_stats_and_idempotence(img):
    out = normalize(img)
    if img.std() > 1e-3:
        assert abs(out.mean()) < 1e-5 and abs(out.std() - 1) < 1e-5
    np.testing.assert_allclose(normalize(out), out, atol=1e-5)


def test_resize_identity_and_constant(rng):
    img = rng.normal(size=(256, 256))
    assert np.array_equal(resize_bilinear(img), img)
    np.testing.assert_allclose(resize_bilinear(np.full((300, 170), 4.2)), 4.2, rtol=1e-12)


def test_resize_checkerboard_interior():
    block = np.kron((np.indices((256, 256)).sum(axis=0) % 2).astype(float), np.ones((2, 2)))
    out = resize_bilinear(block, 256)
    interior = out[8:-8, 8:-8]
    assert abs(interior.mean() - 0.5) < 0.02
    # point samples mostly land inside one block, so the mid value shows up
    # once neighbouring output pixels are averaged
    local = (interior[:-1, :-1] + interior[1:, :-1] + interior[:-1, 1:] + interior[1:, 1:]) / 4
    assert np.abs(local - 0.5).max() < 0.05


def test_resize_corner_aligned(rng):
    img = rng.normal(size=(750, 750))
    out = resize_bilinear(img)
    for r, c in [(0, 0), (0, -1), (-1, 0), (-1, -1)]:
        assert out[r, c] == pytest.approx(img[r, c])


def test_crop224_center():
    img = np.arange(256 * 256).reshape(256, 256)
    np.testing.assert_array_equal(crop224(img), img[16:240, 16:240])
    with pytest.raises(ValueError):
        crop224(np.zeros((250, 256)))


def test_crop224_random_reproducible_and_uniform():
    img = np.arange(256 * 256).reshape(256, 256)
    a = crop224(img, "random", np.random.default_rng(3))
    b = crop224(img, "random", np.random.default_rng(3))
    assert np.array_equal(a, b)
    rng = np.random.default_rng(0)
    counts = np.zeros((33, 33))
    for _ in range(10_000):
        out = crop224(img, "random", rng)
        r, c = divmod(int(out[0, 0]), 256)
        counts[r, c] += 1
    expected = 10_000 / 33 ** 2
    assert counts.min() > 0
    assert np.abs(counts - expected).max() < 3 * np.sqrt(expected) + 6
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 1088 + 4 * np.sqrt(2 * 1088)


def test_rotation_permutations(rng):
    img = rng.normal(size=(9, 9))
    assert np.array_equal(rotate_integer(img, 0), img)
    assert np.array_equal(rotate_integer(rotate_integer(img, 180), 180), img)
    marker = np.zeros((7, 7))
    marker[1, 5] = 1
    out = rotate_integer(marker, 90)
    # counter-clockwise: (r, c) -> (N - 1 - c, r)
    assert out[7 - 1 - 5, 1] == 1 and out.sum() == 1


def test_rotation_fill_and_range(rng):
    img = np.ones((64, 64))
    out = rotate_integer(img, 45)
    assert out[0, 0] == 0 and out[32, 32] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rotate_integer(img, 360)


def test_augment_shapes_and_determinism(rng):
    img = rng.normal(size=(256, 256))
    cfg = AugmentConfig()
    a = augment_view(img, cfg, np.random.default_rng(1))
    b = augment_view(img, cfg, np.random.default_rng(1))
    assert a.shape == (224, 224) and np.array_equal(a, b)
    test_cfg = AugmentConfig.for_test()
    assert not test_cfg.rotation and test_cfg.crop_mode == "center"
    np.testing.assert_array_equal(augment_view(img, test_cfg), img[16:240, 16:240])


def test_prepare_keeps_label():
    case = make_case(size=300)
    p = prepare(case)
    assert p.label == case.label and p.cc.shape == (256, 256) and p.cc.dtype == np.float32
    cc, mlo = p.test_inputs()
    assert cc.shape == mlo.shape == (224, 224)


# ------------------------------------------------------------------ splits

def test_split_counts():
    ids = [f"p{i:03d}" for i in range(100)]
    s = split_patients(ids, seed=4)
    assert (len(s.test), len(s.validation), len(s.train)) == (10, 9, 81)
    assert s == split_patients(list(reversed(ids)), seed=4)
    assert s != split_patients(ids, seed=5)


@given(st.integers(10, 300), st.integers(0, 2 ** 32 - 1))
def test_split_is_partition(n, seed):
    ids = [f"id{i}" for i in range(n)]
    s = split_patients(ids, seed)
    parts = [set(s.train), set(s.validation), set(s.test)]
    assert sum(map(len, parts)) == n and set().union(*parts) == set(ids)
    assert len(s.test) == n // 10 and len(s.validation) == (n - n // 10) // 10


def test_split_errors_and_text_round_trip():
    with pytest.raises(ValueError):
        split_patients(["a"] * 3, 0)
    with pytest.raises(ValueError, match="duplicate"):
        split_patients(["a"] * 12, 0)
    s = split_patients([f"x{i}" for i in range(30)], 9)
    assert DatasetSplit.from_text(s.to_text()) == s
