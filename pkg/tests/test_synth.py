import numpy as np
import pytest

from dualview.data import BENIGN, MALIGNANT, parse_manifest
from dualview.synth import radial_profile_spread, synth_generate


def test_deterministic(tmp_path):
    a = synth_generate(2, seed=11, out_dir=tmp_path / "a")
    b = synth_generate(2, seed=11, out_dir=tmp_path / "b")
    for ca, cb in zip(a, b):
        assert ca.cc_image.tobytes() == cb.cc_image.tobytes()
        assert ca.mlo_image.tobytes() == cb.mlo_image.tobytes()
    for f in sorted((tmp_path / "a").rglob("*.*")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_manifest_round_trip(tiny_synth):
    root, cases = tiny_synth
    parsed, errors = parse_manifest(root)
    assert errors == []
    assert [c.patient_id for c in parsed] == [c.patient_id for c in cases]
    for p, c in zip(parsed, cases):
        assert (p.label, p.cc_seed, p.mlo_seed) == (c.label, c.cc_seed, c.mlo_seed)
        np.testing.assert_array_equal(p.cc_image, c.cc_image)


def test_class_balance():
    cases = synth_generate(100, seed=2)
    assert sum(c.label == BENIGN for c in cases) == 53
    assert len({c.patient_id for c in cases}) == 100


def test_views_differ_but_share_label(tiny_synth):
    _, cases = tiny_synth
    for c in cases:
        assert c.cc_image.shape == c.mlo_image.shape == (256, 256)
        assert not np.array_equal(c.cc_image, c.mlo_image)


def test_seed_points_at_bright_blob(tiny_synth):
    _, cases = tiny_synth
    for c in cases:
        r, col = c.cc_seed
        patch = c.cc_image[r - 3:r + 4, col - 3:col + 4]
        assert patch.mean() > np.median(c.cc_image) + 20


def test_radial_statistic_separates_classes():
    """A hand-written spike statistic (no learning) tells the classes apart."""
    cases = synth_generate(200, seed=21)
    stats = np.array([radial_profile_spread(c.cc_image, c.cc_seed) for c in cases])
    labels = np.array([c.label for c in cases])
    best = max(np.mean((stats > t) == (labels == MALIGNANT)) for t in np.unique(stats))
    assert best > 0.9


def test_rejects_too_few():
    with pytest.raises(ValueError):
        synth_generate(1, seed=0)
