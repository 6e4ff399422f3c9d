import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualview.dream import (DreamConfig, DreamError, class_gradient, dream, forward_alter,
                            reverse_alter, reverse_saliency, trace_csv, write_frames, zscore_clip)
from dualview.imageio import read_image
from helpers import small_model

IDENTITY = DreamConfig(flip_probability=0.0, rotation_set=(0,), box_count_range=(0, 0))


@pytest.fixture(scope="module")
def nets():
    return {k: small_model(k, size=32, seed=4) for k in ("parallel", "multimodal")}


@pytest.fixture
def views(rng):
    return (rng.uniform(-2, 2, (32, 32)).astype(np.float32),
            rng.uniform(-2, 2, (32, 32)).astype(np.float32))


def test_identity_alteration(rng):
    x = rng.normal(size=(20, 20))
    y, rec = forward_alter(x, IDENTITY, rng)
    assert np.array_equal(x, y)
    assert rec.boxes == [] and rec.rotation == 0 and not rec.horizontal_flip
    assert np.array_equal(reverse_alter(y, rec), x)


def test_alteration_is_seed_deterministic():
    x = np.arange(40 * 30, dtype=float).reshape(40, 30)
    cfg = DreamConfig()
    a, ra = forward_alter(x, cfg, np.random.default_rng(8))
    b, rb = forward_alter(x, cfg, np.random.default_rng(8))
    assert np.array_equal(a, b) and ra.boxes == rb.boxes and ra.rotation == rb.rotation


def test_reverse_alter_inverts_1000_draws():
    rng = np.random.default_rng(0)
    cfg = DreamConfig(box_size_range=(4, 16))
    x = rng.normal(size=(48, 40))
    for _ in range(1000):
        y, rec = forward_alter(x, cfg, rng)
        assert np.array_equal(reverse_alter(y, rec), x)


def test_every_pixel_gets_boxed_within_1000_draws():
    rng = np.random.default_rng(1)
    cfg = DreamConfig(box_size_range=(4, 12))
    covered = np.zeros((40, 40), bool)
    x = np.ones((40, 40))
    for _ in range(1000):
        y, rec = forward_alter(x, cfg, rng)
        covered |= reverse_saliency(np.ones_like(y), rec) == 0
    assert covered.all()


def test_rotation_90_undone_by_270():
    x = np.arange(12.0).reshape(3, 4)
    cfg = DreamConfig(flip_probability=0.0, rotation_set=(90,), box_count_range=(0, 0))
    y, rec = forward_alter(x, cfg, np.random.default_rng(0))
    assert np.array_equal(y, np.rot90(x))
    assert np.array_equal(np.rot90(y, 3), x)
    assert np.array_equal(reverse_alter(y, rec), x)


def test_reverse_alter_rejects_wrong_shape(rng):
    _, rec = forward_alter(np.zeros((10, 12)), IDENTITY, rng)
    with pytest.raises(ValueError, match="does not match"):
        reverse_alter(np.zeros((11, 12)), rec)


def test_zscore_examples():
    assert np.allclose(zscore_clip(np.array([1.0, 2.0, 3.0])), [-0.05, 0.0, 0.05])
    assert np.array_equal(zscore_clip(np.full((4, 4), 7.0)), np.zeros((4, 4)))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=64))
def test_zscore_bounded_and_finite(values):
    z = zscore_clip(np.array(values))
    assert np.all(np.isfinite(z)) and np.abs(z).max() <= 0.05


@pytest.mark.parametrize("kind", ["parallel", "multimodal"])
def test_class_gradient_negates_with_target(nets, views, kind):
    g0c, g0m, _ = class_gradient(nets[kind], *views, target=0)
    g1c, g1m, scores = class_gradient(nets[kind], *views, target=1)
    assert g1c.shape == views[0].shape and g1m.shape == views[1].shape
    assert np.array_equal(g0c, -g1c) and np.array_equal(g0m, -g1m)
    assert set(scores) == ({"joint"} if kind == "multimodal" else {"cc", "mlo"})


@pytest.mark.parametrize("kind", ["parallel", "multimodal"])
def test_class_gradient_directional_derivative(nets, views, kind):
    net = nets[kind]
    cc, mlo = (v.astype(np.float64) for v in views)
    gc, gm, _ = class_gradient(net, cc, mlo, target=1)
    rng = np.random.default_rng(2)
    dc, dm = rng.normal(size=cc.shape), rng.normal(size=mlo.shape)

    def margin(a, b):
        _, _, s = class_gradient(net, a, b, target=1)
        return sum(v[1] - v[0] for v in s.values())

    h = 1e-3   # small enough to stay clear of most ReLU and max-pool switches
    numeric = (margin(cc + h * dc, mlo + h * dm) - margin(cc - h * dc, mlo - h * dm)) / (2 * h)
    analytic = float((gc * dc).sum() + (gm * dm).sum())
    assert numeric == pytest.approx(analytic, rel=3e-2, abs=1e-3)


def test_zero_iterations_and_zero_rate(nets, views):
    cc, mlo = views
    s = dream(nets["parallel"], cc * 3, mlo, DreamConfig(max_iter=0))
    assert s.frames == [] and np.array_equal(s.cc, cc * 3)
    s = dream(nets["parallel"], cc, mlo, DreamConfig(max_iter=3, learning_rate=0.0))
    assert len(s.frames) == 3
    assert np.array_equal(s.cc, cc) and np.array_equal(s.mlo, mlo)


@pytest.mark.parametrize("kind", ["parallel", "multimodal"])
def test_frames_bounded_and_steps_small(nets, views, kind):
    cfg = DreamConfig(max_iter=6, rng_seed=3)
    s = dream(nets[kind], *views, cfg)
    prev = {"cc": views[0], "mlo": views[1]}
    for f in s.frames:
        for v in ("cc", "mlo"):
            img = getattr(f, v)
            assert np.abs(img).max() <= 3.0
            assert np.abs(img - prev[v]).max() <= cfg.learning_rate * cfg.grad_clip + 1e-6
            prev[v] = img
        assert 0.0 <= f.p_target <= 1.0


def test_dream_is_deterministic(nets, views):
    cfg = DreamConfig(max_iter=3, rng_seed=11)
    a, b = dream(nets["multimodal"], *views, cfg), dream(nets["multimodal"], *views, cfg)
    assert np.array_equal(a.cc, b.cc) and trace_csv(a) == trace_csv(b)


def test_non_finite_start_raises(nets, views):
    bad = views[0].copy()
    bad[3, 3] = np.nan
    with pytest.raises(DreamError, match="iteration 1"):
        dream(nets["parallel"], bad, views[1], DreamConfig(max_iter=2, box_count_range=(0, 0)))


def test_trace_and_frames_written(nets, views, tmp_path):
    cfg = DreamConfig(max_iter=2, rng_seed=0)
    s = dream(nets["parallel"], *views, cfg)
    write_frames(s, tmp_path, cfg)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "trace.csv").read_text())))
    assert [r["view"] for r in rows] == ["cc", "mlo", "case"] * 2
    assert [int(r["iter"]) for r in rows] == [1, 1, 1, 2, 2, 2]
    panel = read_image(tmp_path / "frame_00002_mlo.png")
    assert panel.shape == (32, 64)
    assert len(list(tmp_path.glob("frame_*.png"))) == 4


def test_config_validation():
    with pytest.raises(ValueError, match="rotation_set"):
        DreamConfig(rotation_set=(45,))
    with pytest.raises(ValueError):
        DreamConfig(grad_clip=0)
