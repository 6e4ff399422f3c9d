"""Synthetic dual-view lesion benchmark.

Malignant cases are bright cores with 6-14 tapered radial spikes; benign cases
are smooth soft-edged ellipses. Both sit on the same textured, noisy
background. The CC and MLO views render one set of lesion parameters under
independent projection jitter (rotation, scale, axial compression, position).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .data import BENIGN, MALIGNANT, DualViewCase, write_case

BENIGN_FRACTION = 0.53


@dataclass
class LesionParams:
    label: int
    radius: float            # fraction of image size
    aspect: float            # minor/major axis ratio of the core
    orientation: float       # radians
    spike_angles: np.ndarray
    spike_lengths: np.ndarray  # in units of radius, beyond the core edge
    spike_widths: np.ndarray   # base half-width in units of radius
    brightness: float


def draw_lesion(label: int, rng: np.random.Generator) -> LesionParams:
    radius = rng.uniform(0.08, 0.12)
    if label == MALIGNANT:
        n = int(rng.integers(6, 15))
        angles = np.sort(rng.uniform(0, 2 * np.pi, n))
        lengths = rng.uniform(0.9, 2.0, n)
        widths = rng.uniform(0.18, 0.32, n)
        aspect = rng.uniform(0.85, 1.0)
    else:
        angles = lengths = widths = np.zeros(0)
        aspect = rng.uniform(0.75, 1.0)
    return LesionParams(label, radius, aspect, rng.uniform(0, np.pi), angles, lengths, widths,
                        rng.uniform(0.22, 0.3))


def render_view(p: LesionParams, size: int, rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, int]]:
    """One projection of ``p`` as a uint8 image plus the lesion-centre seed."""
    rot = rng.uniform(0, 2 * np.pi)
    zoom = rng.uniform(0.9, 1.1)
    squash = rng.uniform(0.85, 1.0)
    cy, cx = rng.uniform(0.35, 0.65, size=2) * size

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # undo the projection squash along a random axis
    axis = rng.uniform(0, np.pi)
    u = dx * np.cos(axis) + dy * np.sin(axis)
    v = (-dx * np.sin(axis) + dy * np.cos(axis)) / squash
    dx, dy = u * np.cos(axis) - v * np.sin(axis), u * np.sin(axis) + v * np.cos(axis)
    r_px = p.radius * size * zoom

    # core: ellipse with soft edge
    o = p.orientation + rot
    a = dx * np.cos(o) + dy * np.sin(o)
    b = -dx * np.sin(o) + dy * np.cos(o)
    rho = np.hypot(a, b / p.aspect)
    edge = 0.06 if p.label == MALIGNANT else 0.18
    lesion = 1.0 / (1.0 + np.exp((rho - r_px) / (edge * r_px)))

    for ang, length, width in zip(p.spike_angles, p.spike_lengths, p.spike_widths):
        t_ang = ang + rot
        along = dx * np.cos(t_ang) + dy * np.sin(t_ang)
        across = np.abs(-dx * np.sin(t_ang) + dy * np.cos(t_ang))
        total = r_px * (1.0 + length)
        half = width * r_px * np.clip(1.0 - along / total, 0.0, 1.0)
        spike = ((along > 0) & (along < total)) * np.clip(half - across + 0.5, 0.0, 1.0)
        lesion = np.maximum(lesion, spike)

    texture = ndimage.gaussian_filter(rng.normal(size=(size, size)), sigma=size / 48)
    texture /= texture.std()
    image = 0.3 + 0.05 * texture + p.brightness * lesion + rng.normal(scale=0.025, size=(size, size))
    image = np.clip(image * 255.0, 0, 255).astype(np.uint8)
    seed = (int(np.clip(round(cy), 0, size - 1)), int(np.clip(round(cx), 0, size - 1)))
    return image, seed


def synth_generate(n_cases: int, seed: int, image_size: int = 256, out_dir=None) -> list[DualViewCase]:
    """Render ``n_cases`` dual-view cases; writes a manifest tree when ``out_dir`` is given."""
    if n_cases < 2:
        raise ValueError("need at least two cases")
    rng = np.random.default_rng(seed)
    n_benign = int(round(BENIGN_FRACTION * n_cases))
    labels = np.array([BENIGN] * n_benign + [MALIGNANT] * (n_cases - n_benign))
    labels = labels[rng.permutation(n_cases)]
    width = max(4, len(str(n_cases - 1)))
    cases = []
    for i, label in enumerate(labels):
        case_rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        params = draw_lesion(int(label), case_rng)
        cc, cc_seed = render_view(params, image_size, case_rng)
        mlo, mlo_seed = render_view(params, image_size, case_rng)
        case = DualViewCase(f"case_{i:0{width}d}", cc, mlo, cc_seed, mlo_seed, int(label))
        cases.append(case)
        if out_dir is not None:
            write_case(out_dir, case)
    return cases


def radial_profile_spread(image: np.ndarray, seed: tuple[int, int], n_angles: int = 180) -> float:
    """Coefficient of variation of the lesion's boundary radius over angle.

    The boundary along each ray is the first step where the smoothed intensity
    drops below the midpoint between the seed value and the image median.
    """
    smooth = ndimage.gaussian_filter(np.asarray(image, dtype=np.float64), 1.5)
    thresh = 0.5 * (smooth[seed] + np.median(smooth))
    h, w = smooth.shape
    max_r = int(min(h, w) * 0.45)
    steps = np.arange(1, max_r)
    radii = []
    for ang in np.linspace(0, 2 * np.pi, n_angles, endpoint=False):
        rr = np.clip(np.rint(seed[0] + steps * np.sin(ang)).astype(int), 0, h - 1)
        cc = np.clip(np.rint(seed[1] + steps * np.cos(ang)).astype(int), 0, w - 1)
        below = np.flatnonzero(smooth[rr, cc] <= thresh)
        radii.append(steps[below[0]] if below.size else steps[-1])
    radii = np.asarray(radii, dtype=np.float64)
    return float(radii.std() / max(radii.mean(), 1e-9))
