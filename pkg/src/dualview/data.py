"""Dual-view case ingestion, preprocessing, augmentation and patient splits.

Preprocessing order: crop(750) around the seed -> per-image mean/variance
normalisation -> bilinear resize to 256 -> integer-degree rotation (training
only) -> 224 crop (random in training, centred at test time).

On-disk layout, one directory per patient::

    root/<patient_id>/cc.png | cc.pgm
    root/<patient_id>/mlo.png | mlo.pgm
    root/<patient_id>/meta.txt      label=benign|malignant
                                    cc_seed=ROW,COL
                                    mlo_seed=ROW,COL
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .imageio import read_image

log = logging.getLogger(__name__)

BENIGN, MALIGNANT = 0, 1
LABEL_NAMES = {BENIGN: "benign", MALIGNANT: "malignant"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}

SEED_CROP = 750
RESIZED = 256
NET_INPUT = 224
NORM_EPS = 1e-6


class ManifestError(ValueError):
    """A patient directory is missing a file or has a malformed sidecar."""


@dataclass
class DualViewCase:
    patient_id: str
    cc_image: np.ndarray
    mlo_image: np.ndarray
    cc_seed: tuple[int, int]
    mlo_seed: tuple[int, int]
    label: int

    def __post_init__(self):
        if self.label not in (BENIGN, MALIGNANT):
            raise ValueError(f"{self.patient_id}: label must be 0 or 1, got {self.label}")
        for view, img, seed in (("cc", self.cc_image, self.cc_seed),
                                ("mlo", self.mlo_image, self.mlo_seed)):
            if img is None or np.ndim(img) != 2:
                raise ValueError(f"{self.patient_id}: {view} image must be 2-D")
            r, c = seed
            if not (0 <= r < img.shape[0] and 0 <= c < img.shape[1]):
                raise ValueError(f"{self.patient_id}: {view}_seed {seed} outside image {img.shape}")


@dataclass
class DatasetSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int

    def to_text(self) -> str:
        return "".join(f"{part},{pid}\n" for part in ("train", "validation", "test")
                       for pid in getattr(self, part)) + f"seed,{self.seed}\n"

    @classmethod
    def from_text(cls, text: str) -> "DatasetSplit":
        parts = {"train": [], "validation": [], "test": []}
        seed = 0
        for line in text.splitlines():
            if not line.strip():
                continue
            key, value = line.split(",", 1)
            if key == "seed":
                seed = int(value)
            else:
                parts[key].append(value)
        return cls(parts["train"], parts["validation"], parts["test"], seed)


@dataclass
class AugmentConfig:
    rotation: bool = True
    crop_mode: str = "random"
    rng_seed: int = 0

    @classmethod
    def for_test(cls) -> "AugmentConfig":
        return cls(rotation=False, crop_mode="center")


# ------------------------------------------------------------------ manifest

def _parse_seed(text: str) -> tuple[int, int]:
    r, c = text.split(",")
    return int(r), int(c)


def _find_view(case_dir: Path, view: str) -> Path | None:
    for ext in (".png", ".pgm"):
        p = case_dir / f"{view}{ext}"
        if p.exists():
            return p
    return None


def load_case(case_dir) -> DualViewCase:
    case_dir = Path(case_dir)
    paths = {}
    for view in ("cc", "mlo"):
        p = _find_view(case_dir, view)
        if p is None:
            raise ManifestError(f"{case_dir}: missing {view}.png or {view}.pgm")
        paths[view] = p
    meta_path = case_dir / "meta.txt"
    if not meta_path.exists():
        raise ManifestError(f"{case_dir}: missing meta.txt")
    meta = {}
    for n, line in enumerate(meta_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in ("label", "cc_seed", "mlo_seed"):
            raise ManifestError(f"{meta_path}:{n}: malformed line {line!r}")
        meta[key] = value
    for key in ("label", "cc_seed", "mlo_seed"):
        if key not in meta:
            raise ManifestError(f"{meta_path}: missing field {key}")
    if meta["label"] not in LABEL_CODES:
        raise ManifestError(f"{meta_path}: field label must be benign or malignant, got {meta['label']!r}")
    try:
        seeds = {k: _parse_seed(meta[k]) for k in ("cc_seed", "mlo_seed")}
    except ValueError as exc:
        raise ManifestError(f"{meta_path}: malformed seed ({exc})") from None
    cc = read_image(paths["cc"])
    mlo = read_image(paths["mlo"])
    for view, img in (("cc", cc), ("mlo", mlo)):
        r, c = seeds[f"{view}_seed"]
        if not (0 <= r < img.shape[0] and 0 <= c < img.shape[1]):
            raise ManifestError(f"{meta_path}: field {view}_seed {(r, c)} outside image {img.shape}")
    return DualViewCase(case_dir.name, cc, mlo, seeds["cc_seed"], seeds["mlo_seed"],
                        LABEL_CODES[meta["label"]])


def parse_manifest(root, strict: bool = False) -> tuple[list[DualViewCase], list[str]]:
    """Load every patient directory under ``root``.

    Returns the well-formed cases sorted by patient id and a list of per-case
    error messages. With ``strict`` the first error is raised instead.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data root {root} does not exist")
    cases, errors = [], []
    for case_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            cases.append(load_case(case_dir))
        except (ManifestError, OSError) as exc:
            if strict:
                raise
            errors.append(str(exc))
            log.warning("%s", exc)
    return cases, errors


def write_case(root, case: DualViewCase, fmt: str = "png") -> Path:
    from .imageio import write_pgm, write_png

    case_dir = Path(root) / case.patient_id
    case_dir.mkdir(parents=True, exist_ok=True)
    writer = write_png if fmt == "png" else write_pgm
    for view, img in (("cc", case.cc_image), ("mlo", case.mlo_image)):
        arr = np.asarray(img)
        if arr.dtype not in (np.uint8, np.uint16):
            arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        writer(case_dir / f"{view}.{fmt}", arr)
    (case_dir / "meta.txt").write_text(
        f"label={LABEL_NAMES[case.label]}\n"
        f"cc_seed={case.cc_seed[0]},{case.cc_seed[1]}\n"
        f"mlo_seed={case.mlo_seed[0]},{case.mlo_seed[1]}\n", encoding="utf-8")
    return case_dir


# ------------------------------------------------------------ preprocessing

def _window(center: int, extent: int, size: int) -> tuple[int, int, int]:
    """(src_start, dst_start, length) of the crop along one axis."""
    if extent >= size:
        start = min(max(center - size // 2, 0), extent - size)
        return start, 0, size
    return 0, (size - extent) // 2, extent


def crop_seed(image: np.ndarray, seed: tuple[int, int], size: int = SEED_CROP) -> np.ndarray:
    """``size`` x ``size`` window centred on ``seed``.

    Along an axis where the image is large enough the window is shifted inward
    to stay inside it; otherwise the whole axis is kept and zero-padded evenly.
    """
    image = np.asarray(image, dtype=np.float64)
    out = np.zeros((size, size), dtype=np.float64)
    rs, rd, rn = _window(seed[0], image.shape[0], size)
    cs, cd, cn = _window(seed[1], image.shape[1], size)
    out[rd:rd + rn, cd:cd + cn] = image[rs:rs + rn, cs:cs + cn]
    return out


def normalize(image: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return (image - image.mean()) / max(image.std(), eps)


def resize_bilinear(image: np.ndarray, size: int = RESIZED) -> np.ndarray:
    """Corner-aligned bilinear resampling to ``size`` x ``size``."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if h < 2 or w < 2:
        raise ValueError(f"resize_bilinear needs at least 2x2 input, got {image.shape}")
    if (h, w) == (size, size):
        return image.copy()

    def coords(n_in):
        pos = np.arange(size) * ((n_in - 1) / (size - 1))
        lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
        return lo, pos - lo

    r0, fr = coords(h)
    c0, fc = coords(w)
    top = image[r0][:, c0] * (1 - fc) + image[r0][:, c0 + 1] * fc
    bot = image[r0 + 1][:, c0] * (1 - fc) + image[r0 + 1][:, c0 + 1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def crop224(image: np.ndarray, mode: str = "center", rng: np.random.Generator | None = None,
            size: int = NET_INPUT) -> np.ndarray:
    image = np.asarray(image)
    if image.shape != (RESIZED, RESIZED):
        raise ValueError(f"crop224 expects a {RESIZED}x{RESIZED} image, got {image.shape}")
    slack = RESIZED - size
    if mode == "center":
        r = c = slack // 2
    elif mode == "random":
        if rng is None:
            raise ValueError("random crop needs a seeded generator")
        r, c = (int(v) for v in rng.integers(0, slack + 1, size=2))
    else:
        raise ValueError(f"unknown crop mode {mode!r}")
    return image[r:r + size, c:c + size]


def rotate_integer(image: np.ndarray, degrees: int) -> np.ndarray:
    """Counter-clockwise rotation about the centre, zero fill, bilinear resampling."""
    if int(degrees) != degrees or not 0 <= degrees <= 359:
        raise ValueError(f"rotation must be an integer in [0, 359], got {degrees}")
    degrees = int(degrees)
    if degrees % 90 == 0:
        return np.rot90(image, degrees // 90).copy()
    return ndimage.rotate(image, degrees, reshape=False, order=1, mode="constant", cval=0.0)


def preprocess_view(image: np.ndarray, seed: tuple[int, int], seed_crop: int = SEED_CROP) -> np.ndarray:
    """Deterministic part of the chain: seed crop, normalise, resize to 256."""
    return resize_bilinear(normalize(crop_seed(image, seed, seed_crop)), RESIZED)


def augment_view(image256: np.ndarray, config: AugmentConfig,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    if config.rotation:
        image256 = rotate_integer(image256, int(rng.integers(0, 360)))
    return crop224(image256, config.crop_mode, rng)


@dataclass
class PreparedCase:
    """A case reduced to its two 256x256 normalised views."""
    patient_id: str
    cc: np.ndarray
    mlo: np.ndarray
    label: int

    def view(self, name: str) -> np.ndarray:
        return self.cc if name == "cc" else self.mlo

    def test_inputs(self) -> tuple[np.ndarray, np.ndarray]:
        return crop224(self.cc), crop224(self.mlo)


def prepare(case: DualViewCase, seed_crop: int = SEED_CROP) -> PreparedCase:
    cc = preprocess_view(case.cc_image, case.cc_seed, seed_crop).astype(np.float32)
    mlo = preprocess_view(case.mlo_image, case.mlo_seed, seed_crop).astype(np.float32)
    return PreparedCase(case.patient_id, cc, mlo, case.label)


def case_rng(base_seed: int, *indices: int) -> np.random.Generator:
    """Generator keyed by (base_seed, indices) so results do not depend on scheduling."""
    return np.random.default_rng(np.random.SeedSequence([base_seed, *indices]))


# ------------------------------------------------------------------ splits

def split_patients(cases: Sequence, seed: int) -> DatasetSplit:
    ids = sorted(c.patient_id if hasattr(c, "patient_id") else str(c) for c in cases)
    if len(ids) < 10:
        raise ValueError(f"need at least 10 patients to split, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate patient ids")
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    n_test = len(ids) // 10
    n_val = (len(ids) - n_test) // 10
    return DatasetSplit(train=order[n_test + n_val:], validation=order[n_test:n_test + n_val],
                        test=order[:n_test], seed=seed)
