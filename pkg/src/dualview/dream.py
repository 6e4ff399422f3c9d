"""Directed Dream: class-targeted gradient ascent on the input views.

Each iteration randomly flips, rotates (multiples of 90 degrees) and blanks
boxes in both views, takes the input gradient of the logit margin
S(target) - S(other), z-scores and clips it, steps the image, clamps it, and
undoes the alteration. Box regions get their saved pixels back, so only
updates outside the boxes survive an iteration.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import BENIGN, MALIGNANT
from .imageio import to_uint8, write_png
from .models import MultiModalNet
from .tensor import Tensor


class DreamError(RuntimeError):
    pass


@dataclass
class DreamConfig:
    max_iter: int = 200
    learning_rate: float = 0.1
    grad_clip: float = 0.05
    value_clip: float = 3.0
    target_class: int = MALIGNANT
    flip_probability: float = 0.5
    rotation_set: tuple[int, ...] = (0, 90, 180, 270)
    box_count_range: tuple[int, int] = (1, 4)
    box_size_range: tuple[int, int] = (16, 64)
    rng_seed: int = 0

    def __post_init__(self):
        if self.grad_clip <= 0 or self.value_clip <= 0:
            raise ValueError("grad_clip and value_clip must be positive")
        if self.max_iter < 0 or self.learning_rate < 0:
            raise ValueError("max_iter and learning_rate must be non-negative")
        if not set(self.rotation_set) <= {0, 90, 180, 270} or not self.rotation_set:
            raise ValueError(f"rotation_set must be a non-empty subset of {{0, 90, 180, 270}}, "
                             f"got {self.rotation_set}")
        if self.target_class not in (BENIGN, MALIGNANT):
            raise ValueError("target_class must be 0 (benign) or 1 (malignant)")
        lo, hi = self.box_count_range
        if not 0 <= lo <= hi:
            raise ValueError(f"invalid box_count_range {self.box_count_range}")
        lo, hi = self.box_size_range
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid box_size_range {self.box_size_range}")
        if not 0 <= self.flip_probability <= 1:
            raise ValueError("flip_probability must be in [0, 1]")


@dataclass
class AlterationRecord:
    horizontal_flip: bool = False
    vertical_flip: bool = False
    rotation: int = 0
    boxes: list = field(default_factory=list)          # (row, col, height, width), already clipped
    saved_patches: list = field(default_factory=list)
    shape: tuple = ()


def forward_alter(image: np.ndarray, config: DreamConfig, rng: np.random.Generator):
    image = np.asarray(image)
    rec = AlterationRecord(shape=image.shape)
    rec.horizontal_flip = bool(rng.random() < config.flip_probability)
    rec.vertical_flip = bool(rng.random() < config.flip_probability)
    rec.rotation = int(config.rotation_set[int(rng.integers(len(config.rotation_set)))])
    x = image
    if rec.horizontal_flip:
        x = x[:, ::-1]
    if rec.vertical_flip:
        x = x[::-1]
    x = np.rot90(x, rec.rotation // 90).copy()
    h, w = x.shape
    lo, hi = config.box_count_range
    smin, smax = config.box_size_range
    for _ in range(int(rng.integers(lo, hi + 1))):
        bh, bw = (int(v) for v in rng.integers(smin, smax + 1, size=2))
        # boxes may hang over the border so edge pixels are covered as often as interior ones
        r = int(rng.integers(-bh + 1, h))
        c = int(rng.integers(-bw + 1, w))
        r0, c0 = max(r, 0), max(c, 0)
        r1, c1 = min(r + bh, h), min(c + bw, w)
        rec.boxes.append((r0, c0, r1 - r0, c1 - c0))
        rec.saved_patches.append(x[r0:r1, c0:c1].copy())
        x[r0:r1, c0:c1] = 0
    return x, rec


def _undo_geometry(x: np.ndarray, rec: AlterationRecord) -> np.ndarray:
    x = np.rot90(x, -(rec.rotation // 90))
    if rec.vertical_flip:
        x = x[::-1]
    if rec.horizontal_flip:
        x = x[:, ::-1]
    return np.ascontiguousarray(x)


def reverse_alter(image: np.ndarray, rec: AlterationRecord) -> np.ndarray:
    """Restore box contents (last box first), then undo rotation, then flips."""
    x = np.array(image, copy=True)
    expected = rec.shape if rec.rotation % 180 == 0 else rec.shape[::-1]
    if x.shape != tuple(expected):
        raise ValueError(f"image shape {x.shape} does not match alteration record {tuple(expected)}")
    for (r, c, bh, bw), patch in zip(reversed(rec.boxes), reversed(rec.saved_patches)):
        x[r:r + bh, c:c + bw] = patch
    return _undo_geometry(x, rec)


def reverse_saliency(grad: np.ndarray, rec: AlterationRecord) -> np.ndarray:
    """Map an altered-frame gradient back to image coordinates, zero where boxes discard it."""
    g = np.array(grad, copy=True)
    for r, c, bh, bw in rec.boxes:
        g[r:r + bh, c:c + bw] = 0
    return _undo_geometry(g, rec)


def zscore_clip(gradient: np.ndarray, clip: float = 0.05, eps: float = 1e-8) -> np.ndarray:
    """(g - mean) / max(population std, eps), clamped to [-clip, clip]."""
    g = np.asarray(gradient, dtype=np.float64)
    z = (g - g.mean()) / max(g.std(), eps)
    return np.clip(z, -clip, clip)


def _seed(target: int) -> np.ndarray:
    return np.array([1.0, -1.0] if target == BENIGN else [-1.0, 1.0], dtype=np.float32)


def class_gradient(net, cc_image: np.ndarray, mlo_image: np.ndarray, target: int):
    """Input-pixel gradients of S(target) - S(other) for both views.

    Returns ``(grad_cc, grad_mlo, logits)`` where ``logits`` maps view name to
    its (S0, S1) pair (a single ``"joint"`` entry for multi-modal networks).
    Dropout is off.
    """
    if target not in (BENIGN, MALIGNANT):
        raise ValueError("target must be 0 or 1")
    cc = Tensor(np.asarray(cc_image, dtype=np.float32)[None, None], requires_grad=True)
    mlo = Tensor(np.asarray(mlo_image, dtype=np.float32)[None, None], requires_grad=True)
    cc9, mlo9 = net.with_bank(cc), net.with_bank(mlo)
    seed = Tensor(np.broadcast_to(_seed(target), (1, 2)).copy())
    if isinstance(net, MultiModalNet):
        logits = net.forward(cc9, mlo9)
        y = T.tensor_sum(T.mul(logits, seed))
        scores = {"joint": logits.data[0].astype(np.float64)}
    else:
        l_cc, l_mlo = net.forward(cc9), net.forward(mlo9)
        y = T.add(T.tensor_sum(T.mul(l_cc, seed)), T.tensor_sum(T.mul(l_mlo, seed)))
        scores = {"cc": l_cc.data[0].astype(np.float64), "mlo": l_mlo.data[0].astype(np.float64)}
    y.backward()
    return cc.grad[0, 0], mlo.grad[0, 0], scores


def clean_scores(net, cc_image, mlo_image, target: int) -> tuple[dict, float]:
    """Logits per view and the case-level target probability, evaluation mode."""
    cc9 = net.network_input(np.asarray(cc_image, dtype=np.float32)[None])
    mlo9 = net.network_input(np.asarray(mlo_image, dtype=np.float32)[None])
    if isinstance(net, MultiModalNet):
        logits = {"joint": net.forward(Tensor(cc9), Tensor(mlo9)).data[0].astype(np.float64)}
    else:
        logits = {"cc": net.forward(Tensor(cc9)).data[0].astype(np.float64),
                  "mlo": net.forward(Tensor(mlo9)).data[0].astype(np.float64)}
    probs = [T.softmax(v[None])[0] for v in logits.values()]
    return logits, float(np.mean([p[target] for p in probs]))


@dataclass
class DreamFrame:
    iteration: int
    cc: np.ndarray
    mlo: np.ndarray
    saliency_cc: np.ndarray
    saliency_mlo: np.ndarray
    scores: dict          # view -> (S0, S1, p_target of that view)
    p_target: float       # case-level, views averaged for parallel networks


@dataclass
class DreamState:
    cc: np.ndarray
    mlo: np.ndarray
    frames: list = field(default_factory=list)

    @property
    def iteration(self) -> int:
        return len(self.frames)

    @property
    def score_trace(self) -> list:
        return [(f.iteration, f.scores, f.p_target) for f in self.frames]


def dream(net, cc0: np.ndarray, mlo0: np.ndarray, config: DreamConfig) -> DreamState:
    """Run ``config.max_iter`` iterations on both views in lock-step.

    The start images are clamped to the value range before the first
    iteration so that restored box pixels never leave it.
    """
    state = DreamState(np.array(cc0, dtype=np.float32), np.array(mlo0, dtype=np.float32))
    if config.max_iter == 0:
        return state
    rng = np.random.default_rng(config.rng_seed)
    vc = np.float32(config.value_clip)
    lr = np.float32(config.learning_rate)
    x = {"cc": np.clip(state.cc, -vc, vc), "mlo": np.clip(state.mlo, -vc, vc)}
    for it in range(1, config.max_iter + 1):
        altered, records = {}, {}
        for view in ("cc", "mlo"):
            altered[view], records[view] = forward_alter(x[view], config, rng)
        g_cc, g_mlo, _ = class_gradient(net, altered["cc"], altered["mlo"], config.target_class)
        saliency = {}
        for view, g in (("cc", g_cc), ("mlo", g_mlo)):
            step = zscore_clip(g, config.grad_clip).astype(np.float32)
            if not np.all(np.isfinite(step)):
                raise DreamError(f"non-finite gradient at iteration {it} ({view} view)")
            updated = np.clip(altered[view] + lr * step, -vc, vc)
            x[view] = reverse_alter(updated, records[view])
            saliency[view] = reverse_saliency(step, records[view])
        logits, p_target = clean_scores(net, x["cc"], x["mlo"], config.target_class)
        if not np.isfinite(p_target):
            raise DreamError(f"non-finite scores at iteration {it}")
        scores = {v: (float(s[0]), float(s[1]), float(T.softmax(s[None])[0][config.target_class]))
                  for v, s in logits.items()}
        state.frames.append(DreamFrame(it, x["cc"].copy(), x["mlo"].copy(),
                                       saliency["cc"], saliency["mlo"], scores, p_target))
    state.cc, state.mlo = x["cc"], x["mlo"]
    return state


def trace_csv(state: DreamState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "view", "s0", "s1", "p_target"])
    for f in state.frames:
        for view, (s0, s1, p) in f.scores.items():
            w.writerow([f.iteration, view, f"{s0:.6f}", f"{s1:.6f}", f"{p:.6f}"])
        w.writerow([f.iteration, "case", "", "", f"{f.p_target:.6f}"])
    return buf.getvalue()


def write_frames(state: DreamState, out_dir, config: DreamConfig) -> None:
    """PNG per frame and view: dream image and saliency side by side, [-3, 3] -> [0, 255]."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vc = config.value_clip
    gain = vc / config.grad_clip
    for f in state.frames:
        for view in ("cc", "mlo"):
            img = getattr(f, view)
            sal = getattr(f, f"saliency_{view}") * gain
            panel = np.concatenate([to_uint8(img, -vc, vc), to_uint8(sal, -vc, vc)], axis=1)
            write_png(out / f"frame_{f.iteration:05d}_{view}.png", panel)
    (out / "trace.csv").write_text(trace_csv(state), encoding="utf-8")
