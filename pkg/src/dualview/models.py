"""Dual-view network configurations over two reduced-scale backbones.

``alexnet_small``: five convolutions (at most 96 channels) with max-pooling.
``inception_lite``: a strided stem plus three four-path inception blocks
(1x1 | 1x1->3x3 | 1x1->5x5 | 3x3 pool->1x1), channel-concatenated.

``MultiModalNet`` gives each view its own backbone and classifies the
concatenated features; ``ParallelNet`` runs both views through one shared
backbone and averages the two softmax outputs at prediction time.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .dog import DoGFilterBank, apply_bank, build_bank, filter_images
from .tensor import ShapeError, Tensor

IN_CHANNELS = 9
HIDDEN = 32
N_CLASSES = 2


@dataclass(frozen=True)
class LayerSpec:
    kind: str                     # "conv" | "pool" | "inception"
    out: int = 0
    k: int = 0
    stride: int = 1
    pad: int = 0
    branches: tuple[int, ...] = ()  # inception: b1, b3_reduce, b3, b5_reduce, b5, pool_proj

    def out_channels(self, c_in: int) -> int:
        if self.kind == "conv":
            return self.out
        if self.kind == "pool":
            return c_in
        b1, _, b3, _, b5, bp = self.branches
        return b1 + b3 + b5 + bp


def conv(out, k, stride=1, pad=0):
    return LayerSpec("conv", out, k, stride, pad)


def pool(k=2, stride=2):
    return LayerSpec("pool", k=k, stride=stride)


def inception(b1, b3r, b3, b5r, b5, bp):
    return LayerSpec("inception", branches=(b1, b3r, b3, b5r, b5, bp))


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    input_size: int = 224
    in_channels: int = IN_CHANNELS

    def shapes(self) -> list[tuple[int, int]]:
        """(channels, spatial size) after each layer; raises on an invalid chain."""
        c, s = self.in_channels, self.input_size
        out = []
        for i, layer in enumerate(self.layers):
            if layer.kind in ("conv", "pool"):
                if layer.k > s + 2 * layer.pad:
                    raise ShapeError(f"{self.name} layer {i}: kernel {layer.k} exceeds input {s}")
                s = T.conv_output_size(s, layer.k, layer.stride, layer.pad)
            elif layer.kind == "inception":
                if len(layer.branches) != 6 or min(layer.branches) < 1:
                    raise ShapeError(f"{self.name} layer {i}: inception needs six positive widths")
            else:
                raise ValueError(f"{self.name} layer {i}: unknown kind {layer.kind!r}")
            if s < 1:
                raise ShapeError(f"{self.name} layer {i}: spatial size collapsed to {s}")
            c = layer.out_channels(c)
            out.append((c, s))
        return out

    @property
    def feature_dim(self) -> int:
        if not self.layers:
            return self.in_channels * self.input_size ** 2
        c, s = self.shapes()[-1]
        return c * s * s


def alexnet_small(input_size: int = 224) -> BackboneSpec:
    return BackboneSpec("alexnet_small", (
        conv(24, 7, 4, 3), pool(),
        conv(48, 5, 1, 2), pool(),
        conv(64, 3, 1, 1), conv(64, 3, 1, 1), conv(48, 3, 1, 1), pool(),
    ), input_size)


def inception_lite(input_size: int = 224) -> BackboneSpec:
    block = inception(8, 8, 12, 4, 6, 6)
    return BackboneSpec("inception_lite", (
        conv(16, 5, 4, 2), pool(),
        block, pool(),
        block, pool(),
        block,
    ), input_size)


BACKBONES = {"alexnet_small": alexnet_small, "inception_lite": inception_lite}


def backbone_spec(name: str, input_size: int = 224) -> BackboneSpec:
    try:
        return BACKBONES[name](input_size)
    except KeyError:
        raise ValueError(f"unknown backbone {name!r}; choose from {sorted(BACKBONES)}") from None


# ---------------------------------------------------------------- parameters

def _he(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def _conv_params(params, name, rng, c_in, c_out, k):
    params[f"{name}.w"] = Tensor(_he(rng, (c_out, c_in, k, k), c_in * k * k), True, f"{name}.w")
    params[f"{name}.b"] = Tensor(np.zeros(c_out, np.float32), True, f"{name}.b")


def build_backbone(spec: BackboneSpec, rng: np.random.Generator, prefix: str = "backbone") -> "OrderedDict[str, Tensor]":
    spec.shapes()
    params: OrderedDict[str, Tensor] = OrderedDict()
    c = spec.in_channels
    for i, layer in enumerate(spec.layers):
        name = f"{prefix}.{i}"
        if layer.kind == "conv":
            _conv_params(params, name, rng, c, layer.out, layer.k)
        elif layer.kind == "inception":
            b1, b3r, b3, b5r, b5, bp = layer.branches
            _conv_params(params, f"{name}.b1", rng, c, b1, 1)
            _conv_params(params, f"{name}.b3r", rng, c, b3r, 1)
            _conv_params(params, f"{name}.b3", rng, b3r, b3, 3)
            _conv_params(params, f"{name}.b5r", rng, c, b5r, 1)
            _conv_params(params, f"{name}.b5", rng, b5r, b5, 5)
            _conv_params(params, f"{name}.bp", rng, c, bp, 1)
        c = layer.out_channels(c)
    return params


def _cbr(x, params, name, stride=1, pad=0):
    return T.relu(T.conv2d(x, params[f"{name}.w"], params[f"{name}.b"], stride, pad))


def forward_backbone(spec: BackboneSpec, params, x: Tensor, prefix: str = "backbone") -> Tensor:
    if x.data.ndim != 4 or x.shape[1:] != (spec.in_channels, spec.input_size, spec.input_size):
        raise ShapeError(f"{spec.name} expects (N, {spec.in_channels}, {spec.input_size}, "
                         f"{spec.input_size}) input, got {x.shape}")
    for i, layer in enumerate(spec.layers):
        name = f"{prefix}.{i}"
        if layer.kind == "conv":
            x = _cbr(x, params, name, layer.stride, layer.pad)
        elif layer.kind == "pool":
            x = T.maxpool2d(x, layer.k, layer.stride)
        else:
            p1 = _cbr(x, params, f"{name}.b1")
            p3 = _cbr(_cbr(x, params, f"{name}.b3r"), params, f"{name}.b3", pad=1)
            p5 = _cbr(_cbr(x, params, f"{name}.b5r"), params, f"{name}.b5", pad=2)
            pp = _cbr(T.maxpool2d(x, 3, 1, padding=1), params, f"{name}.bp")
            x = T.concat([p1, p3, p5, pp], axis=1)
    return T.flatten(x)


def build_head(params, rng, in_dim: int, hidden: int = HIDDEN) -> None:
    params["head.fc1.w"] = Tensor(_he(rng, (in_dim, hidden), in_dim), True, "head.fc1.w")
    params["head.fc1.b"] = Tensor(np.zeros(hidden, np.float32), True, "head.fc1.b")
    params["head.fc2.w"] = Tensor(_he(rng, (hidden, N_CLASSES), hidden), True, "head.fc2.w")
    params["head.fc2.b"] = Tensor(np.zeros(N_CLASSES, np.float32), True, "head.fc2.b")


def forward_head(params, feats: Tensor, dropout_p: float, training: bool, rng) -> Tensor:
    h = T.relu(T.fully_connected(feats, params["head.fc1.w"], params["head.fc1.b"]))
    h = T.dropout(h, dropout_p, training, rng)
    return T.fully_connected(h, params["head.fc2.w"], params["head.fc2.b"])


# ------------------------------------------------------------------- models

def parse_descriptor(text: str) -> dict:
    fields = dict(item.split("=", 1) for item in text.strip().split(";") if item)
    for key in ("kind", "backbone", "feature_dim"):
        if key not in fields:
            raise ValueError(f"architecture descriptor missing {key!r}: {text!r}")
    return fields


@dataclass
class _Net:
    spec: BackboneSpec
    params: "OrderedDict[str, Tensor]"
    dropout_p: float = 0.1
    bank: DoGFilterBank = field(default_factory=build_bank, repr=False)
    kind = ""

    @property
    def descriptor(self) -> str:
        text = f"kind={self.kind};backbone={self.spec.name};feature_dim={self.spec.feature_dim}"
        if self.spec.input_size != 224:
            text += f";input_size={self.spec.input_size}"
        return text

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def network_input(self, images: np.ndarray) -> np.ndarray:
        """(N,H,W) or (N,1,H,W) preprocessed images -> (N,9,H,W) with DoG channels."""
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 4:
            images = images[:, 0]
        return np.concatenate([images[:, None], filter_images(images, self.bank)], axis=1)

    def with_bank(self, image: Tensor) -> Tensor:
        """Differentiable DoG layer for inputs that need pixel gradients."""
        return apply_bank(image, self.bank)


@dataclass
class ParallelNet(_Net):
    kind = "parallel"

    def forward(self, view: Tensor, training: bool = False, rng=None) -> Tensor:
        feats = forward_backbone(self.spec, self.params, T.as_tensor(view), "backbone")
        return forward_head(self.params, feats, self.dropout_p, training, rng)

    def predict_proba(self, cc9: np.ndarray, mlo9: np.ndarray) -> np.ndarray:
        return predict_parallel(self, cc9, mlo9)


@dataclass
class MultiModalNet(_Net):
    kind = "multimodal"

    def forward(self, cc: Tensor, mlo: Tensor, training: bool = False, rng=None) -> Tensor:
        return forward_multimodal(self, cc, mlo, training, rng)

    def predict_proba(self, cc9: np.ndarray, mlo9: np.ndarray) -> np.ndarray:
        return T.softmax(self.forward(Tensor(cc9), Tensor(mlo9)).data.astype(np.float64))


def build_model(kind: str, spec: BackboneSpec, rng: np.random.Generator, dropout_p: float = 0.1,
                hidden: int = HIDDEN, bank: DoGFilterBank | None = None):
    bank = bank or build_bank()
    if kind == "parallel":
        params = build_backbone(spec, rng, "backbone")
        build_head(params, rng, spec.feature_dim, hidden)
        return ParallelNet(spec, params, dropout_p, bank)
    if kind == "multimodal":
        params = build_backbone(spec, rng, "cc")
        params.update(build_backbone(spec, rng, "mlo"))
        build_head(params, rng, 2 * spec.feature_dim, hidden)
        return MultiModalNet(spec, params, dropout_p, bank)
    raise ValueError(f"unknown model kind {kind!r}; choose parallel or multimodal")


def forward_multimodal(net: MultiModalNet, cc, mlo, training: bool = False, rng=None) -> Tensor:
    cc, mlo = T.as_tensor(cc), T.as_tensor(mlo)
    if cc.shape[0] != mlo.shape[0]:
        raise ShapeError(f"batch mismatch between views: {cc.shape[0]} cc vs {mlo.shape[0]} mlo")
    f_cc = forward_backbone(net.spec, net.params, cc, "cc")
    f_mlo = forward_backbone(net.spec, net.params, mlo, "mlo")
    return forward_head(net.params, T.concat([f_cc, f_mlo], axis=1), net.dropout_p, training, rng)


def forward_parallel(net: ParallelNet, view, training: bool = False, rng=None) -> Tensor:
    return net.forward(view, training, rng)


def average_view_probs(p_cc: np.ndarray, p_mlo: np.ndarray) -> np.ndarray:
    return (np.asarray(p_cc, dtype=np.float64) + np.asarray(p_mlo, dtype=np.float64)) / 2


def predict_parallel(net: ParallelNet, cc9: np.ndarray, mlo9: np.ndarray) -> np.ndarray:
    cc9, mlo9 = np.asarray(cc9), np.asarray(mlo9)
    if cc9.shape[0] != mlo9.shape[0]:
        raise ShapeError(f"batch mismatch between views: {cc9.shape[0]} cc vs {mlo9.shape[0]} mlo")
    p_cc = T.softmax(net.forward(Tensor(cc9)).data.astype(np.float64))
    p_mlo = T.softmax(net.forward(Tensor(mlo9)).data.astype(np.float64))
    return average_view_probs(p_cc, p_mlo)


@dataclass
class Ensemble:
    members: list

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        descs = {m.descriptor for m in self.members}
        if len(descs) > 1:
            raise ValueError(f"ensemble members have mixed architectures: {sorted(descs)}")

    @property
    def descriptor(self) -> str:
        return self.members[0].descriptor

    @property
    def kind(self) -> str:
        return self.members[0].kind

    def network_input(self, images):
        return self.members[0].network_input(images)

    def predict_proba(self, cc9: np.ndarray, mlo9: np.ndarray) -> np.ndarray:
        return ensemble_predict(self, cc9, mlo9)


def ensemble_predict(ens: Ensemble, cc9: np.ndarray, mlo9: np.ndarray) -> np.ndarray:
    probs = [m.predict_proba(cc9, mlo9) for m in ens.members]
    return np.mean(probs, axis=0)


def param_count(model) -> dict[str, int]:
    """Exact parameter counts split into convolutional and fully-connected groups."""
    if isinstance(model, BackboneSpec):
        params = build_backbone(model, np.random.default_rng(0)) if model.layers else {}
    else:
        params = model.params
    conv_n = sum(p.data.size for name, p in params.items() if not name.startswith("head."))
    fc_n = sum(p.data.size for name, p in params.items() if name.startswith("head."))
    return {"conv": conv_n, "fc": fc_n, "total": conv_n + fc_n}


def model_from_descriptor(descriptor: str, params: "OrderedDict[str, Tensor]", dropout_p: float = 0.1):
    fields = parse_descriptor(descriptor)
    spec = backbone_spec(fields["backbone"], int(fields.get("input_size", 224)))
    if spec.feature_dim != int(fields["feature_dim"]):
        raise ValueError(f"descriptor feature_dim {fields['feature_dim']} does not match "
                         f"{spec.name} ({spec.feature_dim})")
    cls = {"parallel": ParallelNet, "multimodal": MultiModalNet}.get(fields["kind"])
    if cls is None:
        raise ValueError(f"unknown model kind {fields['kind']!r}")
    return cls(spec, params, dropout_p)
