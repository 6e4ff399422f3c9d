"""Shared builders for tests that need small networks."""

from collections import OrderedDict

import numpy as np

from dualview import tensor as T
from dualview.models import backbone_spec, build_model
from dualview.tensor import Tensor


def small_model(kind, backbone="inception_lite", size=32, seed=0, dropout=0.1):
    return build_model(kind, backbone_spec(backbone, size), np.random.default_rng(seed), dropout)


def composed_loss_fn(model, labels, l2=1e-2):
    """fn(cc_image, mlo_image, *params) -> scalar loss through DoG bank, backbone(s) and head."""
    names = list(model.params)

    def fn(cc, mlo, *params):
        model.params = OrderedDict(zip(names, params))
        cc9, mlo9 = model.with_bank(cc), model.with_bank(mlo)
        if model.kind == "multimodal":
            logits = model.forward(cc9, mlo9)
            loss, _ = T.softmax_cross_entropy(logits, labels, params, l2)
            return loss
        loss_cc, _ = T.softmax_cross_entropy(model.forward(cc9), labels, params, l2)
        loss_mlo, _ = T.softmax_cross_entropy(model.forward(mlo9), labels, (), 0.0)
        return T.add(loss_cc, loss_mlo)

    return fn, [p.data.astype(np.float64) for p in model.params.values()]


def composed_grad_check(kind, backbone, max_coords=12, seed=0):
    from dualview.gradcheck import grad_check

    model = small_model(kind, backbone, 32, seed)
    rng = np.random.default_rng(seed + 100)
    labels = np.array([0, 1])
    fn, params = composed_loss_fn(model, labels)
    images = [rng.normal(size=(2, 1, 32, 32)), rng.normal(size=(2, 1, 32, 32))]
    return grad_check(fn, images + params, max_coords=max_coords, seed=seed)


def as_t(a):
    return Tensor(np.asarray(a, dtype=np.float32))
