"""Mini-batch Adam training with per-epoch validation and best-loss selection."""

from __future__ import annotations

import csv
import io
import logging
import multiprocessing as mp
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import AugmentConfig, PreparedCase, augment_view, crop224
from .metrics import cross_entropy, predict_labels
from .models import BackboneSpec, build_model
from .optim import Adam
from .tensor import Tensor

log = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr")

# stream tags for SeedSequence so each consumer of randomness is independent
_INIT, _SHUFFLE, _AUGMENT, _DROPOUT = 1, 2, 3, 4


class NumericError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    kind: str = "parallel"
    backbone: str = "inception_lite"
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    decay: float = 0.99
    dropout: float = 0.1
    l2: float = 1e-6
    seed: int = 0
    rotate: bool = True
    hidden: int = 32


@dataclass
class TrainResult:
    model: object
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    def log_csv(self) -> str:
        return metrics_csv(self.log)


def metrics_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for r in rows:
        w.writerow([r["epoch"]] + [f"{r[k]:.6f}" for k in LOG_HEADER[1:-1]] + [f"{r['lr']:.8g}"])
    return buf.getvalue()


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


def eval_inputs(model, cases: Sequence[PreparedCase]) -> tuple[np.ndarray, np.ndarray]:
    """Centre-cropped 9-channel inputs for both views, float32."""
    cc = np.stack([crop224(c.cc) for c in cases])
    mlo = np.stack([crop224(c.mlo) for c in cases])
    return model.network_input(cc), model.network_input(mlo)


def predict_cases(model, cc9: np.ndarray, mlo9: np.ndarray, batch: int = 32) -> np.ndarray:
    out = [model.predict_proba(cc9[i:i + batch], mlo9[i:i + batch]) for i in range(0, len(cc9), batch)]
    return np.concatenate(out) if out else np.zeros((0, 2))


def _snapshot(model) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((k, v.data.copy()) for k, v in model.params.items())


def _restore(model, snap) -> None:
    for k, arr in snap.items():
        model.params[k].data = arr.copy()


def train(train_cases: Sequence[PreparedCase], val_cases: Sequence[PreparedCase],
          config: TrainConfig, spec: BackboneSpec | None = None) -> TrainResult:
    """Train one model; returns the best-validation-loss weights and the epoch log.

    Parallel mode treats each view of each case as an independent sample;
    multi-modal mode feeds both views of a case together. Gradients are the
    batch mean.
    """
    from .models import backbone_spec

    spec = spec or backbone_spec(config.backbone)
    if spec.input_size != crop224(np.zeros((256, 256))).shape[0]:
        raise ValueError("training runs on 224x224 network inputs")
    model = build_model(config.kind, spec, _rng(config.seed, _INIT), config.dropout, config.hidden)
    result = TrainResult(model)
    if config.epochs <= 0:
        return result
    if not train_cases:
        raise ValueError("no training cases")

    opt = Adam(model.parameters(), lr=config.lr, decay_per_epoch=config.decay)
    aug = AugmentConfig(rotation=config.rotate, crop_mode="random", rng_seed=config.seed)
    labels = np.array([c.label for c in train_cases])
    if config.kind == "parallel":
        samples = [(i, v) for i in range(len(train_cases)) for v in (0, 1)]
    else:
        samples = [(i, -1) for i in range(len(train_cases))]

    val_labels = np.array([c.label for c in val_cases])
    val_inputs = eval_inputs(model, val_cases) if val_cases else None
    best_loss, best_snap = np.inf, _snapshot(model)

    def view_input(epoch, i, v):
        img = train_cases[i].cc if v == 0 else train_cases[i].mlo
        return augment_view(img, aug, _rng(config.seed, _AUGMENT, epoch, i, v))

    for epoch in range(config.epochs):
        lr_used = opt.lr
        order = _rng(config.seed, _SHUFFLE, epoch).permutation(len(samples))
        loss_sum, correct, seen = 0.0, 0, 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [samples[j] for j in order[start:start + config.batch_size]]
            y = labels[[i for i, _ in batch]]
            drop_rng = _rng(config.seed, _DROPOUT, epoch, b)
            if config.kind == "parallel":
                x = model.network_input(np.stack([view_input(epoch, i, v) for i, v in batch]))
                logits = model.forward(Tensor(x), training=True, rng=drop_rng)
            else:
                cc = model.network_input(np.stack([view_input(epoch, i, 0) for i, _ in batch]))
                mlo = model.network_input(np.stack([view_input(epoch, i, 1) for i, _ in batch]))
                logits = model.forward(Tensor(cc), Tensor(mlo), training=True, rng=drop_rng)
            loss, probs = T.softmax_cross_entropy(logits, y, model.parameters(), config.l2)
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}, batch {b}")
            model.zero_grad()
            loss.backward()
            opt.step()
            data_loss = cross_entropy(probs, y)
            loss_sum += float(data_loss.sum())
            correct += int((predict_labels(probs[:, 1]) == y).sum())
            seen += len(y)
        opt.end_epoch()

        row = {"epoch": epoch + 1, "train_loss": loss_sum / seen, "train_acc": correct / seen,
               "val_loss": float("nan"), "val_acc": float("nan"), "lr": lr_used}
        if val_inputs is not None:
            p = predict_cases(model, *val_inputs)
            row["val_loss"] = float(cross_entropy(p, val_labels).mean())
            row["val_acc"] = float((predict_labels(p[:, 1]) == val_labels).mean())
            if row["val_loss"] < best_loss:
                best_loss, best_snap, result.best_epoch = row["val_loss"], _snapshot(model), epoch + 1
        else:
            best_snap, result.best_epoch = _snapshot(model), epoch + 1
        result.log.append(row)
        log.info("epoch %d train_loss %.4f train_acc %.3f val_loss %.4f val_acc %.3f",
                 row["epoch"], row["train_loss"], row["train_acc"], row["val_loss"], row["val_acc"])

    _restore(model, best_snap)
    return result


def member_config(config: TrainConfig, member: int) -> TrainConfig:
    """Ensemble member ``member`` differs from the base run only in its seed."""
    return replace(config, seed=config.seed + member)


_SHARED: dict = {}


def _member_job(member: int):
    from .checkpoint import model_bytes

    res = train(_SHARED["train"], _SHARED["val"], member_config(_SHARED["config"], member))
    return model_bytes(res.model), res.log, res.best_epoch


def train_ensemble(train_cases: Sequence[PreparedCase], val_cases: Sequence[PreparedCase],
                   config: TrainConfig, members: int, workers: int = 1) -> list[TrainResult]:
    """Independently trained members; ``workers > 1`` trains them in forked processes.

    Every member's randomness comes from its own seed, so the results do not
    depend on the number of workers.
    """
    from .checkpoint import model_from_bytes

    if members < 1:
        raise ValueError("an ensemble needs at least one member")
    if workers <= 1 or members == 1:
        return [train(train_cases, val_cases, member_config(config, m)) for m in range(members)]
    _SHARED.update(train=train_cases, val=val_cases, config=config)
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(workers, members), mp_context=ctx) as pool:
            outputs = list(pool.map(_member_job, range(members)))
    finally:
        _SHARED.clear()
    return [TrainResult(model_from_bytes(blob, config.dropout), log_rows, best)
            for blob, log_rows, best in outputs]
