"""Held-out evaluation reports and the cross-run comparison table."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import PreparedCase
from .metrics import accuracy, cross_entropy, predict_labels, roc_auc
from .train import eval_inputs, predict_cases

CSV_HEADER = ("patient_id", "label", "p_malignant", "predicted")


@dataclass
class MetricsReport:
    accuracy: float
    auc: float | None
    mean_loss: float
    n_cases: int
    per_case: list = field(default_factory=list)   # (patient_id, label, p_malignant, predicted)
    auc_error: str = ""
    descriptor: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for pid, label, p, pred in self.per_case:
            w.writerow([pid, label, repr(float(p)), pred])
        return buf.getvalue()

    def summary_text(self) -> str:
        auc = f"{self.auc:.4f}" if self.auc is not None else f"undefined ({self.auc_error})"
        lines = [f"model: {self.descriptor}", f"n_cases: {self.n_cases}",
                 f"accuracy: {self.accuracy:.4f}", f"auc: {auc}", f"loss: {self.mean_loss:.4f}"]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cases.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / "summary.txt").write_text(self.summary_text(), encoding="utf-8")


def report_from_probs(patient_ids: Sequence[str], labels, p_malignant, descriptor: str = "") -> MetricsReport:
    """Build a report from per-case malignant probabilities.

    The loss is the mean data cross-entropy; no regulariser is added.
    """
    labels = np.asarray(labels, dtype=int)
    p1 = np.asarray(p_malignant, dtype=np.float64)
    if p1.size == 0:
        raise ValueError("cannot evaluate an empty test set")
    pred = predict_labels(p1)
    probs = np.stack([1.0 - p1, p1], axis=1)
    try:
        auc, err = roc_auc(p1, labels), ""
    except ValueError as exc:
        auc, err = None, str(exc)
    rows = [(pid, int(y), float(p), int(k)) for pid, y, p, k in zip(patient_ids, labels, p1, pred)]
    return MetricsReport(accuracy(pred, labels), auc, float(cross_entropy(probs, labels).mean()),
                         len(rows), rows, err, descriptor)


def evaluate(model, cases: Sequence[PreparedCase], batch: int = 32) -> MetricsReport:
    """Evaluation-mode report: centre crop, no rotation, no dropout.

    ``model`` may be a single network or an ``Ensemble``.
    """
    if not cases:
        raise ValueError("cannot evaluate an empty test set")
    cc9, mlo9 = eval_inputs(model, cases)
    probs = predict_cases(model, cc9, mlo9, batch)
    return report_from_probs([c.patient_id for c in cases], [c.label for c in cases],
                             probs[:, 1], model.descriptor)


def parse_summary(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if ":" in line:
            key, value = line.split(":", 1)
            out[key.strip()] = value.strip()
    return out


def comparison_table(runs: Sequence[tuple[str, dict]]) -> str:
    """Method | Acc. | AUC | Loss rows, one per evaluated configuration."""
    header = ("method", "model", "n", "Acc.", "AUC", "Loss")
    rows = [(name, s.get("model", ""), s.get("n_cases", ""), s.get("accuracy", ""),
             s.get("auc", "").split(" ")[0], s.get("loss", "")) for name, s in runs]
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    fmt = " | ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), "-+-".join("-" * w for w in widths)]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines) + "\n"


def report_dirs(dirs: Sequence) -> str:
    runs = []
    for d in dirs:
        path = Path(d) / "summary.txt"
        if not path.is_file():
            raise FileNotFoundError(f"no summary.txt in eval output {d}")
        runs.append((Path(d).name, parse_summary(path.read_text(encoding="utf-8"))))
    return comparison_table(runs)
