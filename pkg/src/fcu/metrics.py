"""Evaluation protocol: fidelity, efficacy, efficiency.

Fidelity is accuracy/F1/error on held-out test data plus error on the
retained clients' data; efficacy is error on the departing client's data,
summarized as a signed gap against the retraining reference; efficiency is
phase wall-clock time.  One :class:`MetricsReport` captures a single method
run and serializes to a JSON report document.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from fcu import nn
from fcu.data import Dataset

REPORT_FORMAT = "fcu-report-v1"


def predictions(model: nn.NetworkModel, ds: Dataset, chunk: int = 4096) -> np.ndarray:
    """Argmax class predictions over a whole dataset."""
    out = np.empty(len(ds), dtype=np.int64)
    for start in range(0, len(ds), chunk):
        idx = np.arange(start, min(start + chunk, len(ds)))
        x, _ = ds.batch(idx)
        out[idx] = np.argmax(nn.forward(model, x).logits, axis=1)
    return out


def accuracy(model: nn.NetworkModel, ds: Dataset) -> float:
    """Percent of correctly classified samples."""
    return float(100.0 * np.mean(predictions(model, ds) == ds.labels))


def error(model: nn.NetworkModel, ds: Dataset) -> float:
    """Percent misclassified; the exact complement of :func:`accuracy`."""
    return 100.0 - accuracy(model, ds)


def f1_from_predictions(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    """F1 in percent: binary uses class 1 as positive, multiclass is macro.

    A class with no predicted and no actual positives contributes a perfect
    score (nothing to get wrong), matching the 2TP + FP + FN = 0 convention.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("prediction/label shape mismatch")

    def one(cls: int) -> float:
        tp = int(np.sum((y_pred == cls) & (y_true == cls)))
        fp = int(np.sum((y_pred == cls) & (y_true != cls)))
        fn = int(np.sum((y_pred != cls) & (y_true == cls)))
        denom = 2 * tp + fp + fn
        return 1.0 if denom == 0 else 2.0 * tp / denom

    if n_classes == 2:
        return 100.0 * one(1)
    return float(100.0 * np.mean([one(c) for c in range(n_classes)]))


def f1(model: nn.NetworkModel, ds: Dataset) -> float:
    return f1_from_predictions(ds.labels, predictions(model, ds), ds.n_classes)


def efficacy_gap(error_f: float, error_f_retrain: float) -> float:
    """Signed distance to the retraining reference, one decimal."""
    return round(float(error_f) - float(error_f_retrain), 1)


def config_digest(cfg: dict) -> str:
    """sha256 over the canonical JSON form of a resolved configuration."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class MetricsReport:
    method: str
    seed: int
    accuracy: float
    f1: float
    error_t: float
    error_r: float
    error_f: float
    efficacy_gap: float | None
    runtime_seconds: float
    config_digest: str

    def __post_init__(self):
        if not self.method:
            raise ValueError("method must be non-empty")
        for field_name in ("accuracy", "f1", "error_t", "error_r", "error_f"):
            v = getattr(self, field_name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{field_name} must be a percentage in [0, 100], got {v}")
        if self.runtime_seconds < 0:
            raise ValueError("runtime_seconds must be nonnegative")
        if len(self.config_digest) != 64 or any(c not in "0123456789abcdef" for c in self.config_digest):
            raise ValueError("config_digest must be a sha256 hex digest")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def emit_report(reports: list[MetricsReport], path) -> None:
    doc = {"format": REPORT_FORMAT, "reports": [r.to_dict() for r in reports]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_reports(path) -> list[MetricsReport]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path}: not a {REPORT_FORMAT} document")
    return [MetricsReport.from_dict(d) for d in doc["reports"]]


def with_gaps(reports: list[MetricsReport]) -> list[MetricsReport]:
    """Fill efficacy gaps against the retrain row, when one is present."""
    reference = next((r for r in reports if r.method == "retrain"), None)
    if reference is None:
        return list(reports)
    out = []
    for r in reports:
        d = r.to_dict()
        d["efficacy_gap"] = efficacy_gap(r.error_f, reference.error_f)
        out.append(MetricsReport.from_dict(d))
    return out


def render_table(reports: list[MetricsReport]) -> str:
    """Fixed-width comparison table, best test accuracy first."""
    rows = with_gaps(sorted(reports, key=lambda r: -r.accuracy))
    retrain = next((r for r in rows if r.method == "retrain"), None)
    head1 = (
        f"{'':10s} | {'fidelity':^31s} | {'efficacy':^15s} | {'efficiency':^18s}"
    )
    head2 = (
        f"{'method':10s} | {'acc%':>7s} {'f1%':>7s} {'err_t%':>7s} {'err_r%':>7s}"
        f" | {'err_f%':>7s} {'gap':>7s} | {'seconds':>9s} {'speedup':>8s}"
    )
    lines = [head1, head2, "-" * len(head2)]
    for r in rows:
        gap = "-" if r.efficacy_gap is None else f"{r.efficacy_gap:+.1f}"
        if retrain is not None and r.runtime_seconds > 0:
            speed = f"{retrain.runtime_seconds / r.runtime_seconds:.1f}x"
        else:
            speed = "-"
        lines.append(
            f"{r.method:10s} | {r.accuracy:7.2f} {r.f1:7.2f} {r.error_t:7.2f} {r.error_r:7.2f}"
            f" | {r.error_f:7.2f} {gap:>7s} | {r.runtime_seconds:9.3f} {speed:>8s}"
        )
    return "\n".join(lines)
