"""Confusion-matrix classification metrics.

Per-class F1 uses the 0/0 -> 0 convention, so classes absent from both
truth and prediction contribute 0 to the macro average.
"""

from dataclasses import dataclass, asdict

import numpy as np

__all__ = ["confusion_matrix", "per_class_f1", "EvalReport", "report_from_confusion"]


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """cell (i, j) counts samples of true class i predicted as class j."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(
            f"confusion_matrix: predictions {predictions.shape} vs labels {labels.shape}"
        )
    for name, arr in (("prediction", predictions), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"confusion_matrix: {name} outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2.0 * tp + fp + fn
    f1 = np.zeros(cm.shape[0])
    nz = denom > 0
    f1[nz] = 2.0 * tp[nz] / denom[nz]
    return f1


@dataclass
class EvalReport:
    """Held-out evaluation result for one (variant, region, seed) run."""

    region_id: str
    variant: str
    seed: int
    class_names: list
    confusion: list          # K x K counts, truth-major
    per_class_f1: list
    macro_f1: float
    overall_accuracy: float
    total: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def report_from_confusion(cm: np.ndarray, class_names, region_id: str,
                          variant: str, seed: int) -> EvalReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    f1 = per_class_f1(cm)
    oa = float(np.trace(cm) / total) if total else 0.0
    return EvalReport(
        region_id=region_id,
        variant=variant,
        seed=seed,
        class_names=list(class_names),
        confusion=cm.tolist(),
        per_class_f1=[float(v) for v in f1],
        macro_f1=float(f1.mean()) if f1.size else 0.0,
        overall_accuracy=oa,
        total=total,
    )
