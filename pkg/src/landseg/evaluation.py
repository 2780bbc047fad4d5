"""Cluster-to-class alignment via the Kuhn-Munkres assignment and the
derived metrics: pixel accuracy, confusion matrix, per-class IOU."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .raster import LabelMask


@dataclass(frozen=True)
class EvalReport:
    """Metrics of one prediction against ground truth.

    `confusion` rows are truth classes, columns are mapped predictions;
    accuracy = trace / total.  Pixels with truth label 0 are excluded.
    """

    mapping: np.ndarray  # mapping[c-1] = class assigned to cluster c
    accuracy: float
    confusion: np.ndarray  # K x K counts
    per_class_iou: np.ndarray
    mean_iou: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray

    @property
    def class_count(self) -> int:
        return self.confusion.shape[0]


def _contingency(pred, truth, k):
    idx = (pred - 1) * k + (truth - 1)
    counts = np.bincount(idx, minlength=k * k)
    return counts.reshape(k, k)


def hungarian_map(pred, truth, class_count: int) -> np.ndarray:
    """Permutation of cluster ids onto class ids maximizing total agreement,
    via the Kuhn-Munkres assignment on the contingency table.

    Positions where truth == 0 are ignored.  Returns `mapping` with
    mapping[c-1] = class for cluster c.
    """
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise DataError(f"label arrays disagree: {pred.shape} vs {truth.shape}")
    valid = truth > 0
    pred = pred[valid]
    truth = truth[valid]
    if pred.size and (pred.min() < 1 or pred.max() > class_count):
        raise DataError(f"prediction labels outside 1..{class_count}")
    if truth.size and truth.max() > class_count:
        raise DataError(f"truth labels outside 1..{class_count}")
    table = _contingency(pred, truth, class_count)
    rows, cols = linear_sum_assignment(table, maximize=True)
    mapping = np.empty(class_count, dtype=np.int64)
    mapping[rows] = cols + 1
    return mapping


def evaluate(pred, truth: LabelMask | np.ndarray, class_count: int | None = None) -> EvalReport:
    """Hungarian-map the prediction onto the ground truth, then compute
    accuracy, the confusion matrix, and per-class IOU over labeled pixels."""
    if isinstance(truth, LabelMask):
        truth_labels = truth.labels.ravel()
        k = class_count or truth.class_count
    else:
        truth_labels = np.asarray(truth).ravel()
        k = class_count or int(truth_labels.max())
    pred = np.asarray(pred).ravel()
    if pred.shape != truth_labels.shape:
        raise DataError(f"prediction shape {pred.shape} does not match truth {truth_labels.shape}")
    valid = truth_labels > 0
    if not np.any(valid):
        raise DataError("no labeled truth pixels to evaluate against")

    mapping = hungarian_map(pred, truth_labels, k)
    mapped = mapping[pred - 1]

    t = truth_labels[valid]
    m = mapped[valid]
    confusion = np.bincount((t - 1) * k + (m - 1), minlength=k * k).reshape(k, k)
    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / float(total)

    diag = np.diag(confusion).astype(np.float64)
    truth_sizes = confusion.sum(axis=1).astype(np.float64)
    pred_sizes = confusion.sum(axis=0).astype(np.float64)
    union = truth_sizes + pred_sizes - diag
    iou = np.divide(diag, union, out=np.zeros(k), where=union > 0)
    precision = np.divide(diag, pred_sizes, out=np.zeros(k), where=pred_sizes > 0)
    recall = np.divide(diag, truth_sizes, out=np.zeros(k), where=truth_sizes > 0)

    return EvalReport(mapping=mapping, accuracy=accuracy, confusion=confusion,
                      per_class_iou=iou, mean_iou=float(iou.mean()),
                      per_class_precision=precision, per_class_recall=recall)


# ---------------------------------------------------------------------------
# report emission (deterministic byte-for-byte)

def class_report_csv(report: EvalReport) -> str:
    out = io.StringIO()
    out.write("class,iou,precision,recall\n")
    for k in range(report.class_count):
        out.write(f"{k + 1},{report.per_class_iou[k]:.6f},"
                  f"{report.per_class_precision[k]:.6f},{report.per_class_recall[k]:.6f}\n")
    return out.getvalue()


def confusion_csv(report: EvalReport) -> str:
    out = io.StringIO()
    k = report.class_count
    out.write("truth\\pred," + ",".join(str(c + 1) for c in range(k)) + "\n")
    for r in range(k):
        out.write(str(r + 1) + "," + ",".join(str(int(v)) for v in report.confusion[r]) + "\n")
    return out.getvalue()


def summary_text(report: EvalReport) -> str:
    lines = [
        f"accuracy {report.accuracy:.6f}",
        f"mean_iou {report.mean_iou:.6f}",
        "mapping " + " ".join(f"{c + 1}->{int(m)}" for c, m in enumerate(report.mapping)),
    ]
    for k in range(report.class_count):
        lines.append(f"class {k + 1} iou {report.per_class_iou[k]:.6f}")
    return "\n".join(lines) + "\n"
