"""Classification accuracy (overall and class-averaged) and retrieval mAP."""
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    overall: float
    avg_class: float
    per_class: np.ndarray  # recall per class, NaN for classes absent from labels
    confusion: np.ndarray  # (C, C), rows = true class, columns = predicted
    mAP: float = None

    def to_text(self, class_names=None):
        names = class_names or [str(c) for c in range(len(self.per_class))]
        lines = [f"overall accuracy   {self.overall:.2%}",
                 f"avg.class accuracy {self.avg_class:.2%}"]
        if self.mAP is not None:
            lines.append(f"retrieval mAP      {self.mAP:.2%}")
        for name, recall, row in zip(names, self.per_class, self.confusion):
            lines.append(f"  {name:<14s} {recall:7.2%}  ({row.sum()} items)")
        return "\n".join(lines)


def evaluate(predictions, labels, n_classes):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if len(labels) == 0:
        raise ValueError("nothing to evaluate")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.diag(confusion) / support
    absent = support == 0
    if absent.any():
        warnings.warn(f"classes {np.flatnonzero(absent).tolist()} have no test items; "
                      "excluded from avg.class", stacklevel=2)
    return MetricsReport(
        overall=float(np.trace(confusion) / len(labels)),
        avg_class=float(np.mean(recall[~absent])),
        per_class=recall,
        confusion=confusion,
    )


def average_precision(ranked_relevance):
    """AP of one ranking given as a boolean relevance vector in rank order."""
    rel = np.asarray(ranked_relevance, dtype=bool)
    hits = np.flatnonzero(rel)
    if len(hits) == 0:
        return float("nan")
    return float(np.mean(np.arange(1, len(hits) + 1) / (hits + 1)))


def retrieval_map(embeddings, labels):
    """Mean average precision with every item querying all the others.

    Items are ranked by ascending Euclidean distance, ties by item index.
    Queries whose class has no other member are skipped with a warning.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(emb)
    aps, skipped = [], 0
    for q in range(n):
        others = np.delete(np.arange(n), q)
        rel = labels[others] == labels[q]
        if not rel.any():
            skipped += 1
            continue
        dist = np.sqrt(((emb[others] - emb[q]) ** 2).sum(axis=1))
        order = np.argsort(dist, kind="stable")
        aps.append(average_precision(rel[order]))
    if skipped:
        warnings.warn(f"{skipped} queries skipped: their class has a single item", stacklevel=2)
    if not aps:
        raise ValueError("no query has a relevant item")
    return float(np.mean(aps))
