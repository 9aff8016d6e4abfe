"""PRAUC and RCE, the two challenge metrics, plus their cross-entropy kernel.

PRAUC sweeps unique score thresholds in descending order, emits one
(recall, precision) point per threshold with ties processed together,
prepends the anchor (recall 0, precision 1) and integrates by trapezoids.
RCE is 100 * (1 - CE(model) / CE(naive)) where the naive predictor is the
constant positive rate of the evaluated labels themselves.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from ctrboost.ingest import CLASSES, EngagementClass

#: Predictions are clamped to [EPS, 1 - EPS] before taking logarithms.
EPS = 1e-15


class MetricError(ValueError):
    """Raised for contract violations in metric inputs."""


def _as_arrays(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if p.shape != y.shape or p.ndim != 1:
        raise MetricError(
            f"length mismatch: {p.shape[0]} predictions vs {y.shape[0]} labels"
        )
    if p.size == 0:
        raise MetricError("empty input")
    return p, y


def cross_entropy(predictions, labels) -> float:
    """Mean negative log-likelihood (natural log), with clamped predictions."""
    p, y = _as_arrays(predictions, labels)
    p = np.clip(p, EPS, 1.0 - EPS)
    ll = np.where(y, np.log(p), np.log1p(-p))
    return float(-np.mean(ll))


def rce(predictions, labels) -> float:
    """Relative cross entropy of ``predictions`` against the rate constant.

    Returns a percentage: 0 means exactly as good as predicting the labels'
    own positive rate, positive means better. Base-of-logarithm invariant.
    """
    p, y = _as_arrays(predictions, labels)
    positives = int(y.sum())
    if positives == 0 or positives == y.size:
        raise MetricError("degenerate naive baseline: labels are all one class")
    rate = positives / y.size
    naive = cross_entropy(np.full(y.size, rate), y)
    return 100.0 * (1.0 - cross_entropy(p, y) / naive)


def prauc(scores, labels) -> float:
    """Area under the precision-recall curve by threshold sweep + trapezoids."""
    s, y = _as_arrays(scores, labels)
    if np.isnan(s).any():
        raise MetricError("NaN score")
    positives = int(y.sum())
    if positives == 0:
        raise MetricError("no positive labels")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    counts = np.arange(1, s.size + 1)
    # Last index of each tie group = one emitted point per unique threshold.
    boundary = np.nonzero(np.diff(s_sorted))[0]
    idx = np.concatenate([boundary, [s.size - 1]])

    recall = np.concatenate([[0.0], tp[idx] / positives])
    precision = np.concatenate([[1.0], tp[idx] / counts[idx]])
    return float(np.trapezoid(precision, recall))


@dataclass(frozen=True)
class MetricReport:
    """Per-class prauc, rce and positive rate over one evaluation set."""

    prauc: dict[EngagementClass, float]
    rce: dict[EngagementClass, float]
    positive_rate: dict[EngagementClass, float]

    def mean_prauc(self) -> float:
        return sum(self.prauc.values()) / len(CLASSES)

    def mean_rce(self) -> float:
        return sum(self.rce.values()) / len(CLASSES)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "prauc", "rce", "positive_rate"])
        for cls in CLASSES:
            writer.writerow(
                [
                    cls.value,
                    repr(self.prauc[cls]),
                    repr(self.rce[cls]),
                    repr(self.positive_rate[cls]),
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            cls.value: {
                "prauc": self.prauc[cls],
                "rce": self.rce[cls],
                "positive_rate": self.positive_rate[cls],
            }
            for cls in CLASSES
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        doc = json.loads(text)
        return cls(
            prauc={c: float(doc[c.value]["prauc"]) for c in CLASSES},
            rce={c: float(doc[c.value]["rce"]) for c in CLASSES},
            positive_rate={c: float(doc[c.value]["positive_rate"]) for c in CLASSES},
        )


def metric_report(predictions_by_class, labels_by_class) -> MetricReport:
    """Evaluate prauc and rce for all four classes.

    Both arguments are mappings keyed by :class:`EngagementClass`; errors
    from the per-class metrics are re-raised with the class name attached.
    """
    praucs: dict[EngagementClass, float] = {}
    rces: dict[EngagementClass, float] = {}
    rates: dict[EngagementClass, float] = {}
    for cls in CLASSES:
        try:
            p, y = _as_arrays(predictions_by_class[cls], labels_by_class[cls])
            praucs[cls] = prauc(p, y)
            rces[cls] = rce(p, y)
        except MetricError as exc:
            raise MetricError(f"{cls.value}: {exc}") from exc
        rates[cls] = float(np.mean(y))
    return MetricReport(prauc=praucs, rce=rces, positive_rate=rates)


def binary_entropy(rate: float) -> float:
    """Natural-log entropy of a Bernoulli(rate); closed-form rce oracle helper."""
    if rate <= 0.0 or rate >= 1.0:
        return 0.0
    return -(rate * math.log(rate) + (1.0 - rate) * math.log(1.0 - rate))
