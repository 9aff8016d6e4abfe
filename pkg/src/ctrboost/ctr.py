"""Per-class CTR constants and the constant-tuning experiment.

The CTR of class c is positives_c / n_rows over a training pass, and doubles
as the best constant predictor under RCE. ``tune_constants`` scores a list of
candidate constants (plus a per-row uniform "random" baseline) on a held-out
split, reproducing the constant-comparison experiment shape.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ctrboost.ingest import CLASSES, EngagementClass, InteractionRecord, labels_of
from ctrboost.metrics import MetricError, prauc, rce


@dataclass(frozen=True)
class CtrTable:
    """Per-class positive counts and rates over one dataset pass."""

    positive_count: dict[EngagementClass, int]
    n_rows: int

    def ctr(self, cls: EngagementClass) -> float:
        return self.positive_count[cls] / self.n_rows

    def merge(self, other: "CtrTable") -> "CtrTable":
        return CtrTable(
            positive_count={
                cls: self.positive_count[cls] + other.positive_count[cls]
                for cls in CLASSES
            },
            n_rows=self.n_rows + other.n_rows,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "positive_count", "n_rows", "ctr"])
        for cls in CLASSES:
            writer.writerow(
                [cls.value, self.positive_count[cls], self.n_rows, repr(self.ctr(cls))]
            )
        return buf.getvalue()


def compute_ctr(records: Iterable[InteractionRecord]) -> CtrTable:
    """Single streaming pass counting per-class positives; errors on empty input."""
    counts = {cls: 0 for cls in CLASSES}
    n_rows = 0
    for record in records:
        n_rows += 1
        labels = labels_of(record)
        for cls in CLASSES:
            if labels[cls]:
                counts[cls] += 1
    if n_rows == 0:
        raise MetricError("empty input: ctr undefined")
    return CtrTable(positive_count=counts, n_rows=n_rows)


def predict_constant(table: CtrTable, n: int) -> dict[EngagementClass, np.ndarray]:
    """Length-n constant prediction vector per class, filled with its ctr."""
    return {cls: np.full(n, table.ctr(cls)) for cls in CLASSES}


@dataclass(frozen=True)
class TuningRow:
    """One candidate's per-class rce and prauc."""

    candidate: str
    rce: dict[EngagementClass, float]
    prauc: dict[EngagementClass, float]


def tuning_rows_to_csv(rows: Sequence[TuningRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["candidate"]
    header += [f"rce_{cls.value}" for cls in CLASSES]
    header += [f"prauc_{cls.value}" for cls in CLASSES]
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [row.candidate]
            + [repr(row.rce[cls]) for cls in CLASSES]
            + [repr(row.prauc[cls]) for cls in CLASSES]
        )
    return buf.getvalue()


def collect_labels(
    records: Iterable[InteractionRecord],
) -> dict[EngagementClass, np.ndarray]:
    """Materialize per-class boolean label arrays from a record stream."""
    columns: list[tuple[bool, bool, bool, bool]] = [
        labels_of(r).as_tuple() for r in records
    ]
    matrix = np.array(columns, dtype=bool).reshape(len(columns), 4)
    return {cls: matrix[:, i] for i, cls in enumerate(CLASSES)}


def tune_constants(
    train_records: Iterable[InteractionRecord],
    eval_records: Iterable[InteractionRecord],
    candidates: Sequence[str],
    seed: int | None = None,
) -> list[TuningRow]:
    """Score candidate constants on the eval split.

    Candidates are "ctr" (per-class rates computed on the train split),
    "random" (per-row uniform(0,1) scores, seeded) or a literal constant
    in [0, 1] given as a decimal string.
    """
    if not candidates:
        raise ValueError("no candidates")
    labels = collect_labels(eval_records)
    n = labels[EngagementClass.LIKE].size
    if n == 0:
        raise MetricError("empty eval split")

    table: CtrTable | None = None
    rng = None
    rows: list[TuningRow] = []
    for candidate in candidates:
        name = candidate.strip().lower()
        if name == "ctr":
            if table is None:
                table = compute_ctr(train_records)
            scores = predict_constant(table, n)
        elif name == "random":
            if seed is None:
                raise ValueError("random candidate requires a seed")
            if rng is None:
                rng = np.random.default_rng(seed)
            scores = {cls: rng.uniform(0.0, 1.0, n) for cls in CLASSES}
        else:
            value = float(name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"constant out of [0,1]: {candidate}")
            scores = {cls: np.full(n, value) for cls in CLASSES}
        rows.append(
            TuningRow(
                candidate=name,
                rce={cls: rce(scores[cls], labels[cls]) for cls in CLASSES},
                prauc={cls: prauc(scores[cls], labels[cls]) for cls in CLASSES},
            )
        )
    return rows
