"""Experiment layer: dataset statistics, chunked evaluation, rank-sum
leaderboard and the constant-vs-model comparison grid."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from ctrboost import gbdt as gbdt_mod
from ctrboost.ctr import CtrTable, compute_ctr, predict_constant
from ctrboost.features import (
    DEFAULT_VOCABULARY,
    FEATURE_VERSION,
    ProfileTables,
    VocabularyConfig,
    build_profiles,
    extract_matrix,
)
from ctrboost.gbdt import GbdtModel, TrainParams
from ctrboost.ingest import (
    CLASSES,
    EngagementClass,
    FormatConfig,
    InteractionRecord,
    ParseReport,
    labels_of,
    parse_dataset,
)
from ctrboost.metrics import MetricReport, metric_report

Predictor = Callable[[Sequence[InteractionRecord]], dict[EngagementClass, np.ndarray]]


# ---------------------------------------------------------------------------
# dataset statistics


@dataclass
class StatsReport:
    """Class distribution plus the per-user interaction-count histogram."""

    n_rows: int
    positive_count: dict[EngagementClass, int]
    user_histogram: dict[int, int]  # interactions-per-user -> number of users

    def positive_rate(self, cls: EngagementClass) -> float:
        return self.positive_count[cls] / self.n_rows if self.n_rows else 0.0

    def to_class_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "positive_count", "n_rows", "positive_rate"])
        for cls in CLASSES:
            writer.writerow(
                [
                    cls.value,
                    self.positive_count[cls],
                    self.n_rows,
                    repr(self.positive_rate(cls)),
                ]
            )
        return buf.getvalue()

    def to_user_histogram_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["interactions_per_user", "n_users"])
        for count in sorted(self.user_histogram):
            writer.writerow([count, self.user_histogram[count]])
        return buf.getvalue()


def dataset_stats(records: Iterable[InteractionRecord]) -> StatsReport:
    """Single pass: per-class positives and tweets-per-engaging-user histogram."""
    positives = {cls: 0 for cls in CLASSES}
    per_user: Counter[str] = Counter()
    n_rows = 0
    for record in records:
        n_rows += 1
        per_user[record.user_id] += 1
        labels = labels_of(record)
        for cls in CLASSES:
            if labels[cls]:
                positives[cls] += 1
    histogram = Counter(per_user.values())
    return StatsReport(
        n_rows=n_rows,
        positive_count=positives,
        user_histogram=dict(histogram),
    )


# ---------------------------------------------------------------------------
# chunked evaluation


@dataclass
class ChunkEvalResult:
    reports: list[MetricReport]
    chunk_size: int

    def mean_prauc(self, cls: EngagementClass) -> float:
        return float(np.mean([r.prauc[cls] for r in self.reports]))

    def mean_rce(self, cls: EngagementClass) -> float:
        return float(np.mean([r.rce[cls] for r in self.reports]))

    def spread_prauc(self, cls: EngagementClass) -> float:
        return float(np.std([r.prauc[cls] for r in self.reports]))

    def spread_rce(self, cls: EngagementClass) -> float:
        return float(np.std([r.rce[cls] for r in self.reports]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["chunk", "class", "prauc", "rce", "positive_rate"])
        for i, report in enumerate(self.reports):
            for cls in CLASSES:
                writer.writerow(
                    [
                        i,
                        cls.value,
                        repr(report.prauc[cls]),
                        repr(report.rce[cls]),
                        repr(report.positive_rate[cls]),
                    ]
                )
        for cls in CLASSES:
            writer.writerow(
                ["mean", cls.value, repr(self.mean_prauc(cls)), repr(self.mean_rce(cls)), ""]
            )
            writer.writerow(
                ["spread", cls.value, repr(self.spread_prauc(cls)), repr(self.spread_rce(cls)), ""]
            )
        return buf.getvalue()


def _chunks(
    records: Iterable[InteractionRecord], chunk_size: int
) -> Iterator[list[InteractionRecord]]:
    chunk: list[InteractionRecord] = []
    last_ts = None
    for record in records:
        if last_ts is not None and record.tweet_timestamp < last_ts:
            raise ValueError("records not ordered by tweet_timestamp")
        last_ts = record.tweet_timestamp
        chunk.append(record)
        if len(chunk) == chunk_size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def chunk_eval(
    records: Iterable[InteractionRecord],
    chunk_size: int,
    predictor: Predictor,
) -> ChunkEvalResult:
    """Evaluate the predictor over consecutive time-ordered chunks."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    reports = []
    for chunk in _chunks(records, chunk_size):
        scores = predictor(chunk)
        labels = _label_arrays(chunk)
        for cls in CLASSES:
            if len(scores[cls]) != len(chunk):
                raise ValueError(
                    f"predictor output length mismatch for {cls.value}: "
                    f"{len(scores[cls])} != {len(chunk)}"
                )
        reports.append(metric_report(scores, labels))
    return ChunkEvalResult(reports=reports, chunk_size=chunk_size)


def _label_arrays(
    records: Sequence[InteractionRecord],
) -> dict[EngagementClass, np.ndarray]:
    matrix = np.array([labels_of(r).as_tuple() for r in records], dtype=bool)
    matrix = matrix.reshape(len(records), 4)
    return {cls: matrix[:, i] for i, cls in enumerate(CLASSES)}


def constant_predictor(table: CtrTable) -> Predictor:
    """Predictor emitting each class's training CTR for every row."""

    def predict(chunk: Sequence[InteractionRecord]):
        return predict_constant(table, len(chunk))

    return predict


def gbdt_predictor(
    models: dict[EngagementClass, GbdtModel],
    tables: ProfileTables,
    vocabulary: VocabularyConfig = DEFAULT_VOCABULARY,
) -> Predictor:
    """Predictor running the per-class ensembles over extracted features."""

    def predict(chunk: Sequence[InteractionRecord]):
        features = extract_matrix(chunk, tables, vocabulary)
        return {
            cls: gbdt_mod.predict(models[cls], features, FEATURE_VERSION)
            for cls in CLASSES
        }

    return predict


# ---------------------------------------------------------------------------
# leaderboard


@dataclass(frozen=True)
class LeaderboardEntry:
    name: str
    mean_prauc: float
    mean_rce: float
    prauc_rank: int
    rce_rank: int

    @property
    def rank_sum(self) -> int:
        return self.prauc_rank + self.rce_rank


def _competition_ranks(values: Sequence[float]) -> list[int]:
    # Descending; ties share the smallest rank, following ranks skip.
    return [1 + sum(1 for other in values if other > v) for v in values]


def leaderboard(
    submissions: Sequence[tuple[str, MetricReport]],
) -> list[LeaderboardEntry]:
    """Rank submissions by mean PRAUC and mean RCE, final order by rank sum.

    Rank-sum ties break toward the higher mean RCE, then by name.
    """
    if not submissions:
        raise ValueError("no submissions")
    praucs = [report.mean_prauc() for _, report in submissions]
    rces = [report.mean_rce() for _, report in submissions]
    prauc_ranks = _competition_ranks(praucs)
    rce_ranks = _competition_ranks(rces)
    entries = [
        LeaderboardEntry(
            name=name,
            mean_prauc=praucs[i],
            mean_rce=rces[i],
            prauc_rank=prauc_ranks[i],
            rce_rank=rce_ranks[i],
        )
        for i, (name, _) in enumerate(submissions)
    ]
    return sorted(entries, key=lambda e: (e.rank_sum, -e.mean_rce, e.name))


def leaderboard_to_csv(entries: Sequence[LeaderboardEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["position", "name", "mean_prauc", "mean_rce", "prauc_rank", "rce_rank", "rank_sum"]
    )
    for position, entry in enumerate(entries, start=1):
        writer.writerow(
            [
                position,
                entry.name,
                repr(entry.mean_prauc),
                repr(entry.mean_rce),
                entry.prauc_rank,
                entry.rce_rank,
                entry.rank_sum,
            ]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# constant-vs-model comparison


@dataclass(frozen=True)
class SplitConfig:
    """Timestamp boundaries: train < train_end <= valid < valid_end <= test.

    Within the train split, rows before history_end_ts feed only the entity
    profiles; rows at or after it become the supervised boosting rows. The
    row being trained on must never sit inside its own profile counts, or
    the sparse previous-action features degenerate into a copy of the label
    and the model memorizes it. When history_end_ts is None, run_comparison
    uses the median train timestamp.
    """

    train_end_ts: int
    valid_end_ts: int
    history_end_ts: int | None = None

    def split_of(self, record: InteractionRecord) -> str:
        if record.tweet_timestamp < self.train_end_ts:
            return "train"
        if record.tweet_timestamp < self.valid_end_ts:
            return "valid"
        return "test"


@dataclass
class ComparisonReport:
    """Two-model x two-split x four-class x two-metric grid."""

    reports: dict[str, dict[str, MetricReport]]  # model -> split -> report
    ctr_table: CtrTable
    models: dict[EngagementClass, GbdtModel] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "split", "class", "prauc", "rce", "positive_rate"])
        for model_name in sorted(self.reports):
            for split_name in sorted(self.reports[model_name]):
                report = self.reports[model_name][split_name]
                for cls in CLASSES:
                    writer.writerow(
                        [
                            model_name,
                            split_name,
                            cls.value,
                            repr(report.prauc[cls]),
                            repr(report.rce[cls]),
                            repr(report.positive_rate[cls]),
                        ]
                    )
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            model: {split: json.loads(report.to_json()) for split, report in splits.items()}
            for model, splits in self.reports.items()
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def run_comparison(
    dataset_path,
    split: SplitConfig,
    params: TrainParams = TrainParams(),
    format_config: FormatConfig = FormatConfig(),
    vocabulary: VocabularyConfig = DEFAULT_VOCABULARY,
) -> ComparisonReport:
    """Train both models on the train split and evaluate on valid and test.

    Two streaming passes over the dataset file: the first builds the CTR
    table over the whole train split and the entity profiles over its
    history window, the second extracts features and labels per split.
    Supervised boosting rows start at split.history_end_ts so that no row
    contributes to the profiles it is featurized against.
    """

    def stream():
        with open(dataset_path, "rb") as fh:
            yield from parse_dataset(fh, format_config, ParseReport())

    history_end = split.history_end_ts
    if history_end is None:
        train_ts = [
            r.tweet_timestamp for r in stream() if split.split_of(r) == "train"
        ]
        if not train_ts:
            raise ValueError("empty train split")
        history_end = int(np.median(train_ts))

    counts = {cls: 0 for cls in CLASSES}
    n_train = 0

    def first_pass():
        nonlocal n_train
        for record in stream():
            if split.split_of(record) != "train":
                continue
            n_train += 1
            row_labels = labels_of(record)
            for cls in CLASSES:
                if row_labels[cls]:
                    counts[cls] += 1
            if record.tweet_timestamp < history_end:
                yield record

    tables = build_profiles(first_pass())
    if n_train == 0:
        raise ValueError("empty train split")
    ctr_table = CtrTable(positive_count=counts, n_rows=n_train)

    features: dict[str, list] = {"train": [], "valid": [], "test": []}
    labels: dict[str, list] = {"train": [], "valid": [], "test": []}
    from ctrboost.features import extract_features  # local alias for the hot loop

    for record in stream():
        name = split.split_of(record)
        if name == "train" and record.tweet_timestamp < history_end:
            continue  # profile history only, never a supervised row
        features[name].append(extract_features(record, tables, vocabulary))
        labels[name].append(labels_of(record).as_tuple())
    if not features["train"]:
        raise ValueError("empty supervised train window")

    matrices = {
        name: np.vstack(rows) if rows else np.empty((0, 59)) for name, rows in features.items()
    }
    label_arrays = {
        name: {
            cls: np.array([row[i] for row in rows], dtype=bool)
            for i, cls in enumerate(CLASSES)
        }
        for name, rows in labels.items()
    }

    models: dict[EngagementClass, GbdtModel] = {}
    for cls in CLASSES:
        models[cls] = gbdt_mod.train(
            matrices["train"],
            label_arrays["train"][cls],
            matrices["valid"],
            label_arrays["valid"][cls],
            params,
            class_label=cls.value,
        )

    reports: dict[str, dict[str, MetricReport]] = {"ctr": {}, "gbdt": {}}
    for split_name in ("valid", "test"):
        n = matrices[split_name].shape[0]
        if n == 0:
            continue
        reports["ctr"][split_name] = metric_report(
            predict_constant(ctr_table, n), label_arrays[split_name]
        )
        reports["gbdt"][split_name] = metric_report(
            {
                cls: gbdt_mod.predict(models[cls], matrices[split_name], FEATURE_VERSION)
                for cls in CLASSES
            },
            label_arrays[split_name],
        )
    return ComparisonReport(reports=reports, ctr_table=ctr_table, models=models)
