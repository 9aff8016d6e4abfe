"""Precomputed entity profiles and the 59-feature extraction scheme.

One streaming pass over the training history builds four lookup structures:
author profiles, engaging-user profiles, a (user, language) engagement count
table and a (user, author, class) prior-action table. Extraction then maps a
record plus those tables to a fixed-order vector of 59 numeric features.

Feature order (this list is the versioned contract; see FEATURE_NAMES):
  dataset (12)  ++ author profile (18) ++ user profile (18)
  ++ languages_spoken (1) ++ previous_actions (4) ++ word_search (6)
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ctrboost.ingest import CLASSES, EngagementClass, InteractionRecord, labels_of

CALL_TO_ACTION_WORDS = ("share", "retweet", "reply", "comment")

_PROFILE_SUFFIXES = (
    [f"received_{c.value}" for c in CLASSES]
    + [f"ratio_{c.value}" for c in CLASSES]
    + [f"distinct_{c.value}" for c in CLASSES]
    + ["rows", "total", "overall_ratio", "mean_tokens", "mean_hashtags", "media_frac"]
)

FEATURE_NAMES: tuple[str, ...] = tuple(
    [
        "hashtag_count",
        "media_count",
        "link_count",
        "domain_count",
        "token_count",
        "tweet_type_code",
        "language_code",
        "author_follower_count",
        "author_following_count",
        "author_verified",
        "user_follower_count",
        "engagee_follows_engager",
    ]
    + [f"author_{s}" for s in _PROFILE_SUFFIXES]
    + [f"user_{s}" for s in _PROFILE_SUFFIXES]
    + ["languages_spoken"]
    + [f"prior_{c.value}" for c in CLASSES]
    + [f"has_{w}" for w in CALL_TO_ACTION_WORDS]
    + ["cta_word_count", "cta_any"]
)

assert len(FEATURE_NAMES) == 59

#: Version stamp tying feature matrices and models to this exact ordering.
FEATURE_VERSION = "fv1-" + hashlib.sha1(",".join(FEATURE_NAMES).encode()).hexdigest()[:8]


@dataclass(frozen=True)
class VocabularyConfig:
    """Token-id sets for the four call-to-action words."""

    word_tokens: Mapping[str, frozenset[int]]

    def __post_init__(self):
        missing = [w for w in CALL_TO_ACTION_WORDS if w not in self.word_tokens]
        if missing:
            raise ValueError(f"vocabulary missing words: {missing}")

    def to_json(self) -> str:
        return json.dumps(
            {w: sorted(self.word_tokens[w]) for w in CALL_TO_ACTION_WORDS},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "VocabularyConfig":
        doc = json.loads(text)
        return cls({w: frozenset(ids) for w, ids in doc.items()})


#: Token ids the synthetic generator uses for the call-to-action words.
DEFAULT_VOCABULARY = VocabularyConfig(
    {
        "share": frozenset({1}),
        "retweet": frozenset({2}),
        "reply": frozenset({3}),
        "comment": frozenset({4}),
    }
)


@dataclass
class EntityProfile:
    """Aggregates for one author (received side) or one user (performed side).

    ``rows`` counts every appearance of the entity in its role, so the
    per-class counts are bounded by it and every ratio lands in [0, 1].
    ``distinct`` holds the counterparty-id sets during building; after a
    load from disk only the set sizes survive (in ``distinct_counts``) and
    the profile is read-only for extraction.
    """

    counts: dict[EngagementClass, int] = field(
        default_factory=lambda: {c: 0 for c in CLASSES}
    )
    distinct: dict[EngagementClass, set[str]] | None = field(
        default_factory=lambda: {c: set() for c in CLASSES}
    )
    distinct_counts: dict[EngagementClass, int] | None = None
    rows: int = 0
    token_sum: int = 0
    hashtag_sum: int = 0
    media_rows: int = 0

    def total(self) -> int:
        return sum(self.counts.values())

    def n_distinct(self, cls: EngagementClass) -> int:
        if self.distinct is not None:
            return len(self.distinct[cls])
        return self.distinct_counts[cls]

    def merge(self, other: "EntityProfile") -> "EntityProfile":
        if self.distinct is None or other.distinct is None:
            raise ValueError("cannot merge profiles loaded without id sets")
        return EntityProfile(
            counts={c: self.counts[c] + other.counts[c] for c in CLASSES},
            distinct={c: self.distinct[c] | other.distinct[c] for c in CLASSES},
            rows=self.rows + other.rows,
            token_sum=self.token_sum + other.token_sum,
            hashtag_sum=self.hashtag_sum + other.hashtag_sum,
            media_rows=self.media_rows + other.media_rows,
        )

    def feature_block(self) -> list[float]:
        """The 18 profile-derived features, zeros for an empty profile."""
        rows = self.rows
        out = [float(self.counts[c]) for c in CLASSES]
        out += [engagement_ratio(self, c) for c in CLASSES]
        out += [float(self.n_distinct(c)) for c in CLASSES]
        out.append(float(rows))
        out.append(float(self.total()))
        if rows == 0:
            out += [0.0, 0.0, 0.0, 0.0]
        else:
            out += [
                self.total() / (len(CLASSES) * rows),
                self.token_sum / rows,
                self.hashtag_sum / rows,
                self.media_rows / rows,
            ]
        return out


_EMPTY_PROFILE = EntityProfile()


def engagement_ratio(profile: EntityProfile, cls: EngagementClass) -> float:
    """Class-c engagements over entity row count; 0 for an empty profile."""
    if profile.rows == 0:
        return 0.0
    return profile.counts[cls] / profile.rows


def word_search(
    text_token_ids: Sequence[int], vocabulary: VocabularyConfig
) -> list[float]:
    """Per-word presence flags + matched-word count + any-match flag (6 values)."""
    tokens = set(text_token_ids)
    flags = [
        1.0 if tokens & vocabulary.word_tokens[w] else 0.0
        for w in CALL_TO_ACTION_WORDS
    ]
    matched = sum(flags)
    return flags + [matched, 1.0 if matched else 0.0]


@dataclass
class ProfileTables:
    """The four lookup structures plus the categorical code books."""

    authors: dict[str, EntityProfile] = field(default_factory=dict)
    users: dict[str, EntityProfile] = field(default_factory=dict)
    languages: dict[tuple[str, str], int] = field(default_factory=dict)
    prior_actions: dict[tuple[str, str, EngagementClass], int] = field(
        default_factory=dict
    )
    tweet_type_codes: dict[str, int] = field(default_factory=dict)
    language_codes: dict[str, int] = field(default_factory=dict)

    def merge(self, other: "ProfileTables") -> "ProfileTables":
        """Associative, commutative-in-content merge of two partial builds.

        Categorical code books are first-seen ordered, so merged codes follow
        the left operand's order; numeric tables merge exactly.
        """
        merged = ProfileTables(
            tweet_type_codes=dict(self.tweet_type_codes),
            language_codes=dict(self.language_codes),
        )
        for key, profile in self.authors.items():
            merged.authors[key] = profile
        for key, profile in other.authors.items():
            merged.authors[key] = (
                merged.authors[key].merge(profile) if key in merged.authors else profile
            )
        for key, profile in self.users.items():
            merged.users[key] = profile
        for key, profile in other.users.items():
            merged.users[key] = (
                merged.users[key].merge(profile) if key in merged.users else profile
            )
        for table_name in ("languages", "prior_actions"):
            mine = dict(getattr(self, table_name))
            for key, count in getattr(other, table_name).items():
                mine[key] = mine.get(key, 0) + count
            setattr(merged, table_name, mine)
        for code_book, source in (
            (merged.tweet_type_codes, other.tweet_type_codes),
            (merged.language_codes, other.language_codes),
        ):
            for key in source:
                if key not in code_book:
                    code_book[key] = len(code_book)
        return merged

    def tweet_type_code(self, tweet_type: str) -> int:
        return self.tweet_type_codes.get(tweet_type, -1)

    def language_code(self, language_id: str) -> int:
        return self.language_codes.get(language_id, -1)


def build_profiles(records: Iterable[InteractionRecord]) -> ProfileTables:
    """Single-pass construction of all lookup tables.

    Every row updates the row-level aggregates of its author and user;
    only rows positive for class c touch the class-c counters, the
    (user, language) table and the (user, author, c) prior-action table.
    """
    tables = ProfileTables()
    authors = tables.authors
    users = tables.users
    for record in records:
        if record.tweet_type not in tables.tweet_type_codes:
            tables.tweet_type_codes[record.tweet_type] = len(tables.tweet_type_codes)
        if record.language_id not in tables.language_codes:
            tables.language_codes[record.language_id] = len(tables.language_codes)

        author = authors.get(record.author_id)
        if author is None:
            author = authors[record.author_id] = EntityProfile()
        user = users.get(record.user_id)
        if user is None:
            user = users[record.user_id] = EntityProfile()

        n_tokens = len(record.text_token_ids)
        n_hashtags = len(record.hashtag_ids)
        has_media = 1 if record.media_count > 0 else 0
        for profile in (author, user):
            profile.rows += 1
            profile.token_sum += n_tokens
            profile.hashtag_sum += n_hashtags
            profile.media_rows += has_media

        labels = labels_of(record)
        any_positive = False
        for cls in CLASSES:
            if not labels[cls]:
                continue
            any_positive = True
            author.counts[cls] += 1
            author.distinct[cls].add(record.user_id)
            user.counts[cls] += 1
            user.distinct[cls].add(record.author_id)
            pa_key = (record.user_id, record.author_id, cls)
            tables.prior_actions[pa_key] = tables.prior_actions.get(pa_key, 0) + 1
        if any_positive:
            lang_key = (record.user_id, record.language_id)
            tables.languages[lang_key] = tables.languages.get(lang_key, 0) + 1
    return tables


def extract_features(
    record: InteractionRecord,
    tables: ProfileTables,
    vocabulary: VocabularyConfig = DEFAULT_VOCABULARY,
) -> np.ndarray:
    """Map one record to the 59-feature vector; unknown entities yield zeros."""
    author = tables.authors.get(record.author_id, _EMPTY_PROFILE)
    user = tables.users.get(record.user_id, _EMPTY_PROFILE)
    values = [
        float(len(record.hashtag_ids)),
        float(record.media_count),
        float(record.link_count),
        float(record.domain_count),
        float(len(record.text_token_ids)),
        float(tables.tweet_type_code(record.tweet_type)),
        float(tables.language_code(record.language_id)),
        float(record.author_follower_count),
        float(record.author_following_count),
        1.0 if record.author_verified else 0.0,
        float(record.user_follower_count),
        1.0 if record.engagee_follows_engager else 0.0,
    ]
    values += author.feature_block()
    values += user.feature_block()
    values.append(float(tables.languages.get((record.user_id, record.language_id), 0)))
    values += [
        float(tables.prior_actions.get((record.user_id, record.author_id, cls), 0))
        for cls in CLASSES
    ]
    values += word_search(record.text_token_ids, vocabulary)
    return np.array(values, dtype=np.float64)


def extract_matrix(
    records: Iterable[InteractionRecord],
    tables: ProfileTables,
    vocabulary: VocabularyConfig = DEFAULT_VOCABULARY,
) -> np.ndarray:
    """Stack feature vectors for a record stream into an (n, 59) matrix."""
    rows = [extract_features(r, tables, vocabulary) for r in records]
    if not rows:
        return np.empty((0, len(FEATURE_NAMES)))
    return np.vstack(rows)


def save_tables(tables: ProfileTables, directory) -> None:
    """Persist the lookup tables as sorted CSVs plus a code-book JSON.

    Distinct counterparty sets are stored as their sizes only; reloaded
    tables support extraction but not further merging.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def write_profiles(name: str, profiles: dict[str, EntityProfile]) -> None:
        with open(directory / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["entity_id", "rows", "token_sum", "hashtag_sum", "media_rows"]
                + [f"count_{c.value}" for c in CLASSES]
                + [f"distinct_{c.value}" for c in CLASSES]
            )
            for entity_id in sorted(profiles):
                p = profiles[entity_id]
                writer.writerow(
                    [entity_id, p.rows, p.token_sum, p.hashtag_sum, p.media_rows]
                    + [p.counts[c] for c in CLASSES]
                    + [p.n_distinct(c) for c in CLASSES]
                )

    write_profiles("authors.csv", tables.authors)
    write_profiles("users.csv", tables.users)

    with open(directory / "languages.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "language_id", "count"])
        for (user_id, language_id), count in sorted(tables.languages.items()):
            writer.writerow([user_id, language_id, count])

    with open(directory / "prior_actions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "author_id", "class", "count"])
        for (user_id, author_id, cls), count in sorted(
            tables.prior_actions.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].value)
        ):
            writer.writerow([user_id, author_id, cls.value, count])

    with open(directory / "codes.json", "w") as fh:
        json.dump(
            {
                "feature_version": FEATURE_VERSION,
                "tweet_type_codes": tables.tweet_type_codes,
                "language_codes": tables.language_codes,
            },
            fh,
            indent=2,
            sort_keys=True,
        )


def load_tables(directory) -> ProfileTables:
    """Load persisted lookup tables (read-only; see :func:`save_tables`)."""
    directory = Path(directory)
    tables = ProfileTables()

    def read_profiles(name: str) -> dict[str, EntityProfile]:
        profiles: dict[str, EntityProfile] = {}
        with open(directory / name, newline="") as fh:
            for row in csv.DictReader(fh):
                profiles[row["entity_id"]] = EntityProfile(
                    counts={c: int(row[f"count_{c.value}"]) for c in CLASSES},
                    distinct=None,
                    distinct_counts={
                        c: int(row[f"distinct_{c.value}"]) for c in CLASSES
                    },
                    rows=int(row["rows"]),
                    token_sum=int(row["token_sum"]),
                    hashtag_sum=int(row["hashtag_sum"]),
                    media_rows=int(row["media_rows"]),
                )
        return profiles

    tables.authors = read_profiles("authors.csv")
    tables.users = read_profiles("users.csv")

    with open(directory / "languages.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            tables.languages[(row["user_id"], row["language_id"])] = int(row["count"])

    by_value = {c.value: c for c in CLASSES}
    with open(directory / "prior_actions.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["user_id"], row["author_id"], by_value[row["class"]])
            tables.prior_actions[key] = int(row["count"])

    with open(directory / "codes.json") as fh:
        codes = json.load(fh)
    if codes["feature_version"] != FEATURE_VERSION:
        raise ValueError(
            f"feature version mismatch: {codes['feature_version']} != {FEATURE_VERSION}"
        )
    tables.tweet_type_codes = codes["tweet_type_codes"]
    tables.language_codes = codes["language_codes"]
    return tables


def save_matrix(matrix: np.ndarray, path) -> None:
    """Headerless CSV matrix with a sidecar header file naming the columns."""
    path = Path(path)
    np.savetxt(path, matrix, delimiter=",", fmt="%.17g")
    sidecar = path.with_suffix(path.suffix + ".header")
    sidecar.write_text(
        "\n".join([f"# version: {FEATURE_VERSION}", *FEATURE_NAMES]) + "\n"
    )
