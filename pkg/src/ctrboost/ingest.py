"""Streaming parser for delimited interaction logs.

The canonical file format is UTF-8 lines with 24 columns separated by byte
0x01; list-valued columns use 0x09 between elements. Optional columns encode
absence as the empty string. Media/link/domain presence lists are reduced to
counts at parse time since only the counts feed the feature set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterable, Iterator


class DataError(Exception):
    """Unrecoverable data problem (bad stream, contract violation)."""


class EngagementClass(Enum):
    """The four engagement types, in canonical iteration order."""

    LIKE = "like"
    REPLY = "reply"
    RETWEET = "retweet"
    RWC = "rwc"


CLASSES = tuple(EngagementClass)

TWEET_TYPES = ("ORIGINAL", "RETWEET", "QUOTE", "TOPLEVEL")

#: Column order of the canonical dataset file.
COLUMNS = (
    "text_token_ids",
    "hashtag_ids",
    "tweet_id",
    "present_media",
    "present_links",
    "present_domains",
    "tweet_type",
    "language_id",
    "tweet_timestamp",
    "author_id",
    "author_follower_count",
    "author_following_count",
    "author_verified",
    "author_account_creation",
    "user_id",
    "user_follower_count",
    "user_following_count",
    "user_verified",
    "user_account_creation",
    "engagee_follows_engager",
    "reply_timestamp",
    "retweet_timestamp",
    "retweet_with_comment_timestamp",
    "like_timestamp",
)


@dataclass(frozen=True)
class FormatConfig:
    """Wire format knobs: delimiters are configurable, column order fixed."""

    field_delimiter: bytes = b"\x01"
    list_delimiter: bytes = b"\x09"
    encoding: str = "utf-8"


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    """One tweet-user pair with content, author, engager and label metadata."""

    text_token_ids: tuple[int, ...]
    hashtag_ids: tuple[str, ...]
    tweet_id: str
    media_count: int
    link_count: int
    domain_count: int
    tweet_type: str
    language_id: str
    tweet_timestamp: int
    author_id: str
    author_follower_count: int
    author_following_count: int
    author_verified: bool
    author_account_creation: int
    user_id: str
    user_follower_count: int
    user_following_count: int
    user_verified: bool
    user_account_creation: int
    engagee_follows_engager: bool
    reply_ts: int | None = None
    retweet_ts: int | None = None
    rwc_ts: int | None = None
    like_ts: int | None = None


@dataclass(frozen=True)
class LabelVector:
    """Per-class positivity flags; true iff the timestamp is present."""

    like: bool
    reply: bool
    retweet: bool
    rwc: bool

    def __getitem__(self, cls: EngagementClass) -> bool:
        return getattr(self, cls.value)

    def as_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.like, self.reply, self.retweet, self.rwc)


@dataclass
class ParseReport:
    """Line accounting for one parse pass; accepted + rejected == total."""

    total: int = 0
    accepted: int = 0
    rejected: int = 0
    rejection_reasons: list[str] = field(default_factory=list)

    MAX_REASONS = 10

    def reject(self, line_no: int, reason: str) -> None:
        self.rejected += 1
        if len(self.rejection_reasons) < self.MAX_REASONS:
            self.rejection_reasons.append(f"line {line_no}: {reason}")


def labels_of(record: InteractionRecord) -> LabelVector:
    """Derive the four engagement labels from timestamp presence."""
    return LabelVector(
        like=record.like_ts is not None,
        reply=record.reply_ts is not None,
        retweet=record.retweet_ts is not None,
        rwc=record.rwc_ts is not None,
    )


def _non_negative_int(text: str, name: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ValueError(f"non-numeric {name}: {text!r}") from None
    if value < 0:
        raise ValueError(f"negative {name}: {value}")
    return value


def _boolean(text: str, name: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"bad boolean {name}: {text!r}")


def _optional_ts(text: str, name: str) -> int | None:
    if text == "":
        return None
    value = _non_negative_int(text, name)
    if value == 0:
        raise ValueError(f"non-positive timestamp {name}")
    return value


def _parse_line(fields: list[str], list_delim: str) -> InteractionRecord:
    if len(fields) != len(COLUMNS):
        raise ValueError(f"expected {len(COLUMNS)} columns, got {len(fields)}")

    def list_len(text: str) -> int:
        return 0 if text == "" else len(text.split(list_delim))

    tokens_text = fields[0]
    if tokens_text == "":
        token_ids: tuple[int, ...] = ()
    else:
        try:
            token_ids = tuple(int(t) for t in tokens_text.split(list_delim))
        except ValueError:
            raise ValueError("non-numeric token id") from None
    hashtags = () if fields[1] == "" else tuple(fields[1].split(list_delim))

    tweet_type = fields[6]
    if tweet_type not in TWEET_TYPES:
        raise ValueError(f"unknown tweet_type {tweet_type!r}")
    author_id = fields[9]
    user_id = fields[14]
    if author_id == "" or user_id == "":
        raise ValueError("empty author or user id")

    ts = _non_negative_int(fields[8], "tweet_timestamp")
    if ts == 0:
        raise ValueError("non-positive tweet_timestamp")

    return InteractionRecord(
        text_token_ids=token_ids,
        hashtag_ids=hashtags,
        tweet_id=fields[2],
        media_count=list_len(fields[3]),
        link_count=list_len(fields[4]),
        domain_count=list_len(fields[5]),
        tweet_type=tweet_type,
        language_id=fields[7],
        tweet_timestamp=ts,
        author_id=author_id,
        author_follower_count=_non_negative_int(fields[10], "author_follower_count"),
        author_following_count=_non_negative_int(fields[11], "author_following_count"),
        author_verified=_boolean(fields[12], "author_verified"),
        author_account_creation=_non_negative_int(fields[13], "author_account_creation"),
        user_id=user_id,
        user_follower_count=_non_negative_int(fields[15], "user_follower_count"),
        user_following_count=_non_negative_int(fields[16], "user_following_count"),
        user_verified=_boolean(fields[17], "user_verified"),
        user_account_creation=_non_negative_int(fields[18], "user_account_creation"),
        engagee_follows_engager=_boolean(fields[19], "engagee_follows_engager"),
        reply_ts=_optional_ts(fields[20], "reply_timestamp"),
        retweet_ts=_optional_ts(fields[21], "retweet_timestamp"),
        rwc_ts=_optional_ts(fields[22], "retweet_with_comment_timestamp"),
        like_ts=_optional_ts(fields[23], "like_timestamp"),
    )


def parse_dataset(
    stream: BinaryIO | Iterable[bytes],
    config: FormatConfig = FormatConfig(),
    report: ParseReport | None = None,
) -> Iterator[InteractionRecord]:
    """Stream-parse a delimited log into validated records.

    Yields records lazily in file order while updating ``report`` (pass one
    in to inspect counts after consumption). Malformed lines are counted and
    skipped, never fatal; stream-level read failures raise
    :class:`DataError`.
    """
    if report is None:
        report = ParseReport()
    field_delim = config.field_delimiter.decode(config.encoding)
    list_delim = config.list_delimiter.decode(config.encoding)
    try:
        for line_no, raw in enumerate(stream, start=1):
            report.total += 1
            try:
                text = raw.decode(config.encoding).rstrip("\r\n")
                record = _parse_line(text.split(field_delim), list_delim)
            except (ValueError, UnicodeDecodeError) as exc:
                report.reject(line_no, str(exc))
                continue
            report.accepted += 1
            yield record
    except OSError as exc:
        raise DataError(f"unreadable stream: {exc}") from exc


def parse_file(
    path, config: FormatConfig = FormatConfig()
) -> tuple[list[InteractionRecord], ParseReport]:
    """Eagerly parse a dataset file; convenience wrapper for small inputs."""
    report = ParseReport()
    with open(path, "rb") as fh:
        records = list(parse_dataset(fh, config, report))
    return records, report


def serialize_record(
    record: InteractionRecord, config: FormatConfig = FormatConfig()
) -> bytes:
    """Encode a record as one canonical-format line (without newline).

    Media/link/domain identifiers are not retained after parsing, so
    placeholder identifiers are emitted to preserve the counts.
    """
    list_delim = config.list_delimiter.decode(config.encoding)

    def placeholder_list(prefix: str, count: int) -> str:
        return list_delim.join(f"{prefix}{i}" for i in range(count))

    def opt(ts: int | None) -> str:
        return "" if ts is None else str(ts)

    def boolean(value: bool) -> str:
        return "true" if value else "false"

    fields = [
        list_delim.join(str(t) for t in record.text_token_ids),
        list_delim.join(record.hashtag_ids),
        record.tweet_id,
        placeholder_list("m", record.media_count),
        placeholder_list("l", record.link_count),
        placeholder_list("d", record.domain_count),
        record.tweet_type,
        record.language_id,
        str(record.tweet_timestamp),
        record.author_id,
        str(record.author_follower_count),
        str(record.author_following_count),
        boolean(record.author_verified),
        str(record.author_account_creation),
        record.user_id,
        str(record.user_follower_count),
        str(record.user_following_count),
        boolean(record.user_verified),
        str(record.user_account_creation),
        boolean(record.engagee_follows_engager),
        opt(record.reply_ts),
        opt(record.retweet_ts),
        opt(record.rwc_ts),
        opt(record.like_ts),
    ]
    field_delim = config.field_delimiter.decode(config.encoding)
    return field_delim.join(fields).encode(config.encoding)
