"""Synthetic interaction-log generator standing in for the private dataset.

Rows draw an author and an engaging user from fixed populations with
log-normal engagement propensities, so entity histories carry real signal.
Each class label is an independent Bernoulli with probability
rate_c * author_propensity * user_propensity (clamped to [0, 1]); rows in
the optional second week multiply in a per-class drift factor. Output is
byte-deterministic per seed and time-ordered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ctrboost.features import DEFAULT_VOCABULARY, CALL_TO_ACTION_WORDS
from ctrboost.ingest import CLASSES, TWEET_TYPES, EngagementClass, FormatConfig

WEEK_SECONDS = 7 * 86400
DEFAULT_START_TS = 1_580_947_200  # 2020-02-06, start of the first week

#: Class positive rates used as generator defaults.
DEFAULT_RATES = {
    EngagementClass.LIKE: 0.428,
    EngagementClass.REPLY: 0.025,
    EngagementClass.RETWEET: 0.108,
    EngagementClass.RWC: 0.007,
}


@dataclass(frozen=True)
class GenConfig:
    rows: int = 100_000
    rates: dict[EngagementClass, float] = field(
        default_factory=lambda: dict(DEFAULT_RATES)
    )
    n_authors: int = 5_000
    n_users: int = 20_000
    propensity_sigma: float = 0.5
    n_languages: int = 12
    language_skew: float = 1.5
    week2_fraction: float = 0.0
    drift: dict[EngagementClass, float] = field(
        default_factory=lambda: {c: 1.0 for c in CLASSES}
    )
    cta_rate: float = 0.05
    start_ts: int = DEFAULT_START_TS
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1:
            raise ValueError("rows must be >= 1")
        if self.n_authors < 1 or self.n_users < 1:
            raise ValueError("populations must be >= 1")
        for cls, rate in self.rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate out of [0,1] for {cls.value}: {rate}")
        if not 0.0 <= self.week2_fraction <= 1.0:
            raise ValueError("week2_fraction must be in [0,1]")

    @property
    def week2_start_ts(self) -> int:
        return self.start_ts + WEEK_SECONDS

    def digest_source(self) -> str:
        doc = {
            "rows": self.rows,
            "rates": {c.value: self.rates[c] for c in CLASSES},
            "n_authors": self.n_authors,
            "n_users": self.n_users,
            "propensity_sigma": self.propensity_sigma,
            "n_languages": self.n_languages,
            "language_skew": self.language_skew,
            "week2_fraction": self.week2_fraction,
            "drift": {c.value: self.drift[c] for c in CLASSES},
            "cta_rate": self.cta_rate,
            "start_ts": self.start_ts,
            "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True)


def _propensities(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    # Log-normal normalized to unit mean so rates stay on target.
    raw = rng.lognormal(mean=0.0, sigma=sigma, size=n)
    return raw / np.exp(0.5 * sigma * sigma)


def _calibrated_probs(rate: float, mixture: np.ndarray) -> np.ndarray:
    """Per-row probabilities proportional to the propensity mixture.

    Clipping at 1 would drag the mean below the target rate, so the scale is
    solved iteratively until the clipped mean hits the configured rate.
    """
    if rate <= 0.0:
        return np.zeros(mixture.size)
    scale = rate
    prob = np.clip(scale * mixture, 0.0, 1.0)
    for _ in range(20):
        mean = prob.mean()
        if abs(mean - rate) < 1e-12:
            break
        scale *= rate / mean
        prob = np.clip(scale * mixture, 0.0, 1.0)
    return prob


def generate(config: GenConfig, out_path, format_config: FormatConfig = FormatConfig()):
    """Write a canonical-format dataset file; returns the output path."""
    rng = np.random.default_rng(config.seed)
    n = config.rows

    author_prop = _propensities(rng, config.n_authors, config.propensity_sigma)
    user_prop = _propensities(rng, config.n_users, config.propensity_sigma)
    author_followers = np.floor(rng.lognormal(5.0, 1.5, config.n_authors)).astype(int)
    author_following = np.floor(rng.lognormal(4.5, 1.0, config.n_authors)).astype(int)
    author_verified = rng.random(config.n_authors) < 0.05
    author_created = rng.integers(1_200_000_000, config.start_ts, config.n_authors)
    user_followers = np.floor(rng.lognormal(4.0, 1.2, config.n_users)).astype(int)
    user_following = np.floor(rng.lognormal(4.5, 1.0, config.n_users)).astype(int)
    user_verified = rng.random(config.n_users) < 0.02
    user_created = rng.integers(1_200_000_000, config.start_ts, config.n_users)

    lang_weights = 1.0 / np.arange(1, config.n_languages + 1) ** config.language_skew
    lang_weights /= lang_weights.sum()

    authors = rng.integers(0, config.n_authors, n)
    users = rng.integers(0, config.n_users, n)
    languages = rng.choice(config.n_languages, size=n, p=lang_weights)
    tweet_types = rng.choice(len(TWEET_TYPES), size=n, p=[0.5, 0.2, 0.15, 0.15])
    follows = rng.random(n) < 0.4

    n_week2 = int(round(n * config.week2_fraction))
    n_week1 = n - n_week2
    ts = np.empty(n, dtype=np.int64)
    if n_week1:
        ts[:n_week1] = config.start_ts + (
            np.arange(n_week1) * WEEK_SECONDS // max(n_week1, 1)
        )
    if n_week2:
        ts[n_week1:] = config.week2_start_ts + (
            np.arange(n_week2) * WEEK_SECONDS // max(n_week2, 1)
        )
    is_week2 = np.arange(n) >= n_week1

    labels = {}
    mixture = author_prop[authors] * user_prop[users]
    for cls in CLASSES:
        prob = _calibrated_probs(config.rates[cls], mixture)
        prob = np.where(is_week2, np.clip(prob * config.drift.get(cls, 1.0), 0, 1), prob)
        labels[cls] = rng.random(n) < prob

    token_counts = rng.integers(5, 30, n)
    media_counts = rng.poisson(0.4, n)
    link_counts = rng.poisson(0.2, n)
    domain_counts = np.minimum(link_counts, rng.poisson(0.2, n))
    hashtag_counts = rng.poisson(0.5, n)

    cta_mask = rng.random(n) < config.cta_rate
    cta_words = rng.integers(0, len(CALL_TO_ACTION_WORDS), n)
    cta_tokens = np.array(
        [min(DEFAULT_VOCABULARY.word_tokens[w]) for w in CALL_TO_ACTION_WORDS]
    )

    # Ordinary token ids start above the call-to-action range.
    all_tokens = rng.integers(100, 10_000, int(token_counts.sum()))
    token_offsets = np.concatenate([[0], np.cumsum(token_counts)])

    field_delim = format_config.field_delimiter.decode(format_config.encoding)
    list_delim = format_config.list_delimiter.decode(format_config.encoding)
    out_path = Path(out_path)

    with open(out_path, "w", encoding=format_config.encoding, newline="\n") as fh:
        for i in range(n):
            tokens = all_tokens[token_offsets[i] : token_offsets[i + 1]]
            token_text = list_delim.join(map(str, tokens))
            if cta_mask[i]:
                token_text = (
                    f"{token_text}{list_delim}{cta_tokens[cta_words[i]]}"
                    if token_text
                    else str(cta_tokens[cta_words[i]])
                )
            a = authors[i]
            u = users[i]
            engagement_ts = str(ts[i] + 60)
            row = [
                token_text,
                list_delim.join(f"h{k}" for k in range(hashtag_counts[i])),
                f"t{i}",
                list_delim.join(f"m{k}" for k in range(media_counts[i])),
                list_delim.join(f"l{k}" for k in range(link_counts[i])),
                list_delim.join(f"d{k}" for k in range(domain_counts[i])),
                TWEET_TYPES[tweet_types[i]],
                f"lang{languages[i]}",
                str(ts[i]),
                f"a{a}",
                str(author_followers[a]),
                str(author_following[a]),
                "true" if author_verified[a] else "false",
                str(author_created[a]),
                f"u{u}",
                str(user_followers[u]),
                str(user_following[u]),
                "true" if user_verified[u] else "false",
                str(user_created[u]),
                "true" if follows[i] else "false",
                engagement_ts if labels[EngagementClass.REPLY][i] else "",
                engagement_ts if labels[EngagementClass.RETWEET][i] else "",
                engagement_ts if labels[EngagementClass.RWC][i] else "",
                engagement_ts if labels[EngagementClass.LIKE][i] else "",
            ]
            fh.write(field_delim.join(row))
            fh.write("\n")
    return out_path
