import numpy as np
import pytest

from ctrboost.ingest import InteractionRecord


def make_record(**overrides) -> InteractionRecord:
    base = dict(
        text_token_ids=(100, 101, 102),
        hashtag_ids=("h1",),
        tweet_id="t0",
        media_count=0,
        link_count=0,
        domain_count=0,
        tweet_type="ORIGINAL",
        language_id="lang0",
        tweet_timestamp=1_581_000_000,
        author_id="a0",
        author_follower_count=10,
        author_following_count=5,
        author_verified=False,
        author_account_creation=1_500_000_000,
        user_id="u0",
        user_follower_count=7,
        user_following_count=3,
        user_verified=False,
        user_account_creation=1_500_000_000,
        engagee_follows_engager=False,
    )
    base.update(overrides)
    return InteractionRecord(**base)


def random_records(n, seed=0, like=0.4, reply=0.05, retweet=0.1, rwc=0.01,
                   n_authors=20, n_users=50, n_languages=4):
    """Small in-memory synthetic record list for unit tests."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        ts = 1_581_000_000 + i
        labels = {
            "like_ts": ts + 1 if rng.random() < like else None,
            "reply_ts": ts + 1 if rng.random() < reply else None,
            "retweet_ts": ts + 1 if rng.random() < retweet else None,
            "rwc_ts": ts + 1 if rng.random() < rwc else None,
        }
        records.append(
            make_record(
                tweet_id=f"t{i}",
                tweet_timestamp=ts,
                author_id=f"a{rng.integers(n_authors)}",
                user_id=f"u{rng.integers(n_users)}",
                language_id=f"lang{rng.integers(n_languages)}",
                text_token_ids=tuple(rng.integers(100, 1000, rng.integers(3, 12))),
                hashtag_ids=tuple(f"h{k}" for k in range(rng.integers(0, 3))),
                media_count=int(rng.integers(0, 3)),
                **labels,
            )
        )
    return records


@pytest.fixture
def record_factory():
    return make_record
