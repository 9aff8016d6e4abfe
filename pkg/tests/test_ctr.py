import math

import numpy as np
import pytest

from conftest import make_record, random_records
from ctrboost.ctr import (
    CtrTable,
    compute_ctr,
    predict_constant,
    tune_constants,
    tuning_rows_to_csv,
)
from ctrboost.ingest import CLASSES, EngagementClass, labels_of
from ctrboost.metrics import MetricError


def entropy(rate):
    return -(rate * math.log(rate) + (1 - rate) * math.log(1 - rate))


class TestComputeCtr:
    def test_direct_count(self):
        records = [
            make_record(tweet_id=f"t{i}", like_ts=1581000001 if i < 3 else None)
            for i in range(10)
        ]
        table = compute_ctr(records)
        assert table.n_rows == 10
        assert table.positive_count[EngagementClass.LIKE] == 3
        assert table.ctr(EngagementClass.LIKE) == pytest.approx(0.3)

    def test_all_pseudo_negative(self):
        table = compute_ctr([make_record(tweet_id=f"t{i}") for i in range(5)])
        for cls in CLASSES:
            assert table.ctr(cls) == 0.0

    def test_empty_input_errors(self):
        with pytest.raises(MetricError):
            compute_ctr([])

    def test_matches_brute_force_recount(self):
        records = random_records(500, seed=7)
        table = compute_ctr(records)
        for cls in CLASSES:
            expected = sum(1 for r in records if labels_of(r)[cls])
            assert table.positive_count[cls] == expected

    @pytest.mark.parametrize("cut", [0, 1, 137, 250, 499, 500])
    def test_merge_consistency(self, cut):
        records = random_records(500, seed=11)
        whole = compute_ctr(records)
        if cut == 0 or cut == 500:
            return  # merge needs two nonempty halves
        merged = compute_ctr(records[:cut]).merge(compute_ctr(records[cut:]))
        assert merged == whole

    def test_invariant_counts_consistent(self):
        table = compute_ctr(random_records(300, seed=2))
        for cls in CLASSES:
            assert 0.0 <= table.ctr(cls) <= 1.0
            assert table.ctr(cls) * table.n_rows == pytest.approx(
                table.positive_count[cls]
            )

    def test_csv_shape(self):
        table = compute_ctr(random_records(50, seed=3))
        lines = table.to_csv().splitlines()
        assert lines[0] == "class,positive_count,n_rows,ctr"
        assert len(lines) == 5


class TestPredictConstant:
    def test_fills_with_ctr(self):
        table = CtrTable(
            positive_count={c: 0 for c in CLASSES} | {EngagementClass.LIKE: 428},
            n_rows=1000,
        )
        preds = predict_constant(table, 3)
        assert np.allclose(preds[EngagementClass.LIKE], 0.428)
        assert np.allclose(preds[EngagementClass.REPLY], 0.0)

    def test_singleton(self):
        table = compute_ctr(random_records(40, seed=5))
        preds = predict_constant(table, 1)
        assert all(preds[cls].shape == (1,) for cls in CLASSES)


class TestTuneConstants:
    def test_ctr_on_matching_rates_is_zero(self):
        # Identical train and eval splits: the CTR equals the naive rate.
        records = random_records(400, seed=9)
        rows = tune_constants(records, records, ["ctr"])
        for cls in CLASSES:
            assert rows[0].rce[cls] == pytest.approx(0.0, abs=1e-10)

    def test_literal_matches_closed_form(self):
        records = random_records(600, seed=13)
        rows = tune_constants(records, records, ["0.3"])
        labels = [labels_of(r) for r in records]
        for cls in CLASSES:
            rate = sum(1 for l in labels if l[cls]) / len(labels)
            ce = -(rate * math.log(0.3) + (1 - rate) * math.log(0.7))
            expected = 100.0 * (1.0 - ce / entropy(rate))
            assert rows[0].rce[cls] == pytest.approx(expected, abs=1e-9)

    def test_prauc_identical_across_constants(self):
        records = random_records(500, seed=17)
        rows = tune_constants(records, records, ["ctr", "0", "0.1", "0.5", "1"])
        for cls in CLASSES:
            values = {round(row.prauc[cls], 12) for row in rows}
            assert len(values) == 1

    def test_random_requires_seed(self):
        records = random_records(20, seed=1)
        with pytest.raises(ValueError, match="seed"):
            tune_constants(records, records, ["random"])

    def test_random_prauc_near_rate(self):
        records = random_records(4000, seed=19, like=0.4)
        rows = tune_constants(records, records, ["random"], seed=42)
        rate = sum(1 for r in records if labels_of(r).like) / len(records)
        assert rows[0].prauc[EngagementClass.LIKE] == pytest.approx(rate, abs=0.03)

    def test_rce_maximized_at_ctr_over_grid(self):
        # Among constant predictors the labels' own rate is the unique max.
        records = random_records(800, seed=23)
        # Offset the grid so no candidate collides with an empirical rate.
        grid = [f"{p:.3f}" for p in np.linspace(0.053, 0.953, 10)]
        rows = tune_constants(records, records, ["ctr"] + grid, seed=1)
        for cls in CLASSES:
            ctr_rce = rows[0].rce[cls]
            assert ctr_rce == pytest.approx(0.0, abs=1e-10)
            for row in rows[1:]:
                assert row.rce[cls] < ctr_rce

    def test_empty_candidates(self):
        with pytest.raises(ValueError):
            tune_constants([], [], [])

    def test_csv_shape(self):
        records = random_records(100, seed=29)
        rows = tune_constants(records, records, ["ctr", "0.5"])
        lines = tuning_rows_to_csv(rows).splitlines()
        assert lines[0].startswith("candidate,rce_like")
        assert len(lines) == 3
