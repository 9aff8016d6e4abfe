"""End-to-end CLI tests: every subcommand runs against real files, and the
outputs are cross-checked against the library calls they wrap."""

import csv
import json

import numpy as np
import pytest

from ctrboost import synth
from ctrboost.cli import run
from ctrboost.ctr import compute_ctr
from ctrboost.features import build_profiles, extract_matrix, load_tables
from ctrboost.harness import dataset_stats
from ctrboost.ingest import CLASSES, ParseReport, parse_dataset
from ctrboost.metrics import MetricReport, metric_report


def parse_path(path):
    with open(path, "rb") as fh:
        return list(parse_dataset(fh, report=ParseReport()))


GEN_ARGS = [
    "--rows", "2000",
    "--seed", "11",
    "--authors", "60",
    "--users", "150",
    "--rate", "reply=0.2",
    "--rate", "rwc=0.1",
    "--propensity-sigma", "1.0",
]

FAST_TRAIN = ["--rounds", "4", "--subsample", "1.0", "--sampling", "uniform"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated dataset plus tables and models shared by the tests."""
    ws = tmp_path_factory.mktemp("cliws")
    data = ws / "data.tsv"
    assert run(["gen", *GEN_ARGS, "-o", str(data)]) == 0

    valid = ws / "valid.tsv"
    assert run(["gen", *GEN_ARGS, "--seed", "12", "-o", str(valid)]) == 0

    tables = ws / "tables"
    assert run(["build-features", "-i", str(data), "-o", str(tables)]) == 0

    models = ws / "models"
    code = run(
        ["train", "-i", str(data), "--valid", str(valid), "--tables", str(tables),
         "--seed", "3", *FAST_TRAIN, "-o", str(models)]
    )
    assert code == 0
    return ws


class TestGen:
    def test_writes_parseable_rows(self, workspace):
        records = parse_path(workspace / "data.tsv")
        assert len(records) == 2000

    def test_repro_line(self, tmp_path, capsys):
        assert run(["gen", *GEN_ARGS, "-o", str(tmp_path / "d.tsv")]) == 0
        line = capsys.readouterr().out.splitlines()[0]
        assert line.startswith("# seed=11 config_digest=")

    def test_rerun_byte_identical(self, workspace, tmp_path):
        again = tmp_path / "again.tsv"
        assert run(["gen", *GEN_ARGS, "-o", str(again)]) == 0
        assert again.read_bytes() == (workspace / "data.tsv").read_bytes()

    def test_threads_env_does_not_change_bytes(self, workspace, tmp_path, monkeypatch):
        monkeypatch.setenv("CTRBOOST_THREADS", "7")
        out = tmp_path / "threads.tsv"
        assert run(["gen", *GEN_ARGS, "-o", str(out)]) == 0
        assert out.read_bytes() == (workspace / "data.tsv").read_bytes()

    def test_matches_library_generate(self, workspace, tmp_path):
        config = synth.GenConfig(
            rows=2000, seed=11, n_authors=60, n_users=150, propensity_sigma=1.0,
            rates=dict(synth.DEFAULT_RATES)
            | {CLASSES[1]: 0.2, CLASSES[3]: 0.1},
        )
        lib = synth.generate(config, tmp_path / "lib.tsv")
        assert lib.read_bytes() == (workspace / "data.tsv").read_bytes()

    def test_custom_field_delimiter_round_trips(self, tmp_path):
        out = tmp_path / "pipe.tsv"
        assert run(["gen", "--rows", "50", "--field-delim", "7c", "-o", str(out)]) == 0
        assert b"\x7c" in out.read_bytes()
        assert run(["ctr", "-i", str(out), "--field-delim", "7c"]) == 0


class TestStats:
    def test_outputs_and_figures(self, workspace, tmp_path, capsys):
        prefix = tmp_path / "stats"
        assert run(["stats", "-i", str(workspace / "data.tsv"), "-o", str(prefix)]) == 0
        assert (tmp_path / "stats_classes.csv").exists()
        assert (tmp_path / "stats_user_histogram.csv").exists()
        assert (tmp_path / "stats_classes.png").exists()
        assert (tmp_path / "stats_user_histogram.png").exists()

    def test_no_figures_flag(self, workspace, tmp_path):
        prefix = tmp_path / "bare"
        code = run(
            ["stats", "-i", str(workspace / "data.tsv"), "--no-figures", "-o", str(prefix)]
        )
        assert code == 0
        assert not (tmp_path / "bare_classes.png").exists()

    def test_csv_matches_library(self, workspace, tmp_path):
        prefix = tmp_path / "stats"
        assert run(["stats", "-i", str(workspace / "data.tsv"),
                    "--no-figures", "-o", str(prefix)]) == 0
        expected = dataset_stats(parse_path(workspace / "data.tsv"))
        assert (tmp_path / "stats_classes.csv").read_text() == expected.to_class_csv()


class TestCtr:
    def test_stdout_matches_library(self, workspace, capsys):
        assert run(["ctr", "-i", str(workspace / "data.tsv")]) == 0
        out = capsys.readouterr().out
        expected = compute_ctr(parse_path(workspace / "data.tsv")).to_csv()
        assert expected in out

    def test_output_file(self, workspace, tmp_path):
        target = tmp_path / "ctr.csv"
        assert run(["ctr", "-i", str(workspace / "data.tsv"), "-o", str(target)]) == 0
        assert target.read_text().startswith("class,positive_count")


class TestTuneConstants:
    def test_split_mode_outputs(self, workspace, tmp_path):
        prefix = tmp_path / "tuning"
        code = run(
            ["tune-constants", "-i", str(workspace / "data.tsv"),
             "--candidates", "ctr,0.1,0.5", "--seed", "5", "-o", str(prefix)]
        )
        assert code == 0
        lines = (tmp_path / "tuning.csv").read_text().splitlines()
        assert lines[0].startswith("candidate,rce_like")
        assert len(lines) == 4
        assert (tmp_path / "tuning.png").exists()

    def test_separate_eval_dataset(self, workspace, tmp_path):
        prefix = tmp_path / "tuning2"
        code = run(
            ["tune-constants", "-i", str(workspace / "data.tsv"),
             "--eval", str(workspace / "valid.tsv"),
             "--candidates", "ctr", "--no-figures", "-o", str(prefix)]
        )
        assert code == 0
        assert (tmp_path / "tuning2.csv").exists()


class TestFeaturePipeline:
    def test_extract_matches_library(self, workspace, tmp_path):
        out = tmp_path / "features.csv"
        code = run(
            ["extract", "-i", str(workspace / "valid.tsv"),
             "--tables", str(workspace / "tables"), "-o", str(out)]
        )
        assert code == 0
        matrix = np.loadtxt(out, delimiter=",", ndmin=2)
        tables = load_tables(workspace / "tables")
        expected = extract_matrix(parse_path(workspace / "valid.tsv"), tables)
        np.testing.assert_array_equal(matrix, expected)
        header = out.with_suffix(out.suffix + ".header")
        names = [l for l in header.read_text().splitlines() if not l.startswith("#")]
        assert len(names) == 59

    def test_tables_match_library_build(self, workspace):
        loaded = load_tables(workspace / "tables")
        built = build_profiles(parse_path(workspace / "data.tsv"))
        assert loaded.languages == built.languages
        assert loaded.prior_actions == built.prior_actions


class TestTrainPredictEvaluate:
    def test_model_files_exist(self, workspace):
        for cls in CLASSES:
            doc = json.loads((workspace / "models" / f"{cls.value}.json").read_text())
            assert doc["class_label"] == cls.value

    def test_train_rerun_byte_identical(self, workspace, tmp_path):
        again = tmp_path / "models2"
        code = run(
            ["train", "-i", str(workspace / "data.tsv"),
             "--valid", str(workspace / "valid.tsv"),
             "--tables", str(workspace / "tables"),
             "--seed", "3", *FAST_TRAIN, "-o", str(again)]
        )
        assert code == 0
        for cls in CLASSES:
            name = f"{cls.value}.json"
            assert (again / name).read_bytes() == (
                workspace / "models" / name
            ).read_bytes()

    def test_predict_then_evaluate(self, workspace, tmp_path, capsys):
        preds = tmp_path / "preds.csv"
        code = run(
            ["predict", "-i", str(workspace / "valid.tsv"),
             "--tables", str(workspace / "tables"),
             "--models", str(workspace / "models"), "-o", str(preds)]
        )
        assert code == 0
        with open(preds, newline="") as fh:
            header = next(csv.reader(fh))
        assert header == [cls.value for cls in CLASSES]

        prefix = tmp_path / "eval"
        code = run(
            ["evaluate", "-i", str(workspace / "valid.tsv"),
             "--predictions", str(preds), "-o", str(prefix)]
        )
        assert code == 0
        report = MetricReport.from_json((tmp_path / "eval.json").read_text())
        assert set(report.prauc) == set(CLASSES)

    def test_evaluate_matches_library(self, workspace, tmp_path):
        records = parse_path(workspace / "valid.tsv")
        from ctrboost.ctr import collect_labels

        labels = collect_labels(records)
        rate_preds = {cls: np.full(len(records), labels[cls].mean()) for cls in CLASSES}
        preds = tmp_path / "const.csv"
        with open(preds, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([cls.value for cls in CLASSES])
            for i in range(len(records)):
                writer.writerow([repr(float(rate_preds[cls][i])) for cls in CLASSES])
        prefix = tmp_path / "eval"
        assert run(["evaluate", "-i", str(workspace / "valid.tsv"),
                    "--predictions", str(preds), "-o", str(prefix)]) == 0
        report = MetricReport.from_json((tmp_path / "eval.json").read_text())
        assert report == metric_report(rate_preds, labels)


class TestChunkEval:
    def test_ctr_predictor_outputs(self, workspace, tmp_path):
        prefix = tmp_path / "chunks"
        code = run(
            ["chunk-eval", "-i", str(workspace / "data.tsv"),
             "--chunk-size", "500", "-o", str(prefix)]
        )
        assert code == 0
        lines = (tmp_path / "chunks.csv").read_text().splitlines()
        assert lines[0] == "chunk,class,prauc,rce,positive_rate"
        assert (tmp_path / "chunks.png").exists()

    def test_gbdt_predictor_requires_models(self, workspace, tmp_path):
        code = run(
            ["chunk-eval", "-i", str(workspace / "data.tsv"),
             "--predictor", "gbdt", "-o", str(tmp_path / "x")]
        )
        assert code == 1

    def test_gbdt_predictor_runs(self, workspace, tmp_path):
        prefix = tmp_path / "gchunks"
        code = run(
            ["chunk-eval", "-i", str(workspace / "valid.tsv"),
             "--predictor", "gbdt", "--chunk-size", "1000",
             "--tables", str(workspace / "tables"),
             "--models", str(workspace / "models"),
             "--no-figures", "-o", str(prefix)]
        )
        assert code == 0
        assert (tmp_path / "gchunks.csv").exists()


class TestLeaderboard:
    def _report_json(self, path, prauc, rce):
        report = MetricReport(
            prauc={c: prauc for c in CLASSES},
            rce={c: rce for c in CLASSES},
            positive_rate={c: 0.1 for c in CLASSES},
        )
        path.write_text(report.to_json())
        return path

    def test_ranks_two_submissions(self, tmp_path, capsys):
        a = self._report_json(tmp_path / "a.json", 0.6, 5.0)
        b = self._report_json(tmp_path / "b.json", 0.5, 1.0)
        assert run(["leaderboard", f"alpha={a}", f"beta={b}"]) == 0
        out = capsys.readouterr().out
        lines = [l for l in out.splitlines() if l and not l.startswith("#")]
        rows = [line.split(",") for line in lines[1:]]
        assert [row[1] for row in rows] == ["alpha", "beta"]

    def test_malformed_pair(self, tmp_path):
        assert run(["leaderboard", "no-equals-sign"]) == 1


class TestCompare:
    def test_end_to_end_outputs(self, tmp_path):
        data = tmp_path / "drift.tsv"
        args = [
            "gen", "--rows", "4000", "--seed", "21", "--authors", "80",
            "--users", "200", "--propensity-sigma", "1.0",
            "--rate", "reply=0.2", "--rate", "rwc=0.1",
            "--week2-fraction", "0.25", "--drift", "like=0.5",
            "-o", str(data),
        ]
        assert run(args) == 0
        config = synth.GenConfig(rows=4000, week2_fraction=0.25)
        boundary = config.start_ts + int(
            0.6 * (config.week2_start_ts - config.start_ts)
        )
        prefix = tmp_path / "cmp"
        code = run(
            ["compare", "-i", str(data),
             "--train-end-ts", str(boundary),
             "--valid-end-ts", str(config.week2_start_ts),
             "--seed", "2", *FAST_TRAIN, "--no-figures", "-o", str(prefix)]
        )
        assert code == 0
        lines = (tmp_path / "cmp.csv").read_text().splitlines()
        assert lines[0] == "model,split,class,prauc,rce,positive_rate"
        assert len(lines) == 1 + 16
        assert json.loads((tmp_path / "cmp.json").read_text())


class TestExitCodes:
    def test_unknown_option(self):
        assert run(["gen", "--no-such-flag"]) == 1

    def test_missing_input_file(self, tmp_path):
        assert run(["ctr", "-i", str(tmp_path / "missing.tsv")]) == 1

    def test_empty_dataset_is_data_error(self, tmp_path):
        empty = tmp_path / "empty.tsv"
        empty.write_bytes(b"")
        assert run(["ctr", "-i", str(empty)]) == 2

    def test_wrong_delimiter_is_data_error(self, workspace, tmp_path):
        # Every line fails to parse, leaving an empty record stream.
        assert run(["ctr", "-i", str(workspace / "data.tsv"),
                    "--field-delim", "2c"]) == 2

    def test_prediction_length_mismatch(self, workspace, tmp_path):
        preds = tmp_path / "short.csv"
        with open(preds, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([cls.value for cls in CLASSES])
            writer.writerow(["0.5", "0.5", "0.5", "0.5"])
        assert run(["evaluate", "-i", str(workspace / "valid.tsv"),
                    "--predictions", str(preds)]) == 2
