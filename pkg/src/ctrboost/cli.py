"""Command-line entry point exposing the pipeline end-to-end.

Exit codes: 0 success, 1 usage error, 2 data error. Every run prints a
reproducibility line with the seed and a digest of the resolved options.
Report subcommands write figures next to their CSV output unless
--no-figures is given.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from ctrboost import gbdt as gbdt_mod
from ctrboost import harness, plots, synth
from ctrboost.ctr import compute_ctr, tune_constants, tuning_rows_to_csv
from ctrboost.features import (
    DEFAULT_VOCABULARY,
    FEATURE_VERSION,
    VocabularyConfig,
    build_profiles,
    extract_matrix,
    load_tables,
    save_matrix,
    save_tables,
)
from ctrboost.gbdt import GbdtModel, SamplingMethod, TrainParams
from ctrboost.ingest import (
    CLASSES,
    DataError,
    EngagementClass,
    FormatConfig,
    ParseReport,
    parse_dataset,
)
from ctrboost.metrics import MetricError, MetricReport, metric_report


def _repro_line(seed, **options) -> None:
    digest = hashlib.sha1(
        json.dumps(options, sort_keys=True, default=str).encode()
    ).hexdigest()[:12]
    click.echo(f"# seed={seed} config_digest={digest}")


def _format_config(field_delim: str, list_delim: str) -> FormatConfig:
    return FormatConfig(
        field_delimiter=bytes.fromhex(field_delim),
        list_delimiter=bytes.fromhex(list_delim),
    )


def _parse_records(path, config: FormatConfig):
    report = ParseReport()
    with open(path, "rb") as fh:
        records = list(parse_dataset(fh, config, report))
    if report.rejected:
        click.echo(f"# rejected {report.rejected}/{report.total} lines", err=True)
    return records


def _load_vocabulary(path) -> VocabularyConfig:
    if path is None:
        return DEFAULT_VOCABULARY
    return VocabularyConfig.from_json(Path(path).read_text())


def format_options(fn):
    fn = click.option(
        "--field-delim", default="01", show_default=True, help="Field delimiter, hex byte."
    )(fn)
    fn = click.option(
        "--list-delim", default="09", show_default=True, help="List delimiter, hex byte."
    )(fn)
    return fn


def train_param_options(fn):
    options = [
        click.option("--eta", default=0.09, show_default=True),
        click.option("--max-depth", default=5, show_default=True),
        click.option("--rounds", default=200, show_default=True),
        click.option("--early-stopping-rounds", default=10, show_default=True),
        click.option("--subsample", default=0.2, show_default=True),
        click.option(
            "--sampling",
            type=click.Choice([m.value for m in SamplingMethod]),
            default=SamplingMethod.GRADIENT_BASED.value,
            show_default=True,
        ),
        click.option("--max-delta-step", default=5.0, show_default=True),
        click.option("--reg-lambda", default=1.0, show_default=True),
        click.option("--bins", default=256, show_default=True),
        click.option("--min-child-weight", default=1.0, show_default=True),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _train_params(seed, **kw) -> TrainParams:
    return TrainParams(
        eta=kw["eta"],
        max_depth=kw["max_depth"],
        rounds=kw["rounds"],
        early_stopping_rounds=kw["early_stopping_rounds"],
        subsample=kw["subsample"],
        sampling=SamplingMethod(kw["sampling"]),
        max_delta_step=kw["max_delta_step"],
        reg_lambda=kw["reg_lambda"],
        bins=kw["bins"],
        min_child_weight=kw["min_child_weight"],
        seed=seed,
    )


@click.group()
@click.option(
    "--threads",
    default=0,
    envvar="CTRBOOST_THREADS",
    show_default=True,
    help="Cap internal parallelism; all paths are deterministic regardless.",
)
def main(threads):
    """Engagement-prediction pipeline: CTR constants vs boosted trees."""
    # All computation is sequential and seed-deterministic; the cap exists
    # so output bytes provably cannot depend on it.
    _ = threads


def _rates_option(values) -> dict[EngagementClass, float]:
    rates = dict(synth.DEFAULT_RATES)
    by_value = {c.value: c for c in CLASSES}
    for item in values:
        name, _, rate = item.partition("=")
        if name not in by_value:
            raise click.UsageError(f"unknown class {name!r} in --rate")
        rates[by_value[name]] = float(rate)
    return rates


def _drift_option(values) -> dict[EngagementClass, float]:
    drift = {c: 1.0 for c in CLASSES}
    by_value = {c.value: c for c in CLASSES}
    for item in values:
        name, _, mult = item.partition("=")
        if name not in by_value:
            raise click.UsageError(f"unknown class {name!r} in --drift")
        drift[by_value[name]] = float(mult)
    return drift


@main.command()
@click.option("--rows", default=100_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--rate", "rates", multiple=True, help="Override, e.g. like=0.3.")
@click.option("--authors", default=5_000, show_default=True)
@click.option("--users", default=20_000, show_default=True)
@click.option("--languages", default=12, show_default=True)
@click.option("--propensity-sigma", default=0.5, show_default=True)
@click.option("--week2-fraction", default=0.0, show_default=True)
@click.option("--drift", "drifts", multiple=True, help="Week-2 multiplier, e.g. like=0.5.")
@click.option("--cta-rate", default=0.05, show_default=True)
@format_options
@click.option("-o", "--output", required=True, type=click.Path())
def gen(rows, seed, rates, authors, users, languages, propensity_sigma,
        week2_fraction, drifts, cta_rate, field_delim, list_delim, output):
    """Generate a synthetic interaction dataset file."""
    config = synth.GenConfig(
        rows=rows,
        rates=_rates_option(rates),
        n_authors=authors,
        n_users=users,
        n_languages=languages,
        propensity_sigma=propensity_sigma,
        week2_fraction=week2_fraction,
        drift=_drift_option(drifts),
        cta_rate=cta_rate,
        seed=seed,
    )
    _repro_line(seed, command="gen", config=config.digest_source())
    synth.generate(config, output, _format_config(field_delim, list_delim))
    click.echo(f"wrote {output}")


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@format_options
@click.option("-o", "--output", required=True, help="Output prefix.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def stats(input_path, field_delim, list_delim, output, figures):
    """Class distribution and per-user interaction histogram."""
    _repro_line("-", command="stats", input=input_path)
    config = _format_config(field_delim, list_delim)
    with open(input_path, "rb") as fh:
        report = harness.dataset_stats(parse_dataset(fh, config, ParseReport()))
    class_csv = Path(f"{output}_classes.csv")
    class_csv.write_text(report.to_class_csv())
    hist_csv = Path(f"{output}_user_histogram.csv")
    hist_csv.write_text(report.to_user_histogram_csv())
    written = [class_csv, hist_csv]
    if figures:
        written.append(plots.plot_class_distribution(report, f"{output}_classes.png"))
        written.append(plots.plot_user_histogram(report, f"{output}_user_histogram.png"))
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@format_options
@click.option("-o", "--output", type=click.Path(), help="CTR CSV (default stdout).")
def ctr(input_path, field_delim, list_delim, output):
    """Per-class CTR constants over a dataset."""
    _repro_line("-", command="ctr", input=input_path)
    config = _format_config(field_delim, list_delim)
    with open(input_path, "rb") as fh:
        table = compute_ctr(parse_dataset(fh, config, ParseReport()))
    text = table.to_csv()
    if output:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text, nl=False)


@main.command("tune-constants")
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--eval", "eval_path", type=click.Path(exists=True),
              help="Separate eval dataset; otherwise INPUT is split by row order.")
@click.option("--split-fraction", default=0.5, show_default=True,
              help="Leading fraction of INPUT used as train when --eval is absent.")
@click.option("--candidates", default="ctr,random,0,0.1,0.3,0.5,1", show_default=True)
@click.option("--seed", default=0, show_default=True)
@format_options
@click.option("-o", "--output", required=True, help="Output prefix.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def tune_constants_cmd(input_path, eval_path, split_fraction, candidates, seed,
                       field_delim, list_delim, output, figures):
    """Score candidate constants on a held-out split."""
    _repro_line(seed, command="tune-constants", input=input_path,
                eval=eval_path, split_fraction=split_fraction, candidates=candidates)
    config = _format_config(field_delim, list_delim)
    records = _parse_records(input_path, config)
    if eval_path:
        train_records, eval_records = records, _parse_records(eval_path, config)
    else:
        cut = int(len(records) * split_fraction)
        train_records, eval_records = records[:cut], records[cut:]
    rows = tune_constants(train_records, eval_records, candidates.split(","), seed)
    table_csv = Path(f"{output}.csv")
    table_csv.write_text(tuning_rows_to_csv(rows))
    click.echo(f"wrote {table_csv}")
    if figures:
        path = plots.plot_tuning(rows, f"{output}.png")
        click.echo(f"wrote {path}")


@main.command("build-features")
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@format_options
@click.option("-o", "--output", required=True, type=click.Path(), help="Tables directory.")
def build_features(input_path, field_delim, list_delim, output):
    """Build and persist the profile lookup tables."""
    _repro_line("-", command="build-features", input=input_path)
    config = _format_config(field_delim, list_delim)
    with open(input_path, "rb") as fh:
        tables = build_profiles(parse_dataset(fh, config, ParseReport()))
    save_tables(tables, output)
    click.echo(f"wrote {output}/")


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--tables", required=True, type=click.Path(exists=True))
@click.option("--vocab", type=click.Path(exists=True), help="Vocabulary JSON.")
@format_options
@click.option("-o", "--output", required=True, type=click.Path(), help="Feature matrix CSV.")
def extract(input_path, tables, vocab, field_delim, list_delim, output):
    """Extract the 59-feature matrix for a dataset."""
    _repro_line("-", command="extract", input=input_path, tables=tables)
    config = _format_config(field_delim, list_delim)
    profile_tables = load_tables(tables)
    vocabulary = _load_vocabulary(vocab)
    with open(input_path, "rb") as fh:
        matrix = extract_matrix(
            parse_dataset(fh, config, ParseReport()), profile_tables, vocabulary
        )
    save_matrix(matrix, output)
    click.echo(f"wrote {output}")


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--valid", "valid_path", required=True, type=click.Path(exists=True))
@click.option("--tables", required=True, type=click.Path(exists=True))
@click.option("--vocab", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@train_param_options
@format_options
@click.option("-o", "--output", required=True, type=click.Path(), help="Models directory.")
def train(input_path, valid_path, tables, vocab, seed, field_delim, list_delim,
          output, **param_kw):
    """Train one boosted model per engagement class."""
    _repro_line(seed, command="train", input=input_path, valid=valid_path,
                tables=tables, **param_kw)
    config = _format_config(field_delim, list_delim)
    params = _train_params(seed, **param_kw)
    profile_tables = load_tables(tables)
    vocabulary = _load_vocabulary(vocab)

    train_records = _parse_records(input_path, config)
    valid_records = _parse_records(valid_path, config)
    train_x = extract_matrix(train_records, profile_tables, vocabulary)
    valid_x = extract_matrix(valid_records, profile_tables, vocabulary)
    from ctrboost.ctr import collect_labels

    train_y = collect_labels(train_records)
    valid_y = collect_labels(valid_records)

    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cls in CLASSES:
        model = gbdt_mod.train(
            train_x, train_y[cls], valid_x, valid_y[cls], params, class_label=cls.value
        )
        path = out_dir / f"{cls.value}.json"
        path.write_text(model.to_json())
        click.echo(
            f"wrote {path} (best_iteration={model.best_iteration}, "
            f"best_rce={max(model.rce_trace, default=float('nan')):.4f})"
        )


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--tables", required=True, type=click.Path(exists=True))
@click.option("--models", "models_dir", required=True, type=click.Path(exists=True))
@click.option("--vocab", type=click.Path(exists=True))
@format_options
@click.option("-o", "--output", required=True, type=click.Path(), help="Predictions CSV.")
def predict(input_path, tables, models_dir, vocab, field_delim, list_delim, output):
    """Emit per-class probabilities for a dataset."""
    _repro_line("-", command="predict", input=input_path, models=models_dir)
    config = _format_config(field_delim, list_delim)
    profile_tables = load_tables(tables)
    vocabulary = _load_vocabulary(vocab)
    models = {
        cls: GbdtModel.from_json((Path(models_dir) / f"{cls.value}.json").read_text())
        for cls in CLASSES
    }
    with open(input_path, "rb") as fh:
        matrix = extract_matrix(
            parse_dataset(fh, config, ParseReport()), profile_tables, vocabulary
        )
    columns = {
        cls: gbdt_mod.predict(models[cls], matrix, FEATURE_VERSION) for cls in CLASSES
    }
    with open(output, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cls.value for cls in CLASSES])
        for i in range(matrix.shape[0]):
            writer.writerow([repr(float(columns[cls][i])) for cls in CLASSES])
    click.echo(f"wrote {output}")


def _read_predictions(path) -> dict[EngagementClass, np.ndarray]:
    by_value = {c.value: c for c in CLASSES}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    columns = {}
    for j, name in enumerate(header):
        if name not in by_value:
            raise DataError(f"unknown class column {name!r} in predictions")
        columns[by_value[name]] = np.array([row[j] for row in rows])
    return columns


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--predictions", required=True, type=click.Path(exists=True))
@format_options
@click.option("-o", "--output", help="Output prefix for CSV + JSON (default stdout).")
def evaluate(input_path, predictions, field_delim, list_delim, output):
    """PRAUC/RCE report of stored predictions against a dataset's labels."""
    _repro_line("-", command="evaluate", input=input_path, predictions=predictions)
    config = _format_config(field_delim, list_delim)
    records = _parse_records(input_path, config)
    from ctrboost.ctr import collect_labels

    labels = collect_labels(records)
    report = metric_report(_read_predictions(predictions), labels)
    if output:
        Path(f"{output}.csv").write_text(report.to_csv())
        Path(f"{output}.json").write_text(report.to_json())
        click.echo(f"wrote {output}.csv")
        click.echo(f"wrote {output}.json")
    else:
        click.echo(report.to_csv(), nl=False)


@main.command("chunk-eval")
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--chunk-size", default=100_000, show_default=True)
@click.option("--predictor", type=click.Choice(["ctr", "gbdt"]), default="ctr",
              show_default=True)
@click.option("--train", "train_path", type=click.Path(exists=True),
              help="Dataset for the CTR constants (default: INPUT itself).")
@click.option("--tables", type=click.Path(exists=True))
@click.option("--models", "models_dir", type=click.Path(exists=True))
@click.option("--vocab", type=click.Path(exists=True))
@format_options
@click.option("-o", "--output", required=True, help="Output prefix.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def chunk_eval_cmd(input_path, chunk_size, predictor, train_path, tables, models_dir,
                   vocab, field_delim, list_delim, output, figures):
    """Evaluate a predictor over consecutive time-ordered chunks."""
    _repro_line("-", command="chunk-eval", input=input_path,
                chunk_size=chunk_size, predictor=predictor)
    config = _format_config(field_delim, list_delim)
    if predictor == "ctr":
        source = train_path or input_path
        with open(source, "rb") as fh:
            table = compute_ctr(parse_dataset(fh, config, ParseReport()))
        fn = harness.constant_predictor(table)
    else:
        if not tables or not models_dir:
            raise click.UsageError("--predictor gbdt requires --tables and --models")
        profile_tables = load_tables(tables)
        models = {
            cls: GbdtModel.from_json((Path(models_dir) / f"{cls.value}.json").read_text())
            for cls in CLASSES
        }
        fn = harness.gbdt_predictor(models, profile_tables, _load_vocabulary(vocab))
    with open(input_path, "rb") as fh:
        result = harness.chunk_eval(
            parse_dataset(fh, config, ParseReport()), chunk_size, fn
        )
    table_csv = Path(f"{output}.csv")
    table_csv.write_text(result.to_csv())
    click.echo(f"wrote {table_csv}")
    if figures:
        path = plots.plot_chunk_traces(result, f"{output}.png")
        click.echo(f"wrote {path}")


@main.command()
@click.argument("submissions", nargs=-1, required=True)
@click.option("-o", "--output", type=click.Path(), help="CSV (default stdout).")
def leaderboard(submissions, output):
    """Rank submissions given as name=metric_report.json pairs."""
    _repro_line("-", command="leaderboard", submissions=list(submissions))
    pairs = []
    for item in submissions:
        name, sep, path = item.partition("=")
        if not sep:
            raise click.UsageError(f"expected name=path, got {item!r}")
        pairs.append((name, MetricReport.from_json(Path(path).read_text())))
    entries = harness.leaderboard(pairs)
    text = harness.leaderboard_to_csv(entries)
    if output:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--train-end-ts", required=True, type=int)
@click.option("--valid-end-ts", required=True, type=int)
@click.option("--history-end-ts", type=int,
              help="Profile-history cutoff inside the train split; "
                   "defaults to the median train timestamp.")
@click.option("--vocab", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@train_param_options
@format_options
@click.option("-o", "--output", required=True, help="Output prefix.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def compare(input_path, train_end_ts, valid_end_ts, history_end_ts, vocab, seed,
            field_delim, list_delim, output, figures, **param_kw):
    """Train CTR constants and boosted models, evaluate on valid and test."""
    _repro_line(seed, command="compare", input=input_path,
                train_end_ts=train_end_ts, valid_end_ts=valid_end_ts, **param_kw)
    report = harness.run_comparison(
        input_path,
        harness.SplitConfig(train_end_ts=train_end_ts, valid_end_ts=valid_end_ts,
                            history_end_ts=history_end_ts),
        _train_params(seed, **param_kw),
        _format_config(field_delim, list_delim),
        _load_vocabulary(vocab),
    )
    Path(f"{output}.csv").write_text(report.to_csv())
    Path(f"{output}.json").write_text(report.to_json())
    click.echo(f"wrote {output}.csv")
    click.echo(f"wrote {output}.json")
    if figures:
        path = plots.plot_comparison(report, f"{output}.png")
        click.echo(f"wrote {path}")


def run(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (DataError, MetricError, ValueError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
