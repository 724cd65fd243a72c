"""Command-line pipeline: ingest, train, tune, evaluate, explain, reproduce.

Every command derives all randomness from --seed, writes artifacts
atomically, and embeds {seed, config hash, format version} in each one.
Exit codes: 0 success, 2 usage, 3 data validation, 4 I/O, 5 numeric.
"""

import functools
import hashlib
import json
import os
import sys
import time

import click
import numpy as np

from . import data as data_mod
from . import ensemble as ensemble_mod
from . import explain as explain_mod
from . import metrics as metrics_mod
from . import report as report_mod
from . import tuning as tuning_mod
from .artifacts import config_hash, write_json_artifact, write_text_atomic
from .errors import DataValidationError, NumericError
from .rng import derive_seed, stream

VARIANT_NAMES = {"rf": "RandomForest", "gbm": "GBM", "xgb": "XGBoost"}

EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_NUMERIC = 5


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DataValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except NumericError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _load_config_map(ctx, param, value):
    """--config JSON supplies per-command flag defaults: {"train": {...}}."""
    if not value:
        return None
    try:
        with open(value, "r", encoding="utf-8") as handle:
            mapping = json.load(handle)
    except OSError as exc:
        raise click.UsageError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(mapping, dict):
        raise click.UsageError("config file must hold an object of command sections")
    normalized = {}
    for command_name, section in mapping.items():
        command = main.commands.get(command_name)
        if command is None:
            raise click.UsageError(f"config section {command_name!r} is not a command")
        if not isinstance(section, dict):
            raise click.UsageError(f"config section {command_name!r} must be an object")
        # accept flag spellings ("--out") as well as parameter names ("out_dir")
        alias = {}
        for parameter in command.params:
            alias[parameter.name] = parameter.name
            for opt in parameter.opts:
                alias[opt.lstrip("-").replace("-", "_")] = parameter.name
        normalized[command_name] = {
            alias.get(key.replace("-", "_"), key): item for key, item in section.items()
        }
    ctx.default_map = normalized
    return value


@click.group()
@click.option(
    "--config",
    type=click.Path(),
    callback=_load_config_map,
    expose_value=False,
    is_eager=True,
    help="JSON file supplying default values for any command flag.",
)
def main():
    """Premium regression pipeline with explainable tree ensembles."""


def _out_path(out_dir, name):
    return os.path.join(out_dir, name)


def _write_csv(out_dir, name, text):
    write_text_atomic(_out_path(out_dir, name), text)
    return name


def _write_svg(out_dir, name, text):
    write_text_atomic(_out_path(out_dir, name), text)
    return name


def _svg_meta(seed, config):
    return f"seed={seed} config_hash={config_hash(config)} format_version=1"


def _scale_matrix(scaler, X):
    return (np.asarray(X, dtype=np.float64) - scaler.mean) / scaler.std


def _pipeline_predict(model, scaler):
    """Prediction over raw feature rows: standardize, then run the model."""

    def predict(X):
        return model.predict(_scale_matrix(scaler, X))

    return predict


# --- ingest ------------------------------------------------------------------

@main.command()
@click.argument("csv_path", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--seed", default=42, show_default=True, help="Seed recorded in artifacts.")
@guarded
def ingest(csv_path, out_dir, seed):
    """Validate the premium CSV, derive BMI, and write dataset artifacts."""
    records = data_mod.load_csv(csv_path)
    duplicates = data_mod.detect_duplicates(records)
    raw = data_mod.raw_table(records)
    derived = data_mod.derive_features(records)
    stats = data_mod.summary_statistics(raw, include_target=True)
    os.makedirs(out_dir, exist_ok=True)
    data_mod.dataset_to_json(derived, _out_path(out_dir, "dataset.json"), seed=seed)
    _write_csv(out_dir, "summary_stats.csv", report_mod.summary_stats_csv(stats, seed=seed))
    click.echo(f"ingested {derived.n} records ({len(duplicates)} duplicate groups)")
    click.echo(f"wrote {_out_path(out_dir, 'dataset.json')}")


# --- train -------------------------------------------------------------------

def _model_flags(fn):
    options = [
        click.option("--n-estimators", type=int, default=None, help="Trees/stages."),
        click.option("--max-depth", type=int, default=None, help="Tree depth cap."),
        click.option("--min-samples-split", type=int, default=None),
        click.option("--max-features", type=int, default=None, help="Feature subset per split."),
        click.option("--learning-rate", type=float, default=None, help="Boosting shrinkage."),
        click.option("--subsample", type=float, default=None, help="Boosting row fraction."),
        click.option("--reg-lambda", type=float, default=None, help="Leaf L2 penalty (xgb)."),
        click.option("--gamma", type=float, default=None, help="Per-split penalty (xgb)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _collect_params(variant, flag_values):
    params = tuning_mod.default_params(variant)
    for key, value in flag_values.items():
        if value is None:
            continue
        if key not in params:
            raise click.UsageError(f"--{key.replace('_', '-')} does not apply to {variant}")
        params[key] = value
    return params


def _prepare_training(dataset_path, out_dir, seed, split_fraction, split_path):
    dataset = data_mod.dataset_from_json(dataset_path)
    if split_path:
        split = data_mod.split_from_json(split_path)
    else:
        split = data_mod.train_test_split(dataset.n, split_fraction, seed)
    scaler = data_mod.fit_scaler(dataset, split.train_rows)
    os.makedirs(out_dir, exist_ok=True)
    data_mod.split_to_json(split, _out_path(out_dir, "split.json"))
    data_mod.scaler_to_json(scaler, _out_path(out_dir, "scaler.json"), seed=split.seed)
    return dataset, split, scaler


def _train_one(dataset, split, scaler, variant, params, seed, out_dir, jobs=1):
    scaled = data_mod.apply_scaler(scaler, dataset)
    train_data = scaled.subset(split.train_rows)
    model_seed = derive_seed(seed, "train", variant)
    started = time.perf_counter()
    if variant == "rf":
        config = _replace_config(ensemble_mod.default_forest_config(model_seed), params)
        model = ensemble_mod.fit_forest(train_data, config, jobs=jobs)
    else:
        model = tuning_mod.fit_variant(variant, train_data, params, model_seed)
    elapsed = time.perf_counter() - started
    model_name = f"model_{variant}.json"
    ensemble_mod.save_model(model, _out_path(out_dir, model_name))
    train_r2 = metrics_mod.r_squared(train_data.y, model.predict(train_data.X))
    report = {
        "variant": variant,
        "params": params,
        "seed": seed,
        "model_seed": model_seed,
        "config_hash": config_hash(params),
        "train_rows": int(split.train_rows.size),
        "train_r_squared": train_r2,
        "fit_seconds": elapsed,
    }
    write_json_artifact(
        _out_path(out_dir, f"run_report_{variant}.json"),
        "run_report",
        report,
        seed=seed,
        config=params,
    )
    return model, train_r2, elapsed


def _replace_config(config, params):
    from dataclasses import replace

    try:
        return replace(config, **params)
    except TypeError as exc:
        raise DataValidationError(f"invalid parameters: {exc}") from None


@main.command()
@click.argument("dataset_path", type=click.Path())
@click.option("--model", "variant", required=True, type=click.Choice(["rf", "gbm", "xgb"]))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=42, show_default=True)
@click.option("--split-fraction", default=0.75, show_default=True,
              type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True))
@click.option("--split", "split_path", type=click.Path(), default=None,
              help="Reuse an existing split.json instead of re-splitting.")
@click.option("--jobs", default=1, show_default=True, help="Worker cap for forest fitting.")
@_model_flags
@guarded
def train(dataset_path, variant, out_dir, seed, split_fraction, split_path, jobs, **flags):
    """Fit one model on the train split; defaults are the published best parameters."""
    params = _collect_params(variant, flags)
    dataset, split, scaler = _prepare_training(dataset_path, out_dir, seed, split_fraction, split_path)
    _, train_r2, elapsed = _train_one(dataset, split, scaler, variant, params, seed, out_dir, jobs)
    click.echo(f"trained {variant} in {elapsed:.2f}s, train R^2 {100 * train_r2:.3f}%")


# --- tune --------------------------------------------------------------------

@main.command()
@click.argument("dataset_path", type=click.Path())
@click.option("--model", "variant", required=True, type=click.Choice(["rf", "gbm", "xgb"]))
@click.option("--grid", "grid_path", type=click.Path(), default=None,
              help="JSON grid document; defaults to the shipped grid.")
@click.option("--folds", default=5, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--split-fraction", default=0.75, show_default=True,
              type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@guarded
def tune(dataset_path, variant, grid_path, folds, seed, split_fraction, out_dir):
    """Exhaustive grid search with k-fold cross-validation on the train split."""
    dataset = data_mod.dataset_from_json(dataset_path)
    if grid_path:
        with open(grid_path, "r", encoding="utf-8") as handle:
            try:
                grid = json.load(handle)
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"{grid_path}: not valid JSON: {exc}")
    else:
        grid = tuning_mod.DEFAULT_GRIDS[variant]
    split = data_mod.train_test_split(dataset.n, split_fraction, seed)
    train_data = dataset.subset(split.train_rows)
    result = tuning_mod.grid_search(train_data, variant, grid, folds, seed)
    os.makedirs(out_dir, exist_ok=True)
    write_json_artifact(
        _out_path(out_dir, f"cv_{variant}.json"),
        "cv_result",
        result.to_dict(),
        seed=seed,
        config={"grid": grid, "k": folds},
    )
    _write_csv(out_dir, f"cv_{variant}.csv", report_mod.cv_cells_csv(result, seed=seed))
    click.echo(
        f"best {variant} params {json.dumps(result.best_params, sort_keys=True)} "
        f"mean CV R^2 {100 * result.best_mean_score:.3f}%"
    )


# --- evaluate ----------------------------------------------------------------

def _evaluate_one(model, variant, dataset, split, scaler, seed, out_dir):
    scaled = data_mod.apply_scaler(scaler, dataset)
    actual = dataset.y[split.test_rows]
    predicted = model.predict(scaled.X[split.test_rows])
    report = metrics_mod.evaluate_predictions(VARIANT_NAMES[variant], actual, predicted)
    write_json_artifact(
        _out_path(out_dir, f"metrics_{variant}.json"),
        "metrics",
        report.to_dict(),
        seed=seed,
        config={"variant": variant},
    )
    _write_csv(out_dir, f"metrics_{variant}.csv",
               report_mod.metrics_table_csv([report], seed=seed))
    meta = _svg_meta(seed, {"variant": variant})
    _write_svg(
        out_dir,
        f"residual_scatter_{variant}.svg",
        report_mod.render(
            report_mod.FigureSpec("residual_scatter", f"{VARIANT_NAMES[variant]} residuals",
                                  "predicted premium", "residual"),
            {"predicted": predicted, "residuals": actual - predicted},
            meta,
        ),
    )
    try:
        diagnostics = metrics_mod.residual_diagnostics(actual, predicted)
    except NumericError as exc:
        click.echo(f"warning: skipping Q-Q figure: {exc}", err=True)
    else:
        _write_svg(
            out_dir,
            f"qq_{variant}.svg",
            report_mod.render(
                report_mod.FigureSpec("qq", f"{VARIANT_NAMES[variant]} residual Q-Q",
                                      "normal quantile", "standardized residual"),
                {"theoretical": diagnostics.qq_theoretical, "sample": diagnostics.qq_sample},
                meta,
            ),
        )
    _write_svg(
        out_dir,
        f"prediction_error_{variant}.svg",
        report_mod.render(
            report_mod.FigureSpec("prediction_error", f"{VARIANT_NAMES[variant]} prediction error",
                                  "actual premium", "predicted premium"),
            {"actual": actual, "predicted": predicted},
            meta,
        ),
    )
    return report


@main.command()
@click.argument("model_path", type=click.Path())
@click.argument("dataset_path", type=click.Path())
@click.option("--split", "split_path", required=True, type=click.Path())
@click.option("--scaler", "scaler_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=42, show_default=True)
@guarded
def evaluate(model_path, dataset_path, split_path, scaler_path, out_dir, seed):
    """Score a saved model on the test split and render diagnostic figures."""
    model = ensemble_mod.load_model(model_path)
    dataset = data_mod.dataset_from_json(dataset_path)
    if model.feature_count != dataset.m:
        raise DataValidationError(
            f"model expects {model.feature_count} features, dataset has {dataset.m}"
        )
    split = data_mod.split_from_json(split_path)
    scaler = data_mod.scaler_from_json(scaler_path)
    os.makedirs(out_dir, exist_ok=True)
    report = _evaluate_one(model, model.variant, dataset, split, scaler, seed, out_dir)
    click.echo(
        f"{report.model}: R^2 {100 * report.r_squared:.3f}% MAE {report.mae:.3f} "
        f"RMSE {report.rmse:.3f} MAPE {report.mape:.3f}%"
    )


# --- explain -----------------------------------------------------------------

def _explain_shap(model, variant, dataset, scaler, explain_rows, background_rows,
                  row_ids, seed, out_dir):
    predict = _pipeline_predict(model, scaler)
    background = explain_mod.ValueFunctionConfig(background_rows)
    explanation = explain_mod.shap_exact(
        predict, explain_rows, background, feature_names=dataset.feature_names
    )
    importance = explain_mod.global_importance(explanation)
    swarm = explain_mod.beeswarm_data(explanation)
    _write_csv(out_dir, f"shap_values_{variant}.csv",
               report_mod.shap_values_csv(explanation, row_ids, seed=seed))
    _write_csv(out_dir, f"shap_importance_{variant}.csv",
               report_mod.importance_csv(importance, seed=seed))
    meta = _svg_meta(seed, {"variant": variant, "rows": len(row_ids)})
    _write_svg(
        out_dir,
        f"beeswarm_{variant}.svg",
        report_mod.render(
            report_mod.FigureSpec("beeswarm", f"{VARIANT_NAMES[variant]} attribution summary",
                                  "attribution (premium units)"),
            {"feature_names": swarm.feature_names, "points": swarm.points},
            meta,
        ),
    )
    ordered_names = [importance.feature_names[j] for j in importance.order]
    ordered_totals = importance.totals[importance.order]
    _write_svg(
        out_dir,
        f"importance_{variant}.svg",
        report_mod.render(
            report_mod.FigureSpec("importance_bar", f"{VARIANT_NAMES[variant]} feature importance",
                                  "sum of |attribution|"),
            {"names": ordered_names, "totals": ordered_totals},
            meta,
        ),
    )
    return importance


def _explain_ice(model, variant, dataset, scaler, rows, row_ids, features, grid_points,
                 centered, derivative, seed, out_dir, suffix=""):
    predict = _pipeline_predict(model, scaler)
    panels = []
    curve_sets = []
    for name in features:
        index = dataset.feature_index(name)
        raw = explain_mod.ice_curves(
            predict, rows, index, n_points=grid_points, feature_name=name
        )
        chosen = raw
        if centered:
            chosen = explain_mod.center_ice(raw)
        if derivative:
            chosen = explain_mod.derivative_ice(raw)
        curve_sets.extend([raw] if chosen is raw else [raw, chosen])
        panels.append(
            {
                "feature_name": name,
                "grid": chosen.grid,
                "curves": chosen.curves,
                "pdp": chosen.pdp,
                "anchor_index": chosen.anchor_index,
            }
        )
    _write_csv(out_dir, f"ice_{variant}{suffix}.csv",
               report_mod.ice_long_csv(curve_sets, row_ids, seed=seed))
    kind_label = "derivative" if derivative else ("centered" if centered else "raw")
    meta = _svg_meta(seed, {"variant": variant, "kind": kind_label})
    _write_svg(
        out_dir,
        f"ice_panel_{variant}{suffix}.svg",
        report_mod.render(
            report_mod.FigureSpec("ice_panel",
                                  f"{VARIANT_NAMES[variant]} {kind_label} ICE curves"),
            {"panels": panels},
            meta,
        ),
    )


def _choose_rows(dataset, split, rows_cap, background_cap, seed):
    if split is not None:
        explain_ids = split.test_rows
        background_ids = split.train_rows
    else:
        explain_ids = np.arange(dataset.n)
        background_ids = np.arange(dataset.n)
    if rows_cap is not None and rows_cap < explain_ids.size:
        pick = stream(seed, "explain_rows").choice(explain_ids.size, size=rows_cap, replace=False)
        explain_ids = explain_ids[np.sort(pick)]
    if background_cap is not None and background_cap < background_ids.size:
        pick = stream(seed, "background").choice(background_ids.size, size=background_cap, replace=False)
        background_ids = background_ids[np.sort(pick)]
    return explain_ids, background_ids


@main.command()
@click.argument("model_path", type=click.Path())
@click.argument("dataset_path", type=click.Path())
@click.option("--scaler", "scaler_path", required=True, type=click.Path())
@click.option("--split", "split_path", type=click.Path(), default=None,
              help="Explain test rows against a train-row background.")
@click.option("--mode", type=click.Choice(["shap", "ice"]), default="shap", show_default=True)
@click.option("--feature", "feature_name", default=None,
              help="Single feature for ICE mode (default: all features).")
@click.option("--centered", is_flag=True, help="Center ICE curves at the left grid edge.")
@click.option("--derivative", is_flag=True, help="Differentiate ICE curves.")
@click.option("--background-size", type=int, default=None,
              help="Subsample the background set (default: all rows).")
@click.option("--rows", "rows_cap", type=int, default=None,
              help="Cap on explained rows (default: all).")
@click.option("--grid-points", default=30, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@guarded
def explain(model_path, dataset_path, scaler_path, split_path, mode, feature_name,
            centered, derivative, background_size, rows_cap, grid_points, seed, out_dir):
    """Explain a saved model with exact Shapley values or ICE curves."""
    model = ensemble_mod.load_model(model_path)
    dataset = data_mod.dataset_from_json(dataset_path)
    scaler = data_mod.scaler_from_json(scaler_path)
    split = data_mod.split_from_json(split_path) if split_path else None
    variant = model.variant
    explain_ids, background_ids = _choose_rows(dataset, split, rows_cap, background_size, seed)
    os.makedirs(out_dir, exist_ok=True)
    if mode == "shap":
        importance = _explain_shap(
            model, variant, dataset, scaler,
            dataset.X[explain_ids], dataset.X[background_ids],
            [int(i) for i in explain_ids], seed, out_dir,
        )
        top = [importance.feature_names[j] for j in importance.order[:2]]
        click.echo(f"top features: {', '.join(top)}")
    else:
        features = [feature_name] if feature_name else list(dataset.feature_names)
        if feature_name:
            dataset.feature_index(feature_name)  # validate early
        _explain_ice(
            model, variant, dataset, scaler, dataset.X[explain_ids],
            [int(i) for i in explain_ids], features, grid_points,
            centered, derivative, seed, out_dir,
        )
        click.echo(f"wrote ICE curves for {len(features)} feature(s)")


# --- reproduce ---------------------------------------------------------------

GROUPING_FEATURES = [
    "Diabetes",
    "BloodPressureProblems",
    "AnyTransplants",
    "AnyChronicDiseases",
    "KnownAllergies",
    "HistoryOfCancerInFamily",
    "NumberOfMajorSurgeries",
]

# floored at 0.2: tiny subsets can make a rare binary flag constant,
# which the scaler rejects by contract
LEARNING_FRACTIONS = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


@main.command()
@click.argument("csv_path", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=42, show_default=True)
@click.option("--split-fraction", default=0.75, show_default=True,
              type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True))
@click.option("--folds", default=5, show_default=True)
@click.option("--full-tune", is_flag=True,
              help="Run the shipped grids instead of the published best parameters.")
@click.option("--background-size", type=int, default=None,
              help="Subsample the attribution background (default: full train split).")
@click.option("--explain-rows", type=int, default=None,
              help="Cap on attributed rows (default: full test split).")
@click.option("--ice-rows", type=int, default=60, show_default=True)
@click.option("--grid-points", default=30, show_default=True)
@click.option("--jobs", default=1, show_default=True)
@guarded
def reproduce(csv_path, out_dir, seed, split_fraction, folds, full_tune,
              background_size, explain_rows, ice_rows, grid_points, jobs):
    """One-shot pipeline: ingest, split, train, evaluate, curves, explain."""
    started = time.perf_counter()
    timings = {}
    os.makedirs(out_dir, exist_ok=True)

    records = data_mod.load_csv(csv_path)
    duplicates = data_mod.detect_duplicates(records)
    raw = data_mod.raw_table(records)
    derived = data_mod.derive_features(records)
    data_mod.dataset_to_json(derived, _out_path(out_dir, "dataset.json"), seed=seed)

    stats = data_mod.summary_statistics(raw, include_target=True)
    _write_csv(out_dir, "summary_stats.csv", report_mod.summary_stats_csv(stats, seed=seed))
    correlation = data_mod.pearson_correlation(raw, include_target=True)
    _write_svg(
        out_dir,
        "correlation_heatmap.svg",
        report_mod.render(
            report_mod.FigureSpec("correlation_heatmap", "Attribute correlation"),
            {"names": correlation.names, "matrix": correlation.matrix},
            _svg_meta(seed, {"figure": "correlation"}),
        ),
    )
    group_csv_parts = []
    for feature in GROUPING_FEATURES:
        groups = data_mod.group_summary(derived, feature)
        group_csv_parts.append((feature, groups))
        column = derived.X[:, derived.feature_index(feature)]
        figure_groups = [
            {"label": report_mod.value_label(g.value), "values": derived.y[column == g.value]}
            for g in groups
        ]
        _write_svg(
            out_dir,
            f"group_boxplot_{feature}.svg",
            report_mod.render(
                report_mod.FigureSpec("group_boxplot", f"Premium by {feature}",
                                      feature, "premium"),
                {"groups": figure_groups},
                _svg_meta(seed, {"figure": "group", "feature": feature}),
            ),
        )
    _write_csv(out_dir, "group_premium_stats.csv",
               report_mod.group_summary_all_csv(group_csv_parts, seed=seed))
    timings["eda"] = time.perf_counter() - started

    split = data_mod.train_test_split(derived.n, split_fraction, seed)
    data_mod.split_to_json(split, _out_path(out_dir, "split.json"))
    scaler = data_mod.fit_scaler(derived, split.train_rows)
    data_mod.scaler_to_json(scaler, _out_path(out_dir, "scaler.json"), seed=seed)
    train_subset = derived.subset(split.train_rows)

    models = {}
    cv_entries = []
    improvement_inputs = []
    metrics_reports = []
    for variant in ("rf", "gbm", "xgb"):
        stage_start = time.perf_counter()
        if full_tune:
            result = tuning_mod.grid_search(
                train_subset, variant, tuning_mod.DEFAULT_GRIDS[variant], folds, seed
            )
            params = result.best_params
            write_json_artifact(
                _out_path(out_dir, f"cv_{variant}.json"),
                "cv_result",
                result.to_dict(),
                seed=seed,
                config={"grid": tuning_mod.DEFAULT_GRIDS[variant], "k": folds},
            )
            _write_csv(out_dir, f"cv_{variant}.csv", report_mod.cv_cells_csv(result, seed=seed))
            cv_mean = result.best_mean_score
        else:
            params = tuning_mod.default_params(variant)
            cv_scores = tuning_mod.cross_val_score(train_subset, variant, params, folds, seed)
            cv_mean = float(np.mean(cv_scores))
        timings[f"cv_{variant}"] = time.perf_counter() - stage_start

        model, train_r2, fit_seconds = _train_one(
            derived, split, scaler, variant, params, seed, out_dir, jobs
        )
        timings[f"fit_{variant}"] = fit_seconds
        models[variant] = (model, params)
        report = _evaluate_one(model, variant, derived, split, scaler, seed, out_dir)
        metrics_reports.append(report)
        cv_entries.append(
            {
                "model": VARIANT_NAMES[variant],
                "train_r2": train_r2,
                "cv_r2": cv_mean,
                "best_params": params,
            }
        )
        improvement_inputs.append((VARIANT_NAMES[variant], train_r2, cv_mean, report.r_squared))

        stage_start = time.perf_counter()
        curve = tuning_mod.learning_curve(
            train_subset, variant, params, LEARNING_FRACTIONS, folds, seed
        )
        _write_csv(out_dir, f"learning_curve_{variant}.csv",
                   report_mod.learning_curve_csv(curve, seed=seed))
        _write_svg(
            out_dir,
            f"learning_curve_{variant}.svg",
            report_mod.render(
                report_mod.FigureSpec("learning_curve",
                                      f"{VARIANT_NAMES[variant]} learning curve",
                                      "training rows", "R^2"),
                {"n_rows": curve.n_rows, "train": curve.train_scores, "val": curve.val_scores},
                _svg_meta(seed, {"figure": "learning_curve", "variant": variant}),
            ),
        )
        timings[f"learning_curve_{variant}"] = time.perf_counter() - stage_start

    _write_csv(out_dir, "test_metrics.csv",
               report_mod.metrics_table_csv(metrics_reports, seed=seed))
    _write_csv(out_dir, "cv_overview.csv", report_mod.cv_table_csv(cv_entries, seed=seed))
    rows = tuning_mod.improvement_table(improvement_inputs)
    _write_csv(out_dir, "improvement.csv", report_mod.improvement_csv(rows, seed=seed))

    explain_ids, background_ids = _choose_rows(
        derived, split, explain_rows, background_size, seed
    )
    ice_ids = explain_ids
    if ice_rows is not None and ice_rows < ice_ids.size:
        pick = stream(seed, "ice_rows").choice(ice_ids.size, size=ice_rows, replace=False)
        ice_ids = ice_ids[np.sort(pick)]
    for variant in ("rf", "gbm", "xgb"):
        model, params = models[variant]
        stage_start = time.perf_counter()
        _explain_shap(
            model, variant, derived, scaler,
            derived.X[explain_ids], derived.X[background_ids],
            [int(i) for i in explain_ids], seed, out_dir,
        )
        timings[f"shap_{variant}"] = time.perf_counter() - stage_start
        stage_start = time.perf_counter()
        _explain_ice(
            model, variant, derived, scaler, derived.X[ice_ids],
            [int(i) for i in ice_ids], list(derived.feature_names), grid_points,
            True, False, seed, out_dir,
        )
        timings[f"ice_{variant}"] = time.perf_counter() - stage_start

    timings["total"] = time.perf_counter() - started
    write_json_artifact(
        _out_path(out_dir, "timings.json"),
        "timings",
        {"seconds": timings, "duplicate_groups": len(duplicates)},
        seed=seed,
        config={"command": "reproduce"},
    )
    _write_manifest(out_dir, seed)
    click.echo(f"reproduce finished in {timings['total']:.1f}s -> {out_dir}")


NONDETERMINISTIC_ARTIFACTS = ("timings.json", "run_report_rf.json",
                              "run_report_gbm.json", "run_report_xgb.json")


def _write_manifest(out_dir, seed):
    entries = []
    for name in sorted(os.listdir(out_dir)):
        path = _out_path(out_dir, name)
        if not os.path.isfile(path) or name == "manifest.json":
            continue
        entry = {"name": name}
        if name in NONDETERMINISTIC_ARTIFACTS:
            entry["deterministic"] = False
        else:
            with open(path, "rb") as handle:
                entry["sha256"] = hashlib.sha256(handle.read()).hexdigest()
        entries.append(entry)
    write_json_artifact(
        _out_path(out_dir, "manifest.json"),
        "manifest",
        {"files": entries},
        seed=seed,
        config={"command": "reproduce"},
    )


if __name__ == "__main__":
    main()
