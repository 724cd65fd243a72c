import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from premex.cli import main

import synth


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workdir(tmp_path, synth_csv, runner):
    """An ingested dataset plus one small trained model of each variant."""
    out = tmp_path / "run"
    result = runner.invoke(main, ["ingest", synth_csv, "--out", str(out)])
    assert result.exit_code == 0, result.output
    dataset = str(out / "dataset.json")
    for variant, extra in (
        ("rf", ["--n-estimators", "15", "--max-depth", "4"]),
        ("gbm", ["--n-estimators", "10"]),
        ("xgb", ["--n-estimators", "10", "--max-depth", "3"]),
    ):
        result = runner.invoke(
            main,
            ["train", dataset, "--model", variant, "--out", str(out), "--seed", "7", *extra],
        )
        assert result.exit_code == 0, result.output
    return out


class TestIngest:
    def test_writes_dataset_and_stats(self, runner, synth_csv, tmp_path):
        out = tmp_path / "ingest"
        result = runner.invoke(main, ["ingest", synth_csv, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "ingested 300 records" in result.output
        document = json.loads((out / "dataset.json").read_text())
        assert len(document["y"]) == 300
        assert len(document["feature_names"]) == 9
        stats_lines = (out / "summary_stats.csv").read_text().strip().splitlines()
        assert len(stats_lines) == 2 + 11  # meta + header + 10 raw inputs + target

    def test_malformed_header_exits_3(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("Age,Banana\n1,2\n")
        result = runner.invoke(main, ["ingest", str(bad), "--out", str(tmp_path / "o")])
        assert result.exit_code == 3
        assert "Banana" in result.output

    def test_missing_file_exits_4(self, runner, tmp_path):
        result = runner.invoke(
            main, ["ingest", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 4

    def test_unwritable_out_exits_4(self, runner, synth_csv, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("i am a file")
        result = runner.invoke(main, ["ingest", synth_csv, "--out", str(blocker / "sub")])
        assert result.exit_code == 4

    def test_validation_failure_exits_3(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(synth.HEADER + "\n18,0,0,0,0,155,57,0,0,0,notanumber\n")
        result = runner.invoke(main, ["ingest", str(bad), "--out", str(tmp_path / "o")])
        assert result.exit_code == 3
        assert "PremiumPrice" in result.output


class TestTrain:
    def test_same_command_twice_identical_bytes(self, runner, synth_csv, tmp_path):
        out = tmp_path / "t"
        runner.invoke(main, ["ingest", synth_csv, "--out", str(out)])
        dataset = str(out / "dataset.json")
        args = ["train", dataset, "--model", "gbm", "--out", str(out),
                "--seed", "3", "--n-estimators", "8"]
        assert runner.invoke(main, args).exit_code == 0
        first = (out / "model_gbm.json").read_bytes()
        assert runner.invoke(main, args).exit_code == 0
        assert (out / "model_gbm.json").read_bytes() == first

    def test_defaults_are_published_best_params(self, workdir):
        report = json.loads((workdir / "run_report_gbm.json").read_text())
        assert report["params"]["learning_rate"] == 0.19
        report = json.loads((workdir / "run_report_xgb.json").read_text())
        assert report["params"]["subsample"] == 0.9
        assert report["params"]["gamma"] == 0.0

    def test_run_report_has_wall_time_and_seed(self, workdir):
        report = json.loads((workdir / "run_report_rf.json").read_text())
        assert report["fit_seconds"] > 0.0
        assert report["seed"] == 7
        assert "config_hash" in report

    def test_unknown_flag_exits_2(self, runner, workdir):
        result = runner.invoke(
            main,
            ["train", str(workdir / "dataset.json"), "--model", "rf",
             "--out", str(workdir), "--frobnicate", "9"],
        )
        assert result.exit_code == 2

    def test_inapplicable_flag_rejected(self, runner, workdir):
        result = runner.invoke(
            main,
            ["train", str(workdir / "dataset.json"), "--model", "rf",
             "--out", str(workdir), "--learning-rate", "0.5"],
        )
        assert result.exit_code == 2
        assert "does not apply" in result.output


class TestTune:
    def test_single_cell_grid(self, runner, workdir, tmp_path):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"n_estimators": [6], "max_depth": [2]}))
        result = runner.invoke(
            main,
            ["tune", str(workdir / "dataset.json"), "--model", "gbm",
             "--grid", str(grid), "--folds", "3", "--out", str(workdir)],
        )
        assert result.exit_code == 0, result.output
        document = json.loads((workdir / "cv_gbm.json").read_text())
        assert document["best_params"] == {"n_estimators": 6, "max_depth": 2}
        assert len(document["cells"]) == 1

    def test_missing_grid_file(self, runner, workdir, tmp_path):
        result = runner.invoke(
            main,
            ["tune", str(workdir / "dataset.json"), "--model", "gbm",
             "--grid", str(tmp_path / "none.json"), "--out", str(workdir)],
        )
        assert result.exit_code == 4


class TestEvaluate:
    def test_metrics_artifacts(self, runner, workdir):
        result = runner.invoke(
            main,
            ["evaluate", str(workdir / "model_rf.json"), str(workdir / "dataset.json"),
             "--split", str(workdir / "split.json"),
             "--scaler", str(workdir / "scaler.json"), "--out", str(workdir)],
        )
        assert result.exit_code == 0, result.output
        metrics = json.loads((workdir / "metrics_rf.json").read_text())
        assert metrics["n"] == 75  # 25% of 300
        assert metrics["rmse"] >= metrics["mae"]
        for name in ("residual_scatter_rf.svg", "qq_rf.svg", "prediction_error_rf.svg",
                     "metrics_rf.csv"):
            assert (workdir / name).exists()

    def test_perfect_model_scores_one(self, runner, tmp_path):
        # every feature is an exact function of a 10-valued age, so rows
        # repeat and an unbounded single-stage fit generalizes exactly
        rng = np.random.default_rng(0)
        ages = rng.integers(1, 11, 200) * 5
        rows = []
        for a in ages:
            rows.append(
                f"{a},{a % 2},{(a // 5) % 2},{(a // 10) % 2},{(a // 15) % 2},"
                f"{150 + a % 20},{50 + a % 25},{(a // 20) % 2},{(a // 25) % 2},"
                f"{(a // 5) % 4},{1000 * (a // 5)}"
            )
        csv_path = tmp_path / "exact.csv"
        csv_path.write_text(synth.HEADER + "\n" + "\n".join(rows) + "\n")
        out = tmp_path / "o"
        assert runner.invoke(main, ["ingest", str(csv_path), "--out", str(out)]).exit_code == 0
        assert runner.invoke(main, [
            "train", str(out / "dataset.json"), "--model", "gbm", "--out", str(out),
            "--n-estimators", "1", "--learning-rate", "1.0", "--max-depth", "20",
        ]).exit_code == 0
        result = runner.invoke(main, [
            "evaluate", str(out / "model_gbm.json"), str(out / "dataset.json"),
            "--split", str(out / "split.json"), "--scaler", str(out / "scaler.json"),
            "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        metrics = json.loads((out / "metrics_gbm.json").read_text())
        assert metrics["r_squared"] == pytest.approx(1.0, abs=1e-12)
        assert metrics["mae"] == pytest.approx(0.0, abs=1e-9)

    def test_dimension_mismatch_exits_3(self, runner, workdir, tmp_path):
        narrow = {
            "kind": "dataset",
            "meta": {"format_version": 1, "seed": 0, "config_hash": "x"},
            "feature_names": ["a", "b"],
            "X": [[1.0, 2.0], [2.0, 1.0], [0.0, 1.0], [1.0, 0.0]],
            "y": [1.0, 2.0, 3.0, 4.0],
        }
        path = tmp_path / "narrow.json"
        path.write_text(json.dumps(narrow))
        result = runner.invoke(
            main,
            ["evaluate", str(workdir / "model_rf.json"), str(path),
             "--split", str(workdir / "split.json"),
             "--scaler", str(workdir / "scaler.json"), "--out", str(workdir)],
        )
        assert result.exit_code == 3


class TestExplain:
    def test_shap_outputs(self, runner, workdir):
        result = runner.invoke(
            main,
            ["explain", str(workdir / "model_gbm.json"), str(workdir / "dataset.json"),
             "--scaler", str(workdir / "scaler.json"),
             "--split", str(workdir / "split.json"),
             "--mode", "shap", "--rows", "6", "--background-size", "25",
             "--out", str(workdir)],
        )
        assert result.exit_code == 0, result.output
        lines = (workdir / "shap_values_gbm.csv").read_text().strip().splitlines()
        assert len(lines) == 2 + 6
        assert (workdir / "beeswarm_gbm.svg").exists()
        assert (workdir / "importance_gbm.svg").exists()
        assert (workdir / "shap_importance_gbm.csv").exists()

    def test_shap_efficiency_from_csv(self, runner, workdir):
        runner.invoke(
            main,
            ["explain", str(workdir / "model_gbm.json"), str(workdir / "dataset.json"),
             "--scaler", str(workdir / "scaler.json"),
             "--split", str(workdir / "split.json"),
             "--mode", "shap", "--rows", "4", "--background-size", "20",
             "--out", str(workdir)],
        )
        import premex.data as data_mod
        import premex.ensemble as ensemble_mod

        dataset = data_mod.dataset_from_json(str(workdir / "dataset.json"))
        scaler = data_mod.scaler_from_json(str(workdir / "scaler.json"))
        model = ensemble_mod.load_model(str(workdir / "model_gbm.json"))
        lines = (workdir / "shap_values_gbm.csv").read_text().strip().splitlines()[2:]
        for line in lines:
            cells = line.split(",")
            row_id = int(cells[0])
            phi = np.array([float(v) for v in cells[1:-1]])
            base = float(cells[-1])
            scaled = (dataset.X[row_id] - scaler.mean) / scaler.std
            prediction = model.predict(scaled[None, :])[0]
            assert base + phi.sum() == pytest.approx(prediction, abs=1e-4)

    def test_centered_ice_anchors_at_minimum(self, runner, workdir):
        result = runner.invoke(
            main,
            ["explain", str(workdir / "model_rf.json"), str(workdir / "dataset.json"),
             "--scaler", str(workdir / "scaler.json"),
             "--mode", "ice", "--feature", "Age", "--centered", "--rows", "10",
             "--out", str(workdir)],
        )
        assert result.exit_code == 0, result.output
        lines = (workdir / "ice_rf.csv").read_text().strip().splitlines()[2:]
        centered = [line.split(",") for line in lines if line.split(",")[1] == "centered"]
        assert centered
        grid_min = min(float(c[3]) for c in centered)
        for cells in centered:
            if float(cells[3]) == grid_min:
                assert float(cells[4]) == 0.0

    def test_constant_model_zero_shap(self, runner, workdir):
        out = workdir
        assert runner.invoke(main, [
            "train", str(out / "dataset.json"), "--model", "gbm", "--out", str(out),
            "--n-estimators", "0", "--seed", "1",
        ]).exit_code == 0
        result = runner.invoke(
            main,
            ["explain", str(out / "model_gbm.json"), str(out / "dataset.json"),
             "--scaler", str(out / "scaler.json"),
             "--mode", "shap", "--rows", "3", "--background-size", "10",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        lines = (out / "shap_values_gbm.csv").read_text().strip().splitlines()[2:]
        for line in lines:
            phi = [float(v) for v in line.split(",")[1:-1]]
            assert all(v == 0.0 for v in phi)


class TestConfigFile:
    def test_config_supplies_defaults(self, runner, synth_csv, tmp_path):
        out = tmp_path / "cfg_out"
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"ingest": {"out": str(out), "seed": 9}}))
        result = runner.invoke(main, ["--config", str(config), "ingest", synth_csv])
        assert result.exit_code == 0, result.output
        assert (out / "dataset.json").exists()

    def test_bad_config_rejected(self, runner, synth_csv, tmp_path):
        config = tmp_path / "config.json"
        config.write_text("[1,2,3]")
        result = runner.invoke(main, ["--config", str(config), "ingest", synth_csv])
        assert result.exit_code == 2


class TestReproduceSmoke:
    def test_missing_csv_clean_error(self, runner, tmp_path):
        result = runner.invoke(
            main, ["reproduce", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 4
        assert "error" in result.output
