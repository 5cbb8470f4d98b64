"""End-to-end runs of the command-line interface through main()."""

import json

import numpy as np
import numpy.testing as npt
import pytest

from splinecfr.cli import main
from splinecfr.cfr_core import deserialize
from splinecfr.data_io import load_csv, split_out_of_sample
from splinecfr.fileio import csv_text


@pytest.fixture()
def toy_csv(tmp_path):
    """Small two-feature regression table with a strictly increasing target."""
    rng = np.random.default_rng(4)
    n = 40
    x0 = np.linspace(0.0, 4.0, n)
    x1 = rng.uniform(-1.0, 1.0, size=n)
    y = np.sort(3.0 * x0 + np.sin(3.0 * x1) + rng.normal(0.0, 0.05, size=n)) + 5.0
    rows = [(float(a), float(b), float(c)) for a, b, c in zip(x0, x1, y)]
    path = tmp_path / "toy.csv"
    path.write_text(csv_text(["x0", "x1", "y"], rows))
    return str(path)


def read_rows(path):
    lines = path.read_text().strip().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


class TestSynthFitPredict:
    def test_round_trip(self, tmp_path):
        data = tmp_path / "sinc.csv"
        assert main(["synth", "sinc", "--n", "60", "--out", str(data)]) == 0
        header, rows = read_rows(data)
        assert header == ["x", "y"]
        assert len(rows) == 60

        fit_dir = tmp_path / "fitted"
        code = main([
            "fit", "--data", str(data), "--target", "y",
            "--out-dir", str(fit_dir),
            "--max-depth", "1", "--knots", "3", "--norm", "1", "--lambda", "0.1",
        ])
        assert code == 0
        model_path = fit_dir / "model.json"
        model = deserialize(model_path.read_text())
        assert model.depth == 1
        assert len(model.layers) == 2

        log = (fit_dir / "fit_log.txt").read_text()
        assert log.startswith("depth,train_rmse,interior_knots,offset\n")
        assert "fitted_depth,1" in log

        pred_path = tmp_path / "pred.csv"
        code = main([
            "predict", "--model", str(model_path), "--data", str(data),
            "--out", str(pred_path),
        ])
        assert code == 0
        header, rows = read_rows(pred_path)
        assert header == ["row_id", "y_pred", "y_true"]
        assert len(rows) == 60
        ds = load_csv(str(data), "y")
        expected = model.predict(ds.features)
        got = np.array([float(r[1]) for r in rows])
        npt.assert_allclose(got, expected, rtol=0.0, atol=0.0)

    def test_predict_matches_columns_by_name(self, tmp_path, toy_csv):
        fit_dir = tmp_path / "m"
        assert main([
            "fit", "--data", toy_csv, "--target", "y", "--out-dir", str(fit_dir),
            "--max-depth", "1", "--knots", "2",
        ]) == 0
        ds = load_csv(toy_csv, "y")

        # Same table with the columns permuted; predictions must not change.
        shuffled = tmp_path / "shuffled.csv"
        rows = [
            (float(ds.target[i]), float(ds.features[i, 1]), float(ds.features[i, 0]))
            for i in range(ds.n)
        ]
        shuffled.write_text(csv_text(["y", "x1", "x0"], rows))

        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        model = str(fit_dir / "model.json")
        assert main(["predict", "--model", model, "--data", toy_csv, "--out", str(out_a)]) == 0
        assert main(["predict", "--model", model, "--data", str(shuffled), "--out", str(out_b)]) == 0
        assert out_a.read_text() == out_b.read_text()

    def test_predict_warns_on_extra_columns(self, tmp_path, toy_csv, capsys):
        fit_dir = tmp_path / "m"
        assert main([
            "fit", "--data", toy_csv, "--target", "y", "--out-dir", str(fit_dir),
            "--max-depth", "0",
        ]) == 0
        ds = load_csv(toy_csv, "y")
        extra = tmp_path / "extra.csv"
        rows = [
            (float(ds.features[i, 0]), float(ds.features[i, 1]), 1.0)
            for i in range(ds.n)
        ]
        extra.write_text(csv_text(["x0", "x1", "junk"], rows))
        code = main([
            "predict", "--model", str(fit_dir / "model.json"),
            "--data", str(extra), "--out", str(tmp_path / "p.csv"),
        ])
        assert code == 0
        assert "ignoring unknown columns: junk" in capsys.readouterr().err
        header, _ = read_rows(tmp_path / "p.csv")
        assert header == ["row_id", "y_pred"]  # no target column in the table

    def test_predict_names_missing_columns(self, tmp_path, toy_csv, capsys):
        fit_dir = tmp_path / "m"
        assert main([
            "fit", "--data", toy_csv, "--target", "y", "--out-dir", str(fit_dir),
            "--max-depth", "0",
        ]) == 0
        partial = tmp_path / "partial.csv"
        partial.write_text("x0\n1.0\n")
        code = main([
            "predict", "--model", str(fit_dir / "model.json"),
            "--data", str(partial), "--out", str(tmp_path / "p.csv"),
        ])
        assert code == 2
        assert "missing feature columns: x1" in capsys.readouterr().err

    def test_synth_requires_paired_range_flags(self, tmp_path):
        code = main([
            "synth", "gamma", "--n", "10", "--lo", "1.0",
            "--out", str(tmp_path / "g.csv"),
        ])
        assert code == 2


class TestExitCodes:
    def test_missing_data_file(self, capsys):
        assert main(["fit", "--data", "/no/such/file.csv"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_truncated_model_document(self, tmp_path, toy_csv, capsys):
        bad = tmp_path / "model.json"
        bad.write_text('{"format": "spline-cfr-model/1", "norm": 1.0')
        code = main([
            "predict", "--model", str(bad), "--data", toy_csv,
            "--out", str(tmp_path / "p.csv"),
        ])
        assert code == 2
        assert "invalid model document" in capsys.readouterr().err

    def test_no_subcommand_is_a_usage_error(self, capsys):
        assert main([]) == 2
        capsys.readouterr()

    def test_unknown_config_key(self, tmp_path, toy_csv, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("max_depth = 1\nmystery = 3\n")
        code = main([
            "fit", "--data", toy_csv, "--target", "y",
            "--out-dir", str(tmp_path), "--config", str(cfg),
        ])
        assert code == 2
        assert "unknown config keys: mystery" in capsys.readouterr().err


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_win(self, tmp_path, toy_csv):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# fitting defaults\n"
            "max-depth = 3\n"
            "lambda = 0.25\n"
            "knots = 2\n"
        )
        dir_cfg = tmp_path / "from_config"
        assert main([
            "fit", "--data", toy_csv, "--target", "y",
            "--out-dir", str(dir_cfg), "--config", str(cfg),
        ]) == 0
        model = deserialize((dir_cfg / "model.json").read_text())
        assert model.depth == 3

        dir_flag = tmp_path / "flag_wins"
        assert main([
            "fit", "--data", toy_csv, "--target", "y",
            "--out-dir", str(dir_flag), "--config", str(cfg),
            "--max-depth", "1",
        ]) == 0
        model = deserialize((dir_flag / "model.json").read_text())
        assert model.depth == 1


class TestBench:
    BENCH_FLAGS = ["--max-depth", "2", "--knots", "2", "--runs", "3", "--seed", "5"]

    def test_oos_outputs(self, tmp_path, toy_csv, capsys):
        out = tmp_path / "bench"
        code = main([
            "bench", "--data", toy_csv, "--target", "y",
            "--out-dir", str(out), *self.BENCH_FLAGS,
        ])
        assert code == 0
        for name in ("run_reports.csv", "aggregate.csv", "rank_matrix.csv", "timings.csv"):
            assert (out / name).exists()
        assert not (out / "kappa.csv").exists()  # oos has no label agreement

        header, rows = read_rows(out / "run_reports.csv")
        assert header == ["method", "run_id", "seed", "rmse", "mean_relative_error"]
        assert len(rows) == 6  # 2 methods x 3 runs
        assert {r[0] for r in rows} == {"spline_cfr", "ols"}
        assert [r[2] for r in rows if r[0] == "spline_cfr"] == ["5", "6", "7"]

        stdout = capsys.readouterr().out
        assert "spline_cfr: median rmse" in stdout
        assert "ols: median rmse" in stdout

    def test_reports_are_byte_reproducible(self, tmp_path, toy_csv):
        dirs = (tmp_path / "one", tmp_path / "two")
        for d in dirs:
            assert main([
                "bench", "--data", toy_csv, "--target", "y",
                "--out-dir", str(d), *self.BENCH_FLAGS,
            ]) == 0
        for name in ("run_reports.csv", "aggregate.csv", "rank_matrix.csv"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
        # timings.csv records wall clock and is exempt from reproducibility.

    def test_ood_outputs(self, tmp_path, toy_csv):
        out = tmp_path / "bench_ood"
        code = main([
            "bench", "--data", toy_csv, "--target", "y", "--protocol", "ood",
            "--quantile", "0.8", "--out-dir", str(out), *self.BENCH_FLAGS,
        ])
        assert code == 0
        header, rows = read_rows(out / "run_reports.csv")
        assert header[-4:] == ["p_count", "n_count", "beyond_training_max", "threshold"]
        # The high-target pool is floor(0.2 * 40) = 8 rows; each run tests
        # on a seed-chosen half of it.
        for r in rows:
            assert int(r[5]) + int(r[6]) == 4

        kappa_header, kappa_rows = read_rows(out / "kappa.csv")
        assert kappa_header == ["rater_1", "rater_2", "kappa", "agreement"]
        assert len(kappa_rows) == 1  # one built-in pair

    def test_external_predictions_join_the_comparison(self, tmp_path, toy_csv):
        # Build a perfectly aligned external file from the same split logic.
        ds = load_csv(toy_csv, "y")
        rows = []
        for run_id, seed in enumerate((5, 6)):
            split = split_out_of_sample(ds, seed)
            for row_id, y in enumerate(split.test.target):
                rows.append((run_id, row_id, float(y), float(y)))
        ext = tmp_path / "perfect.csv"
        ext.write_text(csv_text(["run_id", "row_id", "y_true", "y_pred"], rows))

        out = tmp_path / "bench_ext"
        code = main([
            "bench", "--data", toy_csv, "--target", "y", "--out-dir", str(out),
            "--runs", "2", "--seed", "5", "--max-depth", "1", "--knots", "2",
            "--predictions", str(ext),
        ])
        assert code == 0
        _, report_rows = read_rows(out / "run_reports.csv")
        perfect = [r for r in report_rows if r[0] == "perfect"]
        assert len(perfect) == 2
        assert all(float(r[3]) == 0.0 for r in perfect)

    def test_misaligned_external_predictions_fail(self, tmp_path, toy_csv, capsys):
        ds = load_csv(toy_csv, "y")
        split = split_out_of_sample(ds, 5)
        rows = [
            (0, row_id, float(y) + 1.0, float(y))  # wrong y_true on purpose
            for row_id, y in enumerate(split.test.target)
        ]
        ext = tmp_path / "skewed.csv"
        ext.write_text(csv_text(["run_id", "row_id", "y_true", "y_pred"], rows))
        code = main([
            "bench", "--data", toy_csv, "--target", "y",
            "--out-dir", str(tmp_path / "x"), "--runs", "1", "--seed", "5",
            "--max-depth", "0", "--predictions", str(ext),
        ])
        assert code == 2
        err = capsys.readouterr().err
        assert "same protocol and seed" in err


class TestReport:
    def write_predictions(self, path, y_pred, y_true=None, run_id=0):
        y_true = y_true if y_true is not None else [10.0, 20.0, 30.0, 40.0]
        rows = [
            (run_id, i, float(t), float(p))
            for i, (t, p) in enumerate(zip(y_true, y_pred))
        ]
        path.write_text(csv_text(["run_id", "row_id", "y_true", "y_pred"], rows))
        return str(path)

    def test_identical_raters_agree_perfectly(self, tmp_path):
        a = self.write_predictions(tmp_path / "alpha.csv", [5.0, 95.0, 50.0, 91.0])
        b = self.write_predictions(tmp_path / "beta.csv", [5.0, 95.0, 50.0, 91.0])
        out = tmp_path / "rep"
        code = main([
            "report", "--predictions", a, b, "--top-k", "2",
            "--out-dir", str(out),
        ])
        assert code == 0
        _, kappa_rows = read_rows(out / "kappa.csv")
        assert kappa_rows == [["alpha", "beta", "1.0", "almost-perfect"]]

        _, pn_rows = read_rows(out / "pn_counts.csv")
        assert pn_rows == [["alpha", "2", "2"], ["beta", "2", "2"]]

        header, topk = read_rows(out / "top_k.csv")
        assert header == ["method", "rank", "row_id", "y_true", "y_pred"]
        assert len(topk) == 4  # two methods, k = 2 each
        assert topk[0][:3] == ["alpha", "1", "1"]  # largest prediction first

    def test_single_method_has_no_pairs(self, tmp_path):
        a = self.write_predictions(tmp_path / "only.csv", [1.0, 2.0, 3.0, 4.0])
        out = tmp_path / "rep"
        assert main(["report", "--predictions", a, "--out-dir", str(out), "--top-k", "1"]) == 0
        assert (out / "kappa.csv").read_text() == "rater_1,rater_2,kappa,agreement\n"

    def test_run_filter(self, tmp_path):
        path = tmp_path / "two_runs.csv"
        rows = [(0, 0, 10.0, 1.0), (0, 1, 20.0, 2.0), (1, 0, 10.0, 7.0), (1, 1, 20.0, 9.0)]
        path.write_text(csv_text(["run_id", "row_id", "y_true", "y_pred"], rows))
        out = tmp_path / "rep"
        assert main([
            "report", "--predictions", str(path), "--run", "1",
            "--top-k", "1", "--out-dir", str(out),
        ]) == 0
        _, topk = read_rows(out / "top_k.csv")
        assert [r[4] for r in topk] == ["9.0"]

    def test_inconsistent_y_true_across_files(self, tmp_path, capsys):
        a = self.write_predictions(tmp_path / "a.csv", [1.0, 2.0, 3.0, 4.0])
        b = self.write_predictions(
            tmp_path / "b.csv", [1.0, 2.0, 3.0, 4.0], y_true=[10.0, 20.0, 30.0, 41.0]
        )
        code = main(["report", "--predictions", a, b, "--out-dir", str(tmp_path / "r")])
        assert code == 2
        assert "inconsistent y_true" in capsys.readouterr().err

    def test_duplicate_method_names(self, tmp_path, capsys):
        sub = tmp_path / "sub"
        sub.mkdir()
        a = self.write_predictions(tmp_path / "same.csv", [1.0, 2.0, 3.0, 4.0])
        b = self.write_predictions(sub / "same.csv", [1.0, 2.0, 3.0, 4.0])
        code = main(["report", "--predictions", a, b, "--out-dir", str(tmp_path / "r")])
        assert code == 2
        assert "duplicate method name" in capsys.readouterr().err
