import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from cartoboost.cli import main, read_config_file
from cartoboost import detection as det
from cartoboost.data_io import load_dataset, read_report


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture
def workdir(tmp_path):
    cwd = os.getcwd()
    os.chdir(tmp_path)
    yield tmp_path
    os.chdir(cwd)


@pytest.fixture
def small_dataset(runner, workdir):
    run_ok(runner, ["generate", "binary", "--n", "600", "--seed", "7",
                    "--out", "data/bin"])
    return "data/bin"


class TestGenerate:
    def test_writes_files_and_summary(self, runner, workdir):
        result = run_ok(runner, ["generate", "binary", "--n", "500", "--seed", "1",
                                 "--out", "d/bin"])
        assert "500 x 2, 2 classes" in result.output
        assert (workdir / "d/bin.csv").exists()
        assert (workdir / "d/bin.meta.json").exists()
        assert (workdir / "d/bin.manifest.json").exists()

    def test_byte_identical_reruns(self, runner, workdir):
        run_ok(runner, ["generate", "binary", "--n", "300", "--seed", "2", "--out", "a"])
        first = (workdir / "a.csv").read_bytes()
        run_ok(runner, ["generate", "binary", "--n", "300", "--seed", "2", "--out", "a"])
        assert (workdir / "a.csv").read_bytes() == first

    def test_too_small_is_usage_error(self, runner, workdir):
        result = runner.invoke(main, ["generate", "binary", "--n", "10", "--out", "x"])
        assert result.exit_code == 2
        assert "too small" in result.output

    def test_multiclass(self, runner, workdir):
        result = run_ok(runner, ["generate", "multiclass", "--n", "800", "--seed", "3",
                                 "--out", "m"])
        assert "4 classes" in result.output


class TestInject:
    def test_ncar_count_message(self, runner, workdir, small_dataset):
        result = run_ok(runner, ["inject", "--data", small_dataset, "--noise", "ncar",
                                 "--rate", "0.1", "--seed", "4", "--out", "noisy"])
        assert "60 labels corrupted" in result.output
        ds = load_dataset("noisy")
        assert ds.noise_mask.sum() == 60

    def test_nnar_even_count(self, runner, workdir, small_dataset):
        result = run_ok(runner, ["inject", "--data", small_dataset, "--noise", "nnar",
                                 "--rate", "0.2", "--k", "10", "--p", "0.5",
                                 "--seed", "4", "--out", "nn"])
        ds = load_dataset("nn")
        count = int(ds.noise_mask.sum())
        assert count % 2 == 0
        assert abs(count - 120) <= 1

    def test_bad_rate_exit_2(self, runner, workdir, small_dataset):
        result = runner.invoke(main, ["inject", "--data", small_dataset, "--noise",
                                      "ncar", "--rate", "0.7", "--out", "x"])
        assert result.exit_code == 2

    def test_missing_input_exit_1(self, runner, workdir):
        result = runner.invoke(main, ["inject", "--data", "nope", "--noise", "ncar",
                                      "--rate", "0.1", "--out", "x"])
        assert result.exit_code == 1


class TestTrainMapDetectClean:
    @pytest.fixture
    def pipeline(self, runner, workdir, small_dataset):
        run_ok(runner, ["inject", "--data", small_dataset, "--noise", "ncar",
                        "--rate", "0.1", "--seed", "5", "--out", "noisy"])
        run_ok(runner, ["train", "--data", "noisy", "-t", "40",
                        "--max-depth", "4", "--out", "model.json"])
        return "noisy"

    def test_train_then_map(self, runner, workdir, pipeline):
        run_ok(runner, ["map", "--data", pipeline, "--model", "model.json",
                        "--out", "report.json"])
        report = read_report("report.json")
        assert len(report.points) == 600
        assert report.num_iterations == 40

    def test_detect_weights_auto_and_clean(self, runner, workdir, pipeline):
        result = run_ok(runner, ["detect", "--data", pipeline, "--method", "weights",
                                 "--threshold", "auto", "-t", "60",
                                 "--learning-rate", "1.0", "--max-depth", "5",
                                 "--rounds", "5", "--out", "flags"])
        assert "flagged" in result.output
        ids, scores, flags = det.load_flags("flags.flags.csv")
        assert len(ids) == 600
        assert (workdir / "flags.weights.csv").exists()

        before = load_dataset(pipeline)
        run_ok(runner, ["clean", "--data", pipeline, "--flags", "flags.flags.csv",
                        "--out", "cleaned"])
        after = load_dataset("cleaned")
        assert after.n == before.n - int(flags.sum())
        # surviving CSV lines byte-identical
        full_lines = (workdir / "noisy.csv").read_text().splitlines()
        kept_lines = (workdir / "cleaned.csv").read_text().splitlines()
        assert set(kept_lines[1:]).issubset(set(full_lines[1:]))

    def test_detect_auto_equals_explicit_threshold(self, runner, workdir, pipeline):
        run_ok(runner, ["map", "--data", pipeline, "--model", "model.json",
                        "--out", "report.json"])
        run_ok(runner, ["detect", "--from-report", "report.json", "--method",
                        "product", "--threshold", "auto", "--out", "auto_flags"])
        header = json.loads((workdir / "auto_flags.flags.json").read_text())
        value = header["threshold"]
        run_ok(runner, ["detect", "--from-report", "report.json", "--method",
                        "product", "--threshold", str(value), "--out", "explicit"])
        assert (workdir / "auto_flags.flags.csv").read_bytes() == \
               (workdir / "explicit.flags.csv").read_bytes()

    def test_detect_product_needs_model(self, runner, workdir, pipeline):
        result = runner.invoke(main, ["detect", "--data", pipeline, "--method",
                                      "product", "--out", "x"])
        assert result.exit_code == 1
        assert "needs --model" in result.output

    def test_detect_heuristics(self, runner, workdir, pipeline):
        for method in ("low_probability", "short_confidence", "long_confidence"):
            run_ok(runner, ["detect", "--data", pipeline, "--method", method,
                            "--model", "model.json", "--out", f"h_{method}"])
            assert (workdir / f"h_{method}.flags.csv").exists()

    def test_detect_requires_one_source(self, runner, workdir, pipeline):
        result = runner.invoke(main, ["detect", "--method", "product", "--out", "x"])
        assert result.exit_code == 2

    def test_detect_validation_threshold(self, runner, workdir, pipeline):
        run_ok(runner, ["generate", "binary", "--n", "300", "--seed", "21",
                        "--out", "val"])
        result = run_ok(runner, ["detect", "--data", pipeline, "--method", "weights",
                                 "--threshold", "validation", "--validation", "val",
                                 "-t", "40", "--learning-rate", "1.0",
                                 "--max-depth", "4", "--rounds", "3", "--out", "vt"])
        header = json.loads((workdir / "vt.flags.json").read_text())
        assert 0.0 <= header["threshold"] <= 1.0

    def test_train_with_weights_file(self, runner, workdir, pipeline):
        run_ok(runner, ["detect", "--data", pipeline, "--method", "weights",
                        "-t", "40", "--learning-rate", "1.0", "--rounds", "3",
                        "--out", "wf"])
        run_ok(runner, ["train", "--data", pipeline, "--weights", "wf.weights.csv",
                        "-t", "20", "--out", "weighted_model.json"])
        assert (workdir / "weighted_model.json").exists()


class TestManifest:
    def test_manifest_replays_byte_identical(self, runner, workdir):
        run_ok(runner, ["generate", "binary", "--n", "400", "--seed", "9",
                        "--out", "first"])
        manifest = json.loads((workdir / "first.manifest.json").read_text())
        original = (workdir / "first.csv").read_bytes()
        (workdir / "first.csv").unlink()
        rerun = CliRunner().invoke(main, manifest["argv"], catch_exceptions=False)
        assert rerun.exit_code == 0
        assert (workdir / "first.csv").read_bytes() == original

    def test_manifest_records_options_and_outputs(self, runner, workdir, small_dataset):
        manifest = json.loads((workdir / "data/bin.manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert manifest["options"]["n"] == 600
        assert manifest["outputs"] == ["data/bin.csv", "data/bin.meta.json"]
        assert manifest["version"]


class TestEvaluate:
    def test_config_driven_sweep(self, runner, workdir):
        (workdir / "exp.cfg").write_text(
            "dataset=binary\nn=800\nnoise=ncar\nrates=0.1\n"
            "methods=low_probability\nseed=3\nbudget=1\nout_dir=exp\n"
        )
        result = run_ok(runner, ["evaluate", "--config", "exp.cfg"])
        assert "baseline f1=" in result.output
        assert (workdir / "exp/summary.csv").exists()
        assert (workdir / "exp/summary.json").exists()
        assert (workdir / "exp/ncar_0.1/report.json").exists()

    def test_config_file_parser(self, workdir):
        (workdir / "c.cfg").write_text("# comment\nkey = value\n\nother=1\n")
        assert read_config_file("c.cfg") == {"key": "value", "other": "1"}

    def test_nnar_sweep_completes(self, runner, workdir):
        (workdir / "nn.cfg").write_text(
            "dataset=binary\nn=1000\nnoise=nnar\nrates=0.1\n"
            "methods=weight_threshold\nseed=4\nbudget=1\nrounds=3\nout_dir=nn\n"
        )
        result = run_ok(runner, ["evaluate", "--config", "nn.cfg"])
        assert (workdir / "nn/nnar_0.1/report.json").exists()
        assert "weight_threshold" in result.output


class TestEndToEndPipeline:
    def test_full_pipeline_smoke(self, runner, workdir):
        run_ok(runner, ["generate", "binary", "--n", "600", "--seed", "11",
                        "--out", "p/data"])
        run_ok(runner, ["inject", "--data", "p/data", "--noise", "ncar",
                        "--rate", "0.1", "--seed", "2", "--out", "p/noisy"])
        run_ok(runner, ["detect", "--data", "p/noisy", "--method", "weights",
                        "--threshold", "auto", "-t", "60", "--learning-rate", "1.0",
                        "--max-depth", "5", "--rounds", "5", "--out", "p/flags"])
        run_ok(runner, ["clean", "--data", "p/noisy", "--flags", "p/flags.flags.csv",
                        "--out", "p/clean"])
        run_ok(runner, ["train", "--data", "p/clean", "-t", "40", "--out", "p/model.json"])
        run_ok(runner, ["map", "--data", "p/clean", "--model", "p/model.json",
                        "--out", "p/report.json"])
        report = read_report("p/report.json")
        cleaned = load_dataset("p/clean")
        assert len(report.points) == cleaned.n
