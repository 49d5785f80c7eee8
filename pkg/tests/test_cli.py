"""End-to-end CLI behavior: exit codes, summaries, pipeline identity."""

import csv
import io
import json

import numpy as np
import pytest

from cbquant import cli, core, grouping, tensorio


@pytest.fixture
def golden_bundle(tmp_path):
    path = tmp_path / "bundle.json"
    tensorio.write_bundle(path, {"w": np.array([0.0, 0.5, 1.0, 1.5], np.float32)})
    return path


@pytest.fixture
def gaussian_bundle(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "model.json"
    tensorio.write_bundle(path, {
        "layer.0.weight": rng.normal(size=(24, 16)).astype(np.float32),
        "layer.1.weight": rng.normal(size=(8, 24)).astype(np.float32),
        "classifier.weight": rng.normal(size=(2, 8)).astype(np.float32),
    })
    return path


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestQuantizeCommand:
    def test_golden_bundle_linear_one_bit(self, golden_bundle, tmp_path, capsys):
        out = tmp_path / "q"
        code, text = run_cli(capsys, "quantize", str(golden_bundle), "-o", str(out),
                             "--scheme", "linear", "--bits", "1", "--format", "csv")
        assert code == 0
        rows = read_csv(text)
        assert rows[0]["tensor"] == "w"
        assert float(rows[0]["mse"]) == pytest.approx(0.0625, abs=1e-9)
        assert (out / "manifest.json").exists()

    def test_bits_out_of_range_is_usage_error(self, golden_bundle, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["quantize", str(golden_bundle), "-o", str(tmp_path / "q"),
                      "--bits", "9"])
        assert exc.value.code == 2

    def test_group_count_lands_in_header(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        bundle = tmp_path / "big.json"
        tensorio.write_bundle(bundle, {"w": rng.normal(size=(768, 768)).astype(np.float32)})
        out = tmp_path / "q"
        code, _ = run_cli(capsys, "quantize", str(bundle), "-o", str(out),
                          "--scheme", "linear", "--bits", "2", "--groups", "128")
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        blob = (out / manifest["tensors"][0]["file"]).read_bytes()
        g = tensorio.read_cbq(blob)
        assert g.cfg.group_count == 128
        assert len(g.groups) == 128

    def test_exclusion_pattern_passes_tensor_through(self, gaussian_bundle, tmp_path, capsys):
        out = tmp_path / "q"
        code, text = run_cli(capsys, "quantize", str(gaussian_bundle), "-o", str(out),
                             "--scheme", "linear", "--bits", "2",
                             "--exclude", "classifier", "--format", "csv")
        assert code == 0
        rows = {r["tensor"]: r for r in read_csv(text)}
        assert rows["classifier.weight"]["status"] == "excluded"
        assert rows["layer.0.weight"]["status"] == "quantized"

    def test_missing_bundle_is_data_error(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "quantize", str(tmp_path / "nope.json"),
                          "-o", str(tmp_path / "q"), "--bits", "2")
        assert code == 3

    def test_empty_bundle_is_data_error(self, tmp_path, capsys):
        bundle = tmp_path / "empty.json"
        tensorio.write_bundle(bundle, {})
        code, _ = run_cli(capsys, "quantize", str(bundle), "-o", str(tmp_path / "q"),
                          "--bits", "2")
        assert code == 3
        assert not (tmp_path / "q").exists()

    def test_nan_tensor_is_data_error_and_leaves_no_output(self, tmp_path, capsys):
        bundle = tmp_path / "nan.json"
        tensorio.write_bundle(bundle, {"w": np.array([1.0, np.nan], np.float32)})
        out = tmp_path / "q"
        code, _ = run_cli(capsys, "quantize", str(bundle), "-o", str(out), "--bits", "2")
        assert code == 3
        assert not out.exists()


class TestPipelineIdentity:
    def test_cli_reconstruction_matches_library_path(self, gaussian_bundle, tmp_path, capsys):
        out = tmp_path / "q"
        rebuilt = tmp_path / "rebuilt.json"
        assert run_cli(capsys, "quantize", str(gaussian_bundle), "-o", str(out),
                       "--scheme", "kmeans", "--bits", "3", "--groups", "2",
                       "--seed", "11")[0] == 0
        assert run_cli(capsys, "reconstruct", str(out), "-o", str(rebuilt))[0] == 0

        cfg = core.QuantConfig(scheme=core.Scheme.KMEANS, bits=3, group_count=2, seed=11)
        source = tensorio.read_bundle(gaussian_bundle)
        via_cli = tensorio.read_bundle(rebuilt)
        for name, tensor in source.items():
            expected = grouping.reconstruct_grouped(
                grouping.quantize_grouped(tensor, cfg, tensor_name=name))
            np.testing.assert_array_equal(via_cli[name], expected)

    def test_stats_on_identical_bundles_reports_zero(self, gaussian_bundle, capsys):
        code, text = run_cli(capsys, "stats", str(gaussian_bundle), str(gaussian_bundle),
                             "--format", "csv")
        assert code == 0
        for row in read_csv(text):
            assert float(row["sse"]) == 0.0
            assert float(row["max_abs_error"]) == 0.0

    def test_stats_with_mismatched_names_is_data_error(self, gaussian_bundle,
                                                       golden_bundle, capsys):
        code, _ = run_cli(capsys, "stats", str(gaussian_bundle), str(golden_bundle))
        assert code == 3

    def test_reconstruct_rejects_broken_manifest(self, tmp_path, capsys):
        qdir = tmp_path / "q"
        qdir.mkdir()
        (qdir / "manifest.json").write_text(
            json.dumps({"format": "cbq-bundle", "version": 1,
                        "tensors": [{"name": "w", "kind": "cbq"}]}))
        code, _ = run_cli(capsys, "reconstruct", str(qdir),
                          "-o", str(tmp_path / "out.json"))
        assert code == 3


class TestSweepCommand:
    def test_single_cell_report(self, golden_bundle, capsys):
        code, text = run_cli(capsys, "sweep", str(golden_bundle), "--bits", "1",
                             "--schemes", "linear", "--seeds", "0", "--format", "csv")
        assert code == 0
        rows = read_csv(text)
        assert len(rows) == 1
        assert rows[0]["scheme"] == "linear"
        assert float(rows[0]["mse"]) == pytest.approx(0.0625, abs=1e-9)

    def test_empty_bits_list_is_usage_error(self, golden_bundle):
        with pytest.raises(SystemExit) as exc:
            cli.main(["sweep", str(golden_bundle), "--bits"])
        assert exc.value.code == 2

    def test_rows_are_stable_ordered(self, gaussian_bundle, capsys):
        code, text = run_cli(capsys, "sweep", str(gaussian_bundle),
                             "--bits", "2", "1", "--seeds", "1", "0", "--format", "csv")
        assert code == 0
        keys = [(r["scheme"], int(r["bits"]), int(r["seed"])) for r in read_csv(text)]
        assert keys == sorted(keys)


class TestTrainToyCommand:
    def test_writes_curve_records(self, tmp_path, capsys):
        curves = tmp_path / "curves.csv"
        code, text = run_cli(capsys, "train-toy", "--bits", "2", "--epochs", "3",
                             "--pretrain-epochs", "10", "--curves", str(curves),
                             "--format", "csv")
        assert code == 0
        lines = curves.read_text().splitlines()
        assert len(lines) == 8
        first = lines[0].split(",")
        assert len(first) == 5
        assert first[1] in ("linear", "kmeans")


class TestBenchGroupsCommand:
    def test_reports_rows_per_group_count(self, capsys):
        code, text = run_cli(capsys, "bench-groups", "--rows", "32", "--cols", "64",
                             "--groups", "1", "4", "--repeats", "2", "--format", "csv")
        assert code == 0
        rows = read_csv(text)
        assert [int(r["groups"]) for r in rows] == [1, 4]
        assert all(float(r["reconstruct_seconds"]) > 0 for r in rows)
