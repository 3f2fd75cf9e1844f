import json

import numpy as np
import pytest
from click.testing import CliRunner

from modalbench.cli import cli_errors, main
from modalbench.errors import InvalidArgumentError, SolverError
from modalbench.modal_render import AudioBuffer, write_wav


@pytest.fixture
def runner():
    return CliRunner()


def make_target_wav(path, n=1024, fs=32000):
    t = np.arange(n) / fs
    s = np.exp(-20 * t) * np.sin(2 * np.pi * 700 * t) + 0.5 * np.exp(-35 * t) * np.sin(
        2 * np.pi * 1900 * t
    )
    write_wav(path, AudioBuffer(s / np.abs(s).max(), fs))


SPECTRAL_16 = {"spectral": {"n_samples": 1024, "n_mels": 16}}


class TestGenShapes:
    def test_writes_files_deterministically(self, runner, tmp_path):
        args = ["gen-shapes", "--count", "3", "--out", str(tmp_path / "a"), "--seed", "9", "--json"]
        r1 = runner.invoke(main, args)
        assert r1.exit_code == 0, r1.output
        doc = json.loads(r1.output)
        assert len(doc["paths"]) == 3
        r2 = runner.invoke(main, ["gen-shapes", "--count", "3", "--out", str(tmp_path / "b"),
                                  "--seed", "9"])
        assert r2.exit_code == 0
        for i in range(3):
            a = (tmp_path / "a" / f"shape_{i:03d}.json").read_text()
            b = (tmp_path / "b" / f"shape_{i:03d}.json").read_text()
            assert a == b


class TestGenDataset:
    def test_build_and_counts(self, runner, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "dataset": {"tri_range": [30, 50], "n_modes": 6},
            "spectral": {"n_samples": 1024, "n_mels": 16},
        }))
        r = runner.invoke(main, [
            "gen-dataset", "--out", str(tmp_path / "ds"), "--shapes", "2", "--materials", "1",
            "--positions", "2", "--seed", "4", "--config", str(config), "--json",
        ])
        assert r.exit_code == 0, r.output
        doc = json.loads(r.output)
        assert doc["counts"]["samples"] + doc["counts"]["skipped"] * 2 == 4
        assert (tmp_path / "ds" / "manifest.json").exists()


class TestFitRender:
    def test_fit_then_render(self, runner, tmp_path):
        wav = tmp_path / "target.wav"
        make_target_wav(wav)
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps(SPECTRAL_16))
        r = runner.invoke(main, [
            "fit", "--target", str(wav), "--topology", "4x1", "--steps", "40",
            "--seed", "3", "--out", str(tmp_path / "params.json"),
            "--history", str(tmp_path / "hist.csv"), "--config", str(config), "--json",
        ])
        assert r.exit_code == 0, r.output
        doc = json.loads(r.output)
        assert doc["best_loss"] > 0 and doc["steps"] == 40
        params = json.loads((tmp_path / "params.json").read_text())
        assert len(params["sections"]) == 4
        assert params["raw"]["L"] == 4
        hist = (tmp_path / "hist.csv").read_text().splitlines()
        assert hist[0] == "step,loss,lr"
        assert len(hist) == 41

        r2 = runner.invoke(main, [
            "render", "--params", str(tmp_path / "params.json"),
            "--out", str(tmp_path / "y.wav"), "--json",
        ])
        assert r2.exit_code == 0, r2.output
        assert (tmp_path / "y.wav").exists()

    def test_fit_deterministic_rerun(self, runner, tmp_path):
        wav = tmp_path / "target.wav"
        make_target_wav(wav)
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps(SPECTRAL_16))
        outs = []
        for name in ("p1.json", "p2.json"):
            r = runner.invoke(main, [
                "fit", "--target", str(wav), "--topology", "2x1", "--steps", "25",
                "--seed", "8", "--out", str(tmp_path / name), "--config", str(config),
            ])
            assert r.exit_code == 0, r.output
            outs.append((tmp_path / name).read_text())
        assert outs[0] == outs[1]

    def test_bad_topology_exits_2(self, runner, tmp_path):
        wav = tmp_path / "target.wav"
        make_target_wav(wav)
        r = runner.invoke(main, [
            "fit", "--target", str(wav), "--topology", "nope", "--out", str(tmp_path / "p.json"),
        ])
        assert r.exit_code == 2

    def test_wrong_length_exits_2(self, runner, tmp_path):
        wav = tmp_path / "target.wav"
        make_target_wav(wav, n=1000)  # not a power of two
        r = runner.invoke(main, [
            "fit", "--target", str(wav), "--out", str(tmp_path / "p.json"),
        ])
        assert r.exit_code == 2


class TestTrainEvalBench:
    def test_train_eval_on_shared_dataset(self, runner, shared_dataset, tmp_path):
        r = runner.invoke(main, [
            "train", "--dataset", str(shared_dataset.root), "--topology", "2x1",
            "--steps", "4", "--batch", "8", "--seed", "1",
            "--out", str(tmp_path / "ckpt.bin"), "--json",
        ])
        assert r.exit_code == 0, r.output
        doc = json.loads(r.output)
        assert doc["steps"] == 4 and doc["baseline_val"] > 0
        assert (tmp_path / "ckpt.bin").exists()

        r2 = runner.invoke(main, [
            "eval", "--dataset", str(shared_dataset.root), "--topologies", "2x1",
            "--source", "predictor", "--samples", "3",
            "--checkpoint", str(tmp_path / "ckpt.bin"), "--json",
        ])
        assert r2.exit_code == 0, r2.output
        reports = json.loads(r2.output)["reports"]
        assert reports[0]["topology"] == "2x1" and reports[0]["n_samples"] == 3

    def test_eval_fit_source(self, runner, shared_dataset, tmp_path):
        r = runner.invoke(main, [
            "eval", "--dataset", str(shared_dataset.root), "--topologies", "4x1,2x2",
            "--samples", "2", "--steps", "10", "--out", str(tmp_path / "report.json"), "--json",
        ])
        assert r.exit_code == 0, r.output
        reports = json.loads((tmp_path / "report.json").read_text())["reports"]
        assert [rep["topology"] for rep in reports] == ["4x1", "2x2"]

    def test_bench(self, runner, tmp_path):
        r = runner.invoke(main, [
            "bench", "--vertices", "40", "--reps", "1", "--positions", "4", "--json",
        ])
        assert r.exit_code == 0, r.output
        doc = json.loads(r.output)
        assert doc["fem_ms"]["40"] if "40" in doc["fem_ms"] else doc["fem_ms"][40]


class TestErrorMapping:
    def test_solver_error_exits_3(self):
        @cli_errors
        def boom():
            raise SolverError("no convergence")

        with pytest.raises(SystemExit) as exc:
            boom()
        assert exc.value.code == 3

    def test_invalid_argument_exits_2(self):
        @cli_errors
        def bad():
            raise InvalidArgumentError("nope")

        with pytest.raises(SystemExit) as exc:
            bad()
        assert exc.value.code == 2
