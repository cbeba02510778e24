import csv
import json
import zlib
from unittest.mock import patch

import numpy as np
import pytest

from moveonset.cli import (EXIT_CONFIG, EXIT_DATA, fingerprint_config, main)


class StubModels:
    """Stand-in for FoldModels: fast, deterministic per trial."""

    def window_probs(self, views, end_times):
        ends = list(end_times)
        key = zlib.crc32(views.trial.trial_id.encode())
        rng = np.random.default_rng([key, len(ends)])
        return {k: rng.uniform(size=len(ends)) for k in ("D", "S", "M", "E")}

    def fingerprint(self, kind):
        return f"stub-{kind}".ljust(16, "0")


class StubTrainer:
    @staticmethod
    def train(train_trials, val_trials, seed=0, cfg=None):
        return StubModels()


def patched_main(argv):
    with patch("moveonset.cli.FoldModels", StubTrainer):
        return main(argv)


def read_results(path):
    with path.open() as fh:
        header = fh.readline()
        rows = list(csv.DictReader(fh))
    return header, rows


class TestSynth:
    def test_writes_dataset_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        assert main(["synth", "--trials", "6", "--seed", "1",
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "run-manifest.json").read_text())
        assert manifest["config"]["trials"] == 6
        assert (out / "dataset" / "manifest.json").is_file()

    def test_byte_identical_across_runs(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--trials", "6", "--seed", "2",
                         "--out", str(out)]) == 0
        for p in sorted((a / "dataset").iterdir()):
            assert p.read_bytes() == (b / "dataset" / p.name).read_bytes()

    def test_overwrite_refused(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["synth", "--trials", "3", "--out", str(out)]) == 0
        assert main(["synth", "--trials", "3", "--out", str(out)]) == EXIT_CONFIG
        assert "overwrite" in capsys.readouterr().err
        assert main(["synth", "--trials", "3", "--out", str(out),
                     "--overwrite"]) == 0


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    code = patched_main(["full-matrix", "--synth", "30", "--seed", "0",
                         "--out", str(out)])
    assert code == 0
    return out


class TestFullMatrix:
    def test_results_row_count(self, run_dir):
        _, rows = read_results(run_dir / "results.csv")
        # 3 folds x 8 methods x (1 accuracy + 3 n x 3 rates)
        assert len(rows) == 3 * 8 * 10

    def test_outcomes_row_count(self, run_dir):
        _, rows = read_results(run_dir / "outcomes.csv")
        # 3 folds x 8 methods x 3 n x 5 test trials
        assert len(rows) == 3 * 8 * 3 * 5

    def test_fingerprint_header_matches_manifest(self, run_dir):
        manifest = json.loads((run_dir / "run-manifest.json").read_text())
        header, _ = read_results(run_dir / "results.csv")
        assert header.strip() == f"# fingerprint={manifest['fingerprint']}"

    def test_rerun_refused_without_overwrite(self, run_dir, capsys):
        code = patched_main(["full-matrix", "--synth", "30", "--seed", "0",
                             "--out", str(run_dir)])
        assert code == EXIT_CONFIG

    def test_jobs_flag_gives_same_rows(self, run_dir, tmp_path):
        out = tmp_path / "jobs2"
        assert patched_main(["full-matrix", "--synth", "30", "--seed", "0",
                             "--jobs", "2", "--out", str(out)]) == 0
        _, a = read_results(run_dir / "results.csv")
        _, b = read_results(out / "results.csv")
        assert a == b


class TestTrainMode:
    def test_models_saved_per_fold(self, tmp_path):
        import torch

        from moveonset.nets import EegnetNet, make_dummy
        from moveonset.serialize import load_model
        from moveonset.svm import train_svm

        rng = np.random.default_rng(0)
        X = np.vstack([rng.standard_normal((10, 4)) - 2,
                       rng.standard_normal((10, 4)) + 2])
        y = np.array([0] * 10 + [1] * 10)
        svm = train_svm(X, y, folds=2, seed=0)
        torch.manual_seed(0)
        eegnet = EegnetNet(4, 100)

        class SavableStub(StubModels):
            def __init__(self):
                self.svm = svm
                self.mlp = make_dummy(192, seed=1)
                self.eegnet = eegnet
                self.dummy = make_dummy(192, seed=2)

        class SavableTrainer:
            @staticmethod
            def train(train_trials, val_trials, seed=0, cfg=None):
                return SavableStub()

        out = tmp_path / "trained"
        with patch("moveonset.cli.FoldModels", SavableTrainer):
            assert main(["train", "--synth", "12", "--out", str(out)]) == 0
        for fold in (1, 2, 3):
            mdir = out / "models" / f"synth0_fold{fold}"
            for name in ("svm.bin", "mlp.bin", "eegnet.bin", "dummy.bin"):
                assert (mdir / name).is_file(), (fold, name)
        loaded = load_model(out / "models" / "synth0_fold1" / "svm.bin")
        assert np.allclose(loaded.weights, svm.weights, atol=1e-6)


class TestModeVariants:
    def test_eval_offline_only_accuracy_rows(self, tmp_path):
        out = tmp_path / "off"
        assert patched_main(["eval-offline", "--synth", "12",
                             "--out", str(out)]) == 0
        _, rows = read_results(out / "results.csv")
        assert rows and all(r["metric"] == "accuracy" for r in rows)

    def test_eval_pseudo_online_has_no_accuracy_rows(self, tmp_path):
        out = tmp_path / "pse"
        assert patched_main(["eval-pseudo-online", "--synth", "12",
                             "--windows", "2", "--out", str(out)]) == 0
        _, rows = read_results(out / "results.csv")
        assert rows and all(r["metric"] != "accuracy" for r in rows)
        assert {r["n_windows"] for r in rows} == {"2"}

    def test_method_filter(self, tmp_path):
        out = tmp_path / "methods"
        assert patched_main(["full-matrix", "--synth", "12", "--methods",
                             "E,SE", "--out", str(out)]) == 0
        _, rows = read_results(out / "results.csv")
        assert {r["method"] for r in rows} == {"E", "SE"}


class TestErrors:
    def test_unknown_method(self, tmp_path, capsys):
        code = patched_main(["full-matrix", "--synth", "12", "--methods", "Q",
                             "--out", str(tmp_path / "x")])
        assert code == EXIT_CONFIG
        assert "unknown method" in capsys.readouterr().err

    def test_missing_data_dir(self, tmp_path):
        code = patched_main(["full-matrix", "--data", str(tmp_path / "nope"),
                             "--out", str(tmp_path / "x")])
        assert code == EXIT_DATA

    def test_no_source(self, tmp_path):
        code = patched_main(["full-matrix", "--out", str(tmp_path / "x")])
        assert code == EXIT_CONFIG

    def test_bad_window_count(self, tmp_path):
        code = patched_main(["full-matrix", "--synth", "12", "--windows", "4",
                             "--out", str(tmp_path / "x")])
        assert code == EXIT_CONFIG

    def test_unknown_subject_filter(self, tmp_path):
        code = patched_main(["full-matrix", "--synth", "12", "--subjects",
                             "nobody", "--out", str(tmp_path / "x")])
        assert code == EXIT_DATA


class TestStatsAndReport:
    def test_stats_output(self, run_dir):
        assert main(["stats", "--metric", "twp", "--conditions",
                     "E3,SE2,SME2", "--out", str(run_dir)]) == 0
        stats = json.loads((run_dir / "stats.json").read_text())
        assert stats["n_rows"] == 3
        assert "friedman" in stats
        assert len(stats["pairwise_wilcoxon"]) == 3
        for pair in stats["pairwise_wilcoxon"]:
            assert pair["p_bonferroni"] >= pair["p_value"]

    def test_stats_two_conditions_skip_friedman(self, run_dir):
        assert main(["stats", "--metric", "accuracy", "--conditions",
                     "E,SE", "--out", str(run_dir)]) == 0
        stats = json.loads((run_dir / "stats.json").read_text())
        assert "friedman" not in stats

    def test_stats_missing_results(self, tmp_path):
        assert main(["stats", "--conditions", "E3,SE2",
                     "--out", str(tmp_path / "void")]) == EXIT_DATA

    def test_report_summary(self, run_dir):
        assert main(["report", "--out", str(run_dir)]) == 0
        text = (run_dir / "summary.md").read_text()
        assert "| twp |" in text and "| accuracy |" in text

    def test_report_svg(self, run_dir):
        pytest.importorskip("matplotlib")
        assert main(["report", "--svg", "--out", str(run_dir)]) == 0
        assert (run_dir / "twp.svg").stat().st_size > 0


class TestConfigFile:
    def test_config_sets_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": 12, "methods": "E",
                                   "out": str(tmp_path / "from_cfg")}))
        out = tmp_path / "flag_out"
        assert patched_main(["--config", str(cfg), "full-matrix",
                             "--out", str(out)]) == 0
        assert (out / "results.csv").is_file()
        assert not (tmp_path / "from_cfg").exists()
        _, rows = read_results(out / "results.csv")
        assert {r["method"] for r in rows} == {"E"}

    def test_bad_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{nope")
        assert main(["--config", str(cfg), "full-matrix"]) == EXIT_CONFIG


class TestFingerprint:
    def test_stable_and_order_insensitive(self):
        a = fingerprint_config({"a": 1, "b": [1, 2]})
        b = fingerprint_config({"b": [1, 2], "a": 1})
        assert a == b and len(a) == 16

    def test_sensitive_to_values(self):
        assert fingerprint_config({"seed": 0}) != fingerprint_config({"seed": 1})
