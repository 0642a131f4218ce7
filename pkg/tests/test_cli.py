"""End-to-end CLI behavior: config handling, outputs, exit codes, determinism."""

import csv
import json

import pytest

from hsmimo.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, EXIT_VALIDATION, main


def write_config(path, payload):
    path.write_text(json.dumps(payload, indent=1))
    return str(path)


def toy_train_config(tmp_path, **train_overrides):
    train = {"model": "ths", "T": 1, "snr_db": 10.0, "batches_per_generation": 3,
             "batch_size": 8, "params_out": "params.json", "log_out": "log.csv"}
    train.update(train_overrides)
    cfg = {"seed": 31, "out_dir": str(tmp_path / "out"), "threads": 1,
           "dims": {"n": 3, "m": 2}, "train": train}
    return write_config(tmp_path / "config.json", cfg)


class TestSchema:
    def test_print_schema(self, capsys):
        assert main(["--print-schema"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["title"] == "RunConfig"
        assert "seed" in doc["required"]

    def test_no_command_is_usage_error(self):
        assert main([]) == EXIT_CONFIG


class TestTrain:
    def test_toy_run_emits_three_parameter_file(self, tmp_path):
        cfg = toy_train_config(tmp_path)
        assert main(["train", "--config", cfg]) == EXIT_OK
        doc = json.loads((tmp_path / "out" / "params.json").read_text())
        assert doc["T"] == 1
        assert len(doc["beta"]) == len(doc["eta"]) == len(doc["zeta"]) == 1
        rows = list(csv.reader((tmp_path / "out" / "log.csv").open()))
        assert rows[0] == ["generation", "batch_index", "loss"]
        assert len(rows) == 1 + 3

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = toy_train_config(tmp_path)
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
        for name in ("params.json", "log.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_config_is_usage_error(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG

    def test_seed_mandatory(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"dims": {"n": 2, "m": 2},
                                                 "train": {"T": 1}})
        assert main(["train", "--config", cfg]) == EXIT_CONFIG

    def test_divergence_exits_3_with_diagnostics(self, tmp_path):
        cfg = toy_train_config(tmp_path, T=2, init_eta=1e200, init_zeta=1e200,
                               batches_per_generation=2)
        assert main(["train", "--config", cfg]) == EXIT_DIVERGED
        diag = json.loads((tmp_path / "out" / "training_divergence.json").read_text())
        assert diag["generation"] == 2


class TestEval:
    def eval_config(self, tmp_path, detectors, snr_grid=(10.0,), paired=True):
        cfg = {"seed": 77, "out_dir": str(tmp_path / "out"), "threads": 1,
               "dims": {"n": 3, "m": 2},
               "eval": {"snr_grid_db": list(snr_grid), "vectors_per_point": 40,
                        "paired": paired, "detectors": detectors,
                        "report_stem": "ber"}}
        return write_config(tmp_path / "eval.json", cfg)

    def test_single_detector_single_snr_one_row(self, tmp_path):
        cfg = self.eval_config(tmp_path, [{"type": "mmse"}])
        assert main(["eval", "--config", cfg]) == EXIT_OK
        rows = list(csv.reader((tmp_path / "out" / "ber.csv").open()))
        assert len(rows) == 2
        assert rows[1][1] == "mmse"

    def test_multi_detector_paired_curves(self, tmp_path):
        cfg = self.eval_config(tmp_path,
                               [{"type": "mmse"}, {"type": "hs", "T": 5}],
                               snr_grid=(5.0, 10.0))
        assert main(["eval", "--config", cfg]) == EXIT_OK
        doc = json.loads((tmp_path / "out" / "ber.json").read_text())
        assert [c["detector"] for c in doc["curves"]] == ["mmse", "hs"]
        assert all(len(c["points"]) == 2 for c in doc["curves"])

    def test_trained_params_flow_through(self, tmp_path):
        train_cfg = toy_train_config(tmp_path, T=2)
        assert main(["train", "--config", train_cfg]) == EXIT_OK
        cfg = self.eval_config(tmp_path,
                               [{"type": "ths", "params_file": str(tmp_path / "out" / "params.json")}])
        assert main(["eval", "--config", cfg]) == EXIT_OK
        doc = json.loads((tmp_path / "out" / "ber.json").read_text())
        assert doc["curves"][0]["param_fingerprint"] != ""

    def test_missing_params_file_is_config_error(self, tmp_path):
        cfg = self.eval_config(tmp_path, [{"type": "ths", "params_file": "absent.json"}])
        assert main(["eval", "--config", cfg]) == EXIT_CONFIG

    def test_inline_constant_parameters(self, tmp_path):
        cfg = self.eval_config(tmp_path, [
            {"type": "ths", "T": 5, "eta": 0.1, "beta": 1.0, "zeta": 1.1},
            {"type": "scalable_tpg", "T": 5, "gamma": 0.05, "theta": 1.0},
        ])
        assert main(["eval", "--config", cfg]) == EXIT_OK
        doc = json.loads((tmp_path / "out" / "ber.json").read_text())
        assert [c["detector"] for c in doc["curves"]] == ["ths", "scalable_tpg"]

    def test_rerun_byte_identical(self, tmp_path):
        cfg = self.eval_config(tmp_path, [{"type": "mmse"}, {"type": "hs", "T": 5}])
        assert main(["eval", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["eval", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
        for name in ("ber.csv", "ber.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestDiagnose:
    def diag_config(self, tmp_path, detectors, noiseless=True, snr_db=None):
        cfg = {"seed": 5, "out_dir": str(tmp_path / "out"), "threads": 1,
               "dims": {"n": 3, "m": 2},
               "diagnose": {"ensemble": 10, "noiseless": noiseless, "snr_db": snr_db,
                            "detectors": detectors, "out_stem": "diag"}}
        return write_config(tmp_path / "diag.json", cfg)

    def test_rows_per_detector_equals_depth(self, tmp_path):
        cfg = self.diag_config(tmp_path, [{"type": "hs", "T": 7}])
        assert main(["diagnose", "--config", cfg]) == EXIT_OK
        rows = list(csv.reader((tmp_path / "out" / "diag.csv").open()))
        assert len(rows) == 1 + 7
        assert [r[2] for r in rows[1:]] == [str(t) for t in range(1, 8)]

    def test_untraceable_detector_rejected(self, tmp_path):
        cfg = self.diag_config(tmp_path, [{"type": "mmse"}])
        assert main(["diagnose", "--config", cfg]) == EXIT_CONFIG

    def test_noisy_mode_requires_snr(self, tmp_path):
        cfg = self.diag_config(tmp_path, [{"type": "hs", "T": 3}], noiseless=False)
        assert main(["diagnose", "--config", cfg]) == EXIT_CONFIG
        cfg = self.diag_config(tmp_path, [{"type": "hs", "T": 3}], noiseless=False, snr_db=10.0)
        assert main(["diagnose", "--config", cfg]) == EXIT_OK


class TestValidate:
    def test_default_run_passes(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "v.json",
                           {"seed": 3, "out_dir": str(tmp_path / "out"),
                            "validate": {"expectation_instances": 10}})
        assert main(["validate", "--config", cfg]) == EXIT_OK
        out = capsys.readouterr().out
        assert "all validators passed" in out

    def test_runs_without_config(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["validate", "--seed", "1"]) == EXIT_OK

    def test_impossible_tolerance_fails_with_exit_1(self, tmp_path):
        cfg = write_config(tmp_path / "v.json",
                           {"seed": 3, "validate": {"expectation_instances": 2,
                                                    "expectation_tolerance": 1e-30}})
        assert main(["validate", "--config", cfg]) == EXIT_VALIDATION
