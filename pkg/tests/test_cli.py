"""End-to-end command-line behavior: outputs, determinism, and exit codes."""

import json

import numpy as np
import pytest

from ips.cli import main
from ips.data import write_csv
from ips.kernels import load_kernel
from ips.simulation import dgp_kang_schafer, dgp_lte

COVS = "x1,x2,x3,x4"


@pytest.fixture(scope="module")
def exog_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "exog.csv"
    ds, _ = dgp_kang_schafer(200, (31, 0))
    write_csv(ds, path)
    return str(path)


@pytest.fixture(scope="module")
def lte_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "lte.csv"
    ds, _ = dgp_lte(200, (32, 0))
    write_csv(ds, path)
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestFit:
    def test_fit_writes_json_with_five_coefficients(self, capsys, exog_csv):
        code, out, _ = _run(capsys, [
            "fit", "--data", exog_csv, "--covariates", COVS,
            "--outcome", "y", "--family", "exp", "--starts", "2",
        ])
        assert code == 0
        payload = json.loads(out)
        assert len(payload["beta"]) == 5
        assert payload["converged"] is True
        assert payload["balance"]["covariates"] == ["x1", "x2", "x3", "x4"]

    def test_fit_mle_estimator(self, capsys, exog_csv):
        code, out, _ = _run(capsys, [
            "fit", "--data", exog_csv, "--covariates", COVS, "--estimator", "mle",
        ])
        assert code == 0
        assert json.loads(out)["mode"] == "mle"

    def test_fit_lte_mode(self, capsys, lte_csv):
        code, out, _ = _run(capsys, [
            "fit", "--data", lte_csv, "--covariates", COVS,
            "--instrument", "z", "--mode", "lte", "--family", "exp",
            "--starts", "2",
        ])
        assert code == 0
        assert len(json.loads(out)["beta"]) == 5


class TestEffects:
    def test_csv_rows_and_determinism(self, capsys, exog_csv):
        argv = [
            "effects", "--data", exog_csv, "--covariates", COVS,
            "--outcome", "y", "--family", "exp", "--starts", "2",
        ]
        code, out1, _ = _run(capsys, argv)
        assert code == 0
        lines = out1.strip().splitlines()
        assert lines[0] == "effect,at,point,se,ci_low,ci_high"
        kinds = [line.split(",")[0] for line in lines[1:]]
        assert kinds == ["ate", "qte", "qte", "qte"]
        for line in lines[1:]:
            point, se = line.split(",")[2:4]
            assert np.isfinite(float(point)) and float(se) > 0
        code, out2, _ = _run(capsys, argv)
        assert out2 == out1  # byte-identical reruns

    def test_json_format(self, capsys, exog_csv):
        code, out, _ = _run(capsys, [
            "effects", "--data", exog_csv, "--covariates", COVS,
            "--outcome", "y", "--estimator", "mle", "--format", "json",
            "--tau", "0.5",
        ])
        assert code == 0
        payload = json.loads(out)
        assert [r["effect"] for r in payload["effects"]] == ["ate", "qte"]

    def test_lte_bootstrap_ses(self, capsys, lte_csv):
        code, out, _ = _run(capsys, [
            "effects", "--data", lte_csv, "--covariates", COVS,
            "--outcome", "y", "--instrument", "z", "--mode", "lte",
            "--family", "exp", "--starts", "1", "--tau", "0.5",
            "--bootstrap-reps", "20",
        ])
        assert code == 0
        lines = out.strip().splitlines()
        assert [line.split(",")[0] for line in lines[1:]] == ["late", "lqte"]
        assert all(float(line.split(",")[3]) > 0 for line in lines[1:])

    def test_invalid_tau_exits_one(self, capsys, exog_csv):
        code, _, err = _run(capsys, [
            "effects", "--data", exog_csv, "--covariates", COVS,
            "--outcome", "y", "--estimator", "mle", "--tau", "1.5",
        ])
        assert code == 1
        assert "strictly in" in err

    def test_lte_without_instrument_exits_one(self, capsys, lte_csv):
        code, _, err = _run(capsys, [
            "effects", "--data", lte_csv, "--covariates", COVS,
            "--outcome", "y", "--mode", "lte", "--starts", "1",
        ])
        assert code == 1
        assert "instrument" in err


class TestSimulate:
    def test_smoke_run_prints_metrics(self, capsys):
        code, out, _ = _run(capsys, [
            "simulate", "--design", "kang_schafer", "--n", "120", "--reps", "3",
            "--estimators", "mle", "--taus", "0.5", "--starts", "1", "--smoke",
        ])
        assert code == 0
        assert "bias=" in out and "mle" in out

    def test_config_file_with_overrides(self, capsys, tmp_path):
        cfg = tmp_path / "study.json"
        cfg.write_text(json.dumps({
            "design": "kang_schafer", "n": 120, "reps": 2,
            "estimators": ["mle", "cbps_just"], "taus": [0.5], "starts": 1,
        }))
        out_csv = tmp_path / "metrics.csv"
        code, _, _ = _run(capsys, [
            "simulate", "--config", str(cfg), "--reps", "2",
            "--out", str(out_csv),
        ])
        assert code == 0
        header = out_csv.read_text().splitlines()[0]
        assert header.startswith("estimator,effect,truth")

    def test_bad_estimator_exits_one(self, capsys):
        code, _, err = _run(capsys, [
            "simulate", "--design", "lte_roy", "--n", "100", "--reps", "1",
            "--estimators", "ips_exp",
        ])
        assert code == 1
        assert "not valid" in err


class TestKernelDump:
    def test_round_trip(self, capsys, exog_csv, tmp_path):
        out = tmp_path / "k.ipsk"
        code, _, _ = _run(capsys, [
            "kernel-dump", "--data", exog_csv, "--covariates", COVS,
            "--family", "ind", "--out", str(out),
        ])
        assert code == 0
        kernel = load_kernel(out)
        assert kernel.family == "indicator"
        assert kernel.K.shape == (200, 200)


class TestErrors:
    def test_missing_file_exits_one(self, capsys):
        code, _, err = _run(capsys, [
            "fit", "--data", "/does/not/exist.csv", "--covariates", COVS,
        ])
        assert code == 1
        assert "error" in err

    def test_constant_column_named_exits_one(self, capsys, tmp_path):
        import csv as _csv

        path = tmp_path / "const.csv"
        rng = np.random.default_rng(3)
        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["d", "x1", "x2"])
            for i in range(40):
                w.writerow([i % 2, repr(float(rng.standard_normal())), "1.0"])
        code, _, err = _run(capsys, [
            "fit", "--data", str(path), "--covariates", "x1,x2",
            "--family", "exp", "--starts", "1",
        ])
        assert code == 1
        assert "column 1" in err

    def test_unknown_subcommand_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1
