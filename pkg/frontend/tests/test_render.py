import csv
import json
import math
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from plotkit.cli import main
from plotkit.render import (
    CrossCheckError,
    PlotRequest,
    Rows,
    SchemaError,
    check_fit,
    read_rows,
    render,
    summarize,
    _wls,
)

HEADER = ("experiment_id,dist,offspring,n,rep,m_n,survived,strategy,"
          "beam_K,seed,restarts")


def write_rows(path: Path, ns, gamma=-1.0, beta=1.2, intercept=0.4,
               noise=0.05, reps=20, seed=0):
    gen = np.random.Generator(np.random.Philox(key=seed))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER.split(","))
        for n in ns:
            for rep in range(reps):
                m = gamma * n + beta * math.log(n) + intercept \
                    + noise * gen.standard_normal()
                w.writerow(["t1", "dist", "off", n, rep, repr(m), "true",
                            "beam", 100, 1, 0])
    return path


def consistent_fit(csv_path: Path, gamma: float, ns) -> dict:
    rows = read_rows(csv_path)
    summary = summarize(rows, gamma, list(ns))
    intercept, beta = _wls(summary)
    se = max(1e-6, abs(beta) * 0.05)
    return {"gamma_used": gamma, "beta_hat": beta, "intercept_hat": intercept,
            "beta_stderr": se, "n_values": list(ns)}


@pytest.fixture
def artifacts(tmp_path):
    ns = [50, 100, 200]
    csv_path = write_rows(tmp_path / "rows.csv", ns)
    fit = consistent_fit(csv_path, -1.0, ns)
    fit_path = tmp_path / "fit.json"
    fit_path.write_text(json.dumps(fit))
    pred = {"regime": "SharpLogCorrection", "t_star": -1.1774, "gamma": -1.0,
            "beta_brw": 1.274, "beta_iid": 0.4247, "residual": 0.0}
    pred_path = tmp_path / "pred.json"
    pred_path.write_text(json.dumps(pred))
    return csv_path, fit_path, pred_path


class TestSchema:
    def test_header_drift_names_column(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(HEADER.replace("m_n", "minimum") + "\n")
        with pytest.raises(SchemaError, match="minimum"):
            read_rows(bad)

    def test_empty_csv_errors_and_writes_nothing(self, tmp_path, artifacts):
        _, fit_path, pred_path = artifacts
        empty = tmp_path / "empty.csv"
        empty.write_text(HEADER + "\n")
        out = tmp_path / "fig.png"
        with pytest.raises(SchemaError):
            render(PlotRequest("log-correction", empty, out, fit_path, pred_path))
        assert not out.exists()

    def test_fit_schema_drift(self, tmp_path, artifacts):
        csv_path, _, pred_path = artifacts
        bad_fit = tmp_path / "bad_fit.json"
        bad_fit.write_text(json.dumps({"beta": 1.0}))
        with pytest.raises(SchemaError):
            render(PlotRequest("log-correction", csv_path, tmp_path / "f.png",
                               bad_fit, pred_path))

    def test_unknown_kind(self, tmp_path, artifacts):
        csv_path, fit_path, pred_path = artifacts
        with pytest.raises(SchemaError):
            render(PlotRequest("sparkline", csv_path, tmp_path / "f.png",
                               fit_path, pred_path))


class TestCrossCheck:
    def test_consistent_fit_passes(self, artifacts):
        csv_path, fit_path, _ = artifacts
        fit = json.loads(fit_path.read_text())
        check_fit(read_rows(csv_path), fit)

    def test_tampered_beta_fatal(self, artifacts):
        csv_path, fit_path, _ = artifacts
        fit = json.loads(fit_path.read_text())
        fit["beta_hat"] += 1e-3
        with pytest.raises(CrossCheckError):
            check_fit(read_rows(csv_path), fit)

    def test_cli_exit_codes(self, tmp_path, artifacts):
        csv_path, fit_path, pred_path = artifacts
        out = tmp_path / "fig.png"
        assert main(["--kind", "log-correction", "--csv", str(csv_path),
                     "--fit", str(fit_path), "--pred", str(pred_path),
                     "--out", str(out)]) == 0
        fit = json.loads(fit_path.read_text())
        fit["beta_hat"] += 5e-3
        tampered = tmp_path / "tampered.json"
        tampered.write_text(json.dumps(fit))
        assert main(["--kind", "log-correction", "--csv", str(csv_path),
                     "--fit", str(tampered), "--pred", str(pred_path),
                     "--out", str(tmp_path / "fig2.png")]) == 2
        assert main(["--kind", "log-correction", "--csv", str(tmp_path / "no.csv"),
                     "--fit", str(fit_path), "--pred", str(pred_path),
                     "--out", str(tmp_path / "fig3.png")]) == 1


class TestRendering:
    def test_log_correction_deterministic_bytes(self, tmp_path, artifacts):
        csv_path, fit_path, pred_path = artifacts
        out1 = render(PlotRequest("log-correction", csv_path, tmp_path / "a.png",
                                  fit_path, pred_path))
        out2 = render(PlotRequest("log-correction", csv_path, tmp_path / "b.png",
                                  fit_path, pred_path))
        assert out1.read_bytes() == out2.read_bytes()
        assert out1.stat().st_size > 5000

    def test_tail_kind(self, tmp_path, artifacts):
        csv_path, _, _ = artifacts
        out = render(PlotRequest("tail", csv_path, tmp_path / "tail.png"))
        assert out.exists()

    def test_theorem4_kind(self, tmp_path):
        gen = np.random.Generator(np.random.Philox(key=9))
        path = tmp_path / "t4.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER.split(","))
            for n in (50, 100, 200):
                for rep in range(50):
                    m = float(gen.poisson(0.6))
                    w.writerow(["t4", "tp", "det", n, rep, repr(m), "true",
                                "beam", 64, 1, 0])
        out = render(PlotRequest("theorem4", path, tmp_path / "t4.png"))
        assert out.exists()

    def test_iid_vs_brw_kind(self, tmp_path, artifacts):
        csv_path, fit_path, pred_path = artifacts
        ns = [8, 12, 16]
        csv2 = write_rows(tmp_path / "iid.csv", ns, beta=0.42, seed=4)
        fit2 = consistent_fit(csv2, -1.0, ns)
        fit2_path = tmp_path / "fit2.json"
        fit2_path.write_text(json.dumps(fit2))
        out = render(PlotRequest("iid-vs-brw", csv_path, tmp_path / "c.png",
                                 fit_path, pred_path, csv2_path=csv2,
                                 fit2_path=fit2_path))
        assert out.exists()


@pytest.fixture(scope="module")
def produced(tmp_path_factory):
    if shutil.which("brwkit") is None:
        pytest.skip("brwkit CLI not installed")
    out_dir = tmp_path_factory.mktemp("produced")
    config = out_dir / "config.json"
    config.write_text(json.dumps({
        "kind": "scaling",
        "spec": {"variant": "gaussian", "mu": 0.0, "sigma": 1.0},
        "offspring": {"kind": "deterministic", "d": 2},
        "n_grid": [20, 40, 80],
        "replicates": 25,
        "strategy": {"kind": "beam", "K": 2000},
    }))
    subprocess.run(["brwkit", "experiment", "--config", str(config),
                    "--output", str(out_dir), "--seed", "31337",
                    "--threads", "1"], check=True, capture_output=True)
    csv_path = next(out_dir.glob("*.csv"))
    fit_path = next(out_dir.glob("*_fit.json"))
    pred_path = next(out_dir.glob("*_prediction.json"))
    return csv_path, fit_path, pred_path


class TestAgainstProducer:
    """Consume artifacts produced by the brwkit CLI (the published interface)."""

    def test_producer_fit_cross_check_passes(self, produced):
        csv_path, fit_path, _ = produced
        fit = json.loads(fit_path.read_text())
        check_fit(read_rows(csv_path), fit)

    def test_producer_render(self, produced, tmp_path):
        csv_path, fit_path, pred_path = produced
        out = render(PlotRequest("log-correction", csv_path,
                                 tmp_path / "real.png", fit_path, pred_path))
        assert out.exists()
