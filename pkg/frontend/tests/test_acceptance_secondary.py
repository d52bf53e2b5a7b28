"""Secondary acceptance: render the headline log-correction figure from the
primary acceptance run's artifacts, deterministically, with the fit
cross-check passing.

Prefers the real artifacts under ../artifacts/acceptance4 (written by the
primary acceptance suite); falls back to generating schema-identical
artifacts at reduced scale through the brwkit CLI.
"""

import json
import shutil
import subprocess
from pathlib import Path

import pytest

from plotkit.render import PlotRequest, check_fit, read_rows, render

ACC4_DIR = Path(__file__).resolve().parents[2] / "artifacts" / "acceptance4"


@pytest.fixture(scope="module")
def acceptance4_artifacts(tmp_path_factory):
    if ACC4_DIR.is_dir():
        csvs = sorted(ACC4_DIR.glob("*.csv"))
        fits = sorted(ACC4_DIR.glob("*_fit.json"))
        preds = sorted(ACC4_DIR.glob("*_prediction.json"))
        if csvs and fits and preds:
            return csvs[0], fits[0], preds[0]
    if shutil.which("brwkit") is None:
        pytest.skip("no acceptance4 artifacts and no brwkit CLI to generate them")
    out_dir = tmp_path_factory.mktemp("acc4_reduced")
    config = out_dir / "config.json"
    config.write_text(json.dumps({
        "kind": "scaling",
        "spec": {"variant": "gaussian", "mu": 0.0, "sigma": 1.0},
        "offspring": {"kind": "deterministic", "d": 2},
        "n_grid": [50, 100, 200],
        "replicates": 12,
        "strategy": {"kind": "beam", "K": 2000},
    }))
    subprocess.run(["brwkit", "experiment", "--config", str(config),
                    "--output", str(out_dir), "--seed", "20250808",
                    "--threads", "1"], check=True, capture_output=True)
    return (next(out_dir.glob("*.csv")), next(out_dir.glob("*_fit.json")),
            next(out_dir.glob("*_prediction.json")))


def test_acceptance_11_log_correction_figure(acceptance4_artifacts, tmp_path):
    csv_path, fit_path, pred_path = acceptance4_artifacts
    fit = json.loads(fit_path.read_text())
    check_fit(read_rows(csv_path), fit)  # resummarization cross-check

    out1 = render(PlotRequest("log-correction", csv_path,
                              tmp_path / "fig1.png", fit_path, pred_path))
    out2 = render(PlotRequest("log-correction", csv_path,
                              tmp_path / "fig2.png", fit_path, pred_path))
    assert out1.read_bytes() == out2.read_bytes()  # deterministic output
    assert out1.stat().st_size > 5000
    print(f"ACCEPTANCE 11: PASS - figure from {csv_path.name}, "
          f"beta_hat={fit['beta_hat']:.4f}, deterministic bytes")
