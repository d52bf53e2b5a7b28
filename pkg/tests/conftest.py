"""Shared expensive fixtures for the test suite."""

import time
from pathlib import Path

import pytest

from brwkit import experiments, ldnum
from brwkit.brwsim import Beam, Deterministic
from brwkit.stepdist import Gaussian

ARTIFACTS = Path(__file__).resolve().parent.parent / "artifacts"

ACC4_SEED = 20_250_808
ACC4_GAMMA = -1.177410
ACC4_BETA_IID = 0.4247


@pytest.fixture(scope="session")
def acc4_run():
    """The headline scaling configuration: Gaussian steps, binary branching,
    n in {50, 100, 200}, 100 replicates, Beam(5e4).  Shared by the acceptance
    tests and the law-of-large-numbers invariant check; artifacts persist
    under artifacts/acceptance4 for the plotting front end."""
    t0 = time.monotonic()
    art = experiments.run_min_scaling(
        Gaussian(0, 1), Deterministic(2), [50, 100, 200], 100,
        Beam(50_000), master_seed=ACC4_SEED,
        out_dir=ARTIFACTS / "acceptance4")
    elapsed = time.monotonic() - t0
    fit = experiments.fit_log_correction(art.rows, ACC4_GAMMA,
                                         reference_beta=ACC4_BETA_IID)
    experiments.write_fit(
        ARTIFACTS / "acceptance4" / f"{art.experiment_id}_fit.json", fit)
    report = ldnum.prediction_report(Gaussian(0, 1), 2.0)
    import json
    with open(ARTIFACTS / "acceptance4" / f"{art.experiment_id}_prediction.json",
              "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return art, fit, elapsed
