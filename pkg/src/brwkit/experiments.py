"""Reproducible experiment harness: scaling runs, regressions, baselines.

Every run derives all replicate randomness from a master seed, writes a JSON
manifest before computing, and serializes observations to a fixed CSV schema:

    experiment_id,dist,offspring,n,rep,m_n,survived,strategy,beam_K,seed,restarts

Re-running from a manifest reproduces the CSV body byte for byte (the
manifest's timestamp is informational and excluded from the experiment id).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, brwsim, ldnum, pathlab, rng, stepdist
from .errors import GuardError

CSV_HEADER = ("experiment_id", "dist", "offspring", "n", "rep", "m_n",
              "survived", "strategy", "beam_K", "seed", "restarts")

_IID_GUARD = 1 << 22
_LEADING_GUARD = 1 << 20


class InsufficientDataError(ValueError):
    """Not enough surviving observations to fit."""


class RegimeMismatchError(ValueError):
    """The requested experiment does not apply to this (X, B) regime."""


@dataclass(frozen=True)
class ExperimentRow:
    experiment_id: str
    dist: str
    offspring: str
    n: int
    rep: int
    m_n: float
    survived: bool
    strategy: str
    beam_k: int
    seed: int
    restarts: int


@dataclass(frozen=True)
class FitReport:
    """Weighted least squares of (mean m_n - gamma*n) against ln n.

    Weights are 1/stderr^2 of the per-n means (unit weights if any stderr is
    zero, e.g. on noiseless synthetic input); beta_stderr comes from the
    known-variance WLS covariance.
    """

    gamma_used: float
    beta_hat: float
    intercept_hat: float
    beta_stderr: float
    n_values: tuple[int, ...]
    residual_sum: float
    t_against_reference: float | None = None


@dataclass
class RunArtifacts:
    experiment_id: str
    rows: list[ExperimentRow]
    manifest: dict
    csv_path: Path | None = None
    manifest_path: Path | None = None
    extras: dict = field(default_factory=dict)


def _strategy_descriptor(strategy: brwsim.Strategy) -> tuple[str, int]:
    if isinstance(strategy, brwsim.Beam):
        return "beam", strategy.k
    if isinstance(strategy, brwsim.ExactDFS):
        return "exact_dfs", 0
    return "full_enum", 0


def strategy_to_dict(strategy: brwsim.Strategy) -> dict:
    name, k = _strategy_descriptor(strategy)
    out: dict = {"kind": name}
    if name == "beam":
        out["K"] = k
    return out


def strategy_from_dict(d: dict) -> brwsim.Strategy:
    kind = d.get("kind")
    if kind == "beam":
        return brwsim.Beam(int(d["K"]))
    if kind == "exact_dfs":
        return brwsim.ExactDFS()
    if kind == "full_enum":
        return brwsim.FullEnumeration()
    raise ValueError(f"unknown strategy kind {kind!r}")


def _experiment_id(kind: str, config: dict, master_seed: int) -> str:
    payload = json.dumps({"kind": kind, "config": config, "seed": master_seed},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def make_manifest(kind: str, config: dict, master_seed: int) -> dict:
    return {
        "experiment_id": _experiment_id(kind, config, master_seed),
        "kind": kind,
        "config": config,
        "master_seed": master_seed,
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }


def _fmt_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_rows_csv(path: Path, rows: list[ExperimentRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([
                r.experiment_id, r.dist, r.offspring, r.n, r.rep,
                _fmt_float(r.m_n), "true" if r.survived else "false",
                r.strategy, r.beam_k, r.seed, r.restarts,
            ])


def read_rows_csv(path: Path) -> list[ExperimentRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}; want {CSV_HEADER}")
        for rec in reader:
            rows.append(ExperimentRow(
                experiment_id=rec[0], dist=rec[1], offspring=rec[2],
                n=int(rec[3]), rep=int(rec[4]), m_n=float(rec[5]),
                survived=rec[6] == "true", strategy=rec[7], beam_k=int(rec[8]),
                seed=int(rec[9]), restarts=int(rec[10])))
    return rows


def write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(artifacts: RunArtifacts, out_dir: Path | None, stem: str) -> RunArtifacts:
    if out_dir is None:
        return artifacts
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts.manifest_path = out_dir / f"{stem}_manifest.json"
    write_manifest(artifacts.manifest_path, artifacts.manifest)
    artifacts.csv_path = out_dir / f"{stem}.csv"
    write_rows_csv(artifacts.csv_path, artifacts.rows)
    return artifacts


def run_min_scaling(spec: stepdist.StepSpec, offspring: brwsim.OffspringSpec,
                    n_grid: list[int], replicates: int,
                    strategy: brwsim.Strategy, master_seed: int, *,
                    out_dir: Path | None = None,
                    condition_on_survival: bool = True,
                    max_restarts: int = 1000,
                    threads: int = 1) -> RunArtifacts:
    """Measure m_n over an n grid with per-replicate derived seeds."""
    n_grid = list(n_grid)
    if len(set(n_grid)) != len(n_grid) or len(n_grid) < 3:
        raise ValueError("n_grid must contain at least 3 distinct values")
    info = stepdist.validate_spec(spec)
    regime = ldnum.classify_regime(info, brwsim.offspring_mean(offspring))
    if regime.kind is not ldnum.RegimeKind.SHARP_LOG_CORRECTION:
        warnings.warn(f"min-scaling run outside the sharp regime: {regime}")
    config_dict = {
        "spec": stepdist.spec_to_dict(spec),
        "offspring": brwsim.offspring_to_dict(offspring),
        "n_grid": n_grid,
        "replicates": replicates,
        "strategy": strategy_to_dict(strategy),
        "condition_on_survival": condition_on_survival,
        "max_restarts": max_restarts,
    }
    manifest = make_manifest("min_scaling", config_dict, master_seed)
    exp_id = manifest["experiment_id"]
    strat_name, beam_k = _strategy_descriptor(strategy)
    dist_desc = stepdist.describe(spec)
    off_desc = brwsim.describe_offspring(offspring)
    policy = (brwsim.ConditionOnSurvival(max_restarts) if condition_on_survival
              else brwsim.Unconditional())
    rows: list[ExperimentRow] = []
    for n in sorted(n_grid):
        config = brwsim.BrwConfig(offspring=offspring, step=spec, n=n,
                                  strategy=strategy,
                                  seed=rng.derive_key(master_seed, n),
                                  survival_policy=policy)
        for rep, rec in enumerate(brwsim.batch_min(config, replicates, threads=threads)):
            rows.append(ExperimentRow(
                experiment_id=exp_id, dist=dist_desc, offspring=off_desc,
                n=n, rep=rep, m_n=rec.m_n, survived=rec.survived,
                strategy=strat_name, beam_k=beam_k, seed=rec.seed,
                restarts=rec.restarts))
    return _emit(RunArtifacts(exp_id, rows, manifest), out_dir, exp_id)


def fit_log_correction(rows: list[ExperimentRow], gamma: float,
                       reference_beta: float | None = None) -> FitReport:
    """WLS of per-n mean (m_n - gamma*n) on ln n; see FitReport."""
    by_n: dict[int, list[float]] = {}
    for r in rows:
        if r.survived and math.isfinite(r.m_n):
            by_n.setdefault(r.n, []).append(r.m_n)
    ns = sorted(n for n, vals in by_n.items() if len(vals) >= 10)
    if len(ns) < 3:
        raise InsufficientDataError(
            "need >= 3 distinct n with >= 10 surviving replicates each, "
            f"got usable n = {ns}")
    y = np.array([np.mean(by_n[n]) - gamma * n for n in ns])
    se = np.array([np.std(by_n[n], ddof=1) / math.sqrt(len(by_n[n])) for n in ns])
    x = np.log(ns)
    w = 1.0 / se**2 if np.all(se > 0) else np.ones_like(se)
    design = np.column_stack([np.ones_like(x), x])
    wx = design * w[:, None]
    cov = np.linalg.inv(design.T @ wx)
    coef = cov @ (wx.T @ y)
    intercept, beta = float(coef[0]), float(coef[1])
    resid = y - design @ coef
    residual_sum = float(w @ resid**2)
    if np.all(se > 0):
        beta_stderr = float(math.sqrt(cov[1, 1]))
    else:
        dof = max(len(ns) - 2, 1)
        beta_stderr = float(math.sqrt(cov[1, 1] * residual_sum / dof))
    t_ref = None
    if reference_beta is not None and beta_stderr > 0:
        t_ref = (beta - reference_beta) / beta_stderr
    return FitReport(gamma_used=gamma, beta_hat=beta, intercept_hat=intercept,
                     beta_stderr=beta_stderr, n_values=tuple(ns),
                     residual_sum=residual_sum, t_against_reference=t_ref)


def fit_to_dict(fit: FitReport) -> dict:
    # The published FitReport schema: exactly these five keys.
    return {
        "gamma_used": fit.gamma_used,
        "beta_hat": fit.beta_hat,
        "beta_stderr": fit.beta_stderr,
        "intercept_hat": fit.intercept_hat,
        "n_values": list(fit.n_values),
    }


def write_fit(path: Path, fit: FitReport) -> None:
    with open(path, "w") as fh:
        json.dump(fit_to_dict(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _iid_final_sums(spec: stepdist.StepSpec, n: int, count: int,
                    gen: np.random.Generator) -> np.ndarray:
    """Final sums of `count` independent n-step walks."""
    if isinstance(spec, stepdist.Gaussian):
        # The n-step sum is exactly N(n*mu, n*sigma^2); the walk minimum over
        # a forest depends only on these finals.
        return spec.mu * n + spec.sigma * math.sqrt(n) * gen.standard_normal(count)
    sums = np.zeros(count)
    chunk = max(1, _IID_GUARD // max(n, 1))
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        steps = stepdist.icdf(spec, gen.random((hi - lo, n)))
        sums[lo:hi] = steps.sum(axis=1)
    return sums


def run_iid_baseline(spec: stepdist.StepSpec, mean_offspring: float,
                     n_grid: list[int], replicates: int, master_seed: int, *,
                     out_dir: Path | None = None) -> RunArtifacts:
    """Minimum of floor(EB^n) fully independent n-step walks, plus its fit.

    The fitted log-coefficient targets 1/(2|t*|) -- one third of the branching
    one -- with gamma fixed at Lambda'(t*).
    """
    n_grid = sorted(set(int(n) for n in n_grid))
    n_max = max(n_grid)
    if math.floor(mean_offspring**n_max) > _IID_GUARD:
        raise GuardError(
            f"floor(EB^n) = {math.floor(mean_offspring ** n_max)} exceeds "
            f"{_IID_GUARD} at n = {n_max}")
    tilt = ldnum.solve_tilt(spec, math.log(mean_offspring))
    config_dict = {
        "spec": stepdist.spec_to_dict(spec),
        "mean_offspring": mean_offspring,
        "n_grid": n_grid,
        "replicates": replicates,
    }
    manifest = make_manifest("iid_baseline", config_dict, master_seed)
    exp_id = manifest["experiment_id"]
    dist_desc = stepdist.describe(spec)
    rows: list[ExperimentRow] = []
    for n in n_grid:
        walkers = math.floor(mean_offspring**n)
        n_seed = rng.derive_key(master_seed, n)
        for rep in range(replicates):
            rep_seed = rng.derive_key(n_seed, rep)
            finals = _iid_final_sums(spec, n, walkers, rng.generator(rep_seed))
            rows.append(ExperimentRow(
                experiment_id=exp_id, dist=dist_desc,
                offspring=f"iid({mean_offspring})", n=n, rep=rep,
                m_n=float(finals.min()), survived=True, strategy="iid",
                beam_k=0, seed=rep_seed, restarts=0))
    fit = (fit_log_correction(rows, tilt.gamma)
           if len(n_grid) >= 3 and replicates >= 10 else None)
    art = RunArtifacts(exp_id, rows, manifest, extras={"fit": fit, "tilt": tilt})
    return _emit(art, out_dir, exp_id)


def run_tail_profile(spec: stepdist.StepSpec, offspring: brwsim.OffspringSpec,
                     n: int, replicates: int, master_seed: int,
                     strategy: brwsim.Strategy, *,
                     x_grid: np.ndarray | None = None,
                     threads: int = 1) -> dict:
    """Two-sided empirical CCDF of m_n around its median, on an x grid."""
    if replicates < 1000:
        raise ValueError(f"tail profile needs >= 1000 replicates, got {replicates}")
    config = brwsim.BrwConfig(offspring=offspring, step=spec, n=n,
                              strategy=strategy, seed=master_seed,
                              survival_policy=brwsim.ConditionOnSurvival())
    records = brwsim.batch_min(config, replicates, threads=threads)
    values = np.array([r.m_n for r in records if r.survived and math.isfinite(r.m_n)])
    if values.size == 0:
        raise InsufficientDataError("no surviving replicates")
    median = float(np.median(values))
    if x_grid is None:
        x_grid = np.linspace(0.0, 6.0, 25)
    x_grid = np.asarray(x_grid, dtype=float)
    upper = np.array([(values >= median + x).mean() for x in x_grid])
    lower = np.array([(values <= median - x).mean() for x in x_grid])
    return {"x": x_grid, "upper": upper, "lower": lower, "median": median,
            "count": int(values.size)}


def run_theorem4(spec: stepdist.StepSpec, offspring: brwsim.OffspringSpec,
                 n_grid: list[int], replicates: int, master_seed: int, *,
                 strategy: brwsim.Strategy | None = None,
                 out_dir: Path | None = None,
                 threads: int = 1) -> RunArtifacts:
    """Boundedness check for the heavy-atom regime: E M_n = ess_inf * n + O(1).

    Reports mean(m_n - ess_inf * n) per n, the largest gap between grid
    means, and the upper-tail CCDF per n; cross-references the thinned-tree
    survival probability p0.
    """
    info = stepdist.validate_spec(spec)
    regime = ldnum.classify_regime(info, brwsim.offspring_mean(offspring))
    if regime.kind is not ldnum.RegimeKind.BOUNDED_MINIMUM:
        raise RegimeMismatchError(
            f"run_theorem4 needs the bounded-minimum regime, got {regime}")
    if math.isinf(info.ess_inf):
        raise RegimeMismatchError("ess_inf must be finite")
    if strategy is None:
        strategy = brwsim.Beam(1024)
    n_grid = sorted(set(int(n) for n in n_grid))
    config_dict = {
        "spec": stepdist.spec_to_dict(spec),
        "offspring": brwsim.offspring_to_dict(offspring),
        "n_grid": n_grid,
        "replicates": replicates,
        "strategy": strategy_to_dict(strategy),
    }
    manifest = make_manifest("theorem4", config_dict, master_seed)
    exp_id = manifest["experiment_id"]
    strat_name, beam_k = _strategy_descriptor(strategy)
    dist_desc = stepdist.describe(spec)
    off_desc = brwsim.describe_offspring(offspring)
    rows: list[ExperimentRow] = []
    per_n: dict[int, dict] = {}
    ccdf: dict[int, dict] = {}
    for n in n_grid:
        config = brwsim.BrwConfig(offspring=offspring, step=spec, n=n,
                                  strategy=strategy,
                                  seed=rng.derive_key(master_seed, n),
                                  survival_policy=brwsim.ConditionOnSurvival())
        records = brwsim.batch_min(config, replicates, threads=threads)
        centered = []
        for rep, rec in enumerate(records):
            rows.append(ExperimentRow(
                experiment_id=exp_id, dist=dist_desc, offspring=off_desc,
                n=n, rep=rep, m_n=rec.m_n, survived=rec.survived,
                strategy=strat_name, beam_k=beam_k, seed=rec.seed,
                restarts=rec.restarts))
            if rec.survived and math.isfinite(rec.m_n):
                centered.append(rec.m_n - info.ess_inf * n)
        values = np.array(centered)
        per_n[n] = {"mean": float(values.mean()),
                    "se": float(values.std(ddof=1) / math.sqrt(values.size)),
                    "count": int(values.size)}
        xs = np.arange(0.0, 10.5, 0.5)
        ccdf[n] = {"x": xs, "p": np.array([(values > x).mean() for x in xs])}
    means = [per_n[n]["mean"] for n in n_grid]
    thin = brwsim.thinned_survival(offspring, info)
    art = RunArtifacts(exp_id, rows, manifest, extras={
        "per_n": per_n,
        "max_mean_gap": float(max(means) - min(means)),
        "ccdf": ccdf,
        "thinned": thin,
        "ess_inf": info.ess_inf,
    })
    return _emit(art, out_dir, exp_id)


def _leaf_strict_flags(run: brwsim._LevelRun) -> tuple[np.ndarray, np.ndarray]:
    """Final displacements and strictly-leading flags for all leaves of one tree."""
    n = run.n
    disp = run.disp_hist[n]
    finals = disp[0]
    strict = np.ones(finals.size, dtype=bool)
    idx = np.arange(finals.size)
    d = run.d
    for gen in range(n - 1, 0, -1):
        parents = run.parent_hist[gen]
        idx = idx // d if parents is None else parents[0, idx]
        anc = run.disp_hist[gen][0, idx]
        strict &= pathlab._chord_sign(anc * n, finals * gen) > 0
    return finals, strict


def count_typical_leading(spec: stepdist.StepSpec, offspring: brwsim.OffspringSpec,
                          n: int, m_offsets: list[float], replicates: int,
                          master_seed: int) -> dict:
    """Exhaustive per-tree counts of typical leading nodes at depth n.

    For m = m*(n) + offset, counts nodes with m-1 <= S_v <= m that are
    strictly leading (the typical leading set), the window count itself, and
    all nodes with S_v <= m; aggregates means with standard errors and the
    second-moment lower bound on P{count > 0}.
    """
    if not isinstance(offspring, brwsim.Deterministic):
        raise brwsim.ConfigError("count_typical_leading supports deterministic offspring")
    d = offspring.d
    if d**n > _LEADING_GUARD:
        raise GuardError(f"enumeration guard: d^n = {d}^{n} exceeds 2^20")
    tilt = ldnum.solve_tilt(spec, math.log(brwsim.offspring_mean(offspring)))
    pred = ldnum.predict(tilt)
    m_star = pred.m_star(n)
    info = stepdist.validate_spec(spec)
    counts: dict[float, list] = {float(off): [] for off in m_offsets}
    for rep in range(replicates):
        key = rng.derive_key(master_seed, rep)
        run = brwsim._LevelRun(spec, d, n, None,
                               np.array([key], dtype=np.uint64),
                               brwsim._tie_offset(info))
        run.run()
        finals, strict = _leaf_strict_flags(run)
        for off in m_offsets:
            m = m_star + off
            window = (finals >= m - 1.0) & (finals <= m)
            counts[float(off)].append((int((window & strict).sum()),
                                       int(window.sum()),
                                       int((finals <= m).sum())))
    out: dict = {"n": n, "m_star": m_star, "offsets": {}}
    for off, triples in counts.items():
        arr = np.array(triples, dtype=float)
        g, win, below = arr[:, 0], arr[:, 1], arr[:, 2]
        mean_g, mean_win = g.mean(), win.mean()
        m2_g = float((g**2).mean())
        bound = mean_g**2 / (mean_g + m2_g) if mean_g > 0 else 0.0
        out["offsets"][off] = {
            "mean_g": float(mean_g),
            "se_g": float(g.std(ddof=1) / math.sqrt(len(g))),
            "mean_window": float(mean_win),
            "se_window": float(win.std(ddof=1) / math.sqrt(len(win))),
            "mean_below": float(below.mean()),
            "se_below": float(below.std(ddof=1) / math.sqrt(len(below))),
            "ratio": float(n * mean_g / mean_win) if mean_win > 0 else math.nan,
            "chung_erdos_lower": float(bound),
            "freq_nonempty": float((g > 0).mean()),
            "replicates": replicates,
        }
    return out


def rerun_from_manifest(manifest_path: Path, out_dir: Path) -> RunArtifacts:
    """Re-execute a persisted run; the CSV body must reproduce byte for byte."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    kind = manifest["kind"]
    config = manifest["config"]
    seed = manifest["master_seed"]
    if kind == "min_scaling":
        return run_min_scaling(
            stepdist.spec_from_dict(config["spec"]),
            brwsim.offspring_from_dict(config["offspring"]),
            config["n_grid"], config["replicates"],
            strategy_from_dict(config["strategy"]), seed,
            out_dir=out_dir,
            condition_on_survival=config["condition_on_survival"],
            max_restarts=config["max_restarts"])
    if kind == "iid_baseline":
        return run_iid_baseline(
            stepdist.spec_from_dict(config["spec"]), config["mean_offspring"],
            config["n_grid"], config["replicates"], seed, out_dir=out_dir)
    if kind == "theorem4":
        return run_theorem4(
            stepdist.spec_from_dict(config["spec"]),
            brwsim.offspring_from_dict(config["offspring"]),
            config["n_grid"], config["replicates"], seed,
            strategy=strategy_from_dict(config["strategy"]), out_dir=out_dir)
    raise ValueError(f"manifest kind {kind!r} is not replayable")
