"""Command-line front end.

One run = one JSON config (strict: unknown keys are fatal) plus flag
overrides; every run writes a manifest into the output directory before any
computation starts, so runs are always replayable.  Exit codes: 0 success,
1 usage/config error, 2 numeric or domain error (e.g. the tilt equation is
unsolvable in this regime), 3 resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, brwsim, experiments, ldnum, pathlab, rng, stepdist
from .errors import GuardError

_USAGE_ERRORS = (stepdist.SpecError, brwsim.ConfigError, KeyError, json.JSONDecodeError)
_NUMERIC_ERRORS = (stepdist.DomainError, ldnum.UnsolvableError,
                   ldnum.NonSupercriticalError, experiments.RegimeMismatchError,
                   experiments.InsufficientDataError, pathlab.PathError)

_ALLOWED_KEYS = {
    "analyze": {"spec", "mean_offspring"},
    "solve-tilt": {"spec", "mean_offspring"},
    "predict": {"spec", "mean_offspring"},
    "simulate": {"spec", "offspring", "n", "strategy", "condition_on_survival",
                 "max_restarts"},
    "rotations": {"sums", "spec", "n", "count"},
    "shape": {"sums", "a_values", "C"},
    "experiment": {"kind", "spec", "offspring", "mean_offspring", "n", "n_grid",
                   "replicates", "strategy", "condition_on_survival",
                   "max_restarts", "m_offsets", "window", "a", "x_grid"},
    "fit": {"csv", "gamma", "reference_beta"},
}


@dataclass
class RunConfig:
    command: str
    parameters: dict
    output_dir: Path
    seed: int
    threads: int = 1
    artifacts: list[Path] = field(default_factory=list)


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise brwsim.ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _check_keys(command: str, params: dict) -> None:
    allowed = _ALLOWED_KEYS[command]
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise brwsim.ConfigError(
            f"unknown config key(s) {unknown} for command {command!r}; "
            f"allowed: {sorted(allowed)}")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _require(params: dict, key: str):
    if key not in params:
        raise brwsim.ConfigError(f"command config is missing required key {key!r}")
    return params[key]


def _spec_of(params: dict) -> stepdist.StepSpec:
    return stepdist.spec_from_dict(_require(params, "spec"))


def _cmd_analyze(cfg: RunConfig) -> dict:
    spec = _spec_of(cfg.parameters)
    info = stepdist.validate_spec(spec)
    out = {
        "dist": stepdist.describe(spec),
        "ess_inf": info.ess_inf, "atom_at_essinf": info.atom_at_essinf,
        "is_lattice": info.is_lattice, "lattice_period": info.lattice_period,
        "mean": info.mean, "variance": info.variance,
        "lmgf_domain": [info.t_lo, info.t_hi],
    }
    eb = cfg.parameters.get("mean_offspring")
    if eb is not None:
        out["regime"] = str(ldnum.classify_regime(info, float(eb)))
    _write_json(cfg.output_dir / "analyze.json", out)
    print(f"{out['dist']}: mean={info.mean:.6g} var={info.variance:.6g} "
          f"ess_inf={info.ess_inf:.6g} atom={info.atom_at_essinf:.6g} "
          f"lattice={info.is_lattice}")
    if "regime" in out:
        print(f"regime (EB={eb}): {out['regime']}")
    return out


def _cmd_solve_tilt(cfg: RunConfig) -> dict:
    spec = _spec_of(cfg.parameters)
    eb = float(_require(cfg.parameters, "mean_offspring"))
    report = ldnum.prediction_report(spec, eb)
    _write_json(cfg.output_dir / "tilt.json", report)
    if "t_star" in report:
        print(f"t_star={report['t_star']:.6f} gamma={report['gamma']:.6f} "
              f"beta_brw={report['beta_brw']:.6f} beta_iid={report['beta_iid']:.6f} "
              f"regime {report['regime']}")
    else:
        print(f"regime {report['regime']}: no tilt solution")
    return report


def _cmd_predict(cfg: RunConfig) -> dict:
    spec = _spec_of(cfg.parameters)
    eb = float(_require(cfg.parameters, "mean_offspring"))
    info = stepdist.validate_spec(spec)
    regime = ldnum.classify_regime(info, eb)
    if regime.kind is not ldnum.RegimeKind.SHARP_LOG_CORRECTION:
        raise ldnum.UnsolvableError(
            f"predict needs the sharp log-correction regime; this pair is "
            f"{regime} (for a bounded minimum, try `experiment` with kind "
            f"theorem4)")
    report = ldnum.prediction_report(spec, eb)
    _write_json(cfg.output_dir / "prediction.json", report)
    print(f"t_star={report['t_star']:.6f} gamma={report['gamma']:.6f} "
          f"beta_brw={report['beta_brw']:.6f} beta_iid={report['beta_iid']:.6f}")
    return report


def _strategy_of(params: dict) -> brwsim.Strategy:
    raw = params.get("strategy", {"kind": "beam", "K": 10000})
    return experiments.strategy_from_dict(raw)


def _cmd_simulate(cfg: RunConfig) -> dict:
    p = cfg.parameters
    spec = _spec_of(p)
    offspring = brwsim.offspring_from_dict(_require(p, "offspring"))
    policy = (brwsim.ConditionOnSurvival(int(p.get("max_restarts", 1000)))
              if p.get("condition_on_survival", False) else brwsim.Unconditional())
    config = brwsim.BrwConfig(offspring=offspring, step=spec, n=int(_require(p, "n")),
                              strategy=_strategy_of(p), seed=cfg.seed,
                              survival_policy=policy)
    rec = brwsim.simulate_min(config)
    out = {
        "n": rec.n, "m_n": rec.m_n if math.isfinite(rec.m_n) else "inf",
        "survived": rec.survived,
        "argmin_path": rec.argmin_path.sums.tolist() if rec.argmin_path else None,
        "frontier_truncated": rec.frontier_truncated,
        "particles_expanded": rec.particles_expanded,
        "seed": rec.seed, "restarts": rec.restarts,
    }
    _write_json(cfg.output_dir / "simulate.json", out)
    print(f"n={rec.n} m_n={rec.m_n:.6g} survived={rec.survived} "
          f"truncated={rec.frontier_truncated} expanded={rec.particles_expanded}")
    return out


def _cmd_rotations(cfg: RunConfig) -> dict:
    p = cfg.parameters
    if "sums" in p:
        report = pathlab.rotation_census(pathlab.WalkPath(np.asarray(p["sums"], float)))
        out = {
            "leading_count": report.leading_count,
            "strictly_leading_count": report.strictly_leading_count,
            "leading_indices": list(report.leading_indices),
        }
    else:
        spec = _spec_of(p)
        n = int(_require(p, "n"))
        count = int(p.get("count", 1000))
        leading_ge_1 = strict_le_1 = 0
        for i in range(count):
            steps = stepdist.sample(spec, rng.derive_key(cfg.seed, i), n)
            rep = pathlab.rotation_census(pathlab.WalkPath.from_steps(steps))
            leading_ge_1 += rep.leading_count >= 1
            strict_le_1 += rep.strictly_leading_count <= 1
        out = {"paths": count, "n": n,
               "frac_leading_count_ge_1": leading_ge_1 / count,
               "frac_strictly_leading_count_le_1": strict_le_1 / count}
    _write_json(cfg.output_dir / "rotations.json", out)
    print(json.dumps(out))
    return out


def _cmd_shape(cfg: RunConfig) -> dict:
    p = cfg.parameters
    path = pathlab.WalkPath(np.asarray(_require(p, "sums"), float))
    a_values = [int(a) for a in p.get("a_values", [-1])]
    report = pathlab.shape_report(path, a_values, C=int(p.get("C", 1)))
    out = {
        "abo": {str(a): v for a, v in report.abo.items()},
        "min_excess": report.min_excess,
        "close_indices": list(report.close_indices),
        "b_a": {str(a): v for a, v in report.b_a.items()},
        "well_behaved": report.well_behaved,
    }
    _write_json(cfg.output_dir / "shape.json", out)
    print(json.dumps(out))
    return out


def _cmd_experiment(cfg: RunConfig) -> dict:
    p = cfg.parameters
    kind = _require(p, "kind")
    if kind == "scaling":
        spec = _spec_of(p)
        offspring = brwsim.offspring_from_dict(_require(p, "offspring"))
        art = experiments.run_min_scaling(
            spec, offspring, [int(n) for n in _require(p, "n_grid")],
            int(_require(p, "replicates")), _strategy_of(p), cfg.seed,
            out_dir=cfg.output_dir,
            condition_on_survival=bool(p.get("condition_on_survival", True)),
            max_restarts=int(p.get("max_restarts", 1000)), threads=cfg.threads)
        report = ldnum.prediction_report(spec, brwsim.offspring_mean(offspring))
        out = {"experiment_id": art.experiment_id, "csv": str(art.csv_path),
               "manifest": str(art.manifest_path)}
        if "gamma" in report:
            fit = experiments.fit_log_correction(art.rows, report["gamma"],
                                                 reference_beta=report["beta_iid"])
            fit_path = cfg.output_dir / f"{art.experiment_id}_fit.json"
            experiments.write_fit(fit_path, fit)
            _write_json(cfg.output_dir / f"{art.experiment_id}_prediction.json", report)
            out["fit"] = str(fit_path)
            print(f"beta_hat={fit.beta_hat:.4f} (se {fit.beta_stderr:.4f}) "
                  f"targets: brw {report['beta_brw']:.4f}, iid {report['beta_iid']:.4f}")
        print(f"rows -> {art.csv_path}")
        return out
    if kind == "iid":
        spec = _spec_of(p)
        art = experiments.run_iid_baseline(
            spec, float(_require(p, "mean_offspring")),
            [int(n) for n in _require(p, "n_grid")],
            int(_require(p, "replicates")), cfg.seed, out_dir=cfg.output_dir)
        fit = art.extras["fit"]
        fit_path = cfg.output_dir / f"{art.experiment_id}_fit.json"
        experiments.write_fit(fit_path, fit)
        print(f"iid beta_hat={fit.beta_hat:.4f} (se {fit.beta_stderr:.4f})")
        return {"experiment_id": art.experiment_id, "csv": str(art.csv_path),
                "fit": str(fit_path)}
    if kind == "tail":
        spec = _spec_of(p)
        offspring = brwsim.offspring_from_dict(_require(p, "offspring"))
        profile = experiments.run_tail_profile(
            spec, offspring, int(_require(p, "n")), int(_require(p, "replicates")),
            cfg.seed, _strategy_of(p), threads=cfg.threads)
        _write_json(cfg.output_dir / "tail_profile.json", profile)
        print(f"median={profile['median']:.4f} over {profile['count']} survivors")
        return {"tail": str(cfg.output_dir / "tail_profile.json")}
    if kind == "theorem4":
        spec = _spec_of(p)
        offspring = brwsim.offspring_from_dict(_require(p, "offspring"))
        art = experiments.run_theorem4(
            spec, offspring, [int(n) for n in _require(p, "n_grid")],
            int(_require(p, "replicates")), cfg.seed,
            strategy=_strategy_of(p) if "strategy" in p else None,
            out_dir=cfg.output_dir, threads=cfg.threads)
        thin = art.extras["thinned"]
        summary = {"experiment_id": art.experiment_id,
                   "p0": thin.p0, "max_mean_gap": art.extras["max_mean_gap"],
                   "per_n": art.extras["per_n"]}
        _write_json(cfg.output_dir / f"{art.experiment_id}_theorem4.json", summary)
        print(f"p0={thin.p0:.6f} max mean gap={art.extras['max_mean_gap']:.4f}")
        return summary
    if kind == "leading":
        spec = _spec_of(p)
        offspring = brwsim.offspring_from_dict(_require(p, "offspring"))
        out = experiments.count_typical_leading(
            spec, offspring, int(_require(p, "n")),
            [float(x) for x in p.get("m_offsets", [0.0])],
            int(_require(p, "replicates")), cfg.seed)
        _write_json(cfg.output_dir / "leading_counts.json", out)
        print(json.dumps({str(k): v.get("ratio") for k, v in out["offsets"].items()}))
        return out
    raise brwsim.ConfigError(f"unknown experiment kind {kind!r}")


def _cmd_fit(cfg: RunConfig) -> dict:
    p = cfg.parameters
    rows = experiments.read_rows_csv(Path(_require(p, "csv")))
    ref = p.get("reference_beta")
    fit = experiments.fit_log_correction(rows, float(_require(p, "gamma")),
                                         reference_beta=float(ref) if ref else None)
    fit_path = cfg.output_dir / "fit.json"
    experiments.write_fit(fit_path, fit)
    print(f"beta_hat={fit.beta_hat:.6f} intercept={fit.intercept_hat:.6f} "
          f"se={fit.beta_stderr:.6f} n={list(fit.n_values)}")
    return experiments.fit_to_dict(fit)


_HANDLERS = {
    "analyze": _cmd_analyze,
    "solve-tilt": _cmd_solve_tilt,
    "predict": _cmd_predict,
    "simulate": _cmd_simulate,
    "rotations": _cmd_rotations,
    "shape": _cmd_shape,
    "experiment": _cmd_experiment,
    "fit": _cmd_fit,
}


def run(cfg: RunConfig) -> int:
    """Validate, write the run manifest, then dispatch; returns the exit code."""
    try:
        _check_keys(cfg.command, cfg.parameters)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        _write_json(cfg.output_dir / "run_manifest.json", {
            "command": cfg.command,
            "parameters": cfg.parameters,
            "seed": cfg.seed,
            "threads": cfg.threads,
            "tool_version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        })
        _HANDLERS[cfg.command](cfg)
        return 0
    except GuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 3
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="brwkit",
        description="minima of branching random walks: constants, simulation, experiments")
    parser.add_argument("command", choices=sorted(_HANDLERS))
    parser.add_argument("--config", type=Path, help="JSON config file for the command")
    parser.add_argument("--output", type=Path, default=None,
                        help="output directory (default ./brwkit_out)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed; omitted -> fresh seed, recorded in the manifest")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (value parsed as JSON when possible)")
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    try:
        params: dict = {}
        if args.config is not None:
            with open(args.config) as fh:
                params = json.load(fh)
            if not isinstance(params, dict):
                raise brwsim.ConfigError("config file must hold a JSON object")
        for item in args.set:
            key, value = _parse_override(item)
            params[key] = value
    except (OSError, json.JSONDecodeError, brwsim.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    seed = args.seed if args.seed is not None else secrets.randbits(63)
    cfg = RunConfig(
        command=args.command,
        parameters=params,
        output_dir=args.output or Path.cwd() / "brwkit_out",
        seed=seed,
        threads=max(1, args.threads),
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
