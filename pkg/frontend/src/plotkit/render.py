"""Figure rendering from experiment artifacts.

Input schemas (fixed; drift fails loudly):
  rows CSV header:
    experiment_id,dist,offspring,n,rep,m_n,survived,strategy,beam_K,seed,restarts
  fit JSON keys:
    gamma_used, beta_hat, beta_stderr, intercept_hat, n_values
  prediction JSON keys (reference slopes):
    regime, t_star, gamma, beta_brw, beta_iid, residual

The fit resummarization mirrors the producer's recipe exactly: per-n mean of
surviving m_n minus gamma*n, regressed on ln n by weighted least squares with
weights 1/stderr^2 (unit weights if any per-n stderr is zero).  A mismatch
beyond 1e-9 on beta_hat or intercept_hat is a fatal cross-check error.

Output images are deterministic: fixed style, no timestamps or software
metadata in the PNG.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

EXPECTED_HEADER = ("experiment_id", "dist", "offspring", "n", "rep", "m_n",
                   "survived", "strategy", "beam_K", "seed", "restarts")
FIT_KEYS = {"gamma_used", "beta_hat", "beta_stderr", "intercept_hat", "n_values"}
PRED_KEYS = {"gamma", "beta_brw", "beta_iid"}

KINDS = ("log-correction", "tail", "iid-vs-brw", "theorem4")


class SchemaError(ValueError):
    """An input artifact does not match its published schema."""


class CrossCheckError(RuntimeError):
    """The fit report disagrees with a resummarization of its own CSV."""


@dataclass(frozen=True)
class PlotRequest:
    kind: str
    csv_path: Path
    out_path: Path
    fit_path: Path | None = None
    pred_path: Path | None = None
    csv2_path: Path | None = None
    fit2_path: Path | None = None


@dataclass(frozen=True)
class Rows:
    n: np.ndarray
    m_n: np.ndarray
    survived: np.ndarray


def read_rows(path: Path) -> Rows:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        if header != EXPECTED_HEADER:
            for got, want in zip(header, EXPECTED_HEADER):
                if got != want:
                    raise SchemaError(
                        f"{path}: unexpected column {got!r} where {want!r} "
                        "was required")
            raise SchemaError(f"{path}: header has {len(header)} columns, "
                              f"expected {len(EXPECTED_HEADER)}")
        ns, ms, sv = [], [], []
        for rec in reader:
            ns.append(int(rec[3]))
            ms.append(float(rec[5]))
            sv.append(rec[6] == "true")
    if not ns:
        raise SchemaError(f"{path}: no data rows")
    return Rows(np.array(ns), np.array(ms), np.array(sv, dtype=bool))


def read_fit(path: Path) -> dict:
    with open(path) as fh:
        fit = json.load(fh)
    if set(fit) != FIT_KEYS:
        missing = FIT_KEYS - set(fit)
        extra = set(fit) - FIT_KEYS
        raise SchemaError(f"{path}: fit schema drift; missing {sorted(missing)}, "
                          f"unexpected {sorted(extra)}")
    return fit


def read_pred(path: Path) -> dict:
    with open(path) as fh:
        pred = json.load(fh)
    if not PRED_KEYS <= set(pred):
        raise SchemaError(f"{path}: prediction report is missing "
                          f"{sorted(PRED_KEYS - set(pred))}")
    return pred


def summarize(rows: Rows, gamma: float, n_values: list[int]) -> dict:
    """Per-n means of surviving m_n minus gamma*n, with standard errors."""
    out = {}
    for n in n_values:
        sel = (rows.n == n) & rows.survived & np.isfinite(rows.m_n)
        vals = rows.m_n[sel]
        if vals.size < 2:
            raise SchemaError(f"n={n} has {vals.size} surviving rows; cannot "
                              "resummarize")
        out[n] = (float(vals.mean() - gamma * n),
                  float(vals.std(ddof=1) / math.sqrt(vals.size)))
    return out


def _wls(summary: dict) -> tuple[float, float]:
    ns = sorted(summary)
    y = np.array([summary[n][0] for n in ns])
    se = np.array([summary[n][1] for n in ns])
    x = np.log(ns)
    w = 1.0 / se**2 if np.all(se > 0) else np.ones_like(se)
    design = np.column_stack([np.ones_like(x), x])
    wx = design * w[:, None]
    coef = np.linalg.inv(design.T @ wx) @ (wx.T @ y)
    return float(coef[0]), float(coef[1])


def check_fit(rows: Rows, fit: dict) -> dict:
    """Resummarize the CSV and verify the fit report; returns the summary."""
    summary = summarize(rows, fit["gamma_used"], fit["n_values"])
    intercept, beta = _wls(summary)
    if abs(beta - fit["beta_hat"]) > 1e-9 or abs(intercept - fit["intercept_hat"]) > 1e-9:
        raise CrossCheckError(
            f"fit report disagrees with resummarization: beta {fit['beta_hat']!r} "
            f"vs {beta!r}, intercept {fit['intercept_hat']!r} vs {intercept!r}")
    return summary


def _save(fig, out_path: Path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="png", dpi=120,
                metadata={"Software": None})
    plt.close(fig)


def _draw_log_correction(ax, summary: dict, fit: dict, pred: dict,
                         label: str = "runs") -> None:
    ns = sorted(summary)
    x = np.log(ns)
    y = np.array([summary[n][0] for n in ns])
    se = np.array([summary[n][1] for n in ns])
    ax.errorbar(x, y, yerr=se, fmt="o", capsize=3, label=label, zorder=3)
    grid = np.linspace(x.min() - 0.15, x.max() + 0.15, 50)
    ax.plot(grid, fit["intercept_hat"] + fit["beta_hat"] * grid, "-",
            label=f"fit β̂={fit['beta_hat']:.3f}", zorder=2)
    # Reference slopes through the data centroid, so the eye can reject the
    # wrong one directly.
    cx, cy = float(x.mean()), float(y.mean())
    for slope, name, style in ((pred["beta_brw"], "branching", "--"),
                               (pred["beta_iid"], "independent", ":")):
        ax.plot(grid, cy + slope * (grid - cx), style,
                label=f"{name} slope {slope:.3f}", zorder=1)
    ax.set_xlabel("ln n")
    ax.set_ylabel("mean m_n − γ n")
    ax.legend(fontsize=8)


def render(request: PlotRequest) -> Path:
    """Render one figure; returns the output path."""
    if request.kind not in KINDS:
        raise SchemaError(f"unknown plot kind {request.kind!r}; expected one "
                          f"of {KINDS}")
    rows = read_rows(request.csv_path)

    if request.kind == "log-correction":
        if request.fit_path is None or request.pred_path is None:
            raise SchemaError("log-correction needs --fit and --pred")
        fit = read_fit(request.fit_path)
        pred = read_pred(request.pred_path)
        summary = check_fit(rows, fit)
        fig, ax = plt.subplots(figsize=(6, 4.2))
        _draw_log_correction(ax, summary, fit, pred)
        ax.set_title("log-correction of the minimum")
        _save(fig, request.out_path)
        return request.out_path

    if request.kind == "iid-vs-brw":
        if None in (request.fit_path, request.pred_path, request.csv2_path,
                    request.fit2_path):
            raise SchemaError("iid-vs-brw needs --fit, --pred, --csv2, --fit2")
        fit = read_fit(request.fit_path)
        pred = read_pred(request.pred_path)
        summary = check_fit(rows, fit)
        rows2 = read_rows(request.csv2_path)
        fit2 = read_fit(request.fit2_path)
        summary2 = check_fit(rows2, fit2)
        fig, ax = plt.subplots(figsize=(6, 4.2))
        _draw_log_correction(ax, summary, fit, pred, label="branching")
        ns2 = sorted(summary2)
        x2 = np.log(ns2)
        y2 = np.array([summary2[n][0] for n in ns2])
        ax.errorbar(x2, y2, yerr=[summary2[n][1] for n in ns2], fmt="s",
                    capsize=3, label=f"independent (β̂={fit2['beta_hat']:.3f})")
        ax.legend(fontsize=8)
        ax.set_title("branching vs independent forests")
        _save(fig, request.out_path)
        return request.out_path

    if request.kind == "tail":
        n_max = int(rows.n.max())
        vals = rows.m_n[(rows.n == n_max) & rows.survived & np.isfinite(rows.m_n)]
        if vals.size < 10:
            raise SchemaError(f"tail plot needs >= 10 surviving rows at n={n_max}")
        med = float(np.median(vals))
        xs = np.linspace(0, max(1.0, float(np.abs(vals - med).max())), 60)
        upper = [(vals >= med + x).mean() for x in xs]
        lower = [(vals <= med - x).mean() for x in xs]
        fig, ax = plt.subplots(figsize=(6, 4.2))
        ax.semilogy(xs, upper, "-", label="P(m ≥ median + x)")
        ax.semilogy(xs, lower, "--", label="P(m ≤ median − x)")
        ax.set_xlabel("x")
        ax.set_ylabel("empirical CCDF")
        ax.set_title(f"tails around the median, n={n_max}")
        ax.legend(fontsize=8)
        _save(fig, request.out_path)
        return request.out_path

    # theorem4: per-n means of m_n (bounded regime) plus tail at the largest n.
    ns = sorted(set(rows.n.tolist()))
    means, ses = [], []
    for n in ns:
        vals = rows.m_n[(rows.n == n) & rows.survived & np.isfinite(rows.m_n)]
        if vals.size < 2:
            raise SchemaError(f"theorem4 plot needs >= 2 surviving rows at n={n}")
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(vals.size)))
    n_max = ns[-1]
    vals = rows.m_n[(rows.n == n_max) & rows.survived & np.isfinite(rows.m_n)]
    xs = np.arange(0.0, max(4.0, float(vals.max())) + 0.5, 0.5)
    ccdf = [(vals > x).mean() for x in xs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4.0))
    ax1.errorbar(ns, means, yerr=ses, fmt="o-", capsize=3)
    ax1.set_xlabel("n")
    ax1.set_ylabel("mean m_n")
    ax1.set_title("bounded-minimum regime: flat means")
    positive = np.array(ccdf) > 0
    ax2.semilogy(xs[positive], np.array(ccdf)[positive], "o-")
    ax2.set_xlabel("x")
    ax2.set_ylabel("P(m_n > x)")
    ax2.set_title(f"upper tail at n={n_max}")
    fig.tight_layout()
    _save(fig, request.out_path)
    return request.out_path
