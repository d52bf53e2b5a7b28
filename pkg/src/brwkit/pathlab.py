"""Exact path combinatorics: leading walks, cyclic rotations, shape events.

A walk is the vector of partial sums S_0 = 0, S_1, ..., S_n.  The chord at
index i is S_n * i / n; a walk is leading when it never dips below its chord
and strictly leading when it stays strictly above it at every interior index
(the comparison at i = n is an identity, so strictness is evaluated over
i = 1..n-1; a one-step walk is vacuously strictly leading).

All chord comparisons use the multiplied form S_i * n vs S_n * i -- no
division -- and treat differences within relative 1e-15 as exact ties, so the
rotation counting facts (at most one strictly leading rotation, at least one
leading rotation) hold exactly on floating-point inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_ndtr, ndtri_exp

from . import rng, stepdist
from .errors import GuardError

_TIE_RTOL = 1e-15


class PathError(ValueError):
    """Invalid walk input or index."""


@dataclass(frozen=True)
class WalkPath:
    """Partial sums S_0..S_n of a root-to-leaf walk; S_0 must be 0."""

    sums: np.ndarray

    def __post_init__(self):
        sums = np.asarray(self.sums, dtype=float)
        object.__setattr__(self, "sums", sums)
        if sums.ndim != 1 or sums.size < 1:
            raise PathError("sums must be a 1-D array with at least S_0")
        if sums[0] != 0.0:
            raise PathError(f"S_0 must be 0, got {sums[0]}")

    @property
    def n(self) -> int:
        return self.sums.size - 1

    @classmethod
    def from_steps(cls, steps) -> "WalkPath":
        steps = np.asarray(steps, dtype=float)
        sums = np.concatenate(([0.0], np.cumsum(steps)))
        return cls(sums)

    def steps(self) -> np.ndarray:
        return np.diff(self.sums)


@dataclass(frozen=True)
class LeadingStatus:
    leading: bool
    strictly_leading: bool


@dataclass(frozen=True)
class RotationReport:
    leading_count: int
    strictly_leading_count: int
    leading_indices: tuple[int, ...]
    strictly_leading_indices: tuple[int, ...]


@dataclass(frozen=True)
class ShapeReport:
    abo: dict[int, bool]
    min_excess: float
    close_indices: tuple[int, ...]
    b_a: dict[int, bool]
    well_behaved: bool


@dataclass(frozen=True)
class ShapeEstimate:
    """Monte Carlo estimates of conditional shape probabilities."""

    p_abo: float
    p_abo_and_ba: float
    se_abo: float
    se_joint: float
    replicates: int
    acceptance_rate: float | None


def _chord_sign(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """-1 / 0 / +1 per element, with |lhs - rhs| <= 1e-15 * scale counting as 0."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    diff = lhs - rhs
    tol = _TIE_RTOL * np.maximum(np.abs(lhs), np.abs(rhs))
    return np.where(np.abs(diff) <= tol, 0.0, np.sign(diff))


def leading_status(path: WalkPath) -> LeadingStatus:
    """Leading / strictly-leading flags for one walk."""
    n = path.n
    if n < 1:
        raise PathError("predicates need n >= 1")
    if n == 1:
        return LeadingStatus(leading=True, strictly_leading=True)
    s = path.sums
    i = np.arange(1, n)
    sign = _chord_sign(s[1:n] * n, s[n] * i)
    return LeadingStatus(leading=bool(np.all(sign >= 0)),
                         strictly_leading=bool(np.all(sign > 0)))


def _extended_sums(path: WalkPath) -> np.ndarray:
    """S_0..S_n followed by S_n + S_1 .. S_n + S_{n-1} (wraparound chain)."""
    s = path.sums
    n = path.n
    return np.concatenate((s, s[n] + s[1:n]))


def rotate(path: WalkPath, j: int) -> WalkPath:
    """Walk of the step sequence rotated left by j; endpoint preserved exactly."""
    n = path.n
    if not 0 <= j <= n - 1:
        raise PathError(f"rotation index must be in [0, {n - 1}], got {j}")
    ext = _extended_sums(path)
    sums = ext[j:j + n + 1] - ext[j]
    sums[n] = path.sums[n]
    sums[0] = 0.0
    return WalkPath(sums)


def rotation_census(path: WalkPath) -> RotationReport:
    """Apply leading_status to all n cyclic rotations of the walk.

    Deterministic combinatorial facts (exact, any input): at most one rotation
    is strictly leading, and at least one is leading.
    """
    n = path.n
    if n < 1:
        raise PathError("census needs n >= 1")
    if n == 1:
        return RotationReport(1, 1, (0,), (0,))
    ext = _extended_sums(path)
    windows = sliding_window_view(ext, n + 1)[:n]
    mat = windows - windows[:, :1]
    final = path.sums[n]
    i = np.arange(1, n)
    sign = _chord_sign(mat[:, 1:n] * n, final * i)
    leading = np.all(sign >= 0, axis=1)
    strict = np.all(sign > 0, axis=1)
    return RotationReport(
        leading_count=int(leading.sum()),
        strictly_leading_count=int(strict.sum()),
        leading_indices=tuple(np.flatnonzero(leading).tolist()),
        strictly_leading_indices=tuple(np.flatnonzero(strict).tolist()),
    )


def _abo_flag(sums: np.ndarray, a: float) -> bool:
    """Stays-above event: S_i > S_n * i/n + a at every interior index."""
    n = sums.size - 1
    if n == 1:
        return True
    i = np.arange(1, n)
    sign = _chord_sign(sums[1:n] * n, sums[n] * i + a * n)
    return bool(np.all(sign > 0))


def shape_report(path: WalkPath, a_values: list[int], C: int = 1) -> ShapeReport:
    """Exact shape indicators for one walk.

    abo(a) is the stays-above event; C_k says S_k is within b(n,k)^{1/57} of
    its chord, with b(n,k) = min(k, n-k); B_a is the union of C_k over
    b-bulk indices |a|^57 <= k <= n - |a|^57 (empty when |a|^57 > n/2);
    well-behaved requires staying b(n,k)^{1/57} *above* the chord for all
    C <= k <= n - C.
    """
    n = path.n
    if n < 1:
        raise PathError("shape_report needs n >= 1")
    if C < 1:
        raise PathError(f"C must be a positive integer, got {C}")
    if n < 2 * C:
        raise PathError(f"well-behaved check needs n >= 2C, got n={n}, C={C}")
    for a in a_values:
        if a > -1:
            raise PathError(f"a values must be integers <= -1, got {a}")
    s = path.sums
    final = s[n]
    i_all = np.arange(0, n + 1)
    b = np.minimum(i_all, n - i_all).astype(float)
    close = _chord_sign(s * n, final * i_all + b ** (1.0 / 57.0) * n) <= 0
    close_indices = tuple(np.flatnonzero(close).tolist())

    interior = np.arange(1, n)
    if n == 1:
        min_excess = math.inf
    else:
        min_excess = float(np.min(s[1:n] - final * interior / n))

    abo = {int(a): _abo_flag(s, float(a)) for a in a_values}
    b_a: dict[int, bool] = {}
    for a in a_values:
        lo = abs(int(a)) ** 57
        if 2 * lo > n:
            b_a[int(a)] = False
            continue
        hi = n - lo
        b_a[int(a)] = bool(np.any(close[lo:hi + 1]))

    ks = np.arange(C, n - C + 1)
    bk = np.minimum(ks, n - ks).astype(float)
    wb_sign = _chord_sign(s[ks] * n, final * ks + bk ** (1.0 / 57.0) * n)
    well_behaved = bool(np.all(wb_sign >= 0))
    return ShapeReport(abo=abo, min_excess=min_excess, close_indices=close_indices,
                       b_a=b_a, well_behaved=well_behaved)


def _events_from_partials(partials: np.ndarray, finals: np.ndarray, n: int,
                          a: int) -> tuple[np.ndarray, np.ndarray]:
    """abo(a) and B_a indicators for rows of interior partial sums S_1..S_{n-1}."""
    i = np.arange(1, n)
    chord = finals[:, None] * (i / n)
    excess = partials - chord
    abo = np.all(excess > a, axis=1)
    lo = abs(a) ** 57
    if 2 * lo > n:
        ba = np.zeros(abo.size, dtype=bool)
    else:
        # a <= -1 forces lo >= 1, so the k range sits inside the interior.
        ks = np.arange(lo, n - lo + 1)
        bk = np.minimum(ks, n - ks).astype(float) ** (1.0 / 57.0)
        ba = np.any(excess[:, ks - 1] <= bk, axis=1)
    return abo, ba


def conditional_shape_estimate(spec: stepdist.StepSpec, n: int,
                               window: tuple[float, float], a: int,
                               replicates: int, seed: int = 0,
                               ) -> ShapeEstimate:
    """Estimate P{abo a | S_n in window} and the joint with B_a.

    Gaussian steps use the exact conditional bridge (S_n sampled from the
    window by inverse CDF, then S_i | S_n via the sequential bridge law), so
    large n costs only R*n normal draws.  Other variants fall back to
    rejection on the window; acceptance below 1e-6 raises GuardError.
    """
    if a > -1:
        raise PathError(f"a must be an integer <= -1, got {a}")
    if n < 2:
        raise PathError(f"n must be >= 2, got {n}")
    if replicates < 1:
        raise PathError("replicates must be >= 1")
    lo, hi = window
    if not lo < hi:
        raise PathError(f"window must satisfy lo < hi, got {window}")
    info = stepdist.validate_spec(spec)
    gen = rng.generator(rng.mix64(seed ^ 0x770A11CE))

    if isinstance(spec, stepdist.Gaussian):
        mu_n = spec.mu * n
        sd_n = spec.sigma * math.sqrt(n)
        # Truncated-normal endpoint sampling in log space: the window may sit
        # tens of sigmas deep (ndtr underflows), but log_ndtr/ndtri_exp do not.
        llo = float(log_ndtr((lo - mu_n) / sd_n))
        lhi = float(log_ndtr((hi - mu_n) / sd_n))
        if not lhi > -math.inf:
            raise PathError("window has vanishing probability for S_n")
        u = gen.random(replicates)
        # p = p_lo + u*(p_hi - p_lo), evaluated as p_hi * (u + (1-u) e^{llo-lhi})
        # so an infinitely deep lower endpoint (llo = -inf) degrades gracefully.
        log_p = lhi + np.log(u + (1.0 - u) * math.exp(llo - lhi))
        finals = mu_n + sd_n * ndtri_exp(log_p)
        partials = np.empty((replicates, n - 1))
        s = np.zeros(replicates)
        for i in range(1, n):
            remaining = n - i + 1
            mean_step = s + (finals - s) / remaining
            sd_step = spec.sigma * math.sqrt((remaining - 1) / remaining)
            s = mean_step + sd_step * gen.standard_normal(replicates)
            partials[:, i - 1] = s
        abo, ba = _events_from_partials(partials, finals, n, a)
        acceptance = None
    else:
        accepted_p: list[np.ndarray] = []
        accepted_f: list[np.ndarray] = []
        got = 0
        tried = 0
        batch = max(1024, min((1 << 22) // max(n, 1), 1 << 16))
        while got < replicates:
            steps = stepdist.icdf(spec, gen.random((batch, n)))
            sums = np.cumsum(steps, axis=1)
            keep = (sums[:, -1] >= lo) & (sums[:, -1] <= hi)
            tried += batch
            if np.any(keep):
                accepted_p.append(sums[keep, :-1])
                accepted_f.append(sums[keep, -1])
                got += int(keep.sum())
            if tried >= 2_000_000 and got / tried < 1e-6:
                raise GuardError(
                    f"rejection acceptance {got}/{tried} below 1e-6; use a Gaussian "
                    "spec (exact bridge) or a smaller n / wider window")
        partials = np.concatenate(accepted_p)[:replicates]
        finals = np.concatenate(accepted_f)[:replicates]
        abo, ba = _events_from_partials(partials, finals, n, a)
        acceptance = got / tried

    joint = abo & ba
    r = replicates
    p1 = float(abo.mean())
    p2 = float(joint.mean())
    return ShapeEstimate(
        p_abo=p1, p_abo_and_ba=p2,
        se_abo=math.sqrt(p1 * (1.0 - p1) / r),
        se_joint=math.sqrt(p2 * (1.0 - p2) / r),
        replicates=r, acceptance_rate=acceptance)
