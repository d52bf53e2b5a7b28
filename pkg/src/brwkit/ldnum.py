"""Large-deviations numerics for the minimum of a branching random walk.

Central objects: the rate function f(t) = t*Lambda'(t) - Lambda(t), the tilt
t* < 0 solving f(t*) = log E B, and the constants it induces -- the linear
speed gamma = Lambda'(t*), the iid log-correction 1/(2|t*|) and the branching
one 3/(2|t*|).

A note on the sharp tail constant: the exact asymptotics for
P{S_n <= Lambda'(t) n - a} used here carry the prefactor
1 / (|t| * sqrt(2 pi n Lambda''(t))).  The |t| factor is required to match the
exact Gaussian left tail (and the classical Bahadur-Rao constant); source
statements of this estimate sometimes omit it because they only use the
estimate up to Theta(.), where constants are immaterial.  `bahadur_rao_tail`
is validated against the exact normal CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .stepdist import (
    DistInfo,
    DomainError,
    SpecError,
    StepSpec,
    lmgf_eval,
    validate_spec,
)


class UnsolvableError(ValueError):
    """The tilt equation f(t) = log EB has no root (wrong regime)."""


class NonSupercriticalError(ValueError):
    """log EB <= 0: the branching process is not supercritical."""


_RESIDUAL_TOL = 1e-10
_BISECT_WIDTH = 1e-12
_BRAMSON_RTOL = 1e-9


@dataclass(frozen=True)
class TiltSolution:
    """Root t* < 0 of f(t) = log EB and derived constants."""

    t_star: float
    gamma: float
    f_at_t: float
    log_mean_offspring: float
    residual: float


class RegimeKind(Enum):
    SHARP_LOG_CORRECTION = "SharpLogCorrection"
    BRAMSON_BOUNDARY = "BramsonBoundary"
    BOUNDED_MINIMUM = "BoundedMinimum"
    UNSUPPORTED = "Unsupported"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    reason: str = ""

    def __str__(self) -> str:
        if self.kind is RegimeKind.UNSUPPORTED and self.reason:
            return f"Unsupported({self.reason})"
        return self.kind.value


@dataclass(frozen=True)
class PredictionSet:
    """Closed-form location predictions derived from a tilt solution.

    m_star(n) = gamma*n + beta_iid*ln n is the first-moment breakpoint (and
    the iid-forest minimum location); m_prime(n) = gamma*n + beta_brw*ln n is
    where the branching minimum sits, both up to O(1).
    """

    t_star: float
    gamma: float
    beta_brw: float
    beta_iid: float

    def m_star(self, n: float) -> float:
        return self.gamma * n + self.beta_iid * math.log(n)

    def m_prime(self, n: float) -> float:
        return self.gamma * n + self.beta_brw * math.log(n)


def rate_function(spec: StepSpec, t: float) -> float:
    """f(t) = t*Lambda'(t) - Lambda(t)."""
    prof = lmgf_eval(spec, t)
    return t * prof.d1 - prof.lmgf


def rate_limit_at_minus_infinity(info: DistInfo) -> float:
    """lim_{t -> -inf} f(t) = log(1 / P{X = ess inf X}), +inf if no atom."""
    if math.isinf(info.ess_inf) or info.atom_at_essinf <= 0.0:
        return math.inf
    return math.log(1.0 / info.atom_at_essinf)


def solve_tilt(spec: StepSpec, log_mean_offspring: float) -> TiltSolution:
    """Solve f(t) = log_mean_offspring for t < 0.

    f is strictly decreasing in t on t <= 0, so it increases from f(0) = 0 to
    its t -> -inf limit; a sign-safe bisection bracket is found by doubling
    from t = -1, then the root is polished with one Newton step
    (f'(t) = t * Lambda''(t)).
    """
    info = validate_spec(spec)
    if log_mean_offspring <= 0.0:
        raise NonSupercriticalError(
            f"log EB must be positive, got {log_mean_offspring}")
    limit = rate_limit_at_minus_infinity(info)
    if log_mean_offspring >= limit:
        raise UnsolvableError(
            f"log EB = {log_mean_offspring:.6g} is not below the rate-function "
            f"limit {limit:.6g}; the minimum is not in the sharp regime "
            f"(see classify_regime)")

    target = log_mean_offspring
    lo = 0.0  # f(lo) < target
    hi = -1.0
    for _ in range(256):
        if info.t_lo > -math.inf and hi <= info.t_lo + 1e-9:
            hi = info.t_lo + 1e-9
            if rate_function(spec, hi) < target:
                raise UnsolvableError(
                    "rate function does not reach log EB inside the LMGF domain")
            break
        if rate_function(spec, hi) >= target:
            break
        lo = hi
        hi *= 2.0
    else:
        raise UnsolvableError("bracket expansion failed to cross log EB")

    # Bisection: invariant f(lo) < target <= f(hi), lo > hi (both <= 0).
    while lo - hi > _BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if rate_function(spec, mid) >= target:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    prof = lmgf_eval(spec, t)
    fprime = t * prof.d2
    if fprime != 0.0:
        t -= (t * prof.d1 - prof.lmgf - target) / fprime
    prof = lmgf_eval(spec, t)
    f_at = t * prof.d1 - prof.lmgf
    residual = abs(f_at - target)
    if residual > _RESIDUAL_TOL:
        raise UnsolvableError(
            f"tilt solve residual {residual:.3g} exceeds {_RESIDUAL_TOL}")
    return TiltSolution(t_star=t, gamma=prof.d1, f_at_t=f_at,
                        log_mean_offspring=target, residual=residual)


def classify_regime(info: DistInfo, mean_offspring: float) -> Regime:
    """Place (X, B) into the regime that governs E M_n.

    Bounded-below steps with a heavy atom at the infimum pin the minimum at
    ess_inf * n + O(1); the knife-edge atom = 1/EB is its own regime; the
    generic solvable, nonlattice case carries the sharp log correction.
    """
    if not (mean_offspring > 1.0):
        raise SpecError(f"mean offspring must exceed 1, got {mean_offspring}")
    inv_eb = 1.0 / mean_offspring
    if not math.isinf(info.ess_inf) and info.atom_at_essinf > 0.0:
        if abs(info.atom_at_essinf - inv_eb) <= _BRAMSON_RTOL * inv_eb:
            return Regime(RegimeKind.BRAMSON_BOUNDARY)
        if info.atom_at_essinf > inv_eb:
            if info.t_hi <= 0.0:
                return Regime(RegimeKind.UNSUPPORTED,
                              "no positive exponential moment (t_hi <= 0)")
            return Regime(RegimeKind.BOUNDED_MINIMUM)
    if math.log(mean_offspring) >= rate_limit_at_minus_infinity(info):
        return Regime(RegimeKind.UNSUPPORTED,
                      "tilt equation unsolvable: log EB >= lim f(t)")
    if info.is_lattice:
        return Regime(RegimeKind.UNSUPPORTED,
                      "lattice step size (sharp asymptotics assume nonlattice X)")
    if info.t_hi <= 0.0:
        return Regime(RegimeKind.UNSUPPORTED,
                      "no positive exponential moment (t_hi <= 0)")
    return Regime(RegimeKind.SHARP_LOG_CORRECTION)


def _solve_slope(spec: StepSpec, c: float, info: DistInfo) -> float:
    """Find t < 0 with Lambda'(t) = c for ess_inf < c < mean (Lambda' increasing)."""
    lo = 0.0
    hi = -1.0
    for _ in range(256):
        if info.t_lo > -math.inf and hi <= info.t_lo + 1e-9:
            hi = info.t_lo + 1e-9
            break
        if lmgf_eval(spec, hi).d1 <= c:
            break
        lo = hi
        hi *= 2.0
    else:
        raise DomainError(f"could not bracket a tilt with slope {c}")
    while lo - hi > _BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if lmgf_eval(spec, mid).d1 <= c:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    prof = lmgf_eval(spec, t)
    t -= (prof.d1 - c) / prof.d2
    return t


def bahadur_rao_tail(spec: StepSpec, n: int, threshold: float) -> float:
    """Sharp estimate of P{S_n <= threshold} for a nonlattice step.

    Picks the tilt t with Lambda'(t) = threshold/n and returns
    exp(-n f(t)) / (|t| sqrt(2 pi n Lambda''(t))); see the module docstring
    for the |t| prefactor.
    """
    info = validate_spec(spec)
    if info.is_lattice:
        raise SpecError(
            f"{spec!r} is lattice; the sharp estimate implemented here "
            "covers only nonlattice steps")
    if n < 1:
        raise SpecError(f"n must be positive, got {n}")
    c = threshold / n
    if not (info.ess_inf < c < info.mean):
        raise DomainError(
            f"threshold/n = {c:.6g} must lie strictly between ess_inf "
            f"{info.ess_inf:.6g} and the mean {info.mean:.6g}")
    t = _solve_slope(spec, c, info)
    return bahadur_rao_tail_at(spec, n, t, a=0.0)


def bahadur_rao_tail_at(spec: StepSpec, n: int, t: float, a: float = 0.0) -> float:
    """Sharp estimate of P{S_n <= Lambda'(t) n - a} at a fixed tilt t < 0."""
    return math.exp(bahadur_rao_tail_log_at(spec, n, t, a))


def bahadur_rao_tail_log_at(spec: StepSpec, n: int, t: float, a: float = 0.0) -> float:
    """log of bahadur_rao_tail_at; usable far below double-precision underflow."""
    if t >= 0.0:
        raise DomainError(f"tilt must be negative, got t={t}")
    prof = lmgf_eval(spec, t)
    f_at = t * prof.d1 - prof.lmgf
    return a * t - n * f_at - math.log(abs(t)) - 0.5 * math.log(prof.d2 * 2.0 * math.pi * n)


def bahadur_rao_tail_log(spec: StepSpec, n: int, threshold: float) -> float:
    """log of bahadur_rao_tail (deep-tail safe)."""
    info = validate_spec(spec)
    if info.is_lattice:
        raise SpecError(
            f"{spec!r} is lattice; the sharp estimate implemented here "
            "covers only nonlattice steps")
    c = threshold / n
    if not (info.ess_inf < c < info.mean):
        raise DomainError(
            f"threshold/n = {c:.6g} must lie strictly between ess_inf "
            f"{info.ess_inf:.6g} and the mean {info.mean:.6g}")
    t = _solve_slope(spec, c, info)
    return bahadur_rao_tail_log_at(spec, n, t, a=0.0)


def chernoff_bound(tilt: TiltSolution, k: int, r: float, d: int) -> float:
    """Upper bound e^{t* r} / d^k on P{S_k <= Lambda'(t*) k - r}.

    Requires the tilt to have been solved for log EB = log d.
    """
    if k < 1:
        raise SpecError(f"k must be positive, got {k}")
    if r < 0.0:
        raise SpecError(f"r must be >= 0, got {r}")
    if d < 2:
        raise SpecError(f"d must be >= 2, got {d}")
    if abs(tilt.log_mean_offspring - math.log(d)) > 1e-9:
        raise SpecError(
            f"tilt was solved for log EB = {tilt.log_mean_offspring:.6g}, "
            f"not log {d}")
    return math.exp(tilt.t_star * r) / d**k


def predict(tilt: TiltSolution) -> PredictionSet:
    """Location constants implied by a tilt solution."""
    beta_iid = -1.0 / (2.0 * tilt.t_star)
    return PredictionSet(t_star=tilt.t_star, gamma=tilt.gamma,
                         beta_brw=3.0 * beta_iid, beta_iid=beta_iid)


def prediction_report(spec: StepSpec, mean_offspring: float) -> dict:
    """JSON-ready report consumed by the experiment harness and the plot tool."""
    info = validate_spec(spec)
    regime = classify_regime(info, mean_offspring)
    report: dict = {"regime": str(regime)}
    if regime.kind is RegimeKind.SHARP_LOG_CORRECTION:
        tilt = solve_tilt(spec, math.log(mean_offspring))
        pred = predict(tilt)
        report.update(t_star=tilt.t_star, gamma=pred.gamma,
                      beta_brw=pred.beta_brw, beta_iid=pred.beta_iid,
                      residual=tilt.residual)
    return report
