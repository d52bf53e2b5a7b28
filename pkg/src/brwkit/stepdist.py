"""Step-size distributions: sampling and logarithmic moment generating functions.

A step distribution is described by a frozen spec object (one of the variants
below).  `validate_spec` derives the structural facts needed by the
large-deviations layer (essential infimum, atom mass there, lattice structure,
LMGF domain); `lmgf_eval` returns Lambda(t) = log E e^{tX} with its first two
derivatives, in closed form for every variant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import betaincinv, digamma, gammaln, ndtri, polygamma

from . import rng


class SpecError(ValueError):
    """A step spec violates its parameter constraints."""


class DomainError(ValueError):
    """An LMGF evaluation point lies outside the open domain."""


# Evaluation requests closer than this to an open domain endpoint are
# rejected: Lambda'' blows up at the boundary (e.g. Exponential at t = rate).
_EDGE_GUARD = 1e-9

# Gap GCD below this is treated as "no common period" for Empirical specs.
_LATTICE_TOL = 1e-12


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float


@dataclass(frozen=True)
class Exponential:
    rate: float
    shift: float = 0.0


@dataclass(frozen=True)
class TwoPoint:
    x0: float
    x1: float
    p0: float


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float


@dataclass(frozen=True)
class NegLogBeta:
    """X = -log(U) with U ~ Beta(alpha, beta); supported on (0, inf)."""

    alpha: float
    beta: float


@dataclass(frozen=True)
class Empirical:
    samples: tuple[float, ...]


StepSpec = Union[Gaussian, Exponential, TwoPoint, Uniform, NegLogBeta, Empirical]


@dataclass(frozen=True)
class DistInfo:
    """Structural facts about a step distribution.

    t_lo/t_hi bound the open interval on which the LMGF is finite; t_hi > 0
    certifies a finite positive exponential moment.
    """

    ess_inf: float
    atom_at_essinf: float
    is_lattice: bool
    lattice_period: float | None
    mean: float
    variance: float
    t_lo: float
    t_hi: float


@dataclass(frozen=True)
class MomentProfile:
    """Lambda(t) with its first two derivatives at one point."""

    t: float
    lmgf: float
    d1: float
    d2: float


@dataclass(frozen=True)
class CenteredStep:
    """A mean-zero version of a spec plus the shift removed from it.

    The minimum of the original walk equals the centered one plus n * shift.
    """

    spec: StepSpec
    shift: float


def _float_gcd(a: float, b: float, tol: float) -> float:
    a, b = abs(a), abs(b)
    while b > tol:
        r = math.fmod(a, b)
        r = min(r, b - r)  # distance to the nearest multiple, not one-sided
        a, b = b, r
    return a


def validate_spec(spec: StepSpec) -> DistInfo:
    """Check parameter constraints and derive DistInfo.

    Raises SpecError for parameter-domain violations and for constant
    distributions (every regime below needs a nonconstant step).
    """
    if isinstance(spec, Gaussian):
        if not (spec.sigma > 0):
            raise SpecError(f"Gaussian requires sigma > 0, got {spec.sigma}")
        return DistInfo(-math.inf, 0.0, False, None, spec.mu, spec.sigma**2,
                        -math.inf, math.inf)
    if isinstance(spec, Exponential):
        if not (spec.rate > 0):
            raise SpecError(f"Exponential requires rate > 0, got {spec.rate}")
        return DistInfo(spec.shift, 0.0, False, None,
                        spec.shift + 1.0 / spec.rate, spec.rate**-2,
                        -math.inf, spec.rate)
    if isinstance(spec, TwoPoint):
        if not (spec.x0 < spec.x1):
            raise SpecError(f"TwoPoint requires x0 < x1, got {spec.x0}, {spec.x1}")
        if not (0.0 < spec.p0 < 1.0):
            raise SpecError(f"TwoPoint requires 0 < p0 < 1, got {spec.p0}")
        p1 = 1.0 - spec.p0
        mean = spec.p0 * spec.x0 + p1 * spec.x1
        var = spec.p0 * p1 * (spec.x1 - spec.x0) ** 2
        return DistInfo(spec.x0, spec.p0, True, spec.x1 - spec.x0, mean, var,
                        -math.inf, math.inf)
    if isinstance(spec, Uniform):
        if not (spec.lo < spec.hi):
            raise SpecError(f"Uniform requires lo < hi, got {spec.lo}, {spec.hi}")
        return DistInfo(spec.lo, 0.0, False, None,
                        0.5 * (spec.lo + spec.hi), (spec.hi - spec.lo) ** 2 / 12.0,
                        -math.inf, math.inf)
    if isinstance(spec, NegLogBeta):
        if not (spec.alpha > 0 and spec.beta > 0):
            raise SpecError(f"NegLogBeta requires alpha, beta > 0, got {spec.alpha}, {spec.beta}")
        a, b = spec.alpha, spec.beta
        mean = float(digamma(a + b) - digamma(a))
        var = float(polygamma(1, a) - polygamma(1, a + b))
        return DistInfo(0.0, 0.0, False, None, mean, var, -math.inf, a)
    if isinstance(spec, Empirical):
        xs = np.asarray(spec.samples, dtype=float)
        if xs.size < 2 or np.unique(xs).size < 2:
            raise SpecError("Empirical requires at least 2 distinct values (nonconstant step)")
        lo = float(xs.min())
        atom = float(np.count_nonzero(xs == lo)) / xs.size
        uniq = np.unique(xs)
        gaps = np.diff(uniq)
        scale = float(gaps.max())
        g = gaps[0]
        for gap in gaps[1:]:
            g = _float_gcd(g, float(gap), _LATTICE_TOL * scale)
        # A genuine period clears the GCD tolerance by a wide margin; an
        # incommensurable cascade collapses to tolerance scale.
        is_lattice = g > 1e3 * _LATTICE_TOL * scale
        if is_lattice:
            mult = gaps / g
            is_lattice = bool(np.all(np.abs(mult - np.round(mult)) <= 1e-6))
        return DistInfo(lo, atom, is_lattice, float(g) if is_lattice else None,
                        float(xs.mean()), float(xs.var()),
                        -math.inf, math.inf)
    raise SpecError(f"unknown step spec {spec!r}")


def _check_domain(spec: StepSpec, t: float) -> None:
    info = validate_spec(spec)
    if not (info.t_lo + _EDGE_GUARD < t < info.t_hi - _EDGE_GUARD):
        raise DomainError(
            f"t={t} outside the open LMGF domain ({info.t_lo}, {info.t_hi}) "
            f"of {describe(spec)} (points within {_EDGE_GUARD} of an endpoint are rejected)"
        )


def _log_sinhc(u: float) -> tuple[float, float, float]:
    """log(sinh(u)/u) with first two derivatives; even, series near 0."""
    if abs(u) < 1e-2:
        u2 = u * u
        g = u2 / 6.0 - u2 * u2 / 180.0 + u2 * u2 * u2 / 2835.0
        g1 = u / 3.0 - u**3 / 45.0 + 2.0 * u**5 / 945.0
        g2 = 1.0 / 3.0 - u2 / 15.0 + 2.0 * u2 * u2 / 189.0
        return g, g1, g2
    au = abs(u)
    if au > 350.0:
        g = au - math.log(2.0 * au) + math.log1p(-math.exp(-2.0 * au))
        coth = 1.0
    else:
        g = math.log(math.sinh(au) / au)
        coth = math.cosh(au) / math.sinh(au)
    g1 = coth - 1.0 / au
    # 1/u^2 - 1/sinh^2(u), with 1/sinh^2 = coth^2 - 1 to avoid overflow
    g2 = 1.0 / (au * au) - (coth * coth - 1.0)
    if u < 0:
        g1 = -g1
    return g, g1, g2


def lmgf_eval(spec: StepSpec, t: float) -> MomentProfile:
    """Lambda(t), Lambda'(t), Lambda''(t) for t strictly inside the domain.

    Derivatives are the tilted mean and tilted variance
    Lambda'(t) = E{X e^{tX}} / E{e^{tX}},  Lambda''(t) = Var_tilted(X),
    evaluated in closed form per variant.
    """
    _check_domain(spec, t)
    if isinstance(spec, Gaussian):
        s2 = spec.sigma**2
        return MomentProfile(t, spec.mu * t + 0.5 * s2 * t * t, spec.mu + s2 * t, s2)
    if isinstance(spec, Exponential):
        lam = spec.rate
        return MomentProfile(t, spec.shift * t - math.log1p(-t / lam),
                             spec.shift + 1.0 / (lam - t), (lam - t) ** -2)
    if isinstance(spec, TwoPoint):
        a0 = math.log(spec.p0) + t * spec.x0
        a1 = math.log1p(-spec.p0) + t * spec.x1
        m = max(a0, a1)
        lmgf = m + math.log(math.exp(a0 - m) + math.exp(a1 - m))
        w0 = math.exp(a0 - lmgf)
        w1 = math.exp(a1 - lmgf)
        d1 = w0 * spec.x0 + w1 * spec.x1
        d2 = w0 * w1 * (spec.x1 - spec.x0) ** 2
        return MomentProfile(t, lmgf, d1, d2)
    if isinstance(spec, Uniform):
        mid = 0.5 * (spec.lo + spec.hi)
        half = 0.5 * (spec.hi - spec.lo)
        g, g1, g2 = _log_sinhc(t * half)
        return MomentProfile(t, mid * t + g, mid + half * g1, half * half * g2)
    if isinstance(spec, NegLogBeta):
        a, b = spec.alpha, spec.beta
        # E U^{-t} = B(a - t, b) / B(a, b) for t < a.
        lmgf = float(gammaln(a - t) - gammaln(a + b - t) + gammaln(a + b) - gammaln(a))
        d1 = float(digamma(a + b - t) - digamma(a - t))
        d2 = float(polygamma(1, a - t) - polygamma(1, a + b - t))
        return MomentProfile(t, lmgf, d1, d2)
    if isinstance(spec, Empirical):
        xs = np.asarray(spec.samples, dtype=float)
        a = t * xs - math.log(xs.size)
        m = float(a.max())
        lmgf = m + math.log(np.exp(a - m).sum())
        w = np.exp(a - lmgf)
        d1 = float(w @ xs)
        d2 = float(w @ (xs * xs)) - d1 * d1
        return MomentProfile(t, lmgf, d1, max(d2, 0.0))
    raise SpecError(f"unknown step spec {spec!r}")


def icdf(spec: StepSpec, u: np.ndarray) -> np.ndarray:
    """Inverse CDF transform of uniforms in (0,1); the single sampling route."""
    u = np.asarray(u, dtype=float)
    if isinstance(spec, Gaussian):
        return spec.mu + spec.sigma * ndtri(u)
    if isinstance(spec, Exponential):
        return spec.shift - np.log1p(-u) / spec.rate
    if isinstance(spec, TwoPoint):
        return np.where(u < spec.p0, spec.x0, spec.x1)
    if isinstance(spec, Uniform):
        return spec.lo + (spec.hi - spec.lo) * u
    if isinstance(spec, NegLogBeta):
        return -np.log(betaincinv(spec.alpha, spec.beta, u))
    if isinstance(spec, Empirical):
        xs = np.asarray(spec.samples, dtype=float)
        idx = np.minimum((u * xs.size).astype(np.int64), xs.size - 1)
        return xs[idx]
    raise SpecError(f"unknown step spec {spec!r}")


def sample(spec: StepSpec, seed: int, count: int) -> np.ndarray:
    """`count` iid draws, deterministic in (spec, seed, count).

    Sample index i is reproducible on its own: the draw is a pure function of
    (seed, i), so batches may be generated in any order or in parallel.
    """
    if count < 1:
        raise SpecError(f"count must be >= 1, got {count}")
    validate_spec(spec)
    return icdf(spec, rng.stream_uniforms(seed, count))


def centered(spec: StepSpec) -> CenteredStep:
    """Shift the spec to mean zero; the shift is returned alongside.

    NegLogBeta has no location parameter, so it cannot be centered within the
    variant family.
    """
    info = validate_spec(spec)
    m = info.mean
    if isinstance(spec, Gaussian):
        return CenteredStep(Gaussian(0.0, spec.sigma), m)
    if isinstance(spec, Exponential):
        return CenteredStep(Exponential(spec.rate, spec.shift - m), m)
    if isinstance(spec, TwoPoint):
        return CenteredStep(TwoPoint(spec.x0 - m, spec.x1 - m, spec.p0), m)
    if isinstance(spec, Uniform):
        return CenteredStep(Uniform(spec.lo - m, spec.hi - m), m)
    if isinstance(spec, Empirical):
        xs = tuple(float(x - m) for x in spec.samples)
        return CenteredStep(Empirical(xs), m)
    raise SpecError(f"{describe(spec)} admits no mean-zero member of its family")


def describe(spec: StepSpec) -> str:
    """Short human/CSV descriptor, e.g. 'gaussian(mu=0.0,sigma=1.0)'."""
    if isinstance(spec, Gaussian):
        return f"gaussian(mu={spec.mu},sigma={spec.sigma})"
    if isinstance(spec, Exponential):
        return f"exponential(rate={spec.rate},shift={spec.shift})"
    if isinstance(spec, TwoPoint):
        return f"twopoint(x0={spec.x0},x1={spec.x1},p0={spec.p0})"
    if isinstance(spec, Uniform):
        return f"uniform(lo={spec.lo},hi={spec.hi})"
    if isinstance(spec, NegLogBeta):
        return f"neglogbeta(alpha={spec.alpha},beta={spec.beta})"
    if isinstance(spec, Empirical):
        return f"empirical(n={len(spec.samples)})"
    return repr(spec)


_VARIANT_NAMES = {
    Gaussian: "gaussian",
    Exponential: "exponential",
    TwoPoint: "twopoint",
    Uniform: "uniform",
    NegLogBeta: "neglogbeta",
    Empirical: "empirical",
}


def spec_to_dict(spec: StepSpec) -> dict:
    """JSON-ready dict, {'variant': ..., parameters...}; lossless round trip."""
    d: dict = {"variant": _VARIANT_NAMES[type(spec)]}
    if isinstance(spec, Empirical):
        d["samples"] = list(spec.samples)
    else:
        for name, value in vars(spec).items():
            d[name] = value
    return d


def spec_from_dict(d: dict) -> StepSpec:
    if "variant" not in d:
        raise SpecError("step spec dict is missing 'variant'")
    body = {k: v for k, v in d.items() if k != "variant"}
    variant = d["variant"]
    try:
        if variant == "gaussian":
            spec: StepSpec = Gaussian(**body)
        elif variant == "exponential":
            spec = Exponential(**body)
        elif variant == "twopoint":
            spec = TwoPoint(**body)
        elif variant == "uniform":
            spec = Uniform(**body)
        elif variant == "neglogbeta":
            spec = NegLogBeta(**body)
        elif variant == "empirical":
            spec = Empirical(samples=tuple(body.pop("samples")))
            if body:
                raise TypeError(f"unexpected keys {sorted(body)}")
        else:
            raise SpecError(f"unknown step variant {variant!r}")
    except TypeError as exc:
        raise SpecError(f"bad parameters for variant {variant!r}: {exc}") from exc
    validate_spec(spec)
    return spec


def spec_to_json(spec: StepSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def spec_from_json(text: str) -> StepSpec:
    return spec_from_dict(json.loads(text))
