"""Branching random walk simulation and the generation-n minimum.

Every tree is a pure function of a 64-bit key: a node's offspring count and
the labels of its child edges are derived by hashing (node key, child index).
ExactDFS, FullEnumeration, and Beam therefore realize the *same* labeled tree
for the same seed -- exact strategies must agree, and a beam run's result is a
true upper bound for the exact minimum of its own tree.

Strategies
  FullEnumeration  exhaustive generation-by-generation expansion (d^n <= 2^24).
  ExactDFS         depth-first branch and bound; prunes node v at depth k when
                   S_v + (n-k) * ess_inf >= incumbent, so it needs a finite
                   essential infimum.  Exact.
  Beam(K)          keeps only the K smallest displacements per generation;
                   the result is an upper bound on M_n.  Ties at the cut are
                   broken by insertion order for lattice steps (continuous
                   steps tie with probability zero).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import rng
from .pathlab import WalkPath
from .stepdist import DistInfo, SpecError, StepSpec, describe, icdf, validate_spec


class ConfigError(ValueError):
    """A simulation request violates a strategy precondition or guard."""


_ENUM_GUARD = 1 << 24


@dataclass(frozen=True)
class Deterministic:
    d: int


@dataclass(frozen=True)
class Bounded:
    """Offspring counts 0..d with the given probabilities (sum 1, d >= 2)."""

    probs: tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.probs) - 1


OffspringSpec = Union[Deterministic, Bounded]


@dataclass(frozen=True)
class ExactDFS:
    pass


@dataclass(frozen=True)
class Beam:
    k: int


@dataclass(frozen=True)
class FullEnumeration:
    pass


Strategy = Union[ExactDFS, Beam, FullEnumeration]


@dataclass(frozen=True)
class Unconditional:
    pass


@dataclass(frozen=True)
class ConditionOnSurvival:
    max_restarts: int = 1000


SurvivalPolicy = Union[Unconditional, ConditionOnSurvival]


@dataclass(frozen=True)
class BrwConfig:
    offspring: OffspringSpec
    step: StepSpec
    n: int
    strategy: Strategy
    seed: int
    survival_policy: SurvivalPolicy = Unconditional()


@dataclass
class MinRecord:
    """One observed generation-n minimum.

    m_n is +inf and argmin_path is None iff the process died before
    generation n.  Beam results additionally carry frontier_truncated=True
    whenever pruning occurred (the value then bounds the true M_n from above).
    """

    n: int
    m_n: float
    survived: bool
    argmin_path: WalkPath | None
    frontier_truncated: bool
    particles_expanded: int
    seed: int = 0
    restarts: int = 0
    failed: bool = False


@dataclass(frozen=True)
class Frontier:
    """Snapshot of one generation: displacements ascending, truncated to K under Beam."""

    generation: int
    displacements: np.ndarray
    population: int | None


@dataclass(frozen=True)
class ThinnedSurvival:
    """Survival probability of the subtree grown by infimum-displacement steps."""

    p0: float
    supercritical: bool
    thinned_mean: float


def offspring_mean(off: OffspringSpec) -> float:
    if isinstance(off, Deterministic):
        return float(off.d)
    return float(sum(i * p for i, p in enumerate(off.probs)))


def offspring_pgf(off: OffspringSpec, s: float) -> float:
    if isinstance(off, Deterministic):
        return s**off.d
    return float(sum(p * s**i for i, p in enumerate(off.probs)))


def _offspring_pgf_deriv(off: OffspringSpec, s: float) -> float:
    if isinstance(off, Deterministic):
        return off.d * s ** (off.d - 1)
    return float(sum(i * p * s ** (i - 1) for i, p in enumerate(off.probs) if i >= 1))


def validate_offspring(off: OffspringSpec) -> None:
    if isinstance(off, Deterministic):
        if off.d < 2:
            raise ConfigError(f"Deterministic offspring requires d >= 2, got {off.d}")
        return
    if isinstance(off, Bounded):
        p = np.asarray(off.probs, dtype=float)
        if p.size < 3:
            raise ConfigError("Bounded offspring requires support up to d >= 2")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError("Bounded offspring probabilities must be >= 0 and sum to 1")
        if offspring_mean(off) <= 1.0:
            raise ConfigError(
                f"offspring mean {offspring_mean(off):.6g} must exceed 1 (supercritical)")
        return
    raise ConfigError(f"unknown offspring spec {off!r}")


def describe_offspring(off: OffspringSpec) -> str:
    if isinstance(off, Deterministic):
        return f"det({off.d})"
    return "bounded(" + ",".join(f"p{i}={p}" for i, p in enumerate(off.probs) if p) + ")"


def offspring_to_dict(off: OffspringSpec) -> dict:
    if isinstance(off, Deterministic):
        return {"kind": "deterministic", "d": off.d}
    return {"kind": "bounded", "probs": list(off.probs)}


def offspring_from_dict(d: dict) -> OffspringSpec:
    kind = d.get("kind")
    if kind == "deterministic":
        return Deterministic(d=int(d["d"]))
    if kind == "bounded":
        return Bounded(probs=tuple(float(p) for p in d["probs"]))
    raise ConfigError(f"unknown offspring kind {kind!r}")


def validate_config(config: BrwConfig) -> DistInfo:
    validate_offspring(config.offspring)
    info = validate_spec(config.step)
    if config.n < 0:
        raise ConfigError(f"n must be >= 0, got {config.n}")
    d = config.offspring.d
    if isinstance(config.strategy, FullEnumeration):
        if d**config.n > _ENUM_GUARD:
            raise ConfigError(
                f"FullEnumeration guard: d^n = {d}^{config.n} exceeds 2^24")
    elif isinstance(config.strategy, ExactDFS):
        if math.isinf(info.ess_inf):
            raise ConfigError(
                f"ExactDFS needs a finite essential infimum; {describe(config.step)} "
                "is unbounded below (use Beam)")
    elif isinstance(config.strategy, Beam):
        if config.strategy.k < 1:
            raise ConfigError(f"Beam K must be >= 1, got {config.strategy.k}")
        if config.strategy.k * d > _ENUM_GUARD:
            raise ConfigError(f"Beam guard: K*d must not exceed 2^24")
    else:
        raise ConfigError(f"unknown strategy {config.strategy!r}")
    return info


def _tie_offset(info: DistInfo) -> float:
    # Insertion-order tie breaking at the beam cut: offsets must stay well
    # below one lattice gap across <= 2^24 children.
    if info.is_lattice and info.lattice_period:
        return info.lattice_period / 2.0**26
    return 0.0


class _LevelRun:
    """Generation-by-generation expansion of R replicate trees in lockstep.

    Requires deterministic offspring (frontier sizes stay equal across
    replicates).  Records kept displacements and parent indices so the argmin
    path can be reconstructed afterwards.
    """

    def __init__(self, spec: StepSpec, d: int, n: int, cap: int | None,
                 root_keys: np.ndarray, tie_offset: float):
        self.spec = spec
        self.d = d
        self.n = n
        self.cap = cap
        self.tie_offset = tie_offset
        self.keys = root_keys.astype(np.uint64).reshape(-1, 1)
        self.disp = np.zeros_like(self.keys, dtype=np.float64)
        self.disp_hist: list[np.ndarray] = [self.disp]
        self.parent_hist: list[np.ndarray | None] = []
        self.truncated = False
        self.expanded = 0

    def run(self) -> None:
        d = self.d
        for _ in range(self.n):
            r, f = self.keys.shape
            self.expanded += f
            child_keys = rng.derive_keys_vec(
                self.keys[:, :, None], np.arange(d, dtype=np.uint64)).reshape(r, f * d)
            steps = icdf(self.spec, rng.key_uniform_vec(child_keys, rng.SALT_STEP))
            child_disp = np.repeat(self.disp, d, axis=1) + steps
            if self.cap is not None and f * d > self.cap:
                k = self.cap
                if self.tie_offset > 0.0:
                    ranked = child_disp + self.tie_offset * np.arange(f * d)
                else:
                    ranked = child_disp
                idx = np.argpartition(ranked, k - 1, axis=1)[:, :k]
                self.keys = np.take_along_axis(child_keys, idx, axis=1)
                self.disp = np.take_along_axis(child_disp, idx, axis=1)
                self.parent_hist.append((idx // d).astype(np.int32))
                self.truncated = True
            else:
                self.keys = child_keys
                self.disp = child_disp
                self.parent_hist.append(None)  # parent of child c is c // d
            self.disp_hist.append(self.disp)

    def records(self, seeds: np.ndarray) -> list[MinRecord]:
        out = []
        argmin = self.disp.argmin(axis=1)
        for r in range(self.disp.shape[0]):
            path = self._path(r, int(argmin[r]))
            out.append(MinRecord(
                n=self.n, m_n=float(self.disp[r, argmin[r]]), survived=True,
                argmin_path=path, frontier_truncated=self.truncated,
                particles_expanded=self.expanded // self.disp.shape[0],
                seed=int(seeds[r])))
        return out

    def _path(self, row: int, leaf: int) -> WalkPath:
        sums = np.empty(self.n + 1)
        idx = leaf
        for gen in range(self.n, 0, -1):
            sums[gen] = self.disp_hist[gen][row, idx]
            parents = self.parent_hist[gen - 1]
            idx = idx // self.d if parents is None else int(parents[row, idx])
        sums[0] = 0.0
        return WalkPath(sums)


def _run_bounded_levelwise(spec: StepSpec, off: Bounded, n: int, cap: int | None,
                           root_key: int, tie_offset: float) -> MinRecord:
    """Single-replicate expansion with random offspring counts."""
    cdf = np.cumsum(np.asarray(off.probs, dtype=float))
    d = off.d
    keys = np.array([root_key], dtype=np.uint64)
    disp = np.zeros(1)
    disp_hist = [disp]
    parent_hist: list[np.ndarray] = []
    truncated = False
    expanded = 0
    for _ in range(n):
        expanded += keys.size
        counts = np.searchsorted(cdf, rng.key_uniform_vec(keys, rng.SALT_OFFSPRING),
                                 side="right")
        total = int(counts.sum())
        if total == 0:
            return MinRecord(n=n, m_n=math.inf, survived=False, argmin_path=None,
                             frontier_truncated=truncated, particles_expanded=expanded)
        parent = np.repeat(np.arange(keys.size), counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        child_keys = rng.derive_keys_vec(keys[parent], offsets.astype(np.uint64))
        child_disp = disp[parent] + icdf(spec, rng.key_uniform_vec(child_keys, rng.SALT_STEP))
        if cap is not None and total > cap:
            ranked = child_disp + tie_offset * np.arange(total) if tie_offset > 0 else child_disp
            idx = np.argpartition(ranked, cap - 1)[:cap]
            keys, disp, parent = child_keys[idx], child_disp[idx], parent[idx]
            truncated = True
        else:
            keys, disp = child_keys, child_disp
        disp_hist.append(disp)
        parent_hist.append(parent.astype(np.int32))
    leaf = int(disp.argmin())
    sums = np.empty(n + 1)
    idx = leaf
    for gen in range(n, 0, -1):
        sums[gen] = disp_hist[gen][idx]
        idx = int(parent_hist[gen - 1][idx])
    sums[0] = 0.0
    return MinRecord(n=n, m_n=float(disp[leaf]), survived=True,
                     argmin_path=WalkPath(sums), frontier_truncated=truncated,
                     particles_expanded=expanded)


def _offspring_count(off: OffspringSpec, key: int, cdf) -> int:
    if isinstance(off, Deterministic):
        return off.d
    u = rng.key_uniform(key, rng.SALT_OFFSPRING)
    return int(np.searchsorted(cdf, u, side="right"))


def _run_dfs(spec: StepSpec, off: OffspringSpec, n: int, root_key: int,
             ess_inf: float) -> MinRecord:
    """Depth-first branch and bound; exact for bounded-below steps."""
    cdf = None if isinstance(off, Deterministic) else np.cumsum(np.asarray(off.probs))
    best = math.inf
    best_path: list[float] | None = None
    expanded = 0
    path = [0.0] * (n + 1)

    def visit(key: int, depth: int, disp: float) -> None:
        nonlocal best, best_path, expanded
        if depth == n:
            if disp < best:
                best = disp
                best_path = path[: n + 1].copy()
            return
        expanded += 1
        b = _offspring_count(off, key, cdf)
        remaining = (n - depth - 1) * ess_inf
        for j in range(b):
            child_key = rng.derive_key(key, j)
            step = float(icdf(spec, np.array(
                [rng.key_uniform(child_key, rng.SALT_STEP)]))[0])
            child_disp = disp + step
            if child_disp + remaining >= best:
                continue
            path[depth + 1] = child_disp
            visit(child_key, depth + 1, child_disp)

    visit(root_key, 0, 0.0)
    if best_path is None:
        return MinRecord(n=n, m_n=math.inf, survived=False, argmin_path=None,
                         frontier_truncated=False, particles_expanded=expanded)
    return MinRecord(n=n, m_n=best, survived=True,
                     argmin_path=WalkPath(np.asarray(best_path)),
                     frontier_truncated=False, particles_expanded=expanded)


def _simulate_with_key(config: BrwConfig, info: DistInfo, tree_key: int) -> MinRecord:
    if config.n == 0:
        return MinRecord(n=0, m_n=0.0, survived=True,
                         argmin_path=WalkPath(np.zeros(1)),
                         frontier_truncated=False, particles_expanded=0)
    if isinstance(config.strategy, ExactDFS):
        return _run_dfs(config.step, config.offspring, config.n, tree_key, info.ess_inf)
    cap = config.strategy.k if isinstance(config.strategy, Beam) else None
    tie = _tie_offset(info)
    if isinstance(config.offspring, Deterministic):
        run = _LevelRun(config.step, config.offspring.d, config.n, cap,
                        np.array([tree_key], dtype=np.uint64), tie)
        run.run()
        return run.records(np.array([tree_key]))[0]
    return _run_bounded_levelwise(config.step, config.offspring, config.n, cap,
                                  tree_key, tie)


def simulate_min(config: BrwConfig) -> MinRecord:
    """Simulate one tree from config.seed and return its generation-n minimum."""
    info = validate_config(config)
    rec = _simulate_with_key(config, info, config.seed)
    rec.seed = config.seed
    if isinstance(config.survival_policy, ConditionOnSurvival):
        attempt = 0
        while not rec.survived and attempt < config.survival_policy.max_restarts:
            attempt += 1
            retry_key = rng.derive_key(rng.mix64(config.seed ^ rng.SALT_RESTART), attempt)
            rec = _simulate_with_key(config, info, retry_key)
            rec.seed = config.seed
        rec.restarts = attempt
        rec.failed = not rec.survived
    return rec


def _batch_slice(config: BrwConfig, rep_lo: int, rep_hi: int) -> list[MinRecord]:
    info = validate_config(config)
    reps = range(rep_lo, rep_hi)
    rep_keys = [rng.derive_key(config.seed, r) for r in reps]

    deterministic_fast = (isinstance(config.offspring, Deterministic)
                          and not isinstance(config.strategy, ExactDFS)
                          and config.n > 0)
    if deterministic_fast:
        # Deterministic branching cannot die, so conditioning never restarts.
        cap = config.strategy.k if isinstance(config.strategy, Beam) else None
        d = config.offspring.d
        width = min(d**config.n, (cap or d**config.n) * d)
        # Chunk so the per-generation work arrays and the parent/displacement
        # history stay within a modest footprint.
        hist_bytes = 12 * config.n * width
        chunk = max(1, min(rep_hi - rep_lo, int(6e8 // max(hist_bytes, 1)),
                           max(1, int(4e6 // max(width, 1)))))
        out: list[MinRecord] = []
        for lo in range(0, len(rep_keys), chunk):
            keys = np.array(rep_keys[lo:lo + chunk], dtype=np.uint64)
            run = _LevelRun(config.step, d, config.n, cap, keys, _tie_offset(info))
            run.run()
            out.extend(run.records(keys))
        return out

    out = []
    for key in rep_keys:
        rec = _simulate_with_key(config, info, key)
        rec.seed = key
        if isinstance(config.survival_policy, ConditionOnSurvival):
            attempt = 0
            while not rec.survived and attempt < config.survival_policy.max_restarts:
                attempt += 1
                retry = rng.derive_key(rng.mix64(key ^ rng.SALT_RESTART), attempt)
                rec = _simulate_with_key(config, info, retry)
                rec.seed = key
            rec.restarts = attempt
            rec.failed = not rec.survived
        out.append(rec)
    return out


def batch_min(config: BrwConfig, replicates: int, threads: int = 1) -> list[MinRecord]:
    """Independent replicates; replicate r's tree key is derive_key(seed, r).

    Results are ordered by replicate index and do not depend on `threads`.
    Under ConditionOnSurvival each extinct run restarts from a fresh derived
    key; a replicate still extinct after max_restarts is returned with
    failed=True rather than dropped.
    """
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    validate_config(config)
    if threads <= 1 or replicates == 1:
        return _batch_slice(config, 0, replicates)
    bounds = np.linspace(0, replicates, threads + 1).astype(int)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_batch_slice, config, int(lo), int(hi))
                   for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        parts = [f.result() for f in futures]
    return [rec for part in parts for rec in part]


def thinned_survival(offspring: OffspringSpec, info: DistInfo) -> ThinnedSurvival:
    """Survival probability of the tree grown by ess-inf displacement steps.

    Each child is retained independently with probability atom_at_essinf, so
    the thinned offspring PGF is g(s) = pgf_B(1 - q + q s).  The extinction
    probability is the smallest fixed point of g in [0, 1]; subcritical or
    critical thinned trees surely die (p0 = 0, flagged).
    """
    validate_offspring(offspring)
    q = info.atom_at_essinf
    mean0 = q * offspring_mean(offspring)
    if mean0 <= 1.0:
        return ThinnedSurvival(p0=0.0, supercritical=False, thinned_mean=mean0)

    def g(s: float) -> float:
        return offspring_pgf(offspring, 1.0 - q + q * s)

    s = 0.0
    for _ in range(100000):
        nxt = g(s)
        if abs(nxt - s) < 1e-12:
            s = nxt
            break
        s = nxt
    # Newton polish on g(s) - s = 0 for the root below 1.
    for _ in range(4):
        deriv = q * _offspring_pgf_deriv(offspring, 1.0 - q + q * s) - 1.0
        if deriv == 0.0:
            break
        s -= (g(s) - s) / deriv
    s = min(max(s, 0.0), 1.0)
    return ThinnedSurvival(p0=1.0 - s, supercritical=True, thinned_mean=mean0)


def frontier_profile(config: BrwConfig, growth_base: float,
                     replicates: int = 2000) -> dict:
    """Per-generation frequency of {0 < |N_i| <= growth_base^i} and survival.

    Tracks exact population counts only (no displacements), so n is capped at
    40 to keep counts cheap.
    """
    if growth_base <= 1.0:
        raise ConfigError(f"growth_base must exceed 1, got {growth_base}")
    if config.n > 40:
        raise ConfigError("frontier_profile tracks exact populations; n must be <= 40")
    validate_offspring(config.offspring)
    gens = np.arange(config.n + 1)
    thresholds = growth_base**gens
    small = np.zeros(config.n + 1)
    alive = np.zeros(config.n + 1)
    if isinstance(config.offspring, Deterministic):
        pops = config.offspring.d**gens.astype(float)
        small = ((pops > 0) & (pops <= thresholds)).astype(float)
        alive = np.ones(config.n + 1)
        return {"generations": gens, "freq_small": small, "freq_alive": alive,
                "replicates": replicates}
    probs = np.asarray(config.offspring.probs, dtype=float)
    ks = np.arange(probs.size)
    for rep in range(replicates):
        gen_rng = rng.generator(rng.derive_key(config.seed, rep))
        z = 1
        for i in range(config.n + 1):
            if z > 0:
                alive[i] += 1
                if z <= thresholds[i]:
                    small[i] += 1
            if i == config.n:
                break
            z = int(ks @ gen_rng.multinomial(z, probs)) if z > 0 else 0
    return {"generations": gens, "freq_small": small / replicates,
            "freq_alive": alive / replicates, "replicates": replicates}


def frontier_trace(config: BrwConfig) -> list[Frontier]:
    """Frontier snapshots for one small run (diagnostics and tests)."""
    info = validate_config(config)
    if isinstance(config.strategy, ExactDFS):
        raise ConfigError("frontier_trace requires a level-wise strategy")
    if not isinstance(config.offspring, Deterministic):
        raise ConfigError("frontier_trace supports deterministic offspring only")
    cap = config.strategy.k if isinstance(config.strategy, Beam) else None
    run = _LevelRun(config.step, config.offspring.d, config.n, cap,
                    np.array([config.seed], dtype=np.uint64), _tie_offset(info))
    run.run()
    out = []
    truncated_yet = False
    for gen, disp in enumerate(run.disp_hist):
        if gen > 0 and run.parent_hist[gen - 1] is not None:
            truncated_yet = True
        population = None if truncated_yet else disp.shape[1]
        out.append(Frontier(gen, np.sort(disp[0]), population))
    return out
