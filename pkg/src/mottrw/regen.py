"""Regenerative decomposition of the truncated walk and sub-ballistic bounds.

Two constructions live here.  The first couples the finite-range walk with a
Bernoulli sequence so that a success at segment j forces the walk to land
exactly on the level j*rho; the walk regenerates at those levels, cycles are
identically distributed, and the speed equals rho / (epsilon * mean cycle
duration).  Segments are sampled by rejection from the unconditioned walk,
which is unbiased because the conditioning events have probability bounded
below by the exact-hit bound.

The second is a quantile coupling for the untruncated walk: each crossing
overshoot W is coupled through a common uniform with an i.i.d. dominating
variable xi = L + geometric, and each block duration is coupled with a
geometric clock S whose success rate is the supremum of the one-step crossing
probability from any site at or below the level.  The chain
X_n/n <= (xi_1+...+xi_{k+1}) / (S_0+...+S_{k-1}) turns divergence of E[1/s]
into a vanishing speed bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import TAG_COIN, mix64, substream
from .environments import Environment, EnvironmentSpec, build_environment, extend_window
from .kernel import WalkConfig, effective_range, jump_distribution, potential_bounds
from .network import crossing_distribution
from .walk import _Run


def _solver_margin(env: Environment, cfg: WalkConfig) -> Environment:
    """Pre-extend the window leftward so per-segment crossing solves never
    need to regrow it."""
    span = effective_range(cfg, env.spec)
    lo = -(max(4 * span, 64) + 3 * span + 8)
    if env.kmin <= lo:
        return env
    return extend_window(env, (lo, env.kmax))

SEGMENT_BUDGET = 10**4  # rejection attempts per conditioned segment

_ZETA, _MIX, _QUANTILE, _BERNOULLI = 0, 1, 2, 3  # coin substream keys


def exact_hit_bound(cfg: WalkConfig, spec: EnvironmentSpec) -> float:
    """Uniform lower bound: every first crossing of a level from below lands
    exactly on it with probability at least twice this value.

    The bound is half of e^{u_min - u_max} * (1 - e^{-(1-bias) d}), valid for
    every range, environment and starting site; it feeds the Bernoulli rate of
    the regenerative coupling.
    """
    u_min, u_max = potential_bounds(cfg, spec)
    d = spec.distance_floor
    return 0.5 * math.exp(u_min - u_max) * (1.0 - math.exp(-(1.0 - cfg.bias) * d))


@dataclass(frozen=True)
class OvershootDominator:
    """Law xi = offset + G, G geometric(rate) on {1,2,...}.

    Chosen so that P(xi > a) = (1-rate)^(a-offset) bounds every crossing
    overshoot tail of the untruncated walk, uniformly in the environment.
    """

    offset: int
    rate: float

    @property
    def mean(self) -> float:
        return self.offset + 1.0 / self.rate

    def tail(self, a):
        """P(xi > a); accepts an integer or an integer array."""
        a = np.asarray(a)
        out = np.where(a <= self.offset, 1.0, (1.0 - self.rate) ** np.maximum(a - self.offset, 0))
        return float(out) if out.ndim == 0 else out

    def quantile(self, u: float) -> int:
        """Generalized inverse: smallest a with P(xi <= a) > u."""
        g = math.log1p(-u) / math.log1p(-self.rate)
        return self.offset + 1 + int(math.floor(g))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        g = np.floor(np.log1p(-u) / math.log1p(-self.rate)).astype(np.int64)
        return self.offset + 1 + g


def overshoot_dominator(cfg: WalkConfig, spec: EnvironmentSpec) -> OvershootDominator:
    """Dominating overshoot law for the untruncated walk.

    offset is the smallest positive integer L with
    e^{u_max - u_min} e^{-(1-bias) d L} / (1 - e^{-(1-bias) d}) < 1 and the
    geometric rate is 1 - e^{-(1-bias) d}.
    """
    u_min, u_max = potential_bounds(cfg, spec)
    d = spec.distance_floor
    a = (1.0 - cfg.bias) * d
    gamma = 1.0 - math.exp(-a)
    lcrit = ((u_max - u_min) - math.log(gamma)) / a
    offset = max(1, int(math.floor(lcrit)) + 1)
    return OvershootDominator(offset=offset, rate=gamma)


# ---------------------------------------------------------------------------
# coupled regenerative walk (finite range)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegenerativeRun:
    """One coupled run: segment records plus the regeneration cycles.

    Segment j (1-based) carries the walk from its landing in
    [(j-1)*rho, j*rho) to the first site >= j*rho; ``zetas[j-1] == 1`` forces
    an exact landing on j*rho.  Cycles are delimited by the segments with
    zeta == 1; ``cycle_steps`` are walk steps (self-loops included) between
    consecutive regeneration times.
    """

    rho: int
    epsilon: float
    seed: int
    n_cycles: int
    zetas: np.ndarray
    segment_steps: np.ndarray
    segment_sites: np.ndarray
    regen_segments: np.ndarray
    cycle_steps: np.ndarray
    cycle_spans: np.ndarray
    cycle_visit_lo: list[int] = field(repr=False)
    cycle_visits: list[np.ndarray] = field(repr=False)

    @property
    def regen_times(self) -> np.ndarray:
        """Walk step counts at the regeneration levels."""
        return np.cumsum(self.cycle_steps)

    @property
    def level_gaps(self) -> np.ndarray:
        """Regeneration level increments in units of rho (geometric(epsilon))."""
        return self.cycle_spans // self.rho


class _VisitAccumulator:
    def __init__(self):
        self.lo = None
        self.counts = None

    def add(self, lo: int, counts: np.ndarray):
        if self.lo is None:
            self.lo, self.counts = lo, counts.astype(np.int64)
            return
        new_lo = min(self.lo, lo)
        new_hi = max(self.lo + self.counts.size, lo + counts.size)
        merged = np.zeros(new_hi - new_lo, dtype=np.int64)
        merged[self.lo - new_lo : self.lo - new_lo + self.counts.size] = self.counts
        merged[lo - new_lo : lo - new_lo + counts.size] += counts
        self.lo, self.counts = new_lo, merged

    def pop(self) -> tuple[int, np.ndarray]:
        lo, counts = self.lo, self.counts
        self.lo = self.counts = None
        return lo, counts


def simulate_regenerative(
    env: Environment,
    cfg: WalkConfig,
    seed: int,
    n_cycles: int,
    solver_cache: dict | None = None,
) -> RegenerativeRun:
    """Run the Bernoulli-coupled walk from site 0 through ``n_cycles``
    regeneration cycles.

    Per segment: draw zeta ~ Bernoulli(epsilon); solve the exact-hit
    probability r_y of the target level from the current site; choose the
    conditioned law (exact hit for zeta=1, else the residual mixture of exact
    hit and strict overshoot); sample it by rejection, resampling the whole
    segment until the landing matches.  Averaged over zeta this reproduces the
    plain walk.  ``solver_cache`` (optional dict) memoises the per-(site,
    level) linear solves across calls sharing an environment.
    """
    if cfg.rho == math.inf:
        raise ValueError("the regenerative construction needs a finite range")
    if cfg.bias <= 0.0:
        raise ValueError("regeneration requires a positive bias")
    if n_cycles < 1:
        raise ValueError("n_cycles must be positive")
    rho = int(cfg.rho)
    epsilon = exact_hit_bound(cfg, env.spec)
    nn_only = effective_range(cfg, env.spec) == 1
    zeta_rng = substream(seed, TAG_COIN, _ZETA)
    mix_rng = substream(seed, TAG_COIN, _MIX)
    run = _Run(_solver_margin(env, cfg), cfg, seed)

    zetas, seg_steps, seg_sites = [], [], []
    regen_segments: list[int] = []
    cycle_steps, cycle_spans = [], []
    cycle_visit_lo, cycle_visits = [], []
    acc = _VisitAccumulator()
    y = 0
    j = 0
    steps_in_cycle = 0
    last_regen_j = 0
    while len(regen_segments) < n_cycles:
        j += 1
        level = j * rho
        zeta = 1 if zeta_rng.random() < epsilon else 0
        if nn_only:
            r_y = 1.0  # unit jumps cannot overshoot
        else:
            key = (y, level)
            cached = solver_cache.get(key) if solver_cache is not None else None
            if cached is None:
                run._grow_to_level(level)
                _, probs = crossing_distribution(run.env, cfg, y, level - 1)
                r_y = float(probs[0])
                if solver_cache is not None:
                    solver_cache[key] = r_y
            else:
                r_y = cached
        if r_y < epsilon:
            raise RuntimeError(
                f"exact-hit probability {r_y:.6g} at segment {j} fell below "
                f"epsilon={epsilon:.6g}; the solve contradicts the uniform bound"
            )
        if zeta:
            want_exact = True
        else:
            want_exact = mix_rng.random() < (r_y - epsilon) / (1.0 - epsilon)
        for _ in range(SEGMENT_BUDGET):
            run.reset_counters(y)
            run.advance(10**12, stop_level=level)
            landed = run.current_site
            if (landed == level) == want_exact:
                break
        else:
            raise RuntimeError(
                f"segment {j}: rejection budget {SEGMENT_BUDGET} exhausted "
                f"(conditioning on {'exact hit' if want_exact else 'overshoot'}, "
                f"r_y={r_y:.6g})"
            )
        zetas.append(zeta)
        seg_steps.append(run.steps)
        seg_sites.append(landed)
        steps_in_cycle += run.steps
        acc.add(*run.take_visits())
        y = landed
        if zeta:
            regen_segments.append(j)
            cycle_steps.append(steps_in_cycle)
            cycle_spans.append((j - last_regen_j) * rho)
            lo, counts = acc.pop()
            cycle_visit_lo.append(lo)
            cycle_visits.append(counts)
            steps_in_cycle = 0
            last_regen_j = j
    return RegenerativeRun(
        rho=rho,
        epsilon=epsilon,
        seed=int(seed),
        n_cycles=int(n_cycles),
        zetas=np.asarray(zetas, dtype=np.uint8),
        segment_steps=np.asarray(seg_steps, dtype=np.int64),
        segment_sites=np.asarray(seg_sites, dtype=np.int64),
        regen_segments=np.asarray(regen_segments, dtype=np.int64),
        cycle_steps=np.asarray(cycle_steps, dtype=np.int64),
        cycle_spans=np.asarray(cycle_spans, dtype=np.int64),
        cycle_visit_lo=cycle_visit_lo,
        cycle_visits=cycle_visits,
    )


@dataclass(frozen=True)
class RegenerationSpeed:
    """Speed recovered from regeneration cycles: rho / (epsilon * mean cycle
    duration), with a delta-method standard error."""

    value: float
    stderr: float
    rho: int
    epsilon: float
    n_cycles: int
    mean_cycle_steps: float
    per_run: np.ndarray

    def margin(self, sigmas: float = 3.0) -> float:
        return sigmas * self.stderr


def regeneration_speed(runs) -> RegenerationSpeed:
    """Pool cycle durations from one run or a collection of runs.

    The identity v = rho / (epsilon * E[cycle duration]) is exact in the limit
    of infinitely many cycles; at least a thousand pooled cycles are advisable
    for the stated standard error to be trustworthy.
    """
    if isinstance(runs, RegenerativeRun):
        runs = [runs]
    runs = list(runs)
    if not runs:
        raise ValueError("no runs supplied")
    rho = runs[0].rho
    epsilon = runs[0].epsilon
    if any(r.rho != rho or r.epsilon != epsilon for r in runs):
        raise ValueError("runs mix different ranges or epsilon values")
    durations = np.concatenate([r.cycle_steps for r in runs]).astype(float)
    n = durations.size
    if n < 2:
        raise ValueError("need at least 2 cycles")
    mean_t = float(durations.mean())
    v = rho / (epsilon * mean_t)
    se_t = float(durations.std(ddof=1) / math.sqrt(n))
    stderr = v * se_t / mean_t
    per_run = np.array(
        [rho / (epsilon * r.cycle_steps.mean()) for r in runs if r.cycle_steps.size]
    )
    return RegenerationSpeed(
        value=float(v),
        stderr=float(stderr),
        rho=rho,
        epsilon=epsilon,
        n_cycles=int(n),
        mean_cycle_steps=mean_t,
        per_run=per_run,
    )


# ---------------------------------------------------------------------------
# quantile-coupled overshoot domination (untruncated walk)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DominationTrace:
    """Per-block records of the quantile coupling.

    Block k (0-based) runs from the previous crossing until the walk first
    exceeds ``levels[k]`` = xi_0 + ... + xi_{k-1}; ``overshoot[k]`` is how far
    beyond the level it lands, ``xi[k]`` the dominating draw from the common
    uniform, ``crossing_sup[k]`` the supremum s of the one-step crossing
    probability from sites at or below the level, ``dominated_steps[k]`` the
    geometric(s) clock coupled below the block duration ``block_steps[k]``.
    """

    offset: int
    rate: float
    seed: int
    xi: np.ndarray
    overshoot: np.ndarray
    crossing_sup: np.ndarray
    dominated_steps: np.ndarray
    block_steps: np.ndarray
    levels: np.ndarray
    start_sites: np.ndarray

    @property
    def violations(self) -> int:
        """Blocks where the dominating draw fell below the overshoot."""
        return int(np.sum(self.xi < self.overshoot))


class _CrossingTails:
    """Cached right-tail sums of the one-step jump law per site."""

    def __init__(self, cfg: WalkConfig):
        self.cfg = cfg
        self._tails: dict[int, tuple[int, np.ndarray]] = {}

    def prob(self, env: Environment, site: int, level: int) -> float:
        """P(next jump from ``site`` lands strictly above ``level``)."""
        entry = self._tails.get(site)
        if entry is None:
            law = jump_distribution(env, self.cfg, site)
            tail = np.concatenate([np.cumsum(law.probabilities[::-1])[::-1], [0.0]])
            entry = (law.offsets, tail)
            self._tails[site] = entry
        offsets, tail = entry
        # offsets are ascending but skip 0 (self-loops never cross a level)
        first = int(np.searchsorted(offsets, level - site, side="right"))
        return float(tail[first])


def _crossing_probability_sup(
    tails: _CrossingTails,
    env: Environment,
    level: int,
    floor_site: int,
    tol: float = 1e-6,
) -> float:
    """sup over z <= level of the one-step probability of jumping above
    ``level`` from z, scanned on [level - z_max, level] with z_max doubled
    until the supremum stabilizes and the scan covers ``floor_site``."""
    span = effective_range(tails.cfg, env.spec)
    z_max = max(2 * span, 8, level - floor_site)
    sup = max(
        tails.prob(env, y, level) for y in range(level - z_max, level + 1)
    )
    while True:
        z_max *= 2
        wider = max(
            tails.prob(env, y, level) for y in range(level - z_max, level + 1)
        )
        if abs(wider - sup) < tol:
            return wider
        sup = wider


def overshoot_domination_run(
    env: Environment,
    cfg: WalkConfig,
    blocks: int,
    seed: int,
) -> DominationTrace:
    """Run the untruncated walk through ``blocks`` level crossings, coupling
    each overshoot with a dominating xi and each duration with a geometric
    clock.

    The common uniform behind (W, xi) is drawn conditionally on the realized
    landing site — uniform on the CDF interval of the observed overshoot — so
    the pair has exactly the quantile-coupling joint law while W remains the
    actual path's overshoot.  The duration clock forces a success on the
    crossing step and fires on earlier steps with the deficit rate
    (s - p)/(1 - p), so it is geometric(s) and never exceeds the block
    duration.
    """
    if cfg.rho != math.inf:
        raise ValueError("overshoot domination is for the untruncated walk")
    if cfg.bias <= 0.0:
        raise ValueError("requires a positive bias")
    dom = overshoot_dominator(cfg, env.spec)
    u_rng = substream(seed, TAG_COIN, _QUANTILE)
    b_rng = substream(seed, TAG_COIN, _BERNOULLI)
    run = _Run(_solver_margin(env, cfg), cfg, seed)
    tails = _CrossingTails(cfg)

    xi = np.zeros(blocks, dtype=np.int64)
    overshoot = np.zeros(blocks, dtype=np.int64)
    crossing_sup = np.zeros(blocks)
    dominated = np.zeros(blocks, dtype=np.int64)
    block_steps = np.zeros(blocks, dtype=np.int64)
    levels = np.zeros(blocks, dtype=np.int64)
    start_sites = np.zeros(blocks, dtype=np.int64)

    level = 0
    for k in range(blocks):
        y = run.current_site
        levels[k] = level
        start_sites[k] = y
        presites = []
        while True:
            presites.append(run.current_site)
            run.advance(run.steps + 1)
            if run.current_site > level:
                break
        w = run.current_site - level
        run._grow_to_level(level + 1)
        sites, probs = crossing_distribution(run.env, cfg, y, level)
        cdf = np.cumsum(probs)
        lo = float(cdf[w - 2]) if w >= 2 else 0.0
        hi = float(cdf[w - 1])
        u = lo + u_rng.random() * max(hi - lo, 0.0)
        xi[k] = dom.quantile(min(u, 1.0 - 1e-15))
        overshoot[k] = w
        s = _crossing_probability_sup(tails, run.env, level, min(presites))
        crossing_sup[k] = s
        duration = len(presites)
        block_steps[k] = duration
        clock = duration
        for step, ysite in enumerate(presites[:-1], start=1):
            p = tails.prob(run.env, ysite, level)
            deficit = (s - p) / (1.0 - p) if p < 1.0 else 0.0
            if deficit > 0.0 and b_rng.random() < deficit:
                clock = step
                break
        dominated[k] = clock
        level += int(xi[k])

    return DominationTrace(
        offset=dom.offset,
        rate=dom.rate,
        seed=int(seed),
        xi=xi,
        overshoot=overshoot,
        crossing_sup=crossing_sup,
        dominated_steps=dominated,
        block_steps=block_steps,
        levels=levels,
        start_sites=start_sites,
    )


# ---------------------------------------------------------------------------
# sub-ballistic speed bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedBoundTrace:
    """Upper-bound trace for X_n/n at block boundaries plus the moment
    diagnostic whose divergence drives the bound to zero."""

    block_index: np.ndarray
    bound: np.ndarray
    moment_sample_sizes: np.ndarray
    moment_running_means: np.ndarray
    trace: DominationTrace

    @property
    def final_bound(self) -> float:
        return float(self.bound[-1])


def speed_bound_trace(
    spec: EnvironmentSpec,
    cfg: WalkConfig,
    blocks: int,
    seed: int,
    moment_samples: int = 10**5,
) -> SpeedBoundTrace:
    """Evaluate (xi_1+...+xi_{k+1}) / (S_0+...+S_{k-1}) along a coupled run.

    The ratio dominates X_n/n at the block boundaries.  Alongside it, running
    empirical means of e^{(1-bias) Z_0 - (1+bias) Z_{-1}} over growing samples
    of consecutive gap pairs diagnose whether the zero-speed moment condition
    fires (diverging running means) or fails to (stabilizing means).
    """
    if blocks < 2:
        raise ValueError("need at least 2 blocks")
    env = build_environment(spec, mix64(seed, TAG_COIN, 0x626E64), (-64, 64))
    trace = overshoot_domination_run(env, cfg, blocks, seed)
    xi_sum = np.cumsum(trace.xi.astype(float))
    s_sum = np.cumsum(trace.dominated_steps.astype(float))
    ks = np.arange(1, blocks)
    bound = xi_sum[ks] / s_sum[ks - 1]

    gap_env = build_environment(
        spec, mix64(seed, TAG_COIN, 0x6D6F6D), (0, moment_samples + 2)
    )
    gaps = gap_env.gaps[1:]  # gaps between consecutive points right of 0
    # each term consumes a consecutive gap pair, so this yields moment_samples terms
    terms = np.exp((1.0 - cfg.bias) * gaps[1:] - (1.0 + cfg.bias) * gaps[:-1])
    sizes = np.unique(
        np.geomspace(10, terms.size, num=24).astype(np.int64).clip(1, terms.size)
    )
    running = np.cumsum(terms)
    means = running[sizes - 1] / sizes
    return SpeedBoundTrace(
        block_index=ks,
        bound=bound,
        moment_sample_sizes=sizes,
        moment_running_means=means,
        trace=trace,
    )
