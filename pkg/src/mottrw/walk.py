"""Monte Carlo simulation of the truncated walk.

A single compiled step kernel drives every simulation in the package: discrete
or continuous time, level-stopped runs, visit counting, and checkpointed long
runs.  The kernel is resumable — all of its state (current site, step count,
generator states, accumulators, count arrays, law cache) lives in plain arrays
and scalars — so the driving wrapper can pause it at a window boundary, extend
the environment, and continue bit-reproducibly.  One uniform is consumed per
step from a splitmix64 stream keyed by ``(seed, stream, replica)``; continuous
runs consume holding times from a second, independent stream, so the embedded
jump chain of a continuous run is step-for-step identical to the discrete run
with the same seed.

The jump law at each visited site is materialised once into a sliding cache of
cumulative tables and sampled by inverse CDF (binary search).  Offsets are laid
out in increasing order, which makes the sampling monotone in the bias for
common random numbers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numba import njit

from ._rng import TAG_CLOCK, TAG_WALK, mix64
from .environments import Environment, EnvironmentSpec, build_environment, extend_window
from .kernel import WalkConfig, effective_range, range_cutoff

_ENV_TAG = 0x656E7673  # fresh environments per replica

_DONE, _EXTEND_LEFT, _EXTEND_RIGHT, _LEVEL = 0, 1, 2, 3

_INV53 = 2.0 ** -53


@njit(cache=True, nogil=True, inline="always")
def _next_u64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _pair_potential(u_mode, u_beta, u_edges, u_table, a, b):
    if u_mode == 0:
        return 0.0
    if u_mode == 1:
        return -u_beta * (abs(a) + abs(b) + abs(a - b))
    nb = u_edges.shape[0] - 2
    ia = np.searchsorted(u_edges, a, side="right") - 1
    if ia > nb:
        ia = nb
    ib = np.searchsorted(u_edges, b, side="right") - 1
    if ib > nb:
        ib = nb
    return u_table[ia, ib]


@njit(cache=True, nogil=True)
def _step_kernel(
    positions,
    marks,
    lam,
    u_mode,
    u_beta,
    u_edges,
    u_table,
    full_span,
    move_span,
    lazy,
    continuous,
    site,
    steps_done,
    steps_target,
    stop_slot,
    rng_state,
    clock_state,
    acc,
    visits,
    stays,
    vrange,
    cp_steps,
    cp_sites,
    cp_clocks,
    cp_ptr,
    cum,
    total,
    moveprob,
    drift,
    xdrift,
    cached,
    anchor,
):
    """Advance the walk; returns (code, site, steps_done, rng, clock, cp_ptr, anchor).

    acc[0] += 1/r at each visited state, acc[1] += mean index offset,
    acc[2] = elapsed continuous time, acc[3] += mean spatial displacement.
    visits counts post-step positions (steps 1..n); stays counts self-loops.
    """
    n = positions.shape[0]
    cache_rows = cum.shape[0]
    width = 2 * move_span + 1
    ncp = cp_steps.shape[0]
    while steps_done < steps_target:
        if site - full_span < 0:
            return _EXTEND_LEFT, site, steps_done, rng_state, clock_state, cp_ptr, anchor
        if site + full_span >= n:
            return _EXTEND_RIGHT, site, steps_done, rng_state, clock_state, cp_ptr, anchor
        row = site - anchor
        if row < 0 or row >= cache_rows:
            anchor = site - cache_rows // 4
            if anchor < 0:
                anchor = 0
            cached[:] = False
            row = site - anchor
        if not cached[row]:
            xi = positions[site]
            ei = marks[site]
            tot = 0.0
            for o in range(-full_span, full_span + 1):
                if o == 0:
                    continue
                dx = positions[site + o] - xi
                adx = dx if dx > 0.0 else -dx
                uu = _pair_potential(u_mode, u_beta, u_edges, u_table, ei, marks[site + o])
                r = math.exp(lam * dx - adx + uu)
                tot += r
                if -move_span <= o <= move_span:
                    cum[row, o + move_span] = r
            cum[row, move_span] = 0.0
            move_mass = 0.0
            for j in range(width):
                move_mass += cum[row, j]
            denom = tot if lazy else move_mass
            run = 0.0
            dr = 0.0
            xdr = 0.0
            for j in range(width):
                p = cum[row, j] / denom
                run += p
                cum[row, j] = run
                o = j - move_span
                dr += o * p
                xdr += (positions[site + o] - xi) * p
            total[row] = tot
            moveprob[row] = run if lazy else 2.0
            drift[row] = dr
            xdrift[row] = xdr
            cached[row] = True

        rng_state, z = _next_u64(rng_state)
        u = (z >> np.uint64(11)) * _INV53
        r_tot = total[row]
        if continuous:
            clock_state, zc = _next_u64(clock_state)
            uc = (zc >> np.uint64(11)) * _INV53
            acc[2] += -math.log(1.0 - uc) / r_tot
        acc[0] += 1.0 / r_tot
        acc[1] += drift[row]
        acc[3] += xdrift[row]
        if u >= moveprob[row]:
            stays[site] += 1
        else:
            j = np.searchsorted(cum[row, :], u, side="right")
            site += j - move_span
        steps_done += 1
        visits[site] += 1
        if site < vrange[0]:
            vrange[0] = site
        elif site > vrange[1]:
            vrange[1] = site
        if cp_ptr < ncp and steps_done == cp_steps[cp_ptr]:
            cp_sites[cp_ptr] = site
            cp_clocks[cp_ptr] = acc[2]
            cp_ptr += 1
        if stop_slot >= 0 and site >= stop_slot:
            return _LEVEL, site, steps_done, rng_state, clock_state, cp_ptr, anchor
    return _DONE, site, steps_done, rng_state, clock_state, cp_ptr, anchor


# ---------------------------------------------------------------------------
# driving wrapper
# ---------------------------------------------------------------------------


def _potential_args(cfg: WalkConfig):
    pot = cfg.potential
    if pot.kind == "zero":
        return 0, 0.0, np.zeros(0), np.zeros((0, 0))
    if pot.kind == "mott":
        return 1, float(pot.beta), np.zeros(0), np.zeros((0, 0))
    return 2, 0.0, np.asarray(pot.edges, dtype=float), np.asarray(pot.values, dtype=float)


class _Run:
    """Mutable driver around the compiled kernel: owns env, state and caches."""

    def __init__(
        self,
        env: Environment,
        cfg: WalkConfig,
        seed: int,
        replica: int = 0,
        start: int = 0,
        continuous: bool = False,
    ):
        self.cfg = cfg
        self.seed = int(seed)
        self.replica = int(replica)
        self.start = int(start)
        self.continuous = bool(continuous)
        self.full_span = range_cutoff(cfg, env.spec)
        self.move_span = effective_range(cfg, env.spec)
        self.lazy = bool(cfg.lazy and cfg.rho != math.inf)
        self.u_mode, self.u_beta, self.u_edges, self.u_table = _potential_args(cfg)
        self.rng_state = np.uint64(mix64(seed, TAG_WALK, replica))
        self.clock_state = np.uint64(mix64(seed, TAG_CLOCK, replica))
        self.acc = np.zeros(4)
        self.steps = 0
        need = self.full_span + 2
        lo = min(env.kmin, start - need)
        hi = max(env.kmax, start + need)
        self.env = extend_window(env, (lo, hi)) if (lo, hi) != (env.kmin, env.kmax) else env
        self.visits = np.zeros(self.env.n_sites, dtype=np.int64)
        self.stays = np.zeros(self.env.n_sites, dtype=np.int64)
        self.site = self.env.slot(start)
        self.vrange = np.array([self.site, self.site], dtype=np.int64)
        self._alloc_cache()

    def _alloc_cache(self):
        n = self.env.n_sites
        rows = min(n, 4096)
        width = 2 * self.move_span + 1
        self.cum = np.zeros((rows, width))
        self.total = np.zeros(rows)
        self.moveprob = np.zeros(rows)
        self.drift = np.zeros(rows)
        self.xdrift = np.zeros(rows)
        self.cached = np.zeros(rows, dtype=np.bool_)
        self.anchor = max(0, min(self.site - rows // 4, n - rows))

    def _grow(self, side: int):
        env = self.env
        width = env.kmax - env.kmin
        if side == _EXTEND_LEFT:
            new_window = (env.kmin - max(width, 256), env.kmax)
        else:
            new_window = (env.kmin, env.kmax + max(width, 256))
        new_env = extend_window(env, new_window)
        pad = env.kmin - new_env.kmin
        visits = np.zeros(new_env.n_sites, dtype=np.int64)
        stays = np.zeros(new_env.n_sites, dtype=np.int64)
        visits[pad : pad + env.n_sites] = self.visits
        stays[pad : pad + env.n_sites] = self.stays
        self.env = new_env
        self.visits = visits
        self.stays = stays
        self.site += pad
        self.vrange += pad
        self._alloc_cache()

    def reset_counters(self, start: int):
        """Restart bookkeeping at ``start``, keeping the random stream, the
        environment and the law cache.  Used to resample path segments:
        rejection attempts draw fresh randomness from the ongoing stream."""
        lo, hi = int(self.vrange[0]), int(self.vrange[1])
        self.visits[lo : hi + 1] = 0
        self.stays[lo : hi + 1] = 0
        self.acc[:] = 0.0
        self.steps = 0
        self.start = int(start)
        self.site = self.env.slot(start)
        self.vrange[0] = self.vrange[1] = self.site

    def take_visits(self) -> tuple[int, np.ndarray]:
        """Visit counts accumulated since the last reset, as
        ``(lowest_site, counts)``; counts are copied out."""
        lo, hi = int(self.vrange[0]), int(self.vrange[1])
        return lo + self.env.kmin, self.visits[lo : hi + 1].copy()

    def advance(
        self,
        steps_target: int,
        stop_level: int | None = None,
        checkpoints: Sequence[int] = (),
    ) -> str:
        """Run until ``steps_target`` total steps or ``site >= stop_level``.

        Returns "done" or "level".  Checkpoints are absolute step counts (must
        exceed the current count); reached ones are recorded in
        ``self.cp_steps/cp_sites/cp_clocks``.
        """
        cp_steps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
        if cp_steps.size and cp_steps[0] <= self.steps:
            raise ValueError("checkpoints must lie beyond the current step count")
        cp_sites = np.zeros(cp_steps.size, dtype=np.int64)
        cp_clocks = np.zeros(cp_steps.size)
        cp_ptr = 0
        while True:
            stop_slot = -1
            if stop_level is not None:
                if stop_level > self.env.kmax - self.full_span:
                    self._grow_to_level(stop_level)
                stop_slot = self.env.slot(stop_level)
            code, self.site, self.steps, rng_out, clock_out, cp_ptr, self.anchor = _step_kernel(
                self.env.positions,
                self.env.marks,
                float(self.cfg.bias),
                self.u_mode,
                self.u_beta,
                self.u_edges,
                self.u_table,
                self.full_span,
                self.move_span,
                self.lazy,
                self.continuous,
                self.site,
                self.steps,
                int(steps_target),
                stop_slot,
                self.rng_state,
                self.clock_state,
                self.acc,
                self.visits,
                self.stays,
                self.vrange,
                cp_steps,
                cp_sites,
                cp_clocks,
                cp_ptr,
                self.cum,
                self.total,
                self.moveprob,
                self.drift,
                self.xdrift,
                self.cached,
                self.anchor,
            )
            # keep the generator states unsigned: a plain Python int would be
            # re-typed as int64 on the next dispatch and corrupt the stream
            self.rng_state = np.uint64(rng_out)
            self.clock_state = np.uint64(clock_out)
            if code == _DONE or code == _LEVEL:
                self.cp_steps, self.cp_sites, self.cp_clocks = cp_steps, cp_sites, cp_clocks
                return "done" if code == _DONE else "level"
            self._grow(code)

    def _grow_to_level(self, level: int):
        while level > self.env.kmax - self.full_span:
            self._grow(_EXTEND_RIGHT)

    @property
    def current_site(self) -> int:
        return self.site + self.env.kmin


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryStats:
    """Summary of one simulated trajectory.

    ``site`` is the walker's point index after ``steps`` steps; ``position``
    the corresponding point.  ``visits[k - window[0]]`` counts the time steps
    1..n ending at site k (add 1 at ``start`` for occupation including time 0);
    ``stays`` counts self-loop steps drawn at each site.  ``clock`` is the
    elapsed continuous time (0 for discrete runs).  ``sum_inv_rate``,
    ``sum_index_drift`` and ``sum_space_drift`` accumulate 1/r and the local
    one-step means over visited states, for time-average diagnostics.
    """

    seed: int
    replica: int
    start: int
    steps: int
    site: int
    position: float
    clock: float
    sum_inv_rate: float
    sum_index_drift: float
    sum_space_drift: float
    window: tuple[int, int]
    visits: np.ndarray
    stays: np.ndarray
    checkpoint_steps: np.ndarray
    checkpoint_sites: np.ndarray
    checkpoint_clocks: np.ndarray
    stopped_at_level: int | None
    environment: Environment

    def occupation(self, k: int) -> int:
        """Time steps 0..n spent at site k (start site included)."""
        base = int(self.visits[k - self.window[0]])
        return base + (1 if k == self.start else 0)


def _finish(run: _Run, stopped_level: int | None) -> TrajectoryStats:
    env = run.env
    return TrajectoryStats(
        seed=run.seed,
        replica=run.replica,
        start=run.start,
        steps=run.steps,
        site=run.current_site,
        position=float(env.positions[run.site]),
        clock=float(run.acc[2]),
        sum_inv_rate=float(run.acc[0]),
        sum_index_drift=float(run.acc[1]),
        sum_space_drift=float(run.acc[3]),
        window=(env.kmin, env.kmax),
        visits=run.visits,
        stays=run.stays,
        checkpoint_steps=run.cp_steps,
        checkpoint_sites=run.cp_sites + env.kmin,
        checkpoint_clocks=run.cp_clocks,
        stopped_at_level=stopped_level,
        environment=env,
    )


def simulate_discrete(
    env: Environment,
    cfg: WalkConfig,
    steps: int,
    seed: int,
    replica: int = 0,
    start: int = 0,
    checkpoints: Sequence[int] = (),
) -> TrajectoryStats:
    """Run the discrete-time truncated walk for ``steps`` steps."""
    run = _Run(env, cfg, seed, replica, start, continuous=False)
    run.advance(steps, checkpoints=checkpoints)
    return _finish(run, None)


def simulate_continuous(
    env: Environment,
    cfg: WalkConfig,
    steps: int,
    seed: int,
    replica: int = 0,
    start: int = 0,
    checkpoints: Sequence[int] = (),
) -> TrajectoryStats:
    """Run the continuous-time walk for ``steps`` jump events.

    Holding times at site k are exponential with the full jump-rate mass at k;
    the embedded jump chain is identical to :func:`simulate_discrete` with the
    same seed and replica.
    """
    run = _Run(env, cfg, seed, replica, start, continuous=True)
    run.advance(steps, checkpoints=checkpoints)
    return _finish(run, None)


@dataclass(frozen=True)
class HittingResult:
    """First crossing of a level: where the walk landed and whether exactly."""

    level: int
    site: int
    overshoot: int
    exact_hit: bool
    steps: int
    stats: TrajectoryStats


def hitting_overshoot(
    env: Environment,
    cfg: WalkConfig,
    level: int,
    seed: int,
    replica: int = 0,
    start: int = 0,
    max_steps: int = 10**9,
) -> HittingResult:
    """Run until the walk first reaches a site >= ``level``."""
    if start >= level:
        raise ValueError("start must lie below level")
    run = _Run(env, cfg, seed, replica, start, continuous=False)
    outcome = run.advance(max_steps, stop_level=level)
    if outcome != "level":
        raise RuntimeError(f"level {level} not reached within {max_steps} steps")
    site = run.current_site
    return HittingResult(
        level=level,
        site=site,
        overshoot=site - level,
        exact_hit=(site == level),
        steps=run.steps,
        stats=_finish(run, level),
    )


def visit_counts(
    env: Environment,
    cfg: WalkConfig,
    stop_level: int,
    seed: int,
    replica: int = 0,
    start: int = 0,
    max_steps: int = 10**9,
) -> TrajectoryStats:
    """Run until first crossing of ``stop_level``; occupation is in ``visits``
    (use :meth:`TrajectoryStats.occupation` to include time 0)."""
    run = _Run(env, cfg, seed, replica, start, continuous=False)
    outcome = run.advance(max_steps, stop_level=stop_level)
    if outcome != "level":
        raise RuntimeError(f"level {stop_level} not reached within {max_steps} steps")
    return _finish(run, stop_level)


@dataclass(frozen=True)
class VelocityEstimate:
    """Replica-averaged speed estimate (annealed: fresh environment each)."""

    value: float
    stderr: float
    per_replica: np.ndarray
    steps: int
    burn_in: int
    replicas: int
    seed: int
    units: str

    def margin(self, sigmas: float = 3.0) -> float:
        return sigmas * self.stderr


def _replica_speed(args) -> float:
    spec, cfg, steps, burn_in, seed, replica, continuous, units = args
    env = build_environment(spec, mix64(seed, _ENV_TAG, replica), (-8, 8))
    run = _Run(env, cfg, seed, replica, 0, continuous=continuous)
    run.advance(steps, checkpoints=(burn_in,) if burn_in else ())
    if burn_in:
        site0 = int(run.cp_sites[0]) + run.env.kmin
        clock0 = float(run.cp_clocks[0])
    else:
        site0, clock0 = 0, 0.0
    site1 = run.current_site
    if units == "index":
        dx = site1 - site0
    else:
        dx = run.env.positions[run.site] - run.env.positions[run.env.slot(site0)]
    if continuous:
        dt = run.acc[2] - clock0
    else:
        dt = run.steps - burn_in
    return float(dx / dt)


def thread_count() -> int:
    """Worker threads for replica fan-out (MOTTRW_THREADS, default 1)."""
    try:
        return max(1, int(os.environ.get("MOTTRW_THREADS", "1")))
    except ValueError:
        return 1


def velocity_estimate(
    spec: EnvironmentSpec,
    cfg: WalkConfig,
    steps: int,
    seed: int,
    replicas: int = 8,
    burn_in: int | None = None,
    continuous: bool = False,
    units: str = "index",
    threads: int | None = None,
) -> VelocityEstimate:
    """Annealed speed estimate over ``replicas`` independent environments.

    Each replica r draws a fresh environment (seed derived from ``(seed, r)``)
    and an independent walk stream, then measures (X_n - X_burn) / (n - burn).
    ``units="index"`` measures site indices per step (or per unit time if
    ``continuous``); ``units="position"`` measures displacement.
    """
    if units not in ("index", "position"):
        raise ValueError("units must be 'index' or 'position'")
    if replicas < 2:
        raise ValueError("need at least 2 replicas for a standard error")
    burn = int(steps // 10) if burn_in is None else int(burn_in)
    if not 0 <= burn < steps:
        raise ValueError("burn_in must lie in [0, steps)")
    jobs = [
        (spec, cfg, int(steps), burn, int(seed), r, continuous, units)
        for r in range(replicas)
    ]
    workers = thread_count() if threads is None else max(1, int(threads))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.fromiter(pool.map(_replica_speed, jobs), float, replicas)
    else:
        values = np.fromiter(map(_replica_speed, jobs), float, replicas)
    v = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(replicas))
    return VelocityEstimate(
        value=v,
        stderr=stderr,
        per_replica=values,
        steps=int(steps),
        burn_in=burn,
        replicas=int(replicas),
        seed=int(seed),
        units=units,
    )
