"""Effective conductances of the random resistor network.

The conductances ``c(i, j)`` of :mod:`mottrw.kernel` turn the environment into a
one-dimensional resistor network.  This module computes:

* nearest-neighbour quantities in closed form (series/parallel reduction,
  adaptive resistance tails, hitting probabilities),
* effective conductances of the truncated long-range network by Dirichlet
  solves on finite windows,
* escape probabilities ``C(i <-> infinity) / site_weight(i, inf)``,
* crossing (overshoot) distributions by absorbing-chain solves, and
* empirical calibration constants used by the verification suite.

All solves work in the gauge ``c * exp(-2 bias x_anchor)`` so that windows far
from the origin stay in floating-point range; results are reported in the
original units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix, diags, identity
from scipy.sparse.linalg import spsolve

from .environments import Environment, EnvironmentSpec, build_environment, extend_window
from .kernel import WalkConfig, effective_range, range_cutoff, rate_mass

_SOLVER_RESIDUAL = 1e-10


# ---------------------------------------------------------------------------
# nearest-neighbour closed forms
# ---------------------------------------------------------------------------


def nn_edge_conductances(
    env: Environment, cfg: WalkConfig, j_lo: int, j_hi: int
) -> np.ndarray:
    """c(j, j+1) for ``j_lo <= j < j_hi``."""
    s0, s1 = env.slot(j_lo), env.slot(j_hi)
    x = env.positions[s0 : s1 + 1]
    m = env.marks[s0 : s1 + 1]
    u = np.asarray(cfg.potential.evaluate(m[:-1], m[1:]), dtype=float)
    return np.exp(cfg.bias * (x[:-1] + x[1:]) - np.diff(x) + u)


def series_resistance(conductances: np.ndarray) -> float:
    """Resistance of edges in series."""
    c = np.asarray(conductances, dtype=float)
    if c.size and c.min() <= 0:
        raise ValueError("conductances must be positive")
    return float((1.0 / c).sum())


@dataclass(frozen=True)
class ResistanceTail:
    """Partial sums of a one-sided resistance series from a site outward."""

    partial_sums: np.ndarray
    converged: bool
    diverged: bool
    terms: int

    @property
    def value(self) -> float:
        if self.diverged:
            return math.inf
        return float(self.partial_sums[-1])


def resistance_partial_sums(
    env: Environment,
    cfg: WalkConfig,
    site: int = 0,
    direction: int = +1,
    rel_tol: float = 1e-8,
    divergence_threshold: float = 1e6,
    max_terms: int = 200_000,
    chunk: int = 256,
) -> ResistanceTail:
    """Partial sums of sum_j 1/c(j, j+1) from ``site`` toward +/- infinity.

    Stops when the relative increment drops below ``rel_tol`` (converged), the
    sum exceeds ``divergence_threshold`` (diverged), or ``max_terms`` edges have
    been consumed (neither flag set).
    """
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    sums: list[float] = []
    total = 0.0
    taken = 0
    while taken < max_terms:
        n = min(chunk, max_terms - taken)
        if direction > 0:
            j0, j1 = site + taken, site + taken + n
            if j1 > env.kmax:
                env = extend_window(env, (env.kmin, max(j1, 2 * env.kmax + 16)))
            c = nn_edge_conductances(env, cfg, j0, j1)
        else:
            j0, j1 = site - taken - n, site - taken
            if j0 < env.kmin:
                env = extend_window(env, (min(j0, 2 * env.kmin - 16), env.kmax))
            c = nn_edge_conductances(env, cfg, j0, j1)[::-1]
        inc = np.cumsum(1.0 / c) + total
        sums.append(inc)
        total = float(inc[-1])
        taken += n
        if total > divergence_threshold:
            return ResistanceTail(np.concatenate(sums), False, True, taken)
        if float(1.0 / c[-1]) < rel_tol * total:
            return ResistanceTail(np.concatenate(sums), True, False, taken)
    return ResistanceTail(np.concatenate(sums), False, False, taken)


def nn_conductance_to_infinity(env: Environment, cfg: WalkConfig, site: int = 0, **kw) -> float:
    """C(site <-> infinity) in the nearest-neighbour network.

    Sum of the reciprocal one-sided resistances; a diverging side contributes 0.
    Raises if either side neither converges nor diverges within budget.
    """
    total = 0.0
    for direction in (+1, -1):
        tail = resistance_partial_sums(env, cfg, site, direction, **kw)
        if not (tail.converged or tail.diverged):
            raise RuntimeError("resistance tail undecided; raise max_terms")
        if tail.converged:
            total += 1.0 / tail.value
    return total


def hitting_probability_from_conductances(
    conductances: Sequence[float], m_idx: int, x_idx: int, n_idx: int
) -> float:
    """P(hit ``m_idx`` before ``n_idx``) for the birth-death chain on edges
    ``conductances[j] = c(j, j+1)``, started between them."""
    if not m_idx < x_idx < n_idx:
        raise ValueError("need m_idx < x_idx < n_idx")
    c = np.asarray(conductances, dtype=float)
    r_left = series_resistance(c[m_idx:x_idx])
    r_right = series_resistance(c[x_idx:n_idx])
    c_left, c_right = 1.0 / r_left, 1.0 / r_right
    return c_left / (c_left + c_right)


def nn_hitting_probability(
    env: Environment, cfg: WalkConfig, x: int, m: int, n: int
) -> float:
    """P(hit m before n | start x), m < x < n, nearest-neighbour walk."""
    if not m < x < n:
        raise ValueError("need m < x < n")
    c = nn_edge_conductances(env, cfg, m, n)
    return hitting_probability_from_conductances(c, 0, x - m, n - m)


# site-set descriptors: an int (point), ("le", M) or ("ge", N) (half-lines)
_Item = object


def _as_interval(item) -> tuple[float, float]:
    if isinstance(item, (int, np.integer)):
        return (float(item), float(item))
    kind, v = item
    if kind == "le":
        return (-math.inf, float(v))
    if kind == "ge":
        return (float(v), math.inf)
    raise ValueError(f"bad site-set item {item!r}")


def _normalise_sets(source, target):
    src = [source] if isinstance(source, (int, np.integer, tuple)) else list(source)
    tgt = [target] if isinstance(target, (int, np.integer, tuple)) else list(target)
    blocks = [(_as_interval(i), 1) for i in src] + [(_as_interval(i), 0) for i in tgt]
    blocks.sort(key=lambda b: (b[0][0], b[0][1]))
    for (a, _), (b, _) in zip(blocks, blocks[1:]):
        if b[0] <= a[1]:
            raise ValueError("source/target sets overlap or touch")
    return blocks


def nn_effective_conductance(env: Environment, cfg: WalkConfig, source, target, **kw) -> float:
    """Effective conductance between site sets in the nearest-neighbour network.

    ``source``/``target`` are points (ints) or half-lines ``("le", M)`` /
    ``("ge", N)``; any query must reduce to series branches between adjacent
    source/target blocks on the line (others are rejected).  Branches between
    blocks of the same set carry no current; a side with no opposing block
    contributes nothing.
    """
    blocks = _normalise_sets(source, target)
    total = 0.0
    for (a, la), (b, lb) in zip(blocks, blocks[1:]):
        if la == lb:
            continue
        lo, hi = int(a[1]), int(b[0])
        c = nn_edge_conductances(env, cfg, lo, hi)
        total += 1.0 / series_resistance(c)
    return total


# ---------------------------------------------------------------------------
# Dirichlet solves for the long-range network
# ---------------------------------------------------------------------------


def _membership(blocks, k: int) -> int:
    """-1 free, 0 target, 1 source."""
    for (lo, hi), label in blocks:
        if lo <= k <= hi:
            return label
    return -1


def effective_conductance(
    env: Environment,
    cfg: WalkConfig,
    source,
    target,
    rho: float | None = None,
    window: tuple[int, int] | None = None,
    rel_tol: float = 1e-6,
    max_doublings: int = 14,
) -> float:
    """Effective conductance between site sets in the truncated network.

    Jumps up to ``min(rho, range_cutoff)`` sites are included.  With an explicit
    ``window = (w0, w1)`` the Dirichlet problem is solved once on those sites
    (free sites outside the window are treated as reflecting); otherwise the
    window doubles until two consecutive values agree to ``rel_tol``.
    """
    rho = cfg.rho if rho is None else rho
    span = effective_range(
        WalkConfig(cfg.bias, rho, cfg.potential, cfg.tail_tol, cfg.lazy), env.spec
    )
    blocks = _normalise_sets(source, target)
    finite = [int(v) for (lo, hi), _ in blocks for v in (lo, hi) if math.isfinite(v)]
    if not finite:
        raise ValueError("need at least one finite endpoint")
    if window is not None:
        c, _env = _dirichlet_conductance(env, cfg, blocks, span, window)
        return c
    radius = max(16, span + 1, max(abs(v) for v in finite) + span + 1)
    prev = None
    for _ in range(max_doublings):
        lo = min(finite + [0]) - radius
        hi = max(finite + [0]) + radius
        c, env = _dirichlet_conductance(env, cfg, blocks, span, (lo, hi))
        if prev is not None and abs(c - prev) <= rel_tol * max(abs(c), 1e-300):
            return c
        prev = c
        radius *= 2
    raise RuntimeError("effective conductance did not stabilise; raise max_doublings")


def _dirichlet_conductance(env, cfg, blocks, span, window):
    """Energy of the harmonic potential (source 1, target 0) on a window.

    Window sites not in either set are free unknowns; sites outside the window
    take the half-line value when a half-line covers them and are reflecting
    (dropped) otherwise.  Edges joining two outside sites are dropped; their
    rates are below the cutoff tail and the kept-edge set is monotone in the
    span, which keeps C monotone in rho at a fixed window.
    """
    w0, w1 = int(window[0]), int(window[1])
    if w1 - w0 < 1:
        raise ValueError("window too small")
    if w0 - span < env.kmin or w1 + span > env.kmax:
        env = extend_window(env, (min(w0 - span, env.kmin), max(w1 + span, env.kmax)))

    n = w1 - w0 + 1
    labels = np.fromiter((_membership(blocks, k) for k in range(w0, w1 + 1)), int, n)
    # f values: source 1.0, target 0.0, free NaN until solved
    f = np.where(labels == 1, 1.0, np.where(labels == 0, 0.0, np.nan))
    free = np.flatnonzero(labels == -1)
    fpos = np.full(n, -1)
    fpos[free] = np.arange(free.size)

    x = env.positions
    marks = env.marks
    fin = [int(v) for (lo, hi), _ in blocks for v in (lo, hi) if math.isfinite(v)]
    anchor = x[env.slot(fin[0])]

    def edge_conductance(k_i, k_j):
        si, sj = env.slot(k_i), env.slot(k_j)
        dx = x[sj] - x[si]
        u = float(cfg.potential.evaluate(marks[si], marks[sj]))
        return math.exp(cfg.bias * (x[si] + x[sj] - 2.0 * anchor) - abs(dx) + u)

    def boundary_value(k: int) -> float | None:
        lab = _membership(blocks, k)
        return None if lab == -1 else float(lab)

    # collect undirected edges (k, k+o) with at least one endpoint in-window,
    # as (wi, wj, c) with window offsets or (wi, value, c) for fixed outside
    edges_in: list[tuple[int, int, float]] = []  # both endpoints in window
    edges_out: list[tuple[int, float, float]] = []  # (inside offset, outside f, c)
    for k in range(w0, w1 + 1):
        for o in range(1, span + 1):
            kj = k + o
            if kj <= w1:
                edges_in.append((k - w0, kj - w0, edge_conductance(k, kj)))
            else:
                v = boundary_value(kj)
                if v is not None:
                    edges_out.append((k - w0, v, edge_conductance(k, kj)))
        for o in range(1, span + 1):
            kj = k - o
            if kj < w0:
                v = boundary_value(kj)
                if v is not None:
                    edges_out.append((k - w0, v, edge_conductance(kj, k)))

    m = free.size
    if m:
        diag = np.zeros(m)
        rhs = np.zeros(m)
        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        for wi, wj, c in edges_in:
            fi, fj = fpos[wi], fpos[wj]
            if fi >= 0 and fj >= 0:
                diag[fi] += c
                diag[fj] += c
                rows += [fi, fj]
                cols += [fj, fi]
                vals += [-c, -c]
            elif fi >= 0:
                diag[fi] += c
                rhs[fi] += c * f[wj]
            elif fj >= 0:
                diag[fj] += c
                rhs[fj] += c * f[wi]
        for wi, v, c in edges_out:
            fi = fpos[wi]
            if fi >= 0:
                diag[fi] += c
                rhs[fi] += c * v
        rows += list(range(m))
        cols += list(range(m))
        vals += list(diag)
        lap = csr_matrix((vals, (rows, cols)), shape=(m, m))
        sol = spsolve(lap, rhs)
        resid = np.linalg.norm(lap @ sol - rhs)
        if resid > _SOLVER_RESIDUAL * (np.linalg.norm(rhs) + 1.0):
            raise RuntimeError(f"Dirichlet solve residual {resid:.2e} too large")
        f[free] = sol

    energy = 0.0
    for wi, wj, c in edges_in:
        dv = f[wi] - f[wj]
        if dv != 0.0:
            energy += c * dv * dv
    for wi, v, c in edges_out:
        dv = f[wi] - v
        if dv != 0.0:
            energy += c * dv * dv

    return energy * math.exp(2.0 * cfg.bias * anchor), env


@dataclass(frozen=True)
class EscapeEstimate:
    value: float
    conductance: float
    weight: float
    radius: int
    converged: bool


def escape_probability(
    env: Environment,
    cfg: WalkConfig,
    site: int = 0,
    rho: float | None = None,
    rel_tol: float = 1e-4,
    initial_radius: int = 16,
    max_doublings: int = 12,
) -> EscapeEstimate:
    """P(the walk at ``site`` is never there again) = C(site <-> inf) / weight.

    The conductance from ``site`` to the complement of ``(site-N, site+N)`` is
    non-increasing in N; N doubles until consecutive values agree to
    ``rel_tol`` (relative).  The weight is the full (untruncated) one at
    ``site``, in the same gauge.
    """
    rho_eff = cfg.rho if rho is None else rho
    span = effective_range(
        WalkConfig(cfg.bias, rho_eff, cfg.potential, cfg.tail_tol, cfg.lazy), env.spec
    )
    radius = max(initial_radius, span + 1)
    prev = None
    value = math.nan
    for i in range(max_doublings):
        target = [("le", site - radius), ("ge", site + radius)]
        c, env = _dirichlet_conductance(
            env, cfg, _normalise_sets([site], target), span,
            (site - radius + 1, site + radius - 1),
        )
        if prev is not None and abs(c - prev) <= rel_tol * max(c, 1e-300):
            weight = rate_mass(env, cfg, site, math.inf) * math.exp(
                2.0 * cfg.bias * env.position(site)
            )
            return EscapeEstimate(c / weight, c, weight, radius, True)
        prev = c
        radius *= 2
    weight = rate_mass(env, cfg, site, math.inf) * math.exp(
        2.0 * cfg.bias * env.position(site)
    )
    return EscapeEstimate(prev / weight, prev, weight, radius // 2, False)


# ---------------------------------------------------------------------------
# absorbing-chain solves
# ---------------------------------------------------------------------------


def _move_probabilities(env, cfg, sites: np.ndarray, span: int) -> np.ndarray:
    """Move law rows P(site -> site+o), o in [-span, span], self-loops removed.

    For finite rho the move law conditioned on moving equals the renormalised
    truncation, so absorption quantities agree with the lazy walk.
    """
    s0 = env.slot(int(sites[0]))
    s1 = env.slot(int(sites[-1]))
    x = env.positions
    m = env.marks
    n = sites.size
    rows = np.empty((n, 2 * span + 1))
    for i, k in enumerate(sites):
        s = env.slot(int(k))
        dx = x[s - span : s + span + 1] - x[s]
        u = np.asarray(cfg.potential.evaluate(m[s], m[s - span : s + span + 1]), float)
        r = np.exp(cfg.bias * dx - np.abs(dx) + u)
        r[span] = 0.0
        rows[i] = r / r.sum()
    return rows


def crossing_distribution(
    env: Environment,
    cfg: WalkConfig,
    start: int,
    level: int,
    deficit_tol: float = 1e-12,
    initial_depth: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Law of the first site strictly above ``level`` (linear solve).

    Returns ``(sites, probs)`` over the landing sites ``level+1 ..
    level+span``.  The transient strip below is deepened until the probability
    deficit is below ``deficit_tol``.
    """
    if start > level:
        raise ValueError("start must satisfy start <= level")
    span = effective_range(cfg, env.spec)
    depth = initial_depth or max(4 * span, 64, level - start + span)
    for _ in range(12):
        lo = level - depth
        if lo - span < env.kmin or level + span > env.kmax:
            env = extend_window(
                env, (min(lo - span, env.kmin), max(level + span, env.kmax))
            )
        sites = np.arange(lo, level + 1)
        rows = _move_probabilities(env, cfg, sites, span)
        n = sites.size
        # (I - Q)^T psi = e_start  => expected visits to each transient site
        offs, diagonals = [], []
        for k in range(1, span + 1):
            if k < n:
                offs.append(k)
                diagonals.append(-rows[k:, span - k])
                offs.append(-k)
                diagonals.append(-rows[: n - k, span + k])
        a = (identity(n, format="csr") + diags(diagonals, offs, shape=(n, n), format="csr")).tocsr()
        b = np.zeros(n)
        b[start - lo] = 1.0
        psi = spsolve(a, b)
        resid = np.linalg.norm(a @ psi - b)
        if resid > _SOLVER_RESIDUAL * (np.linalg.norm(b) + 1.0):
            raise RuntimeError(f"absorbing solve residual {resid:.2e} too large")
        # absorption law: sum over transient i of psi_i * P(i -> a)
        out_sites = np.arange(level + 1, level + span + 1)
        probs = np.zeros(span)
        for o in range(1, span + 1):
            i0 = max(0, n - o)  # only sites within o of the frontier land beyond it
            contrib = psi[i0:] * rows[i0:, o + span]
            np.add.at(probs, sites[i0:] + o - (level + 1), contrib)
        deficit = 1.0 - probs.sum()
        if deficit < deficit_tol:
            return out_sites, probs
        depth *= 2
    raise RuntimeError("crossing distribution did not converge; deficit persists")


def exit_probabilities(
    env: Environment, cfg: WalkConfig, start: int, m: int, n: int
) -> tuple[float, float]:
    """(P(reach <= m first), P(reach >= n first)) for the truncated walk.

    Absorbing-chain solve; the lazy self-loop does not change exit laws.  The
    two probabilities are solved from the same matrix and sum to 1 up to the
    solver residual.
    """
    if not m < start < n:
        raise ValueError("need m < start < n")
    span = effective_range(cfg, env.spec)
    if m - span < env.kmin or n + span > env.kmax:
        env = extend_window(env, (min(m - span, env.kmin), max(n + span, env.kmax)))
    sites = np.arange(m + 1, n)
    rows = _move_probabilities(env, cfg, sites, span)
    sz = sites.size
    offs, diagonals = [], []
    for k in range(1, span + 1):
        if k < sz:
            offs.append(k)
            diagonals.append(-rows[: sz - k, span + k])
            offs.append(-k)
            diagonals.append(-rows[k:, span - k])
    b = np.zeros((sz, 2))
    for i in range(min(span, sz)):  # only sites near a boundary can exit in one hop
        b[i, 0] = rows[i, : span - i].sum()
    for i in range(max(0, sz - span), sz):
        b[i, 1] = rows[i, sz - i + span :].sum()
    a = (identity(sz, format="csr") + diags(diagonals, offs, shape=(sz, sz), format="csr")).tocsr()
    h = spsolve(a, b)
    resid = np.linalg.norm(a @ h - b)
    if resid > _SOLVER_RESIDUAL * (np.linalg.norm(b) + 1.0):
        raise RuntimeError(f"absorbing solve residual {resid:.2e} too large")
    i0 = start - m - 1
    return float(h[i0, 0]), float(h[i0, 1])


def exit_probability_left(
    env: Environment, cfg: WalkConfig, start: int, m: int, n: int
) -> float:
    """P(reach sites <= m before sites >= n | start)."""
    return exit_probabilities(env, cfg, start, m, n)[0]


# ---------------------------------------------------------------------------
# calibration constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationConstants:
    """Empirical constants for the comparison bounds used by the verifier.

    ``k_eff``: max over sampled environments of C^rho_max / C^1.
    ``k_pi``: max of site_weight(inf) / site_weight(1) (gauge-free).
    ``k_tail``: tail-mass prefactor, calibrated so that the rate mass beyond
    range s is at most ``k_tail * exp(-d s (1 - bias))`` at s = 1.
    """

    k_eff: float
    k_pi: float
    k_tail: float
    n_envs: int
    seed: int
    rho_max: int
    metadata: dict = field(default_factory=dict)


def tail_rate_mass(env: Environment, cfg: WalkConfig, site: int, s: int) -> float:
    """Jump-rate mass to sites at index distance >= s (rate gauge)."""
    return rate_mass(env, cfg, site, math.inf) - (
        rate_mass(env, cfg, site, s - 1) if s > 1 else 0.0
    )


def estimate_calibration(
    spec: EnvironmentSpec,
    cfg: WalkConfig,
    n_envs: int = 100,
    seed: int = 0,
    rho_max: int = 8,
    window_radius: int = 24,
) -> CalibrationConstants:
    """Estimate the comparison constants over ``n_envs`` fresh environments."""
    from .environments import fresh_seed

    span = range_cutoff(cfg, spec)
    k_eff = 0.0
    k_pi = 0.0
    k_tail = 0.0
    d = spec.distance_floor
    for i in range(n_envs):
        env = build_environment(
            spec, fresh_seed(seed, 0xCA11, i), (-window_radius - span - 2, window_radius + span + 2)
        )
        w = (-window_radius + 1, window_radius - 1)
        tgt = [("le", -window_radius), ("ge", window_radius)]
        c1 = effective_conductance(env, cfg, [0], tgt, rho=1, window=w)
        cr = effective_conductance(env, cfg, [0], tgt, rho=rho_max, window=w)
        k_eff = max(k_eff, cr / c1)
        for site in (-1, 0, 1):
            ratio = rate_mass(env, cfg, site, math.inf) / rate_mass(env, cfg, site, 1)
            k_pi = max(k_pi, ratio)
            k_tail = max(
                k_tail,
                tail_rate_mass(env, cfg, site, 1) * math.exp(d * (1 - cfg.bias)),
            )
    return CalibrationConstants(
        k_eff=k_eff,
        k_pi=k_pi,
        k_tail=k_tail,
        n_envs=n_envs,
        seed=seed,
        rho_max=rho_max,
        metadata={"family": spec.family, "bias": cfg.bias},
    )
