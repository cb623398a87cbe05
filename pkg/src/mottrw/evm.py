"""Environment seen from the walker.

Occupation averages of observables along a trajectory, visit-density
diagnostics against a structural envelope of the walker-centred site law,
and the velocity representations read off local drifts and holding rates.
Distributions on environment space are never materialised: everything is a
time average of a function of the environment re-centred at the walker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .environments import Environment, extend_window, mean_gap
from .kernel import WalkConfig
from .regen import exact_hit_bound
from .walk import TrajectoryStats, simulate_discrete

# an observable of the environment as seen from a site: f(env, k) evaluates
# the underlying function at the realisation re-centred on site k
Observable = Callable[[Environment, int], float]


# ---------------------------------------------------------------------------
# occupation averages
# ---------------------------------------------------------------------------


def occupation_average(stats: TrajectoryStats, f: Observable) -> float:
    """Time average of ``f`` over the walker-centred environment chain.

    Averages f(env, X_j) over times j = 0..n (the start site counts once),
    weighting each site by its occupation; equals the empirical measure of
    the environment seen from the walker applied to f.
    """
    env = stats.environment
    lo = stats.window[0]
    weights = stats.visits
    idx = np.flatnonzero(weights)
    try:
        total = float(f(env, stats.start))
        for j in idx:
            total += int(weights[j]) * float(f(env, int(j) + lo))
    except IndexError as exc:
        raise RuntimeError(
            f"observable needs sites outside the materialised window {stats.window}"
        ) from exc
    return total / (stats.steps + 1)


@dataclass(frozen=True)
class OccupationFunctional:
    """Empirical walker-centred measure of one trajectory.

    Wraps the trajectory's visit counts; ``average`` applies it to an
    observable f(env, site).  Averages of bounded observables stay within the
    observable's bounds because the weights are a probability vector.
    """

    stats: TrajectoryStats

    def average(self, f: Observable) -> float:
        return occupation_average(self.stats, f)

    @property
    def support(self) -> np.ndarray:
        """Sites with positive occupation (start site included)."""
        lo = self.stats.window[0]
        sites = np.flatnonzero(self.stats.visits) + lo
        if self.stats.start not in sites:
            sites = np.sort(np.append(sites, self.stats.start))
        return sites


def _gap(env: Environment, k: int, j: int) -> float:
    """Z_{k+j} of the realisation (gap convention Z_i = x_{i+1} - x_i)."""
    return float(env.gaps[env.slot(k + j)])


def standard_cylinder_observables() -> tuple[tuple[str, Observable], ...]:
    """Ten fixed bounded cylinder observables of the gaps around the walker.

    All take values in [0, 1] and depend only on (Z_{-1}, Z_0, Z_1) at the
    current site; they probe weak convergence of the walker-centred law as
    the jump range grows.
    """
    return (
        ("exp_gap_right", lambda env, k: math.exp(-_gap(env, k, 0))),
        ("exp_gap_left", lambda env, k: math.exp(-_gap(env, k, -1))),
        ("exp_gap_pair", lambda env, k: math.exp(-_gap(env, k, 0) - _gap(env, k, 1))),
        ("inv_gap_right", lambda env, k: 1.0 / (1.0 + _gap(env, k, 0))),
        ("inv_gap_left", lambda env, k: 1.0 / (1.0 + _gap(env, k, -1))),
        ("inv_gap_pair", lambda env, k: 1.0 / (1.0 + _gap(env, k, 0) + _gap(env, k, 1))),
        ("short_right", lambda env, k: float(_gap(env, k, 0) <= 1.5)),
        ("short_pair", lambda env, k: float(_gap(env, k, 0) + _gap(env, k, 1) <= 3.0)),
        ("left_shorter", lambda env, k: float(_gap(env, k, -1) <= _gap(env, k, 0))),
        ("gap_contrast", lambda env, k: math.exp(-abs(_gap(env, k, 1) - _gap(env, k, 0)))),
    )


# ---------------------------------------------------------------------------
# structural envelope of the walker-centred site density
# ---------------------------------------------------------------------------


def density_envelope_profile(
    env: Environment,
    cfg: WalkConfig,
    sites: Sequence[int],
    rel_tol: float = 1e-8,
    max_terms: int = 100_000,
) -> np.ndarray:
    """Structural majorant of the walker-centred density at each shift.

    For each site k this is the nearest-neighbour rate mass at k times
    sum_j (j+2)^2 exp(-2 bias (x_{k+j} - x_k) + (1 - bias) Z_{k+j}), summed
    adaptively until every site's relative increment drops below ``rel_tol``.
    The unknown universal constant in front is excluded; only ratios of
    envelope values are meaningful.
    """
    if cfg.bias <= 0.0:
        raise ValueError("the envelope series needs a positive bias")
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim != 1 or sites.size == 0:
        raise ValueError("need a non-empty 1-d collection of sites")
    if int(sites.min()) - 1 < env.kmin:
        raise ValueError("sites need one materialised neighbour to the left")
    lam = cfg.bias

    def ensure(hi: int) -> Environment:
        return extend_window(env, (env.kmin, max(env.kmax, hi)))

    env = ensure(int(sites.max()) + 32)
    slots = sites - env.kmin
    marks = env.marks
    u_right = np.asarray(cfg.potential.evaluate(marks[slots], marks[slots + 1]), float)
    u_left = np.asarray(cfg.potential.evaluate(marks[slots], marks[slots - 1]), float)
    zr = env.gaps[slots]
    zl = env.gaps[slots - 1]
    nn_mass = np.exp(-(1.0 - lam) * zr + u_right) + np.exp(-(1.0 + lam) * zl + u_left)

    total = np.zeros(sites.size)
    j = 0
    while True:
        hi_needed = int(sites.max()) + j + 2
        if hi_needed > env.kmax:
            env = ensure(env.kmax + max(env.kmax - env.kmin, 64))
            slots = sites - env.kmin
        x = env.positions[slots + j] - env.positions[slots]
        z = env.gaps[slots + j]
        term = (j + 2.0) ** 2 * np.exp(-2.0 * lam * x + (1.0 - lam) * z)
        total += term
        if j > 0 and float((term / total).max()) < rel_tol:
            break
        if j >= max_terms:
            raise RuntimeError(
                f"envelope series did not stabilise within {max_terms} terms"
            )
        j += 1
    return nn_mass * total


def density_envelope(
    env: Environment,
    cfg: WalkConfig,
    site: int = 0,
    rel_tol: float = 1e-8,
    max_terms: int = 100_000,
) -> float:
    """Structural density majorant at one shift; see
    :func:`density_envelope_profile`."""
    return float(
        density_envelope_profile(env, cfg, [int(site)], rel_tol, max_terms)[0]
    )


# ---------------------------------------------------------------------------
# visit-density diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityDiagnostics:
    """Per-shift visit-frequency ratios against the uniform shift frequency.

    ``ratios[k-1]`` is the replica-mean occupation frequency of site k over
    [0, n], divided by 1/m (the uniform frequency over shifts 1..m with
    m = floor(n v_hat / 2)); each is bounded below by ``gamma_hat`` =
    epsilon * v_hat / 2.  ``envelope`` holds the structural majorant at each
    shift for stability checks of the (unknown) proportionality constant.
    """

    shifts: np.ndarray
    ratios: np.ndarray
    envelope: np.ndarray
    gamma_hat: float
    v_hat: float
    m: int
    n: int
    replicas: int
    epsilon: float
    below_m_fraction: float

    @property
    def violations(self) -> int:
        return int(np.sum(self.ratios < self.gamma_hat))


def density_ratio_profile(
    env: Environment,
    cfg: WalkConfig,
    n: int,
    seed: int,
    replicas: int = 64,
) -> DensityDiagnostics:
    """Visit-frequency profile over shifts 1..m(n) in one fixed environment.

    Runs ``replicas`` independent walks of ``n`` steps, estimates the drift
    v_hat from the endpoints, sets m = floor(n v_hat / 2), and forms
    ratio_k = m * (mean occupation of site k over [0, n]) / n.  Requires the
    horizon to be past the ballistic threshold: the fraction of replicas
    ending below m must stay under the exact-hit bound epsilon.  Raises if a
    ratio falls below gamma_hat = epsilon * v_hat / 2.
    """
    if cfg.rho == math.inf:
        raise ValueError("density diagnostics need a finite range")
    n = int(n)
    if n <= 0:
        raise ValueError("n must be positive")
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    runs = []
    endpoints = np.zeros(replicas)
    for r in range(replicas):
        stats = simulate_discrete(env, cfg, n, seed, replica=r)
        endpoints[r] = stats.site
        runs.append((stats.window[0], stats.visits))
    v_hat = float(endpoints.mean()) / n
    m = int(n * v_hat / 2.0)
    if m < 1:
        raise RuntimeError(
            f"drift estimate {v_hat:.4g} places no shifts in [1, n v/2]; increase n"
        )
    epsilon = exact_hit_bound(cfg, env.spec)
    below = float(np.mean(endpoints < m))
    if below >= epsilon:
        raise RuntimeError(
            f"horizon too short: {below:.3f} of replicas ended below m={m} "
            f"(allowed < {epsilon:.3f}); increase n"
        )
    occ = np.zeros(m)
    for lo, visits in runs:
        # a slow replica's window may end below m; the missing sites are unvisited
        seg = visits[1 - lo : m + 1 - lo]
        occ[: seg.size] += seg
    ratios = m * (occ / replicas) / n
    gamma_hat = epsilon * v_hat / 2.0
    shifts = np.arange(1, m + 1)
    envelope = density_envelope_profile(env, cfg, shifts)
    if np.any(ratios < gamma_hat):
        worst = float(ratios.min())
        raise RuntimeError(
            f"{int(np.sum(ratios < gamma_hat))} shifts fall below the drift "
            f"bound: min ratio {worst:.4g} < gamma_hat {gamma_hat:.4g}"
        )
    return DensityDiagnostics(
        shifts=shifts,
        ratios=ratios,
        envelope=envelope,
        gamma_hat=gamma_hat,
        v_hat=v_hat,
        m=m,
        n=n,
        replicas=int(replicas),
        epsilon=epsilon,
        below_m_fraction=below,
    )


# ---------------------------------------------------------------------------
# velocity representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VelocityRepresentations:
    """Speeds read off one trajectory through walker-centred averages.

    ``index_drift`` is the time average of the one-step mean index
    displacement at the walker (the integral representation of the discrete
    speed); ``index_clock`` divides it by the mean holding time 1/r to give
    the continuous-time speed, and the ``position_*`` fields are the same in
    spatial units.  ``gap_mean_conversion`` converts the index speed to a
    position speed through the stationary mean gap.
    """

    steps: int
    index_drift: float
    space_drift: float
    inv_rate_average: float
    index_clock: float
    position_clock: float
    index_slope: float
    position_slope: float
    gap_mean_conversion: float
    stats: TrajectoryStats


def velocity_representations(
    env: Environment,
    cfg: WalkConfig,
    n: int,
    seed: int,
    replica: int = 0,
) -> VelocityRepresentations:
    """Run ``n`` steps and report every velocity representation at once."""
    stats = simulate_discrete(env, cfg, int(n), seed, replica=replica)
    steps = stats.steps
    inv_rate = stats.sum_inv_rate / steps
    index_drift = stats.sum_index_drift / steps
    space_drift = stats.sum_space_drift / steps
    start_pos = stats.environment.position(stats.start)
    return VelocityRepresentations(
        steps=steps,
        index_drift=index_drift,
        space_drift=space_drift,
        inv_rate_average=inv_rate,
        index_clock=index_drift / inv_rate,
        position_clock=space_drift / inv_rate,
        index_slope=(stats.site - stats.start) / steps,
        position_slope=(stats.position - start_pos) / steps,
        gap_mean_conversion=mean_gap(env.spec) * index_drift,
        stats=stats,
    )
