import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mottrw.environments import EnvironmentSpec, MarkLaw, build_environment
from mottrw.kernel import (
    PotentialSpec,
    WalkConfig,
    effective_range,
    jump_distribution,
    rate_mass,
)
from mottrw.network import crossing_distribution, escape_probability
from mottrw.walk import (
    _Run,
    hitting_overshoot,
    simulate_continuous,
    simulate_discrete,
    velocity_estimate,
    visit_counts,
)

LATTICE = EnvironmentSpec("constant_lattice", {"d": 1.0})
RENEWAL = EnvironmentSpec("renewal_iid", {"d": 1.0, "rate": 2.0}, MarkLaw("uniform", 1.0))
MOTT = PotentialSpec(kind="mott", beta=0.3)

PI1 = math.exp(-0.5) + math.exp(-1.5)
PI_INF = math.exp(-0.5) / (1 - math.exp(-0.5)) + math.exp(-1.5) / (1 - math.exp(-1.5))


def lattice_env(n=128):
    return build_environment(LATTICE, 0, (-n, n))


# ---------------------------------------------------------------------------
# the compiled law equals the reference law
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("rho,lazy", [(1, True), (1, False), (4, True), (math.inf, True)])
def test_kernel_law_matches_reference(rho, lazy):
    env = build_environment(RENEWAL, 42, (-128, 128))
    cfg = WalkConfig(bias=0.5, rho=rho, potential=MOTT, lazy=lazy)
    run = _Run(env, cfg, seed=0)
    start_slot = run.site
    run.advance(1)
    row = start_slot - run.anchor
    assert run.cached[row]
    law = jump_distribution(run.env, cfg, 0)
    width = 2 * run.move_span + 1
    cum = run.cum[row, :width]
    probs = np.diff(np.concatenate([[0.0], cum]))
    offsets = np.arange(-run.move_span, run.move_span + 1)
    keep = offsets != 0
    np.testing.assert_allclose(probs[keep], law.probabilities, rtol=1e-12, atol=1e-15)
    if run.lazy:
        assert run.moveprob[row] == pytest.approx(1.0 - law.self_mass, abs=1e-12)
    else:
        assert cum[-1] == pytest.approx(1.0, abs=1e-12)
    assert run.total[row] == pytest.approx(rate_mass(run.env, cfg, 0, math.inf), rel=1e-12)
    assert run.drift[row] == pytest.approx(law.mean_offset() if not run.lazy else law.mean_offset(), rel=1e-10)
    assert run.xdrift[row] == pytest.approx(law.mean_displacement(run.env), rel=1e-10)


# ---------------------------------------------------------------------------
# closed-form speeds on the unit lattice
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("lam", [0.1, 0.3, 0.5])
def test_nn_speed_is_tanh(lam):
    cfg = WalkConfig(bias=lam, rho=1, lazy=False)
    est = velocity_estimate(LATTICE, cfg, steps=200_000, seed=17, replicas=8)
    assert abs(est.value - math.tanh(lam)) < max(3 * est.stderr, 1e-3)


def test_lazy_speed_carries_selfloop_factor():
    cfg = WalkConfig(bias=0.5, rho=1)
    est = velocity_estimate(LATTICE, cfg, steps=200_000, seed=23, replicas=8)
    want = math.tanh(0.5) * PI1 / PI_INF
    assert abs(est.value - want) < max(3 * est.stderr, 1e-3)


def test_self_loop_frequency_matches_lazy_mass():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5, rho=1)
    stats = simulate_discrete(env, cfg, 300_000, seed=5)
    lazy_mass = 1.0 - PI1 / PI_INF
    frac = stats.stays.sum() / stats.steps
    se = math.sqrt(lazy_mass * (1 - lazy_mass) / stats.steps)
    assert abs(frac - lazy_mass) < 4 * se


def test_per_site_self_loop_mass_heterogeneous():
    # pool replicas so individual sites of a disordered environment get
    # enough draws to resolve their own self-loop mass
    env = build_environment(RENEWAL, 77, (-64, 64))
    cfg = WalkConfig(bias=0.5, rho=2, potential=MOTT)
    draws = np.zeros(5)
    stays = np.zeros(5)
    for r in range(800):
        stats = visit_counts(env, cfg, stop_level=5, seed=88, replica=r)
        for k in range(5):
            idx = k - stats.window[0]
            d = stats.visits[idx] + (1 if k == stats.start else 0)
            draws[k] += d
            stays[k] += stats.stays[idx]
    for k in range(5):
        assert draws[k] > 500
        law = jump_distribution(env, cfg, k)
        p = law.self_mass
        se_k = math.sqrt(p * (1 - p) / draws[k])
        assert abs(stays[k] / draws[k] - p) < 4 * se_k


# ---------------------------------------------------------------------------
# pathwise invariants
# ---------------------------------------------------------------------------


def test_steps_bounded_by_range():
    env = build_environment(RENEWAL, 9, (-64, 64))
    cfg = WalkConfig(bias=0.5, rho=3)
    run = _Run(env, cfg, seed=3)
    span = effective_range(cfg, RENEWAL)
    prev = run.current_site
    for _ in range(2_000):
        run.advance(run.steps + 1)
        here = run.current_site
        assert abs(here - prev) <= span
        prev = here


def test_single_step_resume_equals_batch():
    env = build_environment(RENEWAL, 11, (-64, 64))
    cfg = WalkConfig(bias=0.5, rho=2)
    run = _Run(env, cfg, seed=44)
    for _ in range(500):
        run.advance(run.steps + 1)
    batch = simulate_discrete(env, cfg, 500, seed=44)
    assert run.current_site == batch.site
    assert run.steps == batch.steps


def test_monotone_coupling_in_bias():
    # common random numbers: raising the bias never moves the nn walk left
    env = lattice_env()
    for seed in range(10):
        sites = [
            simulate_discrete(env, WalkConfig(bias=lam, rho=1, lazy=False), 5_000, seed=seed).site
            for lam in (0.1, 0.3, 0.5)
        ]
        assert sites[0] <= sites[1] <= sites[2]


def test_determinism_and_thread_invariance():
    cfg = WalkConfig(bias=0.5, rho=3)
    a = velocity_estimate(RENEWAL, cfg, steps=20_000, seed=7, replicas=6, threads=1)
    b = velocity_estimate(RENEWAL, cfg, steps=20_000, seed=7, replicas=6, threads=4)
    np.testing.assert_array_equal(a.per_replica, b.per_replica)
    assert a.value == b.value


def test_replica_streams_differ():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5, rho=1)
    a = simulate_discrete(env, cfg, 10_000, seed=1, replica=0)
    b = simulate_discrete(env, cfg, 10_000, seed=1, replica=1)
    assert a.site != b.site or not np.array_equal(a.visits, b.visits)


# ---------------------------------------------------------------------------
# continuous time
# ---------------------------------------------------------------------------


def test_embedded_chain_is_step_for_step_discrete():
    env = build_environment(RENEWAL, 3, (-64, 64))
    cfg = WalkConfig(bias=0.5, rho=2)
    cont = simulate_continuous(env, cfg, 30_000, seed=12, checkpoints=(10_000,))
    disc = simulate_discrete(env, cfg, 30_000, seed=12, checkpoints=(10_000,))
    assert cont.site == disc.site
    np.testing.assert_array_equal(cont.visits, disc.visits)
    np.testing.assert_array_equal(cont.checkpoint_sites, disc.checkpoint_sites)
    assert cont.clock > 0.0 and disc.clock == 0.0


def test_clock_mean_matches_inverse_rate():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5, rho=1)
    stats = simulate_continuous(env, cfg, 200_000, seed=9)
    # on the unit lattice every site has rate PI_INF, so clock/steps ~ 1/PI_INF
    mean_hold = stats.clock / stats.steps
    se = (1.0 / PI_INF) / math.sqrt(stats.steps)  # Exp holding: sd = mean
    assert abs(mean_hold - 1.0 / PI_INF) < 4 * se
    # holding rates use the range-cutoff total, accurate to tail_tol
    assert stats.sum_inv_rate / stats.steps == pytest.approx(1.0 / PI_INF, rel=1e-7)


# ---------------------------------------------------------------------------
# hitting, overshoot, and visit counts
# ---------------------------------------------------------------------------


def test_hitting_overshoot_law_matches_linear_solve():
    env = build_environment(RENEWAL, 31, (-256, 256))
    cfg = WalkConfig(bias=0.5, rho=4)
    level = 12
    # first site at or above `level` == first site strictly above `level - 1`
    sites, probs = crossing_distribution(env, cfg, 0, level - 1)
    assert sites[0] == level
    n = 3_000
    counts = np.zeros(sites.size)
    for r in range(n):
        h = hitting_overshoot(env, cfg, level, seed=100, replica=r)
        assert h.site >= level and h.overshoot == h.site - level
        counts[h.site - level] += 1
    freq = counts / n
    for p_hat, p in zip(freq, probs):
        if p < 1e-4:
            continue
        se = math.sqrt(p * (1 - p) / n)
        assert abs(p_hat - p) < 4 * se


def test_hitting_reports_exact_hits_on_unit_lattice_rho1():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5, rho=1)
    h = hitting_overshoot(env, cfg, 9, seed=2)
    assert h.exact_hit and h.overshoot == 0 and h.site == 9


def test_expected_visits_inverse_escape():
    env = lattice_env(256)
    cfg = WalkConfig(bias=0.5, rho=1)
    esc = escape_probability(env, cfg, 0)
    n = 2_000
    visits = np.empty(n)
    for r in range(n):
        stats = visit_counts(env, cfg, stop_level=60, seed=55, replica=r)
        visits[r] = stats.occupation(0)
    mean = visits.mean()
    se = visits.std(ddof=1) / math.sqrt(n)
    assert abs(mean - 1.0 / esc.value) < 3 * se


def test_start_must_be_below_level():
    env = lattice_env()
    with pytest.raises(ValueError):
        hitting_overshoot(env, WalkConfig(bias=0.5, rho=1), 0, seed=1, start=0)


# ---------------------------------------------------------------------------
# velocity estimates
# ---------------------------------------------------------------------------


def test_velocity_units_position_scales_with_mean_gap():
    cfg = WalkConfig(bias=0.5, rho=3)
    vi = velocity_estimate(RENEWAL, cfg, steps=50_000, seed=19, replicas=8, units="index")
    vp = velocity_estimate(RENEWAL, cfg, steps=50_000, seed=19, replicas=8, units="position")
    # mean gap is 1.5; spatial and index speeds agree through it within noise
    assert vp.value / vi.value == pytest.approx(1.5, abs=0.05)


def test_velocity_estimate_validation():
    cfg = WalkConfig(bias=0.5, rho=1)
    with pytest.raises(ValueError):
        velocity_estimate(LATTICE, cfg, steps=100, seed=0, replicas=1)
    with pytest.raises(ValueError):
        velocity_estimate(LATTICE, cfg, steps=100, seed=0, burn_in=100)
    with pytest.raises(ValueError):
        velocity_estimate(LATTICE, cfg, steps=100, seed=0, units="furlongs")


def test_velocity_estimate_reproducible():
    cfg = WalkConfig(bias=0.3, rho=1, lazy=False)
    a = velocity_estimate(LATTICE, cfg, steps=5_000, seed=3, replicas=4)
    b = velocity_estimate(LATTICE, cfg, steps=5_000, seed=3, replicas=4)
    np.testing.assert_array_equal(a.per_replica, b.per_replica)
