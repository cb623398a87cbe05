import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mottrw.environments import EnvironmentSpec, MarkLaw, build_environment
from mottrw.kernel import (
    PotentialSpec,
    WalkConfig,
    conductance,
    effective_range,
    holding_rate,
    jump_distribution,
    jump_rate,
    potential_bounds,
    range_cutoff,
    rate_mass,
    site_weight,
    weight_ratio_bound,
)

LATTICE = EnvironmentSpec("constant_lattice", {"d": 1.0})
RENEWAL = EnvironmentSpec("renewal_iid", {"d": 1.0, "rate": 2.0}, MarkLaw("uniform", 1.0))
MOTT = PotentialSpec(kind="mott", beta=0.4)


def lattice_env(n=200):
    return build_environment(LATTICE, 0, (-n, n))


# ---------------------------------------------------------------------------
# frozen unit-lattice anchors (bias 0.5, u = 0)
# ---------------------------------------------------------------------------


def test_unit_lattice_rates_and_conductances():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5, rho=1)
    assert jump_rate(env, cfg, 0, 1) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert jump_rate(env, cfg, 0, -1) == pytest.approx(math.exp(-1.5), rel=1e-15)
    assert jump_rate(env, cfg, 0, 3) == pytest.approx(math.exp(-1.5), rel=1e-15)
    assert conductance(env, cfg, 0, 1) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert conductance(env, cfg, -1, 0) == pytest.approx(math.exp(-1.5), rel=1e-15)
    # translation covariance: c(k, k+1) = e^{2 lambda k} c(0, 1)
    for k in (-3, 2, 5):
        assert conductance(env, cfg, k, k + 1) == pytest.approx(
            math.exp(2 * 0.5 * k) * math.exp(-0.5), rel=1e-12
        )


def test_unit_lattice_site_weights():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5)
    pi1 = math.exp(-0.5) + math.exp(-1.5)
    pi_inf = math.exp(-0.5) / (1 - math.exp(-0.5)) + math.exp(-1.5) / (1 - math.exp(-1.5))
    assert site_weight(env, cfg, 0, 1) == pytest.approx(pi1, rel=1e-14)
    assert site_weight(env, cfg, 0) == pytest.approx(pi_inf, abs=cfg.tail_tol * pi1)
    assert holding_rate(env, cfg, 0) == pytest.approx(pi_inf, abs=cfg.tail_tol * pi1)
    # the weight carries the gauge factor e^{2 lambda x}
    assert site_weight(env, cfg, 4, 1) == pytest.approx(math.exp(4) * pi1, rel=1e-12)
    assert rate_mass(env, cfg, 4, 1) == pytest.approx(pi1, rel=1e-13)


def test_unit_lattice_lazy_jump_law():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5, rho=1)
    law = jump_distribution(env, cfg, 0)
    pi_inf = math.exp(-0.5) / (1 - math.exp(-0.5)) + math.exp(-1.5) / (1 - math.exp(-1.5))
    np.testing.assert_array_equal(law.offsets, [-1, 1])
    assert law.probabilities[1] == pytest.approx(math.exp(-0.5) / pi_inf, rel=1e-7)
    assert law.probabilities[0] == pytest.approx(math.exp(-1.5) / pi_inf, rel=1e-7)
    pi1 = math.exp(-0.5) + math.exp(-1.5)
    assert law.self_mass == pytest.approx(1 - pi1 / pi_inf, rel=1e-6)
    assert law.probabilities.sum() + law.self_mass == pytest.approx(1.0, abs=1e-12)


def test_unit_lattice_nonlazy_nn_law_is_birth_death():
    env = lattice_env()
    for lam in (0.1, 0.3, 0.5):
        cfg = WalkConfig(bias=lam, rho=1, lazy=False)
        law = jump_distribution(env, cfg, 0)
        p_right = math.exp(2 * lam) / (1 + math.exp(2 * lam))
        assert law.self_mass == 0.0
        assert law.probabilities[1] == pytest.approx(p_right, rel=1e-14)
        assert law.probabilities.sum() == pytest.approx(1.0, abs=1e-14)
        # mean displacement is tanh(lam)
        assert law.mean_displacement(env) == pytest.approx(math.tanh(lam), rel=1e-14)


def test_rho_infinite_law_renormalised():
    env = lattice_env()
    cfg = WalkConfig(bias=0.5, rho=math.inf)
    law = jump_distribution(env, cfg, 0)
    assert law.self_mass == 0.0
    assert law.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert law.offsets.min() == -law.cutoff and law.offsets.max() == law.cutoff


# ---------------------------------------------------------------------------
# structural properties on random environments
# ---------------------------------------------------------------------------


@given(seed=st.integers(0, 10_000), lam=st.sampled_from([0.0, 0.25, 0.5, 0.7]))
@settings(max_examples=20, deadline=None)
def test_conductance_symmetric(seed, lam):
    env = build_environment(RENEWAL, seed, (-40, 40))
    cfg = WalkConfig(bias=lam, potential=MOTT)
    for i, j in ((0, 1), (-3, 2), (5, -5), (1, 4)):
        assert conductance(env, cfg, i, j) == pytest.approx(
            conductance(env, cfg, j, i), rel=1e-12
        )
    assert conductance(env, cfg, 2, 2) == 0.0
    assert jump_rate(env, cfg, 2, 2) == 0.0


@given(seed=st.integers(0, 10_000), rho=st.sampled_from([1, 2, 5, math.inf]))
@settings(max_examples=20, deadline=None)
def test_weight_sandwich(seed, rho):
    env = build_environment(RENEWAL, seed, (-120, 120))
    cfg = WalkConfig(bias=0.5, rho=rho, potential=MOTT)
    k_pi = weight_ratio_bound(cfg, RENEWAL)
    for i in (-10, 0, 7):
        w1 = rate_mass(env, cfg, i, 1)
        wr = rate_mass(env, cfg, i, rho)
        winf = rate_mass(env, cfg, i, math.inf)
        assert w1 <= wr * (1 + 1e-12)
        assert wr <= winf * (1 + 1e-12)
        assert winf <= k_pi * w1


def test_cutoff_tail_below_tolerance():
    # widening the materialised range past s* changes the weight by < tol * pi^1
    for seed in range(10):
        env = build_environment(RENEWAL, seed, (-160, 160))
        cfg = WalkConfig(bias=0.5, potential=MOTT, tail_tol=1e-8)
        s_star = range_cutoff(cfg, RENEWAL)
        from mottrw.kernel import _rate_row

        full = _rate_row(env, cfg, 0, s_star + 10)
        pad = 10
        tail = full[:pad].sum() + full[-pad:].sum()
        pi1 = rate_mass(env, cfg, 0, 1)
        assert tail < cfg.tail_tol * pi1


def test_cutoff_monotone_in_tolerance_and_bias():
    assert range_cutoff(WalkConfig(bias=0.5, tail_tol=1e-8), LATTICE) < range_cutoff(
        WalkConfig(bias=0.5, tail_tol=1e-10), LATTICE
    )
    assert range_cutoff(WalkConfig(bias=0.25), LATTICE) < range_cutoff(
        WalkConfig(bias=0.7), LATTICE
    )


def test_effective_range_caps_at_rho():
    assert effective_range(WalkConfig(bias=0.5, rho=3), LATTICE) == 3
    s = range_cutoff(WalkConfig(bias=0.5), LATTICE)
    assert effective_range(WalkConfig(bias=0.5, rho=10_000), LATTICE) == s
    assert effective_range(WalkConfig(bias=0.5), LATTICE) == s


@given(seed=st.integers(0, 5_000), rho=st.sampled_from([1, 3, math.inf]))
@settings(max_examples=15, deadline=None)
def test_jump_law_normalised(seed, rho):
    env = build_environment(RENEWAL, seed, (-150, 150))
    cfg = WalkConfig(bias=0.3, rho=rho, potential=MOTT)
    law = jump_distribution(env, cfg, 2)
    total = law.probabilities.sum() + law.self_mass
    assert total == pytest.approx(1.0, abs=1e-12)
    assert (law.probabilities > 0).all()
    assert np.abs(law.offsets).max() <= effective_range(cfg, RENEWAL)
    if rho == math.inf:
        assert law.self_mass == 0.0


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@given(
    a=st.floats(-1, 1, allow_nan=False),
    b=st.floats(-1, 1, allow_nan=False),
    beta=st.floats(0.01, 2.0, allow_nan=False),
)
@settings(max_examples=50, deadline=None)
def test_mott_potential_symmetric_and_bounded(a, b, beta):
    pot = PotentialSpec(kind="mott", beta=beta)
    u = pot.evaluate(a, b)
    assert u == pot.evaluate(b, a)
    lo, hi = pot.bounds(-1.0, 1.0)
    assert lo - 1e-12 <= u <= hi + 1e-12
    assert hi == 0.0 and lo == -4.0 * beta


def test_zero_potential():
    pot = PotentialSpec()
    assert pot.evaluate(0.3, -0.7) == 0.0
    assert pot.bounds(-5, 5) == (0.0, 0.0)


def test_table_potential_lookup_and_range_check():
    pot = PotentialSpec(
        kind="table", edges=(-1.0, 0.0, 1.0), values=((0.0, -0.5), (-0.5, -1.0))
    )
    assert pot.evaluate(-0.5, -0.5) == 0.0
    assert pot.evaluate(-0.5, 0.5) == -0.5
    assert pot.evaluate(0.5, 0.5) == -1.0
    assert pot.evaluate(1.0, 1.0) == -1.0  # right edge belongs to last bin
    with pytest.raises(ValueError):
        pot.evaluate(1.5, 0.0)
    with pytest.raises(ValueError):
        pot.bounds(-2.0, 1.0)
    assert pot.bounds(-1.0, 1.0) == (-1.0, 0.0)


def test_table_potential_validation():
    with pytest.raises(ValueError):
        PotentialSpec(kind="table", edges=(0.0, 1.0), values=((0.0, 1.0), (2.0, 0.0)))
    with pytest.raises(ValueError):
        PotentialSpec(kind="table", edges=(1.0, 0.0), values=((0.0,),))
    with pytest.raises(ValueError):
        PotentialSpec(kind="mott", beta=-1.0)


def test_potential_bounds_with_marks():
    cfg = WalkConfig(bias=0.5, potential=PotentialSpec(kind="mott", beta=0.25))
    spec = EnvironmentSpec("renewal_iid", {"d": 1.0, "rate": 1.0}, MarkLaw("uniform", 2.0))
    assert potential_bounds(cfg, spec) == (-2.0, 0.0)


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"bias": -0.1},
        {"bias": 1.0},
        {"bias": 0.5, "rho": 0},
        {"bias": 0.5, "rho": 2.5},
        {"bias": 0.5, "tail_tol": 0.0},
        {"bias": 0.5, "tail_tol": 1e-3},
    ],
)
def test_bad_config_rejected(kwargs):
    with pytest.raises(ValueError):
        WalkConfig(**kwargs)


def test_config_json_round_trip():
    for cfg in (
        WalkConfig(bias=0.5, rho=3),
        WalkConfig(bias=0.1, rho=math.inf, potential=MOTT, tail_tol=1e-7),
        WalkConfig(bias=0.3, rho=1, lazy=False),
    ):
        assert WalkConfig.from_json(cfg.to_json()) == cfg


def test_window_too_small_is_an_error():
    env = build_environment(LATTICE, 0, (-3, 3))
    cfg = WalkConfig(bias=0.5)
    with pytest.raises(IndexError):
        jump_distribution(env, cfg, 0)
