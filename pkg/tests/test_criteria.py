import math
import types

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mottrw.criteria import (
    classify_analytic,
    critical_bias,
    nn_criterion,
    operational_subballistic,
    phase_sweep,
)
from mottrw.environments import EnvironmentSpec, gap_exp_moment

LATTICE = EnvironmentSpec("constant_lattice", {"d": 1.0})
RENEWAL = EnvironmentSpec("renewal_iid", {"d": 1.0, "rate": 2.0})
RENEWAL_SLOW = EnvironmentSpec("renewal_iid", {"d": 1.0, "rate": 0.4})
HEAVY = EnvironmentSpec("heavy_tail_sorpresa", {"gamma_tail": 1.5})
VELOCINO = EnvironmentSpec("markov_velocino", {"p": 0.3, "gamma_mc": 2.0})


# ---------------------------------------------------------------------------
# analytic classification
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
def test_lattice_always_ballistic(lam):
    c = classify_analytic(LATTICE, lam)
    assert c.verdict == "ballistic" and c.ballistic
    assert c.boundary is None
    assert c.moment == pytest.approx(math.exp(1.0 - lam))


def test_renewal_threshold_sides():
    # rate 2 keeps the moment finite for every bias in (0, 1)
    assert classify_analytic(RENEWAL, 0.5).verdict == "ballistic"
    assert classify_analytic(RENEWAL, 0.5).boundary is None
    # rate 0.4 flips at bias 0.6
    assert critical_bias(RENEWAL_SLOW) == pytest.approx(0.6)
    assert classify_analytic(RENEWAL_SLOW, 0.5).verdict == "subballistic"
    assert classify_analytic(RENEWAL_SLOW, 0.5).moment == math.inf
    assert classify_analytic(RENEWAL_SLOW, 0.7).verdict == "ballistic"


def test_heavy_tail_boundary_is_ballistic():
    assert critical_bias(HEAVY) == pytest.approx(0.5)
    assert classify_analytic(HEAVY, 0.25).verdict == "subballistic"
    # the moment integral still converges at the threshold itself
    assert classify_analytic(HEAVY, 0.5).verdict == "ballistic"
    assert classify_analytic(HEAVY, 0.7).verdict == "ballistic"


def test_velocino_indeterminate_below_threshold():
    lam_m = 1.0 - math.log(0.7 / 0.3) / 2.0
    assert critical_bias(VELOCINO) == pytest.approx(lam_m)
    above = classify_analytic(VELOCINO, 0.7)
    assert above.verdict == "ballistic" and math.isfinite(above.moment)
    # divergent moment, but correlated gaps: no zero-speed conclusion
    below = classify_analytic(VELOCINO, 0.5)
    assert below.verdict == "indeterminate"
    assert below.moment == math.inf
    assert "correlated" in below.rationale


@given(gt=st.floats(1.05, 1.95), lam=st.floats(0.01, 0.99))
def test_heavy_verdict_tracks_moment(gt, lam):
    spec = EnvironmentSpec("heavy_tail_sorpresa", {"gamma_tail": gt})
    c = classify_analytic(spec, lam)
    expected = "ballistic" if lam >= 2.0 - gt else "subballistic"
    assert c.verdict == expected
    assert math.isfinite(c.moment) == math.isfinite(gap_exp_moment(spec, 1.0 - lam))


@given(rate=st.floats(0.1, 3.0), lam=st.floats(0.01, 0.99))
def test_renewal_verdict_tracks_moment(rate, lam):
    spec = EnvironmentSpec("renewal_iid", {"d": 1.0, "rate": rate})
    c = classify_analytic(spec, lam)
    assert c.verdict == ("ballistic" if rate > 1.0 - lam else "subballistic")


def test_classify_rejects_bad_bias_and_family():
    with pytest.raises(ValueError):
        classify_analytic(LATTICE, 0.0)
    with pytest.raises(ValueError):
        classify_analytic(LATTICE, 1.0)
    stub = types.SimpleNamespace(family="weird", params={})
    with pytest.raises(ValueError, match="unsupported family"):
        critical_bias(stub)


# ---------------------------------------------------------------------------
# sampled nearest-neighbour criterion
# ---------------------------------------------------------------------------


@given(lam=st.floats(0.1, 0.9))
@settings(max_examples=20, deadline=None)
def test_lattice_terms_are_exactly_geometric(lam):
    # constant gaps make every sampled term deterministic: a_i = e^{-2 lam i}
    r = nn_criterion(LATTICE, lam, samples=200, truncation=10, seed=1)
    exact = np.exp(-2.0 * lam * np.arange(1, 11))
    np.testing.assert_allclose(r.term_means, exact, rtol=1e-12)
    np.testing.assert_allclose(r.partial_sums, np.cumsum(exact), rtol=1e-12)
    assert r.tail_ratio == pytest.approx(math.exp(-2.0 * lam))
    assert r.summable and r.verdict == "summable"


def test_renewal_terms_match_moment_factorization():
    # i.i.d. gaps factorise each term into three closed-form moments
    r = nn_criterion(RENEWAL, 0.5, samples=40_000, truncation=12, seed=2)
    ratio = gap_exp_moment(RENEWAL, -1.0)
    oracle = (
        gap_exp_moment(RENEWAL, 0.5)
        * gap_exp_moment(RENEWAL, -1.5)
        * ratio ** np.arange(12)
    )
    np.testing.assert_allclose(r.term_means, oracle, rtol=0.03)
    assert r.tail_ratio == pytest.approx(ratio, rel=0.02)
    assert r.max_to_sum < 0.01
    assert r.summable


def test_heavy_subcritical_detected_divergent():
    # E[exp(0.75 Z)] = inf: the largest sampled first term stays a macroscopic
    # share of the sum, and its running mean keeps growing with sample size
    r = nn_criterion(HEAVY, 0.25, samples=100_000, truncation=4, seed=0)
    assert r.verdict == "divergent" and not r.summable
    assert r.max_to_sum > 0.05
    assert r.first_term_trace[-1] > 2.0 * r.first_term_trace[0]
    assert np.all(np.diff(r.trace_sizes) > 0)


@pytest.mark.parametrize("lam", [0.5, 0.7])
def test_heavy_critical_and_above_summable(lam):
    r = nn_criterion(HEAVY, lam, samples=100_000, truncation=8, seed=3)
    assert r.summable
    assert r.max_to_sum < 0.02
    assert r.tail_ratio < 0.5


def test_velocino_summable_despite_divergent_moment():
    # neighbouring gaps differ by at most gamma_mc, so the first term is
    # pointwise bounded by e^{gamma_mc (1 - lam)} even though E[e^{(1-lam)Z}]
    # diverges: the nearest-neighbour walk stays ballistic
    r = nn_criterion(VELOCINO, 0.5, samples=20_000, truncation=10, seed=4)
    assert classify_analytic(VELOCINO, 0.5).moment == math.inf
    assert r.summable
    assert r.term_means[0] <= math.exp(2.0 * 0.5)
    assert nn_criterion(VELOCINO, 0.7, samples=20_000, truncation=10, seed=4).summable


def test_nn_criterion_rejects_bad_arguments():
    with pytest.raises(ValueError):
        nn_criterion(LATTICE, 1.0)
    with pytest.raises(ValueError):
        nn_criterion(LATTICE, 0.5, samples=50)
    with pytest.raises(ValueError):
        nn_criterion(LATTICE, 0.5, truncation=0)


# ---------------------------------------------------------------------------
# operational zero-speed rule and bias sweep
# ---------------------------------------------------------------------------


def test_operational_rule_requires_decay_and_level():
    assert operational_subballistic([10**5, 10**6, 10**7], [0.08, 0.03, 0.01])
    # decays too slowly
    assert not operational_subballistic([10**5, 10**6, 10**7], [0.25, 0.20, 0.17])
    # decays fast enough but ends too high
    assert not operational_subballistic([10**5, 10**6, 10**7], [0.8, 0.3, 0.1])
    with pytest.raises(ValueError):
        operational_subballistic([10**5], [0.1])


def test_lattice_sweep_matches_tanh():
    res = phase_sweep(
        LATTICE, [0.1, 0.3, 0.5], horizons=(2_000, 20_000), replicas=6, seed=11, rho=1, lazy=False
    )
    assert res.boundary is None and not res.discontinuity
    for pt in res.points:
        assert abs(pt.v_hat[-1] - math.tanh(pt.lam)) < 3.0 * pt.stderr[-1]
        assert pt.analytic.verdict == "ballistic"
        assert not pt.operational_zero


def test_sweep_rows_and_reproducibility():
    kwargs = dict(horizons=(2_000, 20_000), replicas=6, seed=11, rho=1, lazy=False)
    res = phase_sweep(LATTICE, [0.1, 0.3, 0.5], **kwargs)
    rows = list(res.iter_rows())
    assert len(rows) == 6
    assert set(rows[0]) == {
        "family", "params", "lambda", "rho", "horizon", "v_hat", "stderr", "analytic_class",
    }
    assert rows[0]["params"] == '{"d":1.0}'
    assert all(row["analytic_class"] == "ballistic" for row in rows)
    # same call reproduces bit for bit
    res2 = phase_sweep(LATTICE, [0.1, 0.3, 0.5], **kwargs)
    assert all(np.array_equal(a.v_hat, b.v_hat) for a, b in zip(res.points, res2.points))
    # a grid point's values depend on (seed, grid index), not on the other points
    res3 = phase_sweep(LATTICE, [0.1, 0.9], **kwargs)
    assert np.array_equal(res.points[0].v_hat, res3.points[0].v_hat)


def test_heavy_sweep_flags_jump_across_critical_bias():
    res = phase_sweep(HEAVY, [0.35, 0.65], horizons=(3_000, 12_000), replicas=6, seed=5)
    assert res.boundary == pytest.approx(0.5)
    assert res.discontinuity
    below, above = res.points
    assert below.analytic.verdict == "subballistic"
    assert above.analytic.verdict == "ballistic"
    assert above.v_hat[-1] - below.v_hat[-1] > 0.5


def test_sweep_rejects_bad_grids():
    with pytest.raises(ValueError):
        phase_sweep(LATTICE, [])
    with pytest.raises(ValueError):
        phase_sweep(LATTICE, [1.2])
    with pytest.raises(ValueError):
        phase_sweep(LATTICE, [0.5], horizons=(2_000, 1_000))
