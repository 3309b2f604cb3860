import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from subpop import death
from subpop.bernstein import Custom, Gamma, Killed, LevyMeasure, Stable, TemperedStable
from subpop.death import DeathSpec
from subpop.errors import CancellationWarning
from subpop.montecarlo import Seed, sample_subordinator

FAMILIES = [Stable(0.5), Gamma(1.0), TemperedStable(0.5, 1.0)]

clocks = st.one_of(
    st.floats(0.1, 0.9).map(Stable),
    st.floats(0.2, 5.0).map(Gamma),
    st.tuples(st.floats(0.1, 0.9), st.floats(0.2, 5.0)).map(lambda p: TemperedStable(*p)),
)


def test_single_individual():
    f = Stable(0.5)
    assert death.death_pmf(DeathSpec(1.0, 1), f, 1.3, 1) == pytest.approx(math.exp(-1.3), rel=1e-15)


def test_initial_condition():
    spec = DeathSpec(1.0, 4)
    assert [death.death_pmf(spec, Stable(0.5), 0.0, k) for k in range(5)] == [0, 0, 0, 0, 1]


def test_pmf_against_composition():
    # n0 = 5, Gamma(1), t = 0.5, k = 2: average the binomial pmf over sampled H
    spec = DeathSpec(1.0, 5)
    h = sample_subordinator(Gamma(1.0), 0.5, Seed(1), size=1_000_000)
    vals = stats.binom.pmf(2, 5, np.exp(-h))
    exact = death.death_pmf(spec, Gamma(1.0), 0.5, 2)
    assert abs(vals.mean() - exact) < 3 * vals.std() / math.sqrt(len(vals))


def test_extinction_single():
    for f in FAMILIES:
        assert death.death_extinction(DeathSpec(2.0, 1), f, 0.8) == pytest.approx(
            -math.expm1(-0.8 * f(2.0)), rel=1e-14
        )


def test_extinction_at_zero():
    assert death.death_extinction(DeathSpec(1.0, 3), Stable(0.5), 0.0) == 0.0


def test_extinction_expansion():
    exact = 1 - 3 * math.exp(-1) + 3 * math.exp(-math.sqrt(2)) - math.exp(-math.sqrt(3))
    assert death.death_extinction(DeathSpec(1.0, 3), Stable(0.5), 1.0) == pytest.approx(exact, rel=1e-14)


def test_extinction_against_monte_carlo():
    h = sample_subordinator(Stable(0.5), 1.0, Seed(2), size=1_000_000)
    vals = (-np.expm1(-h)) ** 3
    exact = death.death_extinction(DeathSpec(1.0, 3), Stable(0.5), 1.0)
    assert abs(vals.mean() - exact) < 3 * vals.std() / math.sqrt(len(vals))


def test_factorial_moments():
    f = Stable(0.5)
    assert death.death_factorial_moment(DeathSpec(1.0, 6), f, 1.0, 1) == pytest.approx(6 * math.exp(-1.0))
    assert death.death_factorial_moment(DeathSpec(1.0, 6), f, 0.0, 2) == 30
    assert death.death_factorial_moment(DeathSpec(1.0, 4), f, 1.0, 2) == pytest.approx(12 * math.exp(-math.sqrt(2)), rel=1e-15)


def test_factorial_moment_against_pmf():
    spec, f, t = DeathSpec(1.0, 4), Stable(0.5), 1.0
    fm = math.fsum(k * (k - 1) * death.death_pmf(spec, f, t, k) for k in range(5))
    assert death.death_factorial_moment(spec, f, t, 2) == pytest.approx(fm, rel=1e-12)


def test_variance():
    f = Gamma(1.0)
    assert death.death_variance(DeathSpec(1.0, 5), f, 0.0) == 0.0
    e = math.exp(-f(1.0))
    assert death.death_variance(DeathSpec(1.0, 1), f, 1.0) == pytest.approx(e * (1 - e), rel=1e-14)


def test_variance_against_monte_carlo():
    spec, f = DeathSpec(1.0, 5), Gamma(1.0)
    rng = np.random.default_rng(5)
    h = sample_subordinator(f, 1.0, Seed(5), size=400_000)
    m = rng.binomial(5, np.exp(-h))
    var = death.death_variance(spec, f, 1.0)
    m4 = np.mean((m - m.mean()) ** 4)
    assert abs(m.var(ddof=1) - var) < 3 * math.sqrt((m4 - var**2) / len(m))


def test_mean_against_monte_carlo():
    spec, f = DeathSpec(1.0, 5), Stable(0.5)
    rng = np.random.default_rng(6)
    h = sample_subordinator(f, 1.0, Seed(6), size=200_000)
    m = rng.binomial(5, np.exp(-h))
    assert abs(m.mean() - death.death_mean(spec, f, 1.0)) < 3 * m.std() / math.sqrt(len(m))


@pytest.mark.parametrize("f", FAMILIES)
@pytest.mark.parametrize("r", [1, 3, 5])
def test_transition_rates_sum_to_holding_rate(f, r):
    spec = DeathSpec(1.0, 5)
    total = math.fsum(death.death_transition_rate(spec, f, r, k) for k in range(r))
    assert total == pytest.approx(death.death_holding_rate(spec, f, r), abs=1e-6)


def test_transition_rate_examples():
    assert death.death_transition_rate(DeathSpec(1.0, 2), Stable(0.5), 1, 0) == pytest.approx(1.0, rel=1e-9)
    val = death.death_transition_rate(DeathSpec(1.0, 2), Gamma(1.0), 2, 0)
    assert val == pytest.approx(2 * math.log(2) - math.log(3), rel=1e-9)


@given(clocks, st.floats(0.01, 5.0), st.integers(0, 1))
def test_recursion_n0_2_k0(f, t, _):
    assert abs(death.death_recursion_check(DeathSpec(1.0, 2), f, t, 0)) < 1e-10


def test_recursion_at_zero_time():
    assert death.death_recursion_check(DeathSpec(1.0, 4), Stable(0.5), 0.0, 2) == 0.0


def test_recursion_corrected_form():
    assert abs(death.death_recursion_check(DeathSpec(1.0, 6), Stable(0.5), 1.0, 3)) < 1e-9


def test_recursion_reduced_form_only_at_k0():
    spec = DeathSpec(1.0, 5)
    assert abs(death.death_recursion_check(spec, Stable(0.5), 1.0, 0, form="reduced")) < 1e-12
    assert abs(death.death_recursion_check(spec, Stable(0.5), 1.0, 3, form="reduced")) > 1e-3


@given(clocks, st.floats(0.01, 10.0), st.integers(1, 20), st.sampled_from(["linear", "sublinear"]))
def test_normalization(f, t, n0, variant):
    spec = DeathSpec(1.0, n0, variant)
    total = math.fsum(death.death_pmf(spec, f, t, k) for k in range(n0 + 1))
    assert total == pytest.approx(1.0, abs=1e-10)


@given(clocks, st.floats(0.01, 10.0), st.integers(1, 20), st.sampled_from(["linear", "sublinear"]))
def test_pmf_in_unit_interval(f, t, n0, variant):
    spec = DeathSpec(1.0, n0, variant)
    for k in range(n0 + 1):
        assert -1e-13 <= death.death_pmf(spec, f, t, k) <= 1 + 1e-13


@given(clocks, st.floats(0.05, 10.0), st.integers(2, 20))
def test_extinction_decreasing_in_n0(f, t, n0):
    a = death.death_extinction(DeathSpec(1.0, n0 - 1), f, t)
    b = death.death_extinction(DeathSpec(1.0, n0), f, t)
    assert b < a


@given(clocks, st.floats(0.05, 10.0), st.integers(2, 20))
def test_extinction_upper_bound(f, t, n0):
    assert death.death_extinction(DeathSpec(1.0, n0), f, t) < -math.expm1(-t * f(1.0))


@given(clocks, st.floats(0.01, 10.0), st.integers(1, 30))
def test_variants_share_extinction(f, t, n0):
    a = death.death_extinction(DeathSpec(1.0, n0, "linear"), f, t)
    b = death.death_extinction(DeathSpec(1.0, n0, "sublinear"), f, t)
    assert abs(a - b) <= 1e-12


@given(clocks, st.floats(0.01, 10.0), st.integers(1, 30))
def test_survival_complements_extinction(f, t, n0):
    spec = DeathSpec(1.0, n0)
    assert death.death_survival(spec, f, t) + death.death_extinction(spec, f, t) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("f", FAMILIES)
def test_extinction_decay_rate(f):
    t = 100.0
    s = death.death_survival(DeathSpec(1.0, 1), f, t)
    assert math.log(s) / t == pytest.approx(-f(1.0), rel=0.01)


@pytest.mark.parametrize("f", FAMILIES)
@pytest.mark.parametrize("n0", [2, 3, 10])
def test_extinction_decay_with_offset(f, n0):
    # for larger n0 the survival is n0 e^{-t f(mu)} to leading order
    t = 100.0
    s = death.death_survival(DeathSpec(1.0, n0), f, t)
    assert math.log(s) + t * f(1.0) == pytest.approx(math.log(n0), abs=0.01)


def test_sublinear_pmf():
    spec = DeathSpec(1.0, 4, "sublinear")
    f, t = Stable(0.5), 1.0
    h = sample_subordinator(f, t, Seed(4), size=500_000)
    x = np.exp(-h)
    for k in (1, 3):
        vals = x * (1 - x) ** (4 - k)
        exact = death.death_pmf(spec, f, t, k)
        assert abs(vals.mean() - exact) < 3 * vals.std() / math.sqrt(len(vals))


def test_master_equation_residuals():
    spec = DeathSpec(1.0, 4)
    for t in (0.5, 1.0, 2.0):
        for k in range(5):
            assert death.death_master_equation_residual(spec, Stable(0.5), t, k) < 1e-6


def test_master_equation_with_killing():
    spec = DeathSpec(1.0, 3)
    assert death.death_master_equation_residual(spec, Killed(Stable(0.5), 0.5), 1.0, 1) < 1e-6


def test_large_n0_named_family_stays_accurate():
    # the contour route keeps the sum accurate, so the table sums to 1 without a warning
    spec = DeathSpec(1.0, 120)
    total = math.fsum(death.death_pmf(spec, Stable(0.5), 1.0, k) for k in range(121))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_large_n0_custom_family_warns():
    f = Custom(LevyMeasure.from_expression("0.5 * s^(-1.5) / gamma(0.5)", 0.5, None, 0.5))
    with pytest.warns(CancellationWarning):
        death.death_pmf(DeathSpec(1.0, 80), f, 1.0, 3)
