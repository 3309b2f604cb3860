import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from subpop.bernstein import (
    Custom,
    Gamma,
    Killed,
    LevyMeasure,
    Stable,
    TemperedStable,
    compile_density,
    eval_f,
    eval_f_derivative,
    eval_f_extended,
    from_config,
    laplace_binomial_sum,
    levy_integral,
)
from subpop.errors import DivergentExtension
from subpop.numerics import binomial

STABLE_HALF_DENSITY = "0.5 * s^(-1.5) / gamma(0.5)"

named = st.one_of(
    st.floats(0.1, 0.9).map(Stable),
    st.tuples(st.floats(0.1, 0.9), st.floats(0.2, 5.0)).map(lambda p: TemperedStable(*p)),
    st.floats(0.2, 5.0).map(Gamma),
)


def custom_stable_half():
    return Custom(LevyMeasure.from_expression(STABLE_HALF_DENSITY, 0.5, None, 0.5))


def test_eval_examples():
    assert eval_f(Stable(0.5), 4.0) == 2.0
    assert eval_f(Gamma(1.0), 0.0) == 0.0
    assert eval_f(Killed(Stable(0.5), 1.0), 4.0) == 3.0


def test_extended_examples():
    assert eval_f_extended(TemperedStable(0.5, 2.0), 1.0) == pytest.approx(1.0 - math.sqrt(2.0), rel=1e-14)
    assert eval_f_extended(Gamma(2.0), 1.0) == pytest.approx(math.log(0.5), rel=1e-14)
    with pytest.raises(DivergentExtension):
        eval_f_extended(Stable(0.5), 1.0)


def test_extended_against_quadrature():
    # f(-x) = int (1 - e^{sx}) nu(ds) with the tempered stable density
    alpha, theta, x = 0.5, 2.0, 1.0
    c = alpha / math.gamma(1 - alpha)
    dens = lambda s: c * s ** (-1 - alpha) * math.exp(-theta * s)
    val = integrate.quad(lambda s: -math.expm1(x * s) * dens(s), 0, 1)[0]
    val += integrate.quad(lambda s: -math.expm1(x * s) * dens(s), 1, 60)[0]
    assert eval_f_extended(TemperedStable(alpha, theta), x) == pytest.approx(val, rel=1e-8)


def test_extended_boundary():
    with pytest.raises(DivergentExtension):
        eval_f_extended(TemperedStable(0.5, 2.0), 2.5)
    with pytest.raises(DivergentExtension):
        eval_f_extended(Gamma(2.0), 2.0)


def test_derivative_examples():
    assert eval_f_derivative(Stable(0.5), 1, 4.0) == pytest.approx(0.25, rel=1e-14)
    assert eval_f_derivative(Gamma(1.0), 2, 1.0) == pytest.approx(-0.25, rel=1e-14)
    assert eval_f_derivative(custom_stable_half(), 1, 4.0) == pytest.approx(0.25, abs=1e-9)


def test_custom_matches_closed_form():
    f = custom_stable_half()
    for x in (0.1, 1.0, 4.0, 30.0):
        assert f(x) == pytest.approx(math.sqrt(x), rel=1e-9)


def test_compile_density_power_precedence():
    dens = compile_density("0.5 * s^(-1.5) / gamma(0.5)")
    assert dens(np.array([4.0]))[0] == pytest.approx(0.5 * 4.0**-1.5 / math.gamma(0.5), rel=1e-15)
    assert compile_density("2 * s**2")(np.array([3.0]))[0] == 18.0


def test_compile_density_rejects_names():
    with pytest.raises(ValueError):
        compile_density("__import__('os')")
    with pytest.raises(ValueError):
        compile_density("x + 1")


def test_levy_integral_examples():
    assert levy_integral(Stable(0.5), lambda s: -math.expm1(-4.0 * s), breakpoints=(0.25,)) == pytest.approx(2.0, rel=1e-10)
    assert levy_integral(Stable(0.5), lambda s: 0.0) == 0.0
    val = levy_integral(Gamma(1.0), lambda s: (-math.expm1(-s)) ** 2)
    assert val == pytest.approx(2 * math.log(2) - math.log(3), rel=1e-10)


@given(named, st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_bernstein_monotone_concave(f, x, y):
    lo, hi = sorted((x, y))
    assert f(hi) >= f(lo) - 1e-14
    mid = 0.5 * (lo + hi)
    assert f(mid) >= 0.5 * (f(lo) + f(hi)) - 1e-12


@given(named, st.floats(0.05, 20.0))
def test_derivative_signs(f, x):
    # completely monotone derivative: (-1)^{n+1} f^{(n)} >= 0
    for n in (1, 2, 3):
        assert (-1) ** (n + 1) * f.derivative(n, x) >= 0


@given(named, st.floats(0.05, 20.0))
def test_derivative_matches_finite_difference(f, x):
    h = 1e-5 * x
    fd = (f(x + h) - f(x - h)) / (2 * h)
    assert f.derivative(1, x) == pytest.approx(fd, rel=1e-6)


@given(named, st.floats(0.0, 3.0), st.floats(0.1, 20.0))
def test_killed_adds_rate(f, a, x):
    assert Killed(f, a)(x) == pytest.approx(a + f(x), rel=1e-15)


@given(named, st.floats(0.05, 20.0))
def test_levy_integral_reproduces_f(f, x):
    val = levy_integral(f, lambda s: -math.expm1(-x * s), breakpoints=(1.0 / x,))
    assert val == pytest.approx(f(x), rel=1e-8)


@given(named)
def test_config_round_trip(f):
    assert from_config(f.to_config()) == f
    k = Killed(f, 0.7)
    assert from_config(k.to_config()) == k


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        from_config({"kind": "stable", "alpha": 0.5, "beta": 1})
    with pytest.raises(ValueError):
        from_config({"kind": "levy"})


def test_parameter_validation():
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            Stable(bad)
    with pytest.raises(ValueError):
        Gamma(0.0)
    with pytest.raises(ValueError):
        Killed(Stable(0.5), -1.0)


@pytest.mark.parametrize("f", [Stable(0.5), TemperedStable(0.3, 1.0), Gamma(1.0)])
@pytest.mark.parametrize("n,shift", [(5, 0), (40, 1), (200, 3)])
def test_laplace_binomial_sum_is_an_expectation(f, n, shift):
    # E[e^{-shift H}(1 - e^{-H})^n] in (0, 1), decreasing in n
    t = 1.0
    a = laplace_binomial_sum(n, f, t, 1.0, shift).value
    b = laplace_binomial_sum(n + 1, f, t, 1.0, shift).value
    assert 0 < b < a < 1


def test_laplace_binomial_sum_against_direct():
    f, t, n = Stable(0.5), 1.0, 12
    direct = math.fsum(binomial(n, j) * (-1) ** j * math.exp(-t * math.sqrt(j + 2.0)) for j in range(n + 1))
    assert laplace_binomial_sum(n, f, t, 1.0, 2).value == pytest.approx(direct, rel=1e-9)
