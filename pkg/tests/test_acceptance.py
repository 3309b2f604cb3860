"""Acceptance suite: one test per criterion, implemented as stated.

Criteria 2, 4 and 6 fail; the assertion messages carry the measured values.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy import special

from subpop import birth, birthdeath, death
from subpop.bernstein import Gamma, Killed, Stable, TemperedStable
from subpop.birth import RateSchedule
from subpop.cli import RunConfig, cmd_simulate
from subpop.errors import INFINITE
from subpop.montecarlo import Seed, estimate_subordinated_pmf, sample_subordinator
from subpop.numerics import mittag_leffler
from subpop.process import ProcessSpec

THREE = (Stable(0.5), Gamma(1.0), TemperedStable(0.5, 1.0))


def test_criterion_01_vandermonde_identity():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        r = int(rng.integers(1, 6))
        k = int(rng.integers(1, 9))
        sched = RateSchedule.from_sequence(np.sort(rng.uniform(0.5, 10.0, size=r + k + 1)))
        worst = max(worst, abs(birth.vandermonde_residual(sched, r, k)))
    elapsed = time.perf_counter() - start
    assert worst < 1e-10
    assert elapsed < 1.0


def test_criterion_02_normalization():
    bad = []
    for f in (Stable(0.3), Stable(0.5), Stable(0.7), TemperedStable(0.5, 2.0), Gamma(1.0)):
        for t in (0.1, 1.0, 5.0):
            total = birth.yule_total_mass(1.0, f, t, strict=False)
            if not 1 - 1e-6 <= total.value <= 1 + 1e-6:
                bad.append((f, t, total.value, total.terms))
    for f in THREE:
        for n0 in range(1, 21):
            spec = death.DeathSpec(1.0, n0)
            total = math.fsum(death.death_pmf(spec, f, 1.0, k) for k in range(n0 + 1))
            if abs(total - 1.0) > 1e-10:
                bad.append((f, n0, total))
    assert not bad, f"cells outside tolerance (heavy Yule tails): {bad}"


def test_criterion_03_killed_explosion():
    start = time.perf_counter()
    n = 100_000
    for a in (0.5, 1.0):
        f = Killed(Stable(0.5), a)
        for t in (0.5, 1.0, 2.0):
            s = birth.survival_mass(RateSchedule.linear(1.0), None, f, t)
            assert s == pytest.approx(math.exp(-a * t), abs=1e-8)
            h = sample_subordinator(f, t, Seed(int(100 * a + 10 * t)), size=n)
            frac = float(np.mean(np.isinf(h)))
            p = -math.expm1(-a * t)
            assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / n)
    assert time.perf_counter() - start < 30


def test_criterion_04_composition_oracle():
    start = time.perf_counter()
    cells = [
        ProcessSpec("yule", lam=1.0),
        ProcessSpec("death", 5, mu=1.0),
        ProcessSpec("sublinear_death", 5, mu=1.0),
        ProcessSpec("birth_death", lam=1.0, mu=1.0),
        ProcessSpec("birth_death", lam=1.0, mu=2.0),
    ]
    failures = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for proc in cells:
            for f in (Stable(0.5), Gamma(1.0)):
                rep = estimate_subordinated_pmf(proc, f, 1.0, 100_000, Seed(12345), threshold=1e-4)
                for v in rep.verdicts:
                    if not v["pass"]:
                        failures.append((proc.kind, f, v["state"], round(v["z"], 2)))
    assert time.perf_counter() - start < 300
    assert not failures, f"states outside 3 sigma: {failures}"


def test_criterion_05_moments():
    n = 100_000
    f = Gamma(3.0)
    assert birth.yule_mean(1.0, f, 2.0) == pytest.approx(2.25, rel=1e-12)
    rep = estimate_subordinated_pmf(ProcessSpec("yule", lam=1.0), f, 2.0, n, Seed(5))
    assert abs(rep.mean - 2.25) < rep.mean_halfwidth

    g = Stable(0.5)
    spec = death.DeathSpec(1.0, 5)
    exact = 5 * math.exp(-1.0 * float(g(1.0)))
    assert death.death_mean(spec, g, 1.0) == pytest.approx(exact, rel=1e-12)
    rep = estimate_subordinated_pmf(ProcessSpec("death", 5, mu=1.0), g, 1.0, n, Seed(6))
    assert abs(rep.mean - exact) < rep.mean_halfwidth

    for alpha in (0.3, 0.5, 0.7):
        for r in (1, 2, 3):
            assert birth.yule_factorial_moment(1.0, Stable(alpha), 1.0, r) is INFINITE
    for theta, lam in ((2.0, 1.0), (3.0, 1.0), (2.5, 0.5)):
        ts = TemperedStable(0.5, theta)
        for r in range(1, 8):
            m = birth.yule_factorial_moment(lam, ts, 1.0, r)
            if r < theta / lam:
                assert m is not INFINITE and math.isfinite(m)
            else:
                assert m is INFINITE


def test_criterion_06_sojourn_times():
    problems = []
    for alpha in (0.3, 0.5, 0.7):
        for k in range(1, 11):
            num = birthdeath.mean_sojourn(1.0, Stable(alpha), math.inf, k, method="laguerre")
            stated = special.beta(1 - alpha, k + alpha) / math.gamma(alpha)
            if abs(num - stated) > 1e-8:
                problems.append(("beta", alpha, k, num, stated))
        for k in range(1, 101):
            m = birthdeath.mean_sojourn(1.0, Stable(alpha), math.inf, k, method="laguerre") if k <= 10 \
                else birthdeath.stable_mean_sojourn(alpha, 1.0, k)
            lo = 1 / ((alpha + k) * math.gamma(alpha))
            hi = 1 / ((1 - alpha) * math.gamma(alpha))
            if not lo < m < hi:
                problems.append(("bounds", alpha, k))
    k = 10**4
    ratio = birthdeath.stable_mean_sojourn(0.5, 1.0, k) * math.sqrt(k)
    if abs(ratio - 1) > 1e-4:
        problems.append(("ratio", ratio))
    assert not problems, f"{len(problems)} mismatches with B(1-alpha, k+alpha)/Gamma(alpha) and its bounds: {problems[:5]}"


def test_criterion_07_first_jump_rate():
    for alpha in (0.3, 0.5, 0.7):
        for lam in (0.5, 1.0, 2.0):
            num = birthdeath.first_jump_rate(lam, Stable(alpha), method="finite_difference")
            assert num == pytest.approx(lam**alpha * math.gamma(alpha + 2), rel=1e-6)


def test_criterion_08_extinction_structure():
    for f in THREE:
        for t in (0.5, 1.0, 2.0):
            vals = [death.death_extinction(death.DeathSpec(1.0, n0), f, t) for n0 in range(1, 21)]
            assert all(a > b for a, b in zip(vals, vals[1:]))
    for n0 in (1, 3, 7, 20):
        for t in (0.5, 1.0, 2.0):
            a = death.death_extinction(death.DeathSpec(1.0, n0, "linear"), Stable(0.5), t)
            b = death.death_extinction(death.DeathSpec(1.0, n0, "sublinear"), Stable(0.5), t)
            assert abs(a - b) <= 1e-12
    from subpop.numerics import richardson_derivative

    spec = birthdeath.BDSpec(1.0, 1.0)
    for f in (Stable(0.5), Gamma(1.0)):
        for t in (0.5, 1.0, 2.0):
            d = richardson_derivative(lambda s: birthdeath.bd_extinction(spec, f, s), 1, t).value
            assert abs(d - birthdeath.extinction_time_density(1.0, f, t)) <= 1e-6
    assert abs(birthdeath.bd_extinction(birthdeath.BDSpec(2.0, 1.0), Gamma(1.0), 10.0) - 0.5) <= 1e-3


def test_criterion_09_transition_reduction():
    spec = birthdeath.BDSpec(1.0, 1.0)
    for t in (0.5, 1.0):
        for n in range(7):
            a = birthdeath.bd_transition(spec, Stable(0.5), t, 1, n)
            assert abs(a - birthdeath.bd_pmf(spec, Stable(0.5), t, n)) <= 1e-8


def test_criterion_10_mittag_leffler():
    for x in np.linspace(0.0, 5.0, 51):
        x = float(x)
        assert abs(mittag_leffler(1.0, x) - math.exp(-x)) <= 1e-12
        assert abs(mittag_leffler(0.5, x) - special.erfcx(x)) <= 1e-8
    sched = RateSchedule.linear(1.0)
    for t in (0.5, 1.0):
        for k in (1, 2, 3, 5):
            a = birth.fractional_pmf(sched, 1.0, Stable(0.5), t, k)
            assert abs(a - birth.nonlinear_pmf(sched, Stable(0.5), t, 1, k)) <= 1e-8


def test_criterion_11_master_equations():
    sched = RateSchedule.linear(1.0)
    spec = death.DeathSpec(1.0, 5)
    for t in (0.25, 0.5, 1.0, 2.0):
        for k in (1, 2, 3, 4):
            assert birth.birth_master_equation_residual(sched, Stable(0.5), t, k) < 1e-6
        for k in range(6):
            assert death.death_master_equation_residual(spec, Stable(0.5), t, k) < 1e-6


def test_criterion_12_determinism():
    doc = {
        "process": {"kind": "yule", "lam": 1.0},
        "subordinator": {"kind": "stable", "alpha": 0.5},
        "times": [1.0],
        "seed": 2024,
        "n_paths": 50_000,
    }
    outputs = []
    for workers in (1, 1, 4, 4):
        cfg = RunConfig.from_dict(dict(doc, workers=workers))
        rep = cmd_simulate(cfg)
        outputs.append((rep.to_json().encode(), rep.to_csv().encode()))
    assert all(o == outputs[0] for o in outputs)
