"""Invariant suite behind ``subpop validate``.

Each check measures a residual and compares it with a threshold. Passing
``tol_abs`` caps every residual threshold at that value, so a tighter
tolerance can only make the suite stricter.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import birth, birthdeath, death
from .bernstein import Gamma, Killed, Stable, TemperedStable
from .birth import RateSchedule
from .numerics import DEFAULT_QUAD, QuadratureSpec, mittag_leffler, richardson_derivative

__all__ = ["Check", "CHECKS", "run_suite"]


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    seconds: float = 0.0
    # residual checks are capped by tol_abs; sign checks (value < 0) are not
    residual: bool = True

    def row(self) -> dict:
        return {
            "check": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "pass": self.passed,
        }


def _vandermonde(quad):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(50):
        r = int(rng.integers(1, 6))
        k = int(rng.integers(1, 9))
        vals = np.sort(rng.uniform(0.5, 10.0, size=r + k + 1))
        sched = RateSchedule.from_sequence(vals)
        worst = max(worst, abs(birth.vandermonde_residual(sched, r, k)))
    return worst


def _yule_normalization(quad):
    worst = 0.0
    # light-tailed clocks only: stable and Gamma(a <= 1) tails decay too slowly
    for f in (TemperedStable(0.5, 2.0), Gamma(3.0)):
        for t in (0.1, 1.0, 5.0):
            total = birth.yule_total_mass(1.0, f, t, strict=False).value
            worst = max(worst, abs(1.0 - total))
    return worst


def _death_normalization(quad):
    worst = 0.0
    for f in (Stable(0.5), Gamma(1.0)):
        for n0 in (1, 5, 20):
            spec = death.DeathSpec(1.0, n0)
            total = math.fsum(death.death_pmf(spec, f, 1.0, k) for k in range(n0 + 1))
            worst = max(worst, abs(1.0 - total))
    return worst


def _death_monotone(quad):
    """Largest P(n0+1) - P(n0) for the extinction probability; negative means decreasing."""
    worst = -math.inf
    for f in (Stable(0.5), Gamma(1.0), TemperedStable(0.5, 1.0)):
        for t in (0.5, 1.0, 2.0):
            prev = None
            for n0 in range(1, 21):
                cur = death.death_extinction(death.DeathSpec(1.0, n0), f, t)
                if prev is not None:
                    worst = max(worst, cur - prev)
                prev = cur
    return worst


def _linear_sublinear(quad):
    worst = 0.0
    for n0 in (1, 4, 10):
        for t in (0.5, 2.0):
            a = death.death_extinction(death.DeathSpec(1.0, n0, "linear"), Stable(0.5), t)
            b = death.death_extinction(death.DeathSpec(1.0, n0, "sublinear"), Stable(0.5), t)
            worst = max(worst, abs(a - b))
    return worst


def _bd_normalization(quad):
    spec = birthdeath.BDSpec(1.0, 1.0)
    total = math.fsum(birthdeath.bd_pmf(spec, Gamma(1.0), 1.0, n, quad=quad) for n in range(100))
    return abs(1.0 - total)


def _transition_reduction(quad):
    spec = birthdeath.BDSpec(1.0, 1.0)
    worst = 0.0
    for t in (0.5, 1.0):
        for n in range(7):
            a = birthdeath.bd_transition(spec, Stable(0.5), t, 1, n, quad=quad)
            b = birthdeath.bd_pmf(spec, Stable(0.5), t, n, quad=quad)
            worst = max(worst, abs(a - b))
    return worst


def _extinction_density(quad):
    spec = birthdeath.BDSpec(1.0, 1.0)
    worst = 0.0
    for f in (Stable(0.5), Gamma(1.0)):
        for t in (0.5, 1.0, 2.0):
            d = richardson_derivative(lambda s: birthdeath.bd_extinction(spec, f, s, quad=quad), 1, t)
            worst = max(worst, abs(d.value - birthdeath.extinction_time_density(1.0, f, t, quad)))
    return worst


def _extinction_limit(quad):
    spec = birthdeath.BDSpec(2.0, 1.0)
    return abs(birthdeath.bd_extinction(spec, Gamma(1.0), 10.0, quad=quad) - 0.5)


def _first_jump(quad):
    worst = 0.0
    for alpha in (0.3, 0.5, 0.7):
        for lam in (0.5, 1.0, 2.0):
            exact = birthdeath.stable_first_jump_rate(alpha, lam)
            num = birthdeath.first_jump_rate(lam, Stable(alpha), method="finite_difference")
            worst = max(worst, abs(num / exact - 1.0))
    return worst


def _mean_sojourn(quad):
    worst = 0.0
    for alpha in (0.3, 0.5, 0.7):
        for k in range(1, 11):
            num = birthdeath.mean_sojourn(1.0, Stable(alpha), math.inf, k, method="laguerre")
            exact = birthdeath.stable_mean_sojourn(alpha, 1.0, k)
            worst = max(worst, abs(num - exact))
    return worst


def _sojourn_bounds(quad):
    """Largest violation of the strict mean sojourn bounds; negative means they hold."""
    worst = -math.inf
    for alpha in (0.3, 0.5, 0.7):
        for k in range(1, 101):
            m = birthdeath.stable_mean_sojourn(alpha, 1.0, k)
            lo, hi = birthdeath.stable_sojourn_bounds(alpha, 1.0, k)
            worst = max(worst, (lo - m) / m, (m - hi) / m)
    return worst


def _mittag_leffler(quad):
    worst = 0.0
    for x in np.linspace(0.0, 5.0, 11):
        x = float(x)
        worst = max(worst, abs(mittag_leffler(0.5, x, quad) - special.erfcx(x)))
        worst = max(worst, abs(mittag_leffler(1.0, x, quad) - math.exp(-x)))
    return worst


def _fractional(quad):
    sched = RateSchedule.linear(1.0)
    worst = 0.0
    for k in (1, 2, 4):
        a = birth.fractional_pmf(sched, 1.0, Stable(0.5), 1.0, k, quad)
        b = birth.nonlinear_pmf(sched, Stable(0.5), 1.0, 1, k)
        worst = max(worst, abs(a - b))
    return worst


def _master_birth(quad):
    sched = RateSchedule.linear(1.0)
    return max(
        birth.birth_master_equation_residual(sched, Stable(0.5), t, k, 1, quad)
        for t in (0.5, 1.0)
        for k in (1, 2, 3)
    )


def _master_death(quad):
    spec = death.DeathSpec(1.0, 4)
    return max(
        death.death_master_equation_residual(spec, Stable(0.5), t, k, quad)
        for t in (0.5, 1.0)
        for k in (0, 2, 4)
    )


def _killed_survival(quad):
    worst = 0.0
    for a in (0.5, 1.0):
        f = Killed(Stable(0.5), a)
        for t in (0.5, 1.0, 2.0):
            s = birth.survival_mass(RateSchedule.linear(1.0), None, f, t)
            worst = max(worst, abs(s - math.exp(-a * t)))
    return worst


def _tempered_boundary(quad):
    """1 when the moment r < theta/lam is finite and r = theta/lam is INFINITE, else 0."""
    f = TemperedStable(0.5, 2.0)
    finite = birth.yule_factorial_moment(1.0, f, 1.0, 1)
    boundary = birth.yule_factorial_moment(1.0, f, 1.0, 2)
    stable = birth.yule_factorial_moment(1.0, Stable(0.5), 1.0, 1)
    ok = isinstance(finite, float) and boundary is birth.INFINITE and stable is birth.INFINITE
    return 0.0 if ok else 1.0


#: name, function, default threshold, residual (capped by tol_abs) or sign check
CHECKS: list[tuple[str, Callable, float, bool]] = [
    ("vandermonde_residual", _vandermonde, 1e-10, True),
    ("yule_normalization", _yule_normalization, 1e-6, True),
    ("death_normalization", _death_normalization, 1e-10, True),
    ("death_extinction_decreasing", _death_monotone, 0.0, False),
    ("linear_sublinear_extinction", _linear_sublinear, 1e-12, True),
    ("birth_death_normalization", _bd_normalization, 1e-6, True),
    ("transition_reduction", _transition_reduction, 1e-8, True),
    ("extinction_time_density", _extinction_density, 1e-6, True),
    ("extinction_limit", _extinction_limit, 1e-3, True),
    ("first_jump_rate", _first_jump, 1e-6, True),
    ("mean_sojourn_closed_form", _mean_sojourn, 1e-8, True),
    ("mean_sojourn_bounds", _sojourn_bounds, 0.0, False),
    ("mittag_leffler", _mittag_leffler, 1e-8, True),
    ("fractional_order_one", _fractional, 1e-8, True),
    ("birth_master_equation", _master_birth, 1e-6, True),
    ("death_master_equation", _master_death, 1e-6, True),
    ("killed_survival_mass", _killed_survival, 1e-8, True),
    ("moment_finiteness", _tempered_boundary, 0.5, False),
]


def run_suite(
    quad: QuadratureSpec = DEFAULT_QUAD,
    tol_abs: Optional[float] = None,
    only: Optional[list] = None,
) -> list[Check]:
    out = []
    for name, fn, thr, residual in CHECKS:
        if only is not None and name not in only:
            continue
        if residual and tol_abs is not None:
            thr = min(thr, tol_abs)
        start = time.perf_counter()
        value = float(fn(quad))
        ok = value < thr if not residual or thr == 0 else value <= thr
        out.append(Check(name, value, thr, bool(ok), time.perf_counter() - start, residual))
    return out
