"""Subordinated linear and sublinear death processes M(H^f(t)).

Linear death: each of the k survivors dies at rate mu, so given H = s the
population is Binomial(n0, e^{-mu s}). Sublinear death: the death
intensity is mu times the number of deaths so far plus one,
mu (n0 - k + 1), which gives Pr{k} = e^{-mu s}(1 - e^{-mu s})^{n0-k} for
k >= 1. Both share the extinction law (1 - e^{-mu s})^{n0}.

Every alternating sum here is E[e^{-a H}(1 - e^{-mu H})^n] for some a and n,
which :func:`laplace_binomial_sum` evaluates without cancellation for the
named families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bernstein import BernsteinFunction, laplace_binomial_sum, levy_integral
from .numerics import DEFAULT_QUAD, QuadratureSpec, binomial, richardson_derivative

__all__ = [
    "DeathSpec",
    "death_pmf",
    "death_extinction",
    "death_survival",
    "death_pgf",
    "death_factorial_moment",
    "death_mean",
    "death_variance",
    "death_transition_rate",
    "death_holding_rate",
    "death_recursion_check",
    "death_master_equation_residual",
]

VARIANTS = ("linear", "sublinear")


@dataclass(frozen=True)
class DeathSpec:
    mu: float
    n0: int
    variant: str = "linear"

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def with_n0(self, n0):
        return DeathSpec(self.mu, n0, self.variant)


def _check(t, k=None, n0=None):
    if not t >= 0:
        raise ValueError("t must be >= 0")
    if k is not None and not 0 <= k <= n0:
        raise ValueError(f"state {k} outside 0..{n0}")


def death_pmf(spec: DeathSpec, f: BernsteinFunction, t: float, k: int) -> float:
    """Pr{M^f(t) = k | M^f(0) = n0} for either variant.

    linear:    C(n0,k) sum_j C(n0-k,j)(-1)^j e^{-t f(mu(k+j))}
    sublinear: sum_j C(n0-k,j)(-1)^j e^{-t f(mu(j+1))} for k >= 1, and the
               extinction sum for k = 0.
    """
    _check(t, k, spec.n0)
    n0, mu = spec.n0, spec.mu
    if t == 0:
        return 1.0 if k == n0 else 0.0
    if spec.variant == "linear":
        return binomial(n0, k) * laplace_binomial_sum(n0 - k, f, t, mu, k).value
    if k == 0:
        return death_extinction(spec, f, t)
    return laplace_binomial_sum(n0 - k, f, t, mu, 1).value


def death_extinction(spec: DeathSpec, f: BernsteinFunction, t: float) -> float:
    """Pr{M^f(t) = 0} = sum_{j=0}^{n0} C(n0,j)(-1)^j e^{-t f(mu j)}; same for both variants.

    For unkilled f the j = 0 term is 1, which is the familiar 1 + sum_{j>=1}.
    """
    _check(t)
    if t == 0:
        return 0.0
    return laplace_binomial_sum(spec.n0, f, t, spec.mu, 0).value


def death_survival(spec: DeathSpec, f: BernsteinFunction, t: float) -> float:
    """Pr{0 < M^f(t) < inf}, computed without subtracting from 1.

    Uses 1 - (1 - x)^n = x sum_{i<n} (1 - x)^i with x = e^{-mu H}: a sum of
    n0 positive terms E[e^{-mu H}(1 - e^{-mu H})^i], accurate even when the
    extinction probability is within rounding of 1.
    """
    _check(t)
    if t == 0:
        return 1.0
    return math.fsum(
        laplace_binomial_sum(i, f, t, spec.mu, 1).value for i in range(spec.n0)
    )


def death_pgf(spec: DeathSpec, f: BernsteinFunction, t: float, u: float) -> float:
    """E u^{M^f(t)} = sum_j C(n0,j)(u-1)^j e^{-t f(mu j)} (linear variant)."""
    _check(t)
    if spec.variant != "linear":
        raise ValueError("closed-form pgf is for the linear variant")
    return math.fsum(
        binomial(spec.n0, j) * (u - 1) ** j * math.exp(-t * float(f(spec.mu * j)))
        for j in range(spec.n0 + 1)
    )


def death_factorial_moment(spec: DeathSpec, f: BernsteinFunction, t: float, r: int) -> float:
    """E[M(M-1)...(M-r+1)] = r! C(n0, r) e^{-t f(mu r)} for 1 <= r <= n0 (linear)."""
    _check(t)
    if spec.variant != "linear":
        raise ValueError("factorial moments are given for the linear variant")
    if not 1 <= r <= spec.n0:
        raise ValueError("need 1 <= r <= n0")
    falling = math.perm(spec.n0, r)
    return falling * math.exp(-t * float(f(spec.mu * r)))


def death_mean(spec, f, t):
    return death_factorial_moment(spec, f, t, 1)


def death_variance(spec: DeathSpec, f: BernsteinFunction, t: float) -> float:
    """n0 e1 - n0 e2 + n0^2 e2 - n0^2 e1^2 with e1 = e^{-t f(mu)}, e2 = e^{-t f(2 mu)}."""
    _check(t)
    if spec.variant != "linear":
        raise ValueError("variance formula is for the linear variant")
    if t == 0:
        return 0.0
    n0 = spec.n0
    e1 = math.exp(-t * float(f(spec.mu)))
    e2 = math.exp(-t * float(f(2 * spec.mu)))
    return n0 * e1 - n0 * e2 + n0 * n0 * e2 - n0 * n0 * e1 * e1


def death_transition_rate(
    spec: DeathSpec,
    f: BernsteinFunction,
    r: int,
    k: int,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Jump intensity r -> k < r: int C(r,k)(1 - e^{-mu s})^{r-k} e^{-mu k s} nu(ds) (linear)."""
    if spec.variant != "linear":
        raise ValueError("transition rates are given for the linear variant")
    if not 0 <= k < r <= spec.n0:
        raise ValueError("need 0 <= k < r <= n0")
    mu = spec.mu
    c = binomial(r, k)

    def g(s):
        return c * (-math.expm1(-mu * s)) ** (r - k) * math.exp(-mu * k * s)

    return levy_integral(f, g, quad, breakpoints=(0.1 / mu, 1.0 / mu, 10.0 / mu))


def death_holding_rate(spec: DeathSpec, f: BernsteinFunction, r: int) -> float:
    """f(mu r): rate of leaving state r (linear variant)."""
    return float(f(spec.mu * r))


def death_recursion_check(
    spec: DeathSpec, f: BernsteinFunction, t: float, k: int, form: str = "corrected"
) -> float:
    """Residual of a recursion in n0 for the linear death pmf.

    ``form="corrected"`` checks, for every 0 <= k < n0,
        P(k | n0) = P(k | n0-1) + (1/n0) [k P(k | n0) - (k+1) P(k+1 | n0)],
    which follows from b(k; n, p) - b(k; n-1, p) for binomial weights.
    ``form="reduced"`` checks P(k | n0) = P(k | n0-1) - (1/n0) P(1 | n0),
    the k = 0 case of the same identity; it does not hold for k >= 1.
    """
    if spec.variant != "linear":
        raise ValueError("recursion is for the linear variant")
    n0 = spec.n0
    if n0 < 2 or not 0 <= k < n0:
        raise ValueError("need n0 >= 2 and 0 <= k < n0")
    prev = spec.with_n0(n0 - 1)

    def p(s, j):
        return death_pmf(s, f, t, j)

    if form == "corrected":
        rhs = p(prev, k) + (k * p(spec, k) - (k + 1) * p(spec, k + 1)) / n0
    elif form == "reduced":
        rhs = p(prev, k) - p(spec, 1) / n0
    else:
        raise ValueError("form must be 'corrected' or 'reduced'")
    return p(spec, k) - rhs


def death_master_equation_residual(
    spec: DeathSpec, f: BernsteinFunction, t: float, k: int, quad: QuadratureSpec = DEFAULT_QUAD
) -> float:
    """|d/dt p_k + f(mu k) p_k - sum_{j>k} p_j rate(j -> k)| for the linear variant."""
    if t <= 0:
        raise ValueError("t must be > 0")
    _check(t, k, spec.n0)
    lhs = richardson_derivative(lambda tt: death_pmf(spec, f, tt, k), 1, t).value
    # f(0) is the killing rate: killed paths leave every state, including 0
    rhs = -float(f(spec.mu * k)) * death_pmf(spec, f, t, k)
    for j in range(k + 1, spec.n0 + 1):
        rhs += death_pmf(spec, f, t, j) * death_transition_rate(spec, f, j, k, quad)
    return abs(lhs - rhs)
