"""Subordinated linear birth-death process L^f(t) = L(H^f(t)).

L has birth rate lam and death rate mu per individual. For lam != mu the
one-progenitor law is a double series in exponentials. For lam = mu every
classical transition probability is a polynomial in p = lam s / (1 + lam s),
and the identity

    int_0^inf e^{-x} L^{(1)}_{M-1}(x) e^{-u x} dx = 1 - (u / (1 + u))^M

turns E[p(H)^M] into a single e^{-x}-weighted integral of e^{-t f(lam x)}
against a Laguerre polynomial. That is the default engine for lam = mu; the
rate-derivative representation (exact Faa di Bruno jets, or finite
differences up to order 6) is kept as an independent route.

Killed subordinators are handled throughout: every quantity is the
probability on {H^f(t) < inf}, so killed paths carry no state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .bernstein import BernsteinFunction, Custom, Stable, laplace_binomial_sum, levy_integral
from .errors import TruncationFailure, UnsupportedFamily
from .numerics import (
    DEFAULT_INVERSION,
    DEFAULT_QUAD,
    DEFAULT_SERIES,
    InversionSpec,
    QuadratureSpec,
    SeriesTruncation,
    binomial,
    compose_derivatives,
    exp_weighted_integral,
    integrate_interval,
    parametric_derivative,
    richardson_derivative,
    talbot_inverse,
)

__all__ = [
    "BDSpec",
    "SojournTransform",
    "bd_classical_pmf",
    "bd_pmf",
    "bd_extinction",
    "bd_extinction_limit",
    "extinction_time_density",
    "bd_transition",
    "bd_infinitesimal_rate",
    "first_jump_rate",
    "stable_first_jump_rate",
    "mean_sojourn",
    "classical_mean_sojourn",
    "stable_mean_sojourn",
    "stable_sojourn_bounds",
    "sojourn_atom",
    "sojourn_density",
]

LAMBDA_EQ_METHODS = ("laguerre", "faa_di_bruno", "finite_difference")


@dataclass(frozen=True)
class BDSpec:
    lam: float
    mu: float
    r0: int = 1

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("birth and death rates must be positive")
        if self.r0 < 1:
            raise ValueError("r0 must be >= 1")

    @property
    def critical(self) -> bool:
        return self.lam == self.mu


def _check_time(t):
    if not t >= 0:
        raise ValueError("t must be >= 0")


def _require_critical(spec):
    if not spec.critical:
        raise ValueError("this representation needs lam == mu")


# ---------------------------------------------------------------------------
# classical process


def _abc(lam, mu, s):
    """alpha, beta, gamma of the classical r-progenitor law and Pr{L(s)=n | 1} / beta^{n-1}.

    With e1 = (e^{(lam-mu)s} - 1)/(lam-mu): alpha = mu e1/(1 + lam e1),
    beta = lam e1/(1 + lam e1), gamma = (1 - mu e1)/(1 + lam e1). For
    lam > mu everything is rewritten in u = e^{-(lam-mu)s} to avoid overflow.
    """
    d = lam - mu
    if d > 0:
        u = math.exp(-d * s)
        den = lam - mu * u
        one = -math.expm1(-d * s)
        return mu * one / den, lam * one / den, (lam * u - mu) / den, d * d * u / den**2
    e1 = s if d == 0 else math.expm1(d * s) / d
    den = 1.0 + lam * e1
    # (1 - alpha)(1 - beta) = e^{(lam-mu)s}/den^2
    return mu * e1 / den, lam * e1 / den, (1.0 - mu * e1) / den, math.exp(d * s) / den**2


def bd_classical_pmf(spec: BDSpec, s: float, n: int) -> float:
    """Pr{L(s) = n | L(0) = r0} for the unsubordinated process.

    sum_{j<=min(r,n)} C(r,j) C(r+n-j-1, r-1) alpha^{r-j} beta^{n-j} gamma^j,
    with the r = 1 case written as (1-alpha)(1-beta) beta^{n-1}.
    """
    _check_time(s)
    if n < 0:
        raise ValueError("n must be >= 0")
    r, lam, mu = spec.r0, spec.lam, spec.mu
    if s == 0:
        return 1.0 if n == r else 0.0
    if math.isinf(s):
        if n == 0:
            return 1.0 if lam <= mu else (mu / lam) ** r
        return 0.0
    alpha, beta, gamma, edge = _abc(lam, mu, s)
    if n == 0:
        return alpha**r
    if r == 1:
        return edge * beta ** (n - 1)
    return math.fsum(
        binomial(r, j) * binomial(r + n - j - 1, r - 1)
        * alpha ** (r - j) * beta ** (n - j) * gamma**j
        for j in range(min(r, n) + 1)
    )


def classical_mean_sojourn(lam: float, t: float, k: int) -> float:
    """E V_k(t) = (1/(lam k)) (lam t/(1 + lam t))^k for lam = mu, one progenitor."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_time(t)
    if math.isinf(t):
        return 1.0 / (lam * k)
    return (lam * t / (1.0 + lam * t)) ** k / (lam * k)


# ---------------------------------------------------------------------------
# Laguerre machinery for lam = mu


def _laguerre1(m_max, x):
    """Rows L^{(1)}_0(x) .. L^{(1)}_{m_max}(x).

    Entries that overflow are set to 0: |L^{(1)}_m(x)| <= (m+1) e^{x/2}, so
    overflow only happens where the e^{-x} weight makes the product negligible.
    """
    x = np.asarray(x, dtype=float)
    rows = [np.ones_like(x)]
    if m_max >= 1:
        rows.append(2.0 - x)
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(1, m_max):
            rows.append(((2 * m + 2 - x) * rows[m] - (m + 1) * rows[m - 1]) / (m + 1))
    return [np.where(np.isfinite(r), r, 0.0) for r in rows]


def _p_polynomial(r, n):
    """Integer coefficients c_M of Pr{L(s)=n | L(0)=r} = sum_M c_M p^M, lam = mu.

    With alpha = beta = p and gamma = 1 - 2p the classical law expands as
    sum_j sum_i C(r,j) C(r+n-j-1, r-1) C(j,i) (-2)^i p^{r+n-2j+i}.
    """
    coef = {}
    for j in range(min(r, n) + 1):
        base = math.comb(r, j) * math.comb(r + n - j - 1, r - 1)
        for i in range(j + 1):
            M = r + n - 2 * j + i
            coef[M] = coef.get(M, 0) + base * math.comb(j, i) * (-2) ** i
    return {M: c for M, c in coef.items() if c}


def _w_poly(r, n):
    """(C0, W) with Pr = C0 e^{-t a} - int e^{-x} W(x) e^{-t f(lam x)} dx.

    C0 = sum_M c_M is exact integer arithmetic (it equals the s -> inf limit,
    i.e. 1 for n = 0 and 0 otherwise); W = sum_{M>=1} c_M L^{(1)}_{M-1}.
    """
    coef = _p_polynomial(r, n)
    c0 = sum(coef.values())
    terms = sorted((M - 1, float(c)) for M, c in coef.items() if M >= 1)
    top = max((m for m, _ in terms), default=0)

    def W(x):
        rows = _laguerre1(top, x)
        return sum(c * rows[m] for m, c in terms)

    return c0, W


def _q(n):
    """q_n(x) = (x/n) L^{(1)}_{n-1}(x): Pr{L^f(t)=n} = int e^{-x} q_n(x) e^{-t f(lam x)} dx."""

    def q(x):
        x = np.asarray(x, dtype=float)
        return x / n * _laguerre1(n - 1, x)[n - 1]

    return q


def _fvals(f, y):
    return np.asarray(f(y), dtype=float)


def _complex_weighted(g, quad):
    """int e^{-x} g(x) dx for complex-valued g."""
    re = exp_weighted_integral(lambda x: np.real(g(x)), quad)
    im = exp_weighted_integral(lambda x: np.imag(g(x)), quad)
    return complex(re, im)


# ---------------------------------------------------------------------------
# rate-derivative route


def _require_named(f):
    if isinstance(f.unkilled, Custom):
        raise UnsupportedFamily(
            "exact derivative jets need closed-form derivatives of f; "
            "use method='finite_difference' (order <= 6) or 'laguerre'"
        )


def _outer_exp(t):
    def outer(u, m):
        e = np.exp(-t * u)
        return [(-t) ** i * e for i in range(m + 1)]

    return outer


def _outer_resolvent(t):
    """Derivatives of (1 - e^{-t u})/u (finite t) or 1/u (t = inf)."""

    def outer(u, m):
        inv = [(-1) ** i * math.factorial(i) / u ** (i + 1) for i in range(m + 1)]
        if math.isinf(t):
            return inv
        e = np.exp(-t * u)
        one_minus = [-np.expm1(-t * u)] + [-((-t) ** i) * e for i in range(1, m + 1)]
        return [
            sum(math.comb(i, j) * one_minus[j] * inv[i - j] for j in range(i + 1))
            for i in range(m + 1)
        ]

    return outer


def _phi_jet(f, outer, y, m):
    """[D^i Phi(f(y))]_{i=0..m} for y > 0 (arrays)."""
    y = np.asarray(y, dtype=float)
    u = _fvals(f, y)
    inner = [np.asarray(f.derivative(i, y), dtype=float) for i in range(1, m + 1)]
    return compose_derivatives(outer(u, m), inner, m)


def _integral_jet(f, lam, outer, m, quad):
    """J^{(i)}(lam), i = 0..m, for J(lam) = int e^{-w} Phi(f(lam w)) dw."""
    out = []
    for i in range(m + 1):
        def g(w, i=i):
            w = np.asarray(w, dtype=float)
            return w**i * _phi_jet(f, outer, lam * w, i)[i]

        out.append(exp_weighted_integral(g, quad))
    return out


def _lam_times_jet(jet, lam):
    """Jet of lam * J from the jet of J: (lam J)^{(i)} = lam J^{(i)} + i J^{(i-1)}."""
    return [lam * jet[0]] + [lam * jet[i] + i * jet[i - 1] for i in range(1, len(jet))]


def _derivative_route(f, lam, n, outer, method, quad):
    """n-th rate derivative of lam * int e^{-w} Phi(f(lam w)) dw."""
    if method == "faa_di_bruno":
        _require_named(f)

        def h(x, k):
            return _lam_times_jet(_integral_jet(f, x, outer, k, quad), x)

        return parametric_derivative(h, n, lam, exact_mode=True).value

    def h(x):
        return x * exp_weighted_integral(
            lambda w: outer(_fvals(f, x * np.asarray(w, dtype=float)), 0)[0], quad
        )

    return parametric_derivative(h, n, lam).value


# ---------------------------------------------------------------------------
# state probabilities


def _series_pmf(spec, f, t, k, series):
    lam, mu = spec.lam, spec.mu
    if lam > mu:
        delta, rho = lam - mu, mu / lam
        pref = (delta / lam) ** 2
    else:
        delta, rho = mu - lam, lam / mu
        pref = (delta / mu) ** 2 * rho ** (k - 1)
    total_weight = (1.0 - rho) ** -(k + 1)
    parts = []
    c = 1.0
    l = 0
    while True:
        inner = laplace_binomial_sum(k - 1, f, t, delta, l + 1).value
        parts.append(c * inner)
        # the inner sums decrease in l, so the rest is at most inner * sum_{m>l} C(m+k,m) rho^m
        rest = special.nbdtrc(l, k + 1, 1.0 - rho) * total_weight
        bound = max(inner, 0.0) * rest
        partial = math.fsum(parts)
        if l + 1 >= series.min_terms and bound <= series.epsilon * abs(partial):
            return pref * partial
        if l + 1 >= series.max_terms:
            raise TruncationFailure(
                f"birth-death series: {l + 1} terms, remaining bound {pref * bound:.3g}"
            )
        c *= rho * (l + k + 1) / (l + 1)
        l += 1


def bd_pmf(
    spec: BDSpec,
    f: BernsteinFunction,
    t: float,
    n: int,
    *,
    method: str = "laguerre",
    series: SeriesTruncation = DEFAULT_SERIES,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Pr{L^f(t) = n | L^f(0) = r0}.

    lam != mu (r0 = 1): double series
        ((lam-mu)/lam)^2 sum_l C(l+n,l) (mu/lam)^l sum_j C(n-1,j)(-1)^j e^{-t f((lam-mu)(j+l+1))}
    for lam > mu, and the mirror image with an extra (lam/mu)^{n-1} for lam < mu.

    lam = mu: ``method`` picks the Laguerre integral (default), exact rate
    derivatives ("faa_di_bruno", named families) or finite differences
    (n <= 6) of
        ((-1)^{n-1} lam^{n-1}/n!) d^n/dlam^n [lam int e^{-w} e^{-t f(lam w)} dw].
    """
    _check_time(t)
    if n < 0:
        raise ValueError("n must be >= 0")
    if t == 0:
        return 1.0 if n == spec.r0 else 0.0
    if n == 0:
        return bd_extinction(spec, f, t, series=series, quad=quad)
    if not spec.critical:
        if spec.r0 != 1:
            raise ValueError("the lam != mu series is for one progenitor")
        return _series_pmf(spec, f, t, n, series)
    if spec.r0 != 1:
        return bd_transition(spec, f, t, spec.r0, n, method=method, quad=quad)
    lam = spec.lam
    if method == "laguerre":
        q = _q(n)
        return exp_weighted_integral(
            lambda x: q(x) * np.exp(-t * _fvals(f, lam * np.asarray(x, dtype=float))), quad
        )
    if method not in LAMBDA_EQ_METHODS:
        raise ValueError(f"method must be one of {LAMBDA_EQ_METHODS}")
    d = _derivative_route(f, lam, n, _outer_exp(t), method, quad)
    return (-1) ** (n - 1) * lam ** (n - 1) / math.factorial(n) * d


def bd_extinction_limit(spec: BDSpec, f: BernsteinFunction | None = None) -> float:
    """lim_{t->inf} Pr{L^f(t) = 0}: (mu/lam)^{r0} if lam > mu, else 1 (0 if killed)."""
    if f is not None and f.kill_rate > 0:
        return 0.0
    return (spec.mu / spec.lam) ** spec.r0 if spec.lam > spec.mu else 1.0


def bd_extinction(
    spec: BDSpec,
    f: BernsteinFunction,
    t: float,
    *,
    series: SeriesTruncation = DEFAULT_SERIES,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Pr{L^f(t) = 0} for one progenitor.

    lam = mu:  1 - int e^{-w} e^{-t f(lam w)} dw
    lam > mu:  mu/lam + ((mu-lam)/lam) sum_{m>=1} (mu/lam)^m e^{-t f((lam-mu) m)}
    lam < mu:  1 - ((mu-lam)/lam) sum_{m>=1} (lam/mu)^m e^{-t f((mu-lam) m)}
    For killed f the constants 1 and mu/lam carry the factor e^{-a t}.
    """
    _check_time(t)
    if t == 0:
        return 0.0
    if spec.r0 != 1:
        if not spec.critical:
            raise ValueError("the lam != mu series is for one progenitor")
        return bd_transition(spec, f, t, spec.r0, 0, quad=quad)
    lam, mu = spec.lam, spec.mu
    survive = math.exp(-t * f.kill_rate)
    if spec.critical:
        base = f.unkilled
        return survive * exp_weighted_integral(
            lambda w: -np.expm1(-t * _fvals(base, lam * np.asarray(w, dtype=float))), quad
        )
    delta, rho = abs(lam - mu), min(lam, mu) / max(lam, mu)
    parts = []
    m = 1
    while True:
        term = rho**m * math.exp(-t * float(f(delta * m)))
        parts.append(term)
        partial = math.fsum(parts)
        bound = term * rho / (1.0 - rho)
        if m >= series.min_terms and bound <= series.epsilon * partial:
            break
        if m >= series.max_terms:
            raise TruncationFailure(f"extinction series: {m} terms, bound {bound:.3g}")
        m += 1
    if lam > mu:
        return survive * mu / lam - (lam - mu) / lam * partial
    return survive - (mu - lam) / lam * partial


def extinction_time_density(
    lam: float, f: BernsteinFunction, t: float, quad: QuadratureSpec = DEFAULT_QUAD
) -> float:
    """d/dt Pr{L^f(t) = 0} for lam = mu: int e^{-w} f(lam w) e^{-t f(lam w)} dw.

    With killing rate a this becomes e^{-a t} int e^{-w} f0 e^{-t f0} dw - a Pr{L^f(t)=0},
    f0 = f - a; the second term is the extinct mass lost to killing.
    """
    if not t > 0:
        raise ValueError("t must be > 0")
    base = f.unkilled

    def g(w):
        v = _fvals(base, lam * np.asarray(w, dtype=float))
        return v * np.exp(-t * v)

    dens = math.exp(-t * f.kill_rate) * exp_weighted_integral(g, quad)
    if f.kill_rate:
        dens -= f.kill_rate * bd_extinction(BDSpec(lam, lam), f, t, quad=quad)
    return dens


# ---------------------------------------------------------------------------
# r progenitors, lam = mu


def _jet_transition(f, lam, t, coef, quad):
    """sum_M c_M E[p^M; H < inf] through A_M = (-1)^{M-1} lam^M/(M-1)! d^{M-1}/dlam^{M-1}[(e^{-ta} - G)/lam]."""
    _require_named(f)
    top = max(coef)
    survive = math.exp(-t * f.kill_rate)
    total = coef.get(0, 0) * survive
    if top == 0:
        return total
    G = _integral_jet(f, lam, _outer_exp(t), top - 1, quad)
    # Leibniz with d^p (1/lam) = (-1)^p p! lam^{-1-p}
    Q = []
    for d in range(top):
        acc = (survive - G[0]) * (-1) ** d * math.factorial(d) / lam ** (d + 1)
        for i in range(1, d + 1):
            acc -= math.comb(d, i) * G[i] * (-1) ** (d - i) * math.factorial(d - i) / lam ** (d - i + 1)
        Q.append(acc)
    for M, c in coef.items():
        if M >= 1:
            total += c * (-1) ** (M - 1) * lam**M / math.factorial(M - 1) * Q[M - 1]
    return total


def bd_transition(
    spec: BDSpec,
    f: BernsteinFunction,
    t: float,
    r: int,
    n: int,
    *,
    method: str = "laguerre",
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Pr{L^f(t + t0) = n | L^f(t0) = r} for lam = mu.

    The classical law is sum_{j,i} C(r,j) C(r+n-j-1,r-1) C(j,i) (-2)^i p^{r+n-2j+i}
    with p = lam s/(1 + lam s); each E[p^M] is either a Laguerre integral
    (default) or the rate derivative of order M-1 of (1 - G(lam))/lam with
    G(lam) = int e^{-w} e^{-t f(lam w)} dw ("faa_di_bruno"). n = r is allowed.
    """
    _require_critical(spec)
    _check_time(t)
    if r < 1 or n < 0:
        raise ValueError("need r >= 1 and n >= 0")
    if t == 0:
        return 1.0 if n == r else 0.0
    lam = spec.lam
    if method == "faa_di_bruno":
        return _jet_transition(f, lam, t, _p_polynomial(r, n), quad)
    if method != "laguerre":
        raise ValueError("method must be 'laguerre' or 'faa_di_bruno'")
    c0, W = _w_poly(r, n)
    val = exp_weighted_integral(
        lambda x: W(x) * np.exp(-t * _fvals(f, lam * np.asarray(x, dtype=float))), quad
    )
    return c0 * math.exp(-t * f.kill_rate) - val


def bd_infinitesimal_rate(
    spec: BDSpec,
    f: BernsteinFunction,
    r: int,
    n: int,
    *,
    method: str = "levy",
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Jump intensity r -> n (n != r) of L^f for lam = mu.

    "levy": int Pr{L(s)=n | L(0)=r} nu(ds). "laguerre": the same quantity as
    int e^{-x} W_{r,n}(x) (f(lam x) - a) dx, which follows from writing the
    classical law as int e^{-x} W (1 - e^{-lam s x}) dx.
    """
    _require_critical(spec)
    if r < 1 or n < 0 or n == r:
        raise ValueError("need r >= 1, n >= 0 and n != r")
    lam = spec.lam
    if method == "laguerre":
        _, W = _w_poly(r, n)
        base = f.unkilled
        return exp_weighted_integral(
            lambda x: W(x) * _fvals(base, lam * np.asarray(x, dtype=float)), quad
        )
    if method != "levy":
        raise ValueError("method must be 'levy' or 'laguerre'")
    cl = BDSpec(lam, lam, r)
    return levy_integral(
        f, lambda s: bd_classical_pmf(cl, s, n), quad,
        breakpoints=(0.1 / lam, 1.0 / lam, 10.0 / lam),
    )


def stable_first_jump_rate(alpha: float, lam: float) -> float:
    """lam^alpha Gamma(alpha + 2)."""
    return lam**alpha * math.gamma(alpha + 2)


def first_jump_rate(
    lam: float,
    f: BernsteinFunction,
    *,
    method: str = "laguerre",
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Rate of the exponential first jump out of state 1, lam = mu.

    d/dlam [lam int e^{-w} f(lam w) dw], computed as
      "laguerre":          int w e^{-w} f(lam w) dw
      "derivative":        int e^{-w} (f(lam w) + lam w f'(lam w)) dw
      "finite_difference": Richardson differences in lam.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")

    def fv(w):
        return _fvals(f, lam * np.asarray(w, dtype=float))

    if method == "laguerre":
        return exp_weighted_integral(lambda w: np.asarray(w, dtype=float) * fv(w), quad)
    if method == "derivative":
        def g(w):
            y = lam * np.asarray(w, dtype=float)
            return fv(w) + y * np.asarray(f.derivative(1, y), dtype=float)

        return exp_weighted_integral(g, quad)
    if method == "finite_difference":
        def h(x):
            return x * exp_weighted_integral(
                lambda w: _fvals(f, x * np.asarray(w, dtype=float)), quad
            )

        return richardson_derivative(h, 1, lam).value
    raise ValueError("method must be 'laguerre', 'derivative' or 'finite_difference'")


# ---------------------------------------------------------------------------
# sojourn times


def _stable_mean_sojourn(alpha, lam, k):
    # (-1)^{k-1} lam^{k-1}/k! Gamma(1-alpha) d^k/dlam^k lam^{1-alpha}
    #   = Gamma(2-alpha) Gamma(k+alpha-1) / (k! Gamma(alpha) lam^alpha)
    log = (
        math.lgamma(2 - alpha) + math.lgamma(k + alpha - 1)
        - math.lgamma(k + 1) - math.lgamma(alpha) - alpha * math.log(lam)
    )
    return math.exp(log)


def stable_mean_sojourn(alpha: float, lam: float, k: int) -> float:
    """E V_k^f(inf) for f(x) = x^alpha: B(2-alpha, k+alpha-1)/(Gamma(alpha) lam^alpha).

    Decays like Gamma(2-alpha) k^{alpha-2}/(Gamma(alpha) lam^alpha) and tends
    to the classical 1/(lam k) as alpha -> 1.
    """
    _check_alpha_k(alpha, k)
    return _stable_mean_sojourn(alpha, lam, k)


def stable_sojourn_bounds(alpha: float, lam: float, k: int) -> tuple:
    """Strict bounds on the stable E V_k^f(inf) from b = k+alpha-1:

    1/(b (b+1)) = B(2, b) < B(2-alpha, b) < 1/b, divided by Gamma(alpha) lam^alpha.
    """
    _check_alpha_k(alpha, k)
    b = k + alpha - 1
    c = math.gamma(alpha) * lam**alpha
    return 1.0 / (b * (b + 1) * c), 1.0 / (b * c)


def _check_alpha_k(alpha, k):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")


def mean_sojourn(
    lam: float,
    f: BernsteinFunction,
    t: float,
    k: int,
    *,
    method: str = "auto",
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """E V_k^f(t), the expected time spent in state k up to t (lam = mu, L(0) = 1).

    t may be math.inf. "auto" uses :func:`stable_mean_sojourn` for the stable family
    at t = inf and the Laguerre integral
        int e^{-x} q_k(x) (1 - e^{-t f(lam x)})/f(lam x) dx
    otherwise; "laguerre", "faa_di_bruno" and "finite_difference" force a route.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if lam <= 0:
        raise ValueError("lam must be positive")
    _check_time(t)
    if t == 0:
        return 0.0
    if method == "auto":
        if isinstance(f, Stable) and math.isinf(t):
            return _stable_mean_sojourn(f.alpha, lam, k)
        method = "laguerre"
    if method == "laguerre":
        q = _q(k)

        def g(x):
            x = np.asarray(x, dtype=float)
            v = _fvals(f, lam * x)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = 1.0 / v if math.isinf(t) else -np.expm1(-t * v) / v
            return q(x) * ratio

        return exp_weighted_integral(g, quad)
    if method not in LAMBDA_EQ_METHODS:
        raise ValueError("unknown method")
    d = _derivative_route(f, lam, k, _outer_resolvent(t), method, quad)
    return (-1) ** (k - 1) * lam ** (k - 1) / math.factorial(k) * d


# Talbot amplifies errors in the transform by about e^{0.4 nodes}
SOJOURN_QUAD = QuadratureSpec(tolerance_abs=1e-15, tolerance_rel=1e-14)


@dataclass(frozen=True)
class SojournTransform:
    """r_k(muhat) = int_0^inf e^{-muhat t} Pr{L^f_k(t) = k} dt, process started at k.

    ``muhat`` is the Laplace variable, distinct from the death rate. The
    Laguerre form Pr{L^f_k(t) = k} = -int e^{-x} W_{k,k}(x) e^{-t f(lam x)} dx
    integrates in t to r_k(muhat) = -int e^{-x} W_{k,k}(x)/(muhat + f(lam x)) dx,
    which for k = 1 is int x e^{-x}/(muhat + f(lam x)) dx.
    """

    lam: float
    f: BernsteinFunction
    k: int = 1
    quad: QuadratureSpec = SOJOURN_QUAD

    def __post_init__(self):
        if self.lam <= 0 or self.k < 1:
            raise ValueError("need lam > 0 and k >= 1")

    def _w(self):
        return _w_poly(self.k, self.k)[1]

    def _integrate(self, g, muhat):
        if isinstance(muhat, complex) or np.iscomplexobj(muhat):
            return _complex_weighted(g, self.quad)
        return exp_weighted_integral(g, self.quad)

    def r_k(self, muhat):
        W = self._w()
        lam, f = self.lam, self.f

        def g(x):
            x = np.asarray(x, dtype=float)
            return -W(x) / (muhat + _fvals(f, lam * x))

        return self._integrate(g, muhat)

    def defect(self, muhat):
        """1 - muhat r_k(muhat) = -int e^{-x} W_{k,k}(x) f(lam x)/(muhat + f(lam x)) dx.

        Uses -int e^{-x} W_{k,k} dx = 1; evaluating it directly keeps
        1/r_k - muhat = defect/r_k free of cancellation for large |muhat|.
        """
        W = self._w()
        lam, f = self.lam, self.f

        def g(x):
            x = np.asarray(x, dtype=float)
            v = _fvals(f, lam * x)
            return -W(x) * v / (muhat + v)

        return self._integrate(g, muhat)

    __call__ = r_k

    def numerical(self, muhat: float) -> float:
        """r_k by direct quadrature of e^{-muhat t} bd_transition(k -> k) over t (real muhat)."""
        spec = BDSpec(self.lam, self.lam)

        def g(t):
            return math.exp(-muhat * t) * bd_transition(spec, self.f, t, self.k, self.k, quad=self.quad)

        head, _ = integrate_interval(g, 0.0, 1.0, self.quad, points=(1e-6, 1e-4, 1e-2))
        tail, _ = integrate_interval(g, 1.0, math.inf, self.quad)
        return head + tail

    @property
    def exit_rate(self) -> float:
        """Holding rate of state k: -int e^{-x} W_{k,k}(x) f(lam x) dx (includes killing)."""
        W = self._w()
        return exp_weighted_integral(
            lambda x: -W(x) * _fvals(self.f, self.lam * np.asarray(x, dtype=float)), self.quad
        )


def sojourn_atom(lam: float, f: BernsteinFunction, k: int, t: float, quad=SOJOURN_QUAD) -> float:
    """Pr{V_k(t) = t}: the process started at k has not left k by time t."""
    _check_time(t)
    return math.exp(-t * SojournTransform(lam, f, k, quad).exit_rate)


def sojourn_density(
    lam: float,
    f: BernsteinFunction,
    k: int,
    t: float,
    x: float,
    inversion: InversionSpec = DEFAULT_INVERSION,
    quad: QuadratureSpec = SOJOURN_QUAD,
    *,
    transform: SojournTransform | None = None,
) -> float:
    """Density at x of the absolutely continuous part of V_k(t), 0 < x < t.

    In t, int e^{-muhat t} Pr{V_k(t) in dx}/dx dt = e^{-x/r_k(muhat)}/(muhat r_k(muhat)).
    That transform includes the atom e^{-q t} delta(x - t) (q = exit rate),
    whose transform is e^{-(muhat + q) x}. Subtracting it and shifting to
    tau = t - x leaves
        F(muhat) = e^{x (muhat - 1/r_k)}/(muhat r_k) - e^{-q x},
    which decays in muhat and is inverted by the fixed Talbot contour.
    muhat - 1/r_k is evaluated as -defect/r_k (see :meth:`SojournTransform.defect`).
    """
    if not (t > 0 and x > 0):
        raise ValueError("need t > 0 and x > 0")
    if x >= t:
        return 0.0
    tr = transform or SojournTransform(lam, f, k, quad)
    q = tr.exit_rate
    atom = math.exp(-q * x)

    def F(s):
        s = complex(s)
        r = tr.r_k(s)
        return np.exp(-x * tr.defect(s) / r) / (s * r) - atom

    return talbot_inverse(F, t - x, inversion)
