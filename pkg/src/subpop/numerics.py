"""Shared numerical kernels.

Quadrature over e^{-w} weights, alternating binomial sums, derivatives with
respect to a rate parameter (Faa di Bruno and Richardson), the Mittag-Leffler
function E_{nu,1}(-x), and fixed-Talbot Laplace inversion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, linalg
from scipy.special import gammaln, loggamma, roots_laguerre

from .errors import (
    CancellationWarning,
    InversionFailure,
    QuadratureFailure,
    UnsupportedOrder,
)

EPS = np.finfo(float).eps

#: Largest derivative order the Bell-polynomial assembly accepts.
MAX_BELL_ORDER = 30
#: Largest order accepted by finite differences.
MAX_FD_ORDER = 6
#: Above this n the direct alternating sum is flagged regardless of estimate.
DIRECT_SUM_CAP = 60


@dataclass(frozen=True)
class QuadratureSpec:
    node_count: int = 64
    tolerance_abs: float = 1e-12
    tolerance_rel: float = 1e-10
    max_refinements: int = 20

    def __post_init__(self):
        if self.node_count < 8:
            raise ValueError("node_count must be >= 8")
        if self.tolerance_abs <= 0 or self.tolerance_rel <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_refinements < 0:
            raise ValueError("max_refinements must be >= 0")


@dataclass(frozen=True)
class SeriesTruncation:
    epsilon: float = 1e-12
    min_terms: int = 16
    max_terms: int = 10**6

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.min_terms > self.max_terms:
            raise ValueError("min_terms must not exceed max_terms")


@dataclass(frozen=True)
class InversionSpec:
    """Fixed-Talbot contour settings; ``nodes`` is the number of contour points."""

    nodes: int = 32
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.nodes < 4 or self.nodes % 2:
            raise ValueError("nodes must be an even integer >= 4")


DEFAULT_QUAD = QuadratureSpec()
DEFAULT_SERIES = SeriesTruncation()
DEFAULT_INVERSION = InversionSpec()


class AlternatingSum(NamedTuple):
    value: float
    error: float


class Derivative(NamedTuple):
    value: float
    error: float


# ---------------------------------------------------------------------------
# quadrature


def integrate_interval(g, a, b, spec=DEFAULT_QUAD, points=None, complex_func=False):
    """Adaptive Gauss-Kronrod on [a, b] (b may be inf); returns (value, error).

    Raises QuadratureFailure when the error estimate is far above the
    requested tolerance.
    """
    kw = dict(epsabs=spec.tolerance_abs, epsrel=spec.tolerance_rel, limit=500)
    if points is not None and np.isfinite(b):
        pts = sorted(p for p in points if a < p < b)
        if pts:
            kw["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if complex_func:
            val, err = integrate.quad(g, a, b, complex_func=True, **kw)
            err = abs(complex(err)) if np.iscomplexobj(err) else err
        else:
            val, err = integrate.quad(g, a, b, **kw)
    if not np.all(np.isfinite([val, err])):
        raise QuadratureFailure(f"non-finite integral on [{a}, {b}]")
    allowed = max(spec.tolerance_abs, spec.tolerance_rel * abs(val))
    if err > 1e4 * allowed and err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureFailure(
            f"quadrature on [{a}, {b}] stalled: estimate {val!r}, error {err:.3g}"
        )
    return val, err


_NEAR_ZERO = tuple(10.0**-e for e in (12, 10, 8, 6, 5, 4, 3, 2))


@lru_cache(maxsize=32)
def _laguerre_rule(n):
    if n <= 256:
        return roots_laguerre(n)
    # roots_laguerre breaks down past a few hundred nodes; Golub-Welsch instead
    k = np.arange(1, n)
    x, v = linalg.eigh_tridiagonal(2.0 * np.arange(n) + 1.0, k.astype(float))
    return x, v[0] ** 2


def exp_weighted_integral(g, spec=DEFAULT_QUAD, *, full_output=False):
    """Integral of e^{-w} g(w) over (0, inf).

    The piece on [0, 1] goes to adaptive Gauss-Kronrod with geometric
    breakpoints toward 0, which absorbs algebraic endpoint behaviour such as
    w^alpha. The tail is shifted onto the Laguerre weight,
    e^{-1} * int e^{-v} g(1 + v) dv, and evaluated by Gauss-Laguerre with the
    node count doubled until successive estimates agree.

    ``g`` must accept numpy arrays.
    """
    head, head_err = integrate_interval(
        lambda w: math.exp(-w) * float(g(w)), 0.0, 1.0, spec, points=_NEAR_ZERO
    )

    n = spec.node_count
    x, w = _laguerre_rule(n)
    prev = math.exp(-1.0) * float(np.dot(w, g(1.0 + x)))
    tail_err = math.inf
    for _ in range(spec.max_refinements):
        n *= 2
        if n > 1024:
            break
        x, w = _laguerre_rule(n)
        cur = math.exp(-1.0) * float(np.dot(w, g(1.0 + x)))
        tail_err = abs(cur - prev)
        prev = cur
        if tail_err <= max(spec.tolerance_abs, spec.tolerance_rel * abs(cur)):
            break
    else:
        tail_err = tail_err if spec.max_refinements else 0.0
    total = head + prev
    err = head_err + tail_err
    if not np.isfinite(total):
        raise QuadratureFailure("non-finite e^{-w}-weighted integral")
    if err > max(1e3 * spec.tolerance_abs, 1e3 * spec.tolerance_rel * abs(total), 1e-7):
        raise QuadratureFailure(
            f"Gauss-Laguerre tail did not settle (error {err:.3g})"
        )
    return (total, err) if full_output else total


# ---------------------------------------------------------------------------
# alternating binomial sums


def binomial(n, k):
    """C(n, k) as a float; exact integers below 1000, log-gamma above."""
    if k < 0 or k > n:
        return 0.0
    if n <= 1000:
        return float(math.comb(n, k))
    return math.exp(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def _direct_sum(n, term, start=0, stop=None):
    stop = n if stop is None else stop
    parts = []
    for j in range(start, stop + 1):
        c = binomial(n, j)
        parts.append((-1) ** j * c * float(np.real(term(j))))
    value = math.fsum(parts)
    scale = math.fsum(abs(p) for p in parts)
    # each product carries a few ulps; fsum itself is exact-rounded
    err = 4 * EPS * scale + EPS * abs(value)
    return value, err


def _rice_sum(n, term, first, spec, c=None):
    # Norlund-Rice: sum_{j=first}^n C(n,j)(-1)^j F(j)
    #   = (1/pi) int_0^inf Re[F(z) Gamma(n+1)Gamma(-z)/Gamma(n+1-z)] dy,
    # z = c + iy, first-1 < c < first (any c < 0 when first = 0); needs F
    # analytic and bounded on Re z >= c. The kernel size is about n^c, so a
    # contour further left cancels less.
    c = first - 0.5 if c is None else c
    lg_n = float(gammaln(n + 1))

    def kernel(y):
        z = complex(c, y)
        return (complex(term(z)) * np.exp(lg_n + loggamma(-z) - loggamma(n + 1 - z))).real

    size = abs(kernel(0.0)) + abs(kernel(0.5))
    rspec = QuadratureSpec(
        spec.node_count, max(1e-15 * size, 1e-300), min(spec.tolerance_rel, 1e-12)
    )
    # the kernel varies on the scale 1/log(n)
    scale = 1.0 / max(1.0, math.log(n + 1))
    pts = [scale * m for m in (0.5, 1, 2, 4, 8, 16, 32)]
    a, ea = integrate_interval(kernel, 0.0, pts[-1], rspec, points=pts)
    b, eb = integrate_interval(kernel, pts[-1], np.inf, rspec)
    return (a + b) / math.pi, (ea + eb) / math.pi + 8 * EPS * abs(a + b)


def alternating_binomial_sum(
    n: int,
    term: Callable,
    *,
    analytic: bool = False,
    first_analytic: int = 0,
    abscissa: float | None = None,
    spec: QuadratureSpec = DEFAULT_QUAD,
    warn: bool = True,
) -> AlternatingSum:
    """Sum_{j=0}^{n} C(n, j) (-1)^j term(j) with an error estimate.

    Direct evaluation uses exactly rounded summation (``math.fsum``) of
    correctly rounded binomial products; its error is dominated by the
    cancellation factor sum|terms| / |sum|. When ``analytic`` is set, ``term``
    must extend to an analytic function bounded on Re z >= first_analytic - 1/2
    (and accept complex arguments); if the direct estimate is poor the terms
    j >= first_analytic are instead obtained from the Norlund-Rice contour
    integral, which does not cancel. ``abscissa`` places the contour
    (default first_analytic - 1/2); moving it left, within the region where
    term stays analytic and bounded, reduces the residual cancellation.

    A ``CancellationWarning`` is emitted when the relative error estimate
    exceeds 1e-6, and for direct sums with n > 60.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if abscissa is not None and not (
        abscissa < first_analytic and (first_analytic == 0 or abscissa > first_analytic - 1)
    ):
        raise ValueError("contour abscissa must separate j < first_analytic from the rest")
    if n == 0:
        return AlternatingSum(float(term(0)), EPS * abs(float(term(0))))

    direct_ok = n <= 1000 or not analytic
    value = err = None
    if direct_ok:
        value, err = _direct_sum(n, term)
    good = value is not None and err <= 1e-13 * abs(value)
    if analytic and not good and n >= 2:
        head = head_err = 0.0
        if first_analytic > 0:
            head, head_err = _direct_sum(n, term, 0, min(first_analytic - 1, n))
        if first_analytic <= n:
            tail, tail_err = _rice_sum(n, term, first_analytic, spec, abscissa)
        else:
            tail = tail_err = 0.0
        value, err = head + tail, head_err + tail_err
        direct_ok = False
    if warn:
        rel = err / abs(value) if value else math.inf if err > 1e-300 else 0.0
        if rel > 1e-6:
            warnings.warn(
                f"alternating sum with n={n}: estimated relative error {rel:.2e}; "
                "cross-check by Monte Carlo",
                CancellationWarning,
                stacklevel=2,
            )
        elif direct_ok and n > DIRECT_SUM_CAP:
            warnings.warn(
                f"direct alternating sum with n={n} > {DIRECT_SUM_CAP}",
                CancellationWarning,
                stacklevel=2,
            )
    return AlternatingSum(value, err)


# ---------------------------------------------------------------------------
# Mittag-Leffler


def mittag_leffler_transform(nu, exponent, spec=DEFAULT_QUAD, scale=1.0):
    """(sin(nu pi)/(nu pi)) int_0^inf exp(-exponent(u^{1/nu})) / (u^2 + 2u cos(nu pi) + 1) du.

    This is the Mittag-Leffler integral after r = u^{1/nu}, which removes the
    r^{nu-1} singularity. With exponent(r) = r x^{1/nu} it returns
    E_{nu,1}(-x); composing a Laplace exponent into ``exponent`` gives the
    subordinated version. ``scale`` hints where exp(-exponent) decays.
    """
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1) for the integral form")
    c = math.cos(nu * math.pi)
    s = math.sin(nu * math.pi)
    inv = 1.0 / nu

    def g(u):
        if u == 0.0:
            return math.exp(-exponent(0.0))
        return math.exp(-exponent(u**inv)) / ((u + c) ** 2 + s * s)

    pts = {1.0, scale, 0.1 * scale, 10 * scale}
    if c < 0:
        # Lorentzian peak at u = -cos(nu pi) with half-width sin(nu pi)
        pts |= {-c, -c - 10 * s, -c + 10 * s, -c - s, -c + s}
    pts = sorted(p for p in pts if p > 0)
    top = max(pts) * 2
    a, _ = integrate_interval(g, 0.0, top, spec, points=pts)
    b, _ = integrate_interval(g, top, np.inf, spec)
    return s / (nu * math.pi) * (a + b)


def mittag_leffler(nu: float, x: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """E_{nu,1}(-x) for 0 < nu <= 1 and x >= 0."""
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 1.0
    if nu == 1:
        return math.exp(-x)
    if x <= 0.5:
        # sum (-x)^k / Gamma(nu k + 1): absolutely convergent, no real cancellation here
        terms, k = [], 0
        while True:
            term = (-x) ** k / math.gamma(nu * k + 1)
            terms.append(term)
            if abs(term) < 1e-18:
                return math.fsum(terms)
            k += 1
    xs = x**(1.0 / nu)
    spec = QuadratureSpec(spec.node_count, min(spec.tolerance_abs, 1e-15), min(spec.tolerance_rel, 1e-12))
    return mittag_leffler_transform(nu, lambda r: r * xs, spec, scale=1.0 / x)


# ---------------------------------------------------------------------------
# derivatives


def bell_partial(g: Sequence, n: int) -> list:
    """Partial Bell polynomials B[p][m] for 0 <= m <= p <= n.

    ``g[i]`` holds the (i+1)-th derivative of the inner function (scalars or
    equally shaped arrays). Uses
    B_{p,m} = sum_{i=1}^{p-m+1} C(p-1, i-1) g_i B_{p-i, m-1}.
    """
    if n > MAX_BELL_ORDER:
        raise UnsupportedOrder(f"Bell assembly capped at order {MAX_BELL_ORDER}")
    zero = 0.0 * np.asarray(g[0]) if n else 0.0
    B = [[zero for _ in range(n + 1)] for _ in range(n + 1)]
    B[0][0] = zero + 1.0
    for p in range(1, n + 1):
        for m in range(1, p + 1):
            acc = zero
            for i in range(1, p - m + 2):
                acc = acc + math.comb(p - 1, i - 1) * g[i - 1] * B[p - i][m - 1]
            B[p][m] = acc
    return B


def compose_derivatives(outer: Sequence, inner: Sequence, n: int) -> list:
    """Derivatives 0..n of G(h(x)) by Faa di Bruno.

    ``outer[m]`` is G^{(m)} evaluated at h(x), m = 0..n; ``inner[i]`` is
    h^{(i+1)}(x), i = 0..n-1.
    """
    B = bell_partial(inner, n)
    out = [outer[0]]
    for p in range(1, n + 1):
        acc = 0.0
        for m in range(1, p + 1):
            acc = acc + outer[m] * B[p][m]
        out.append(acc)
    return out


def _central_difference(h, k, x, step):
    acc = math.fsum(
        (-1) ** i * math.comb(k, i) * h(x + (k / 2 - i) * step) for i in range(k + 1)
    )
    return acc / step**k


def richardson_derivative(h, k, x, step=None, levels=5) -> Derivative:
    """k-th derivative of a scalar function by central differences with
    Richardson extrapolation over step halvings (even error expansion).

    ``step`` defaults to a value that keeps the stencil inside (0, inf) for
    positive ``x``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > MAX_FD_ORDER:
        raise UnsupportedOrder(f"finite differences limited to order {MAX_FD_ORDER}")
    if step is None:
        step = min(0.5, 0.8 * abs(x) / (k / 2 + 1)) if x else 0.25
        step *= 0.5 + 0.1 * k
    T = []
    best, best_err = None, math.inf
    for i in range(levels):
        row = [_central_difference(h, k, x, step / 2**i)]
        for j in range(1, i + 1):
            f = 4.0**j
            row.append(row[j - 1] + (row[j - 1] - T[i - 1][j - 1]) / (f - 1))
        T.append(row)
        if i >= 1:
            for j in range(1, i + 1):
                e = abs(row[j] - row[j - 1]) + (abs(row[j] - T[i - 1][j - 1]) if j <= i - 1 else 0)
                if e < best_err:
                    best, best_err = row[j], e
    return Derivative(best, best_err)


def parametric_derivative(h, k: int, lam: float, exact_mode: bool = False) -> Derivative:
    """k-th derivative of h with respect to the rate parameter at ``lam``.

    In exact mode ``h(lam, k)`` must return the jet [h, h', ..., h^{(k)}]
    (typically assembled with :func:`compose_derivatives`); otherwise ``h`` is
    a scalar function and Richardson-extrapolated central differences are
    used, limited to k <= 6.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if exact_mode:
        if k > MAX_BELL_ORDER:
            raise UnsupportedOrder(f"exact mode capped at order {MAX_BELL_ORDER}")
        jet = h(lam, k)
        return Derivative(float(jet[k]), 0.0)
    return richardson_derivative(h, k, lam)


# ---------------------------------------------------------------------------
# Laplace inversion


def _talbot(F, t, M):
    r = 2.0 * M / (5.0 * t)
    acc = 0.5 * F(complex(r, 0.0)).real * math.exp(r * t)
    for k in range(1, M):
        th = k * math.pi / M
        cot = math.cos(th) / math.sin(th)
        s = r * th * complex(cot, 1.0)
        sigma = th + (th * cot - 1.0) * cot
        acc += (np.exp(t * s) * F(s) * complex(1.0, sigma)).real
    return r / M * acc


def talbot_inverse(F, t: float, spec: InversionSpec = DEFAULT_INVERSION, *, full_output=False):
    """Inverse Laplace transform of F at t > 0 by the fixed Talbot contour.

    F must accept complex arguments and be analytic off the negative real
    axis. Convergence is monitored by comparing ``spec.nodes`` with half as
    many nodes; in double precision roundoff grows like e^{0.4 M}, so more
    nodes is not always better.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    full = _talbot(F, t, spec.nodes)
    half = _talbot(F, t, spec.nodes // 2)
    err = abs(full - half)
    if not np.isfinite(full) or err > spec.tolerance * max(1.0, abs(full)):
        raise InversionFailure(
            f"Talbot inversion at t={t} unsettled: {full!r} vs {half!r} "
            f"with {spec.nodes} and {spec.nodes // 2} nodes"
        )
    return (full, err) if full_output else full
