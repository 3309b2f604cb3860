"""Subordinated pure-birth processes N(H^f(t)).

Nonlinear birth with an arbitrary distinct rate schedule, the linear
(Yule-Furry) special case, jump intensities, explosion, factorial moments
and the fractional (Mittag-Leffler) variant.

With a killed Laplace exponent every probability below is the mass on the
event {H^f(t) < inf}; the missing mass e^{-kill_rate t} complement sits at
the explosion state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln, zeta

from .bernstein import BernsteinFunction, Killed, laplace_binomial_sum, levy_integral
from .errors import (
    INFINITE,
    CancellationWarning,
    DegenerateRates,
    DivergentExtension,
    PreconditionViolation,
    TruncationFailure,
)
from .numerics import (
    DEFAULT_QUAD,
    DEFAULT_SERIES,
    EPS,
    QuadratureSpec,
    SeriesTruncation,
    alternating_binomial_sum,
    mittag_leffler_transform,
    richardson_derivative,
)

__all__ = [
    "RateSchedule",
    "RegularityDeclaration",
    "nonlinear_pmf",
    "classical_birth_pmf",
    "vandermonde_residual",
    "birth_transition_rate",
    "holding_rate",
    "survival_mass",
    "explosion_probability",
    "yule_pmf",
    "yule_cdf",
    "yule_total_mass",
    "yule_factorial_moment",
    "yule_mean",
    "yule_variance",
    "fractional_pmf",
    "birth_master_equation_residual",
]

#: Relative gap below which two rates count as coincident.
DEGENERACY_GAP = 1e-6


@dataclass(frozen=True)
class RateSchedule:
    """Birth rates lambda_k, k >= 1.

    ``linear``: lambda_k = lam * k. ``power``: lambda_k = lam * k**p.
    ``general``: lambda_k = func(k); ``count`` caps the usable index and
    ``reciprocal_tail(L)`` may supply sum_{l > L} 1/lambda_l when the series
    converges (needed for explosion masses).
    """

    kind: str = "linear"
    lam: float = 1.0
    power: float = 1.0
    func: Optional[Callable[[int], float]] = None
    count: Optional[int] = None
    reciprocal_tail: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        if self.kind not in ("linear", "power", "general"):
            raise ValueError(f"unknown rate schedule kind {self.kind!r}")
        if self.kind == "general":
            if self.func is None:
                raise ValueError("general schedule needs func")
        elif self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.kind == "power" and self.power <= 0:
            raise ValueError("power must be positive so rates stay distinct")

    @classmethod
    def linear(cls, lam):
        return cls("linear", lam)

    @classmethod
    def power_law(cls, lam, p):
        return cls("power", lam, p)

    @classmethod
    def general(cls, func, count=None, reciprocal_tail=None):
        return cls("general", func=func, count=count, reciprocal_tail=reciprocal_tail)

    @classmethod
    def from_sequence(cls, values):
        vals = tuple(float(v) for v in values)
        return cls("general", func=lambda k: vals[k - 1], count=len(vals))

    def rate(self, k: int) -> float:
        if k < 1:
            raise ValueError("rates are indexed from 1")
        if self.count is not None and k > self.count:
            raise ValueError(f"schedule defines only {self.count} rates")
        if self.kind == "linear":
            return self.lam * k
        if self.kind == "power":
            return self.lam * float(k) ** self.power
        v = float(self.func(k))
        if not v > 0:
            raise ValueError(f"rate lambda_{k} = {v} is not positive")
        return v

    def rates(self, lo: int, hi: int) -> np.ndarray:
        """lambda_lo, ..., lambda_hi as an array."""
        if self.kind == "linear":
            return self.lam * np.arange(lo, hi + 1, dtype=float)
        if self.kind == "power":
            return self.lam * np.arange(lo, hi + 1, dtype=float) ** self.power
        return np.array([self.rate(k) for k in range(lo, hi + 1)])

    def check_distinct(self, lo: int, hi: int, gap: float = DEGENERACY_GAP) -> np.ndarray:
        lam = self.rates(lo, hi)
        if self.kind == "general" and len(lam) > 1:
            srt = np.sort(lam)
            rel = np.diff(srt) / srt[1:]
            if np.any(rel < gap):
                i = int(np.argmin(rel))
                raise DegenerateRates(
                    f"rates {srt[i]!r} and {srt[i + 1]!r} coincide to relative {rel[i]:.1e}"
                )
        return lam

    @property
    def builtin_regular(self) -> Optional[bool]:
        """Whether sum 1/lambda_j diverges, when decidable from the family."""
        if self.kind == "linear":
            return True
        if self.kind == "power":
            return self.power <= 1
        return None

    def to_config(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "lam": self.lam}
        if self.kind == "power":
            return {"kind": "power", "lam": self.lam, "power": self.power}
        if self.count is None:
            raise ValueError("only finite general schedules have a config form")
        return {"kind": "general", "values": [self.rate(k) for k in range(1, self.count + 1)]}

    @classmethod
    def from_config(cls, cfg: dict) -> "RateSchedule":
        kind = cfg.get("kind")
        allowed = {"linear": {"lam"}, "power": {"lam", "power"}, "general": {"values"}}
        if kind not in allowed:
            raise ValueError(f"unknown rate schedule kind {kind!r}")
        extra = set(cfg) - allowed[kind] - {"kind"}
        if extra:
            raise ValueError(f"unknown keys for {kind} schedule: {sorted(extra)}")
        if kind == "linear":
            return cls.linear(float(cfg["lam"]))
        if kind == "power":
            return cls.power_law(float(cfg["lam"]), float(cfg["power"]))
        return cls.from_sequence(cfg["values"])


@dataclass(frozen=True)
class RegularityDeclaration:
    """Caller's statement about sum_j 1/lambda_j; not machine-checkable in general."""

    diverges: bool
    rationale: str = ""


# ---------------------------------------------------------------------------
# helpers


def _f_values(f: BernsteinFunction, xs) -> np.ndarray:
    return np.asarray(f(np.asarray(xs, dtype=float)), dtype=float)


def _vandermonde_weights(lam: np.ndarray, prefactor_log: float):
    """sign and log|w_m| of w_m = exp(prefactor_log) / prod_{l != m}(lam_l - lam_m)."""
    diff = lam[None, :] - lam[:, None]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0):
        raise DegenerateRates("two rates coincide exactly")
    logw = prefactor_log - np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    return sign, logw


def _warn_if_cancelled(value, err, what):
    scale = abs(value)
    if err > 1e-6 * scale and err > 1e-300:
        warnings.warn(
            f"{what}: estimated relative error {err / max(scale, 1e-300):.2e}; "
            "cross-check by Monte Carlo",
            CancellationWarning,
            stacklevel=3,
        )


def _check_time(t):
    if not t >= 0:
        raise ValueError("t must be >= 0")


# ---------------------------------------------------------------------------
# state probabilities


def nonlinear_pmf(
    rates: RateSchedule,
    f: BernsteinFunction,
    t: float,
    r: int,
    k: int,
    *,
    full_output: bool = False,
):
    """Pr{N^f(t) = k | N^f(0) = r}.

    prod_{j=r}^{k-1} lambda_j * sum_{m=r}^{k} e^{-t f(lambda_m)} / prod_{l != m}(lambda_l - lambda_m),
    summed exactly rounded; the error estimate tracks the cancellation.
    """
    _check_time(t)
    if r < 1 or k < r:
        raise ValueError("need 1 <= r <= k")
    if t == 0:
        out = (1.0 if k == r else 0.0), 0.0
    elif k == r:
        v = math.exp(-t * float(f(rates.rate(r))))
        out = v, EPS * v
    else:
        lam = rates.check_distinct(r, k)
        sign, logw = _vandermonde_weights(lam, float(np.sum(np.log(lam[:-1]))))
        expo = -t * _f_values(f, lam)
        parts = sign * np.exp(logw + expo)
        value = math.fsum(parts.tolist())
        err = 4 * EPS * (k - r + 1) * float(np.sum(np.abs(parts)))
        _warn_if_cancelled(value, err, f"nonlinear_pmf(r={r}, k={k})")
        out = value, err
    return out if full_output else out[0]


def classical_birth_pmf(rates: RateSchedule, s: float, r: int, k: int) -> float:
    """Pr{N(s) = k | N(0) = r} for the unsubordinated process.

    Linear rates use the negative-binomial closed form; general rates use the
    exponential of the bidiagonal generator on states r..k, which stays
    accurate for small s where the Vandermonde form cancels.
    """
    if k < r:
        return 0.0
    if s == 0:
        return 1.0 if k == r else 0.0
    if rates.kind == "linear":
        lam = rates.lam
        logc = gammaln(k) - gammaln(r) - gammaln(k - r + 1)
        q = -math.expm1(-lam * s)
        if q == 0.0:
            return 0.0
        return math.exp(logc - lam * r * s + (k - r) * math.log(q))
    lam = rates.check_distinct(r, k)
    if k == r:
        return math.exp(-lam[0] * s)
    n = k - r + 1
    G = np.diag(-lam) + np.diag(lam[:-1], 1)
    return float(max(expm(s * G)[0, n - 1], 0.0))


def vandermonde_residual(rates: RateSchedule, r: int, k: int) -> float:
    """c_{r,k} = sum_{m=r}^{r+k} 1 / prod_{l != m}(lambda_l - lambda_m), which is 0.

    Exposed as a numerical health check. Rates that are nearly equal make the
    individual terms huge; a CancellationWarning then says the zero is not
    certified to the usual precision.
    """
    if r < 1 or k < 1:
        raise ValueError("need r >= 1 and k >= 1")
    lam = rates.rates(r, r + k)
    sign, logw = _vandermonde_weights(lam, 0.0)
    parts = sign * np.exp(logw)
    value = math.fsum(parts.tolist())
    scale = float(np.sum(np.abs(parts)))
    if scale * EPS * (k + 1) > 1e-10:
        warnings.warn(
            f"Vandermonde terms reach {scale:.2e}; residual certified only to "
            f"{scale * EPS * (k + 1):.1e}",
            CancellationWarning,
            stacklevel=2,
        )
    return value


def birth_transition_rate(
    rates: RateSchedule,
    f: BernsteinFunction,
    r: int,
    k: int,
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Jump intensity r -> k (k > r): int_0^inf Pr{N(s)=k | N(0)=r} nu(ds).

    The classical probability is O(s^{k-r}) at 0, so the integral converges
    for every Levy measure. Killing contributes no finite jump.
    """
    if k <= r:
        raise ValueError("need k > r")
    top = rates.rate(k)
    low = rates.rate(r)
    return levy_integral(
        f,
        lambda s: classical_birth_pmf(rates, s, r, k),
        spec,
        breakpoints=(0.1 / top, 1.0 / top, 1.0 / low, 10.0 / low),
    )


def holding_rate(rates: RateSchedule, f: BernsteinFunction, r: int) -> float:
    """f(lambda_r): the sojourn in state r is Exp(f(lambda_r))."""
    return float(f(rates.rate(r)))


class SurvivalMass(NamedTuple):
    value: float
    bound: float
    terms: int


def survival_mass(
    rates: RateSchedule,
    decl: Optional[RegularityDeclaration],
    f: BernsteinFunction,
    t: float,
    *,
    series: SeriesTruncation = DEFAULT_SERIES,
    full_output: bool = False,
):
    """Pr{N^f(t) < inf}: total probability of the finite states at time t.

    Regular schedules (sum 1/lambda_j = inf): e^{-kill_rate t}. Otherwise the
    classical explosion time T = sum_j Exp(lambda_j) is hypoexponential with
    Pr{T > s} = sum_m c_m e^{-lambda_m s}, c_m = prod_{l != m} lambda_l/(lambda_l - lambda_m),
    so sum_k Pr{N^f(t)=k} = Pr{H^f(t) < T} = sum_m c_m e^{-t f(lambda_m)}.
    The reported bound covers the truncated m-series and the truncated
    products.
    """
    _check_time(t)
    builtin = rates.builtin_regular
    if builtin is None and decl is None:
        raise PreconditionViolation("general schedules need a RegularityDeclaration")
    if builtin is not None and decl is not None and decl.diverges != builtin:
        raise PreconditionViolation(
            f"declaration diverges={decl.diverges} contradicts the {rates.kind} schedule"
        )
    regular = builtin if builtin is not None else decl.diverges
    kill = float(f.kill_rate)
    if regular or t == 0:
        out = SurvivalMass(math.exp(-kill * t), 0.0, 0)
    else:
        out = _hypoexponential_mass(rates, f, t, series)
    return out if full_output else out.value


def explosion_probability(rates, decl, f, t, **kw) -> float:
    """1 - survival_mass."""
    return 1.0 - survival_mass(rates, decl, f, t, **kw)


def _reciprocal_tail(rates: RateSchedule, L: int) -> float:
    if rates.kind == "power":
        return float(zeta(rates.power, L + 1)) / rates.lam
    if rates.reciprocal_tail is not None:
        return float(rates.reciprocal_tail(L))
    raise PreconditionViolation(
        "non-regular general schedule needs reciprocal_tail(L) = sum_{l>L} 1/lambda_l"
    )


def _hypoexponential_mass(rates, f, t, series, L=100_000):
    if rates.count is not None:
        raise PreconditionViolation("explosion mass needs an infinite rate schedule")
    lam_all = rates.rates(1, L)
    inv_tail = _reciprocal_tail(rates, L)
    parts = []
    bound = 0.0
    m = 1
    while True:
        if m > series.max_terms or m >= L // 10:
            raise TruncationFailure(f"explosion series did not settle in {m} terms")
        lm = lam_all[m - 1]
        ratio = np.delete(lam_all, m - 1) / lm
        # log c_m = sum_{l != m} -log(1 - lambda_m/lambda_l) over l <= L, plus the tail
        logc = float(-np.sum(np.log(np.abs(1.0 - 1.0 / ratio))))
        logc += lm * inv_tail
        sign = -1.0 if (m - 1) % 2 else 1.0
        term = sign * math.exp(logc - t * float(f(lm)))
        # -log(1-x) - x <= x^2 for x <= 1/2 bounds the neglected product factors
        bound += abs(term) * 1.01 * lm * lm * inv_tail / lam_all[-1]
        parts.append(term)
        total = math.fsum(parts)
        if m >= 2 and abs(term) < series.epsilon * abs(total) and abs(term) <= abs(parts[-2]):
            return SurvivalMass(total, abs(term) + bound, m)
        m += 1


# ---------------------------------------------------------------------------
# linear birth (Yule-Furry)


def yule_pmf(lam: float, f: BernsteinFunction, t: float, k: int, *, full_output: bool = False):
    """Pr{N^f(t) = k | N^f(0) = 1} = sum_j C(k-1, j)(-1)^j e^{-t f(lam (j+1))}."""
    _check_time(t)
    if k < 1:
        raise ValueError("k must be >= 1")
    if t == 0:
        res = (1.0 if k == 1 else 0.0), 0.0
    else:
        s = laplace_binomial_sum(k - 1, f, t, lam, 1.0)
        res = s.value, s.error
    return res if full_output else res[0]


def yule_cdf(lam: float, f: BernsteinFunction, t: float, K: int) -> float:
    """sum_{k=1}^{K} Pr{N^f(t) = k} = -sum_{j=1}^{K} C(K,j)(-1)^j e^{-t f(lam j)}.

    Given H, N is geometric with success probability e^{-lam H}, so the
    partial sum is 1 - E(1 - e^{-lam H})^K on {H < inf}.
    """
    _check_time(t)
    if K < 1:
        return 0.0
    if t == 0:
        return 1.0
    s = laplace_binomial_sum(K, f, t, lam, 0.0)
    return math.exp(-t * float(f.kill_rate)) - s.value


class TruncatedSum(NamedTuple):
    value: float
    terms: int
    last_term: float
    converged: bool


def yule_total_mass(
    lam: float,
    f: BernsteinFunction,
    t: float,
    series: SeriesTruncation = DEFAULT_SERIES,
    *,
    strict: bool = True,
) -> TruncatedSum:
    """Truncated sum_k yule_pmf under the stopping rule "50 consecutive terms
    each below epsilon/K".

    The Yule pmf is nonincreasing in k, so the rule holds at K exactly when
    the term at K falls below epsilon/(K+49); the stopping index is found by
    doubling and bisection and the partial sum comes from :func:`yule_cdf`.
    With ``strict`` a TruncationFailure is raised when the rule is not met by
    ``series.max_terms``; otherwise the sum at the cap is returned with
    ``converged=False``.
    """

    def ok(K):
        return yule_pmf(lam, f, t, K) < series.epsilon / (K + 49)

    K = max(series.min_terms, 1)
    while not ok(K):
        if K >= series.max_terms:
            if strict:
                raise TruncationFailure(
                    f"yule pmf terms still above epsilon/K at K={series.max_terms}"
                )
            return TruncatedSum(yule_cdf(lam, f, t, K), K, yule_pmf(lam, f, t, K), False)
        K = min(2 * K, series.max_terms)
    lo, hi = max(K // 2, series.min_terms), K
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    K = hi + 49
    return TruncatedSum(yule_cdf(lam, f, t, K), K, yule_pmf(lam, f, t, K), True)


def yule_factorial_moment(lam: float, f: BernsteinFunction, t: float, r: int):
    """E[N^f(t)(N^f(t)-1)...(N^f(t)-r+1)] = r! sum_m C(r-1,m)(-1)^m e^{-t f(-lam(r-m))}.

    Returns INFINITE when any extended value f(-lam(r-m)) diverges: always
    for stable exponents, for tempered stable unless r < theta/lam, for gamma
    unless r < a/lam, and for killed exponents (N = inf with positive
    probability).
    """
    _check_time(t)
    if r < 1:
        raise ValueError("r must be >= 1")
    if t == 0:
        return 1.0 if r == 1 else 0.0
    if isinstance(f, Killed) and f.kill_rate > 0:
        return INFINITE
    base = f.unkilled
    try:
        ext = [base.extended(lam * (r - m)) for m in range(r)]
    except DivergentExtension:
        return INFINITE
    s = alternating_binomial_sum(r - 1, lambda m: math.exp(-t * ext[m]), warn=True)
    return math.factorial(r) * s.value


def yule_mean(lam, f, t):
    return yule_factorial_moment(lam, f, t, 1)


def yule_variance(lam: float, f: BernsteinFunction, t: float):
    """2 e^{-t f(-2 lam)} - e^{-t f(-lam)} - e^{-2t f(-lam)}, or INFINITE."""
    _check_time(t)
    if t == 0:
        return 0.0
    if isinstance(f, Killed) and f.kill_rate > 0:
        return INFINITE
    try:
        e1 = f.unkilled.extended(lam)
        e2 = f.unkilled.extended(2 * lam)
    except DivergentExtension:
        return INFINITE
    return 2 * math.exp(-t * e2) - math.exp(-t * e1) - math.exp(-2 * t * e1)


# ---------------------------------------------------------------------------
# fractional variant


def fractional_pmf(
    rates: RateSchedule,
    nu: float,
    f: BernsteinFunction,
    t: float,
    k: int,
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Pr{N^nu(H^f(t)) = k | N^nu(0) = 1} for the fractional birth process of order nu.

    Each exponential of the nonlinear pmf becomes the Mittag-Leffler integral
    (sin(nu pi)/pi) int r^{nu-1} e^{-t f(r lambda_m^{1/nu})} / (r^{2nu} + 2 r^nu cos(nu pi) + 1) dr.
    """
    _check_time(t)
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    if k < 1:
        raise ValueError("k must be >= 1")
    if nu == 1:
        return nonlinear_pmf(rates, f, t, 1, k)
    if t == 0:
        return 1.0 if k == 1 else 0.0
    lam = rates.check_distinct(1, k)
    sign, logw = _vandermonde_weights(lam, float(np.sum(np.log(lam[:-1]))))
    tight = QuadratureSpec(spec.node_count, min(spec.tolerance_abs, 1e-14), min(spec.tolerance_rel, 1e-12))
    parts = []
    for m in range(k):
        c = lam[m] ** (1.0 / nu)
        ml = mittag_leffler_transform(
            nu, lambda x, c=c: t * float(f(x * c)), tight, scale=1.0 / lam[m]
        )
        parts.append(sign[m] * math.exp(logw[m]) * ml)
    value = math.fsum(parts)
    err = 4 * EPS * k * sum(abs(p) for p in parts) + 1e-12 * sum(abs(p) for p in parts)
    _warn_if_cancelled(value, err, f"fractional_pmf(k={k})")
    return value


# ---------------------------------------------------------------------------
# verification


def birth_master_equation_residual(
    rates: RateSchedule,
    f: BernsteinFunction,
    t: float,
    k: int,
    r0: int = 1,
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """|d/dt p_k - (-f(lambda_k) p_k + sum_{r0 <= r < k} p_r rate(r -> k))| at t > 0.

    The time derivative is a Richardson-extrapolated central difference of
    :func:`nonlinear_pmf`.
    """
    if t <= 0:
        raise ValueError("t must be > 0")

    def p(r, tt):
        return nonlinear_pmf(rates, f, tt, r0, r)

    lhs = richardson_derivative(lambda tt: p(k, tt), 1, t).value
    rhs = -float(f(rates.rate(k))) * p(k, t)
    for r in range(r0, k):
        rhs += p(r, t) * birth_transition_rate(rates, f, r, k, spec)
    return abs(lhs - rhs)
