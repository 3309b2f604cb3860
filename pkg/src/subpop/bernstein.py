"""Bernstein functions (Laplace exponents of subordinators) and Levy measures.

A Bernstein function here is ``f(x) = kill_rate + int_0^inf (1 - e^{-xs}) nu(ds)``
with zero drift. Named families carry closed forms; ``Custom`` wraps an
arbitrary Levy density and evaluates everything by quadrature.

>>> Stable(0.5)(4.0)
2.0
>>> Killed(Stable(0.5), 1.0)(4.0)
3.0
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import (
    DivergentExtension,
    PreconditionViolation,
    QuadratureFailure,
    UnsupportedFamily,
)
from .numerics import (
    DEFAULT_QUAD,
    AlternatingSum,
    QuadratureSpec,
    alternating_binomial_sum,
    integrate_interval,
)

__all__ = [
    "LevyMeasure",
    "BernsteinFunction",
    "Stable",
    "TemperedStable",
    "Gamma",
    "Custom",
    "Killed",
    "eval_f",
    "eval_f_extended",
    "eval_f_derivative",
    "levy_integral",
    "laplace_term",
    "laplace_binomial_sum",
    "compile_density",
    "from_config",
]


# ---------------------------------------------------------------------------
# density expressions

_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "pow": np.power,
    "gamma": gamma_fn,
    "sqrt": np.sqrt,
}


def compile_density(expr: str) -> Callable:
    """Compile an arithmetic expression in ``s`` into a vectorised function.

    Grammar: numbers, the variable ``s``, ``+ - * /``, ``^`` or ``**`` for
    powers, and calls to exp, log, pow, gamma, sqrt. Anything else raises
    ValueError.

    >>> float(compile_density("0.5 * s^(-1.5) / gamma(0.5)")(np.array([1.0]))[0])
    0.28209479177387814
    """
    # '^' would parse as XOR, which binds looser than '*'; treat it as '**'
    try:
        tree = ast.parse(expr.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse density expression {expr!r}") from exc

    binops = {
        ast.Add: np.add,
        ast.Sub: np.subtract,
        ast.Mult: np.multiply,
        ast.Div: np.divide,
        ast.Pow: np.power,
    }

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda s: v
        if isinstance(node, ast.Name):
            if node.id != "s":
                raise ValueError(f"unknown name {node.id!r} in density expression")
            return lambda s: s
        if isinstance(node, ast.BinOp) and type(node.op) in binops:
            op = binops[type(node.op)]
            left, right = build(node.left), build(node.right)
            return lambda s: op(left(s), right(s))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda s: -inner(s)
            return inner
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and not node.keywords
        ):
            fn = _FUNCS[node.func.id]
            args = [build(a) for a in node.args]
            return lambda s: fn(*(a(s) for a in args))
        raise ValueError(f"unsupported construct in density expression: {ast.dump(node)}")

    body = build(tree)

    def density(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(body(s), dtype=float), s.shape).copy()

    return density


# ---------------------------------------------------------------------------
# Levy measures


@dataclass(frozen=True)
class LevyMeasure:
    """Levy density with the metadata quadrature needs.

    ``singularity_order`` p: nu(s) ~ C s^{-1-p} as s -> 0 (0 <= p < 1).
    ``exponential_tail_rate`` theta: nu(s) <= C e^{-theta s} for large s.
    ``tail_index`` q: nu(s) ~ C s^{-1-q} for large s, used when there is no
    exponential tail.
    """

    density: Callable
    singularity_order: float
    exponential_tail_rate: Optional[float] = None
    tail_index: Optional[float] = None
    expression: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        p = self.singularity_order
        if not 0 <= p < 1:
            raise ValueError("singularity_order must lie in [0, 1)")
        if self.exponential_tail_rate is not None and self.exponential_tail_rate < 0:
            raise ValueError("exponential_tail_rate must be >= 0")
        if self.tail_index is not None and self.tail_index <= 0:
            raise ValueError("tail_index must be positive")

    def __call__(self, s):
        return self.density(s)

    @classmethod
    def from_expression(cls, expr, singularity_order, exponential_tail_rate=None, tail_index=None):
        return cls(
            compile_density(expr),
            singularity_order,
            exponential_tail_rate,
            tail_index,
            expression=expr,
        )

    def check(self, spec=DEFAULT_QUAD):
        """Verify nonnegativity on a grid and int min(s, 1) nu(ds) < inf."""
        grid = np.logspace(-8, 4, 97)
        vals = np.asarray(self.density(grid), dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("Levy density must be finite and nonnegative on (0, inf)")
        mass = _levy_quadrature(self, lambda s: np.minimum(s, 1.0), spec, ())
        if not np.isfinite(mass):
            raise ValueError("Levy density fails int min(s,1) nu(ds) < inf")
        return mass


def _decades(lo, hi):
    if not hi > lo > 0:
        return []
    k0, k1 = math.ceil(math.log10(lo)), math.floor(math.log10(hi))
    return [10.0**k for k in range(k0, k1 + 1) if lo < 10.0**k < hi]


def _levy_quadrature(measure, g, spec, breakpoints):
    """int_0^inf g(s) nu(s) ds, split at 1 and the breakpoints.

    [0, b0] uses s = b0 u^{1/(1-p)}, which turns s^{-p} into a constant;
    the tail uses quad on [b, inf) for exponential tails and
    s = b u^{-1/q} for power tails.
    """
    nu = measure.density
    p = measure.singularity_order
    cuts = sorted({1.0, *[b for b in breakpoints if b > 0 and np.isfinite(b)]})
    cuts = sorted(set(cuts) | set(_decades(cuts[0], cuts[-1])))
    piece = QuadratureSpec(spec.node_count, spec.tolerance_abs * 1e-4, spec.tolerance_rel)

    def call(s):
        return float(g(s)) * float(nu(s))

    b0 = cuts[0]
    expo = 1.0 / (1.0 - p)

    def head(u):
        if u == 0.0:
            return 0.0 if p == 0 else _head_limit(u)
        s = b0 * u**expo
        return call(s) * b0 * expo * u ** (expo - 1.0)

    def _head_limit(u):
        u = 1e-300
        s = b0 * u**expo
        return call(s) * b0 * expo * u ** (expo - 1.0)

    total, _ = integrate_interval(head, 0.0, 1.0, piece, points=(1e-12, 1e-8, 1e-4, 1e-2, 0.1))
    for a, b in zip(cuts[:-1], cuts[1:]):
        v, _ = integrate_interval(call, a, b, piece)
        total += v

    b = cuts[-1]
    theta = measure.exponential_tail_rate
    q = measure.tail_index
    if theta:
        # several e-folds first so quad's infinite map sees a smooth remainder
        stops = [b + m / theta for m in (1, 4, 16, 64)]
        prev = b
        for st in stops:
            v, _ = integrate_interval(call, prev, st, piece)
            total += v
            prev = st
        v, _ = integrate_interval(call, prev, np.inf, piece)
        total += v
    elif q:
        def tail(u):
            if u == 0.0:
                return 0.0
            s = b * u ** (-1.0 / q)
            return call(s) * (b / q) * u ** (-1.0 / q - 1.0)

        v, _ = integrate_interval(tail, 0.0, 1.0, piece, points=(1e-12, 1e-8, 1e-4, 1e-2))
        total += v
    else:
        v, _ = integrate_interval(call, b, np.inf, piece)
        total += v
    return total


def _probe_order_one(g, b0):
    # |g(s)|/s must stay bounded as s -> 0
    r = [abs(float(g(b0 * 10.0**-e))) / (b0 * 10.0**-e) for e in (6, 9, 12)]
    if r[2] > 1.0 and r[2] > 10 * r[1] and r[1] > 10 * r[0]:
        raise PreconditionViolation(
            "weight g(s) is not O(s) near 0; the Levy integral would diverge"
        )


# ---------------------------------------------------------------------------
# Bernstein functions


class BernsteinFunction:
    """Base class; subclasses are frozen dataclasses."""

    kill_rate = 0.0
    supports_complex = True
    #: f extends analytically to Re x > -analytic_margin
    analytic_margin = 0.0
    #: whether f stays bounded up to that boundary
    margin_bounded = True

    @property
    def measure(self) -> LevyMeasure:
        raise NotImplementedError

    @property
    def singularity_order(self) -> float:
        return self.measure.singularity_order

    @property
    def unkilled(self) -> "BernsteinFunction":
        return self

    def __call__(self, x):
        raise NotImplementedError

    def complex_value(self, z):
        """Analytic continuation to Re z > 0 (named families only)."""
        raise UnsupportedFamily(f"{type(self).__name__} has no closed-form continuation")

    def extended(self, x):
        raise NotImplementedError

    def derivative(self, n, x):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError("stable index alpha must lie in (0, 1)")


def _falling(alpha, n):
    out = 1.0
    for i in range(n):
        out *= alpha - i
    return out


@dataclass(frozen=True)
class Stable(BernsteinFunction):
    """f(x) = x^alpha, nu(ds) = alpha s^{-alpha-1} / Gamma(1-alpha) ds."""

    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def measure(self):
        a = self.alpha
        c = a / math.gamma(1 - a)
        return LevyMeasure(lambda s: c * np.asarray(s, float) ** (-a - 1), a, None, a)

    def __call__(self, x):
        return np.power(x, self.alpha) if np.ndim(x) else float(x) ** self.alpha

    def complex_value(self, z):
        return np.power(np.asarray(z, dtype=complex), self.alpha)

    def extended(self, x):
        raise DivergentExtension("stable Levy measure is heavy-tailed: f(-x) diverges for every x > 0")

    def derivative(self, n, x):
        return _falling(self.alpha, n) * np.power(x, self.alpha - n)

    def to_config(self):
        return {"kind": "stable", "alpha": self.alpha}


@dataclass(frozen=True)
class TemperedStable(BernsteinFunction):
    """f(x) = (x + theta)^alpha - theta^alpha."""

    alpha: float
    theta: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    @property
    def measure(self):
        a, th = self.alpha, self.theta
        c = a / math.gamma(1 - a)
        return LevyMeasure(
            lambda s: c * np.exp(-th * np.asarray(s, float)) * np.asarray(s, float) ** (-a - 1),
            a,
            th,
        )

    def __call__(self, x):
        a, th = self.alpha, self.theta
        # (x+th)^a - th^a = th^a expm1(a log1p(x/th)) without cancellation
        return th**a * np.expm1(a * np.log1p(np.asarray(x, float) / th)) if np.ndim(x) else (
            th**a * math.expm1(a * math.log1p(x / th))
        )

    @property
    def analytic_margin(self):
        return self.theta

    def complex_value(self, z):
        z = np.asarray(z, dtype=complex)
        a, th = self.alpha, self.theta
        return th**a * np.expm1(a * np.log1p(z / th))

    def extended(self, x):
        if x < self.theta:
            a, th = self.alpha, self.theta
            return th**a * math.expm1(a * math.log1p(-x / th))
        raise DivergentExtension(f"tempered-stable f(-x) requires x < theta={self.theta}")

    def derivative(self, n, x):
        return _falling(self.alpha, n) * np.power(np.asarray(x, float) + self.theta, self.alpha - n)

    def to_config(self):
        return {"kind": "tempered_stable", "alpha": self.alpha, "theta": self.theta}


@dataclass(frozen=True)
class Gamma(BernsteinFunction):
    """f(x) = log(1 + x/a), nu(ds) = e^{-as}/s ds."""

    a: float

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("gamma rate a must be positive")

    @property
    def measure(self):
        a = self.a
        return LevyMeasure(lambda s: np.exp(-a * np.asarray(s, float)) / np.asarray(s, float), 0.0, a)

    def __call__(self, x):
        return np.log1p(np.asarray(x, float) / self.a) if np.ndim(x) else math.log1p(x / self.a)

    margin_bounded = False

    @property
    def analytic_margin(self):
        return self.a

    def complex_value(self, z):
        return np.log1p(np.asarray(z, dtype=complex) / self.a)

    def extended(self, x):
        if x < self.a:
            return math.log1p(-x / self.a)
        raise DivergentExtension(f"gamma f(-x) requires x < a={self.a}")

    def derivative(self, n, x):
        return (-1) ** (n + 1) * math.factorial(n - 1) / np.power(np.asarray(x, float) + self.a, n)

    def to_config(self):
        return {"kind": "gamma", "a": self.a}


@dataclass(frozen=True)
class Custom(BernsteinFunction):
    """Bernstein function given only through its Levy density."""

    levy: LevyMeasure
    spec: QuadratureSpec = DEFAULT_QUAD
    check: bool = field(default=True, compare=False)

    supports_complex = False

    def __post_init__(self):
        if self.check:
            self.levy.check(self.spec)

    @property
    def measure(self):
        return self.levy

    def __call__(self, x):
        if np.ndim(x):
            return np.array([self(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        if x < 0:
            raise ValueError("x must be >= 0")
        if x == 0:
            return 0.0
        return _levy_quadrature(self.levy, lambda s: -math.expm1(-x * s), self.spec, (1.0 / x,))

    def extended(self, x):
        th = self.levy.exponential_tail_rate
        if not th or x >= th:
            raise DivergentExtension(
                f"custom f(-x) needs an exponential tail rate above x={x}"
            )
        # the weight grows like e^{xs}; the e^{-theta s} tail keeps it integrable
        shifted = LevyMeasure(self.levy.density, self.levy.singularity_order, th - x)
        return _levy_quadrature(shifted, lambda s: -math.expm1(x * s), self.spec, (1.0 / x,))

    def derivative(self, n, x):
        if np.ndim(x):
            return np.array([self.derivative(n, float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        val = _levy_quadrature(
            self.levy, lambda s: s**n * math.exp(-x * s), self.spec, (1.0 / x, n / x)
        )
        return (-1) ** (n + 1) * val

    def to_config(self):
        if self.levy.expression is None:
            raise UnsupportedFamily("custom density given as a Python callable has no config form")
        out = {
            "kind": "custom",
            "singularity_order": self.levy.singularity_order,
            "exponential_tail_rate": self.levy.exponential_tail_rate,
            "density": self.levy.expression,
        }
        if self.levy.tail_index is not None:
            out["tail_index"] = self.levy.tail_index
        return out


@dataclass(frozen=True)
class Killed(BernsteinFunction):
    """g(x) = kill_rate + f(x): the subordinator jumps to +inf at an Exp(kill_rate) time."""

    base: BernsteinFunction
    kill_rate: float

    def __post_init__(self):
        if self.kill_rate < 0:
            raise ValueError("kill_rate must be >= 0")
        if isinstance(self.base, Killed):
            raise ValueError("nest killing by adding rates instead")

    @property
    def supports_complex(self):
        return self.base.supports_complex

    @property
    def measure(self):
        return self.base.measure

    @property
    def analytic_margin(self):
        return self.base.analytic_margin

    @property
    def margin_bounded(self):
        return self.base.margin_bounded

    @property
    def unkilled(self):
        return self.base

    def __call__(self, x):
        return self.kill_rate + self.base(x)

    def complex_value(self, z):
        return self.kill_rate + self.base.complex_value(z)

    def extended(self, x):
        raise PreconditionViolation("f(-x) is defined for unkilled subordinators only")

    def derivative(self, n, x):
        return self.base.derivative(n, x)

    def to_config(self):
        return {"kind": "killed", "kill_rate": self.kill_rate, "base": self.base.to_config()}


# ---------------------------------------------------------------------------
# operations


def eval_f(f: BernsteinFunction, x: float) -> float:
    if x < 0:
        raise ValueError("x must be >= 0")
    return float(f(x))


def eval_f_extended(f: BernsteinFunction, x: float) -> float:
    """f(-x) = int (1 - e^{sx}) nu(ds) for x > 0, when the integral converges.

    Convergence is decided from the family parameters (tail rate theta or
    gamma rate a), never by probing a divergent integral.
    """
    if x <= 0:
        raise ValueError("x must be > 0")
    return float(f.extended(x))


def eval_f_derivative(f: BernsteinFunction, n: int, x: float) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if x <= 0:
        raise ValueError("x must be > 0")
    return float(f.derivative(n, x))


def levy_integral(
    f: BernsteinFunction,
    g: Callable[[float], float],
    spec: QuadratureSpec = DEFAULT_QUAD,
    breakpoints=(),
    check: bool = True,
) -> float:
    """int_0^inf g(s) nu(ds) for the Levy measure of ``f``.

    The caller certifies g(s) = O(s) at 0 and g bounded; with ``check`` the
    first condition is probed numerically. ``breakpoints`` mark scales where
    g changes character (e.g. 1/x for g = 1 - e^{-xs}).
    """
    if check:
        _probe_order_one(g, min([1.0, *[b for b in breakpoints if b > 0]]))
    try:
        return float(_levy_quadrature(f.measure, g, spec, breakpoints))
    except QuadratureFailure:
        raise
    except (OverflowError, ZeroDivisionError) as exc:
        raise QuadratureFailure(f"Levy integral failed: {exc}") from exc


def laplace_term(f: BernsteinFunction, t: float, scale: float, shift: float = 0.0):
    """j -> exp(-t f(scale (j + shift))), accepting complex j when f allows it."""

    def term(j):
        if isinstance(j, complex) or np.iscomplexobj(j):
            return np.exp(-t * f.complex_value(scale * (j + shift)))
        return math.exp(-t * float(f(scale * (j + shift))))

    return term


def laplace_binomial_sum(
    n: int,
    f: BernsteinFunction,
    t: float,
    scale: float,
    shift: float = 0.0,
    spec: QuadratureSpec = DEFAULT_QUAD,
    warn: bool = True,
) -> AlternatingSum:
    """sum_{j=0}^{n} C(n,j)(-1)^j e^{-t f(scale (j + shift))} = E[e^{-scale shift H}(1 - e^{-scale H})^n].

    For named families the contour route is placed inside the half-plane
    where z -> f(scale (z + shift)) is analytic, as far left as is safe.
    """
    term = laplace_term(f, t, scale, shift)
    if not f.supports_complex:
        return alternating_binomial_sum(n, term, spec=spec, warn=warn)
    lo = -shift - f.analytic_margin / scale
    if lo < 0:
        frac = 0.1 if f.margin_bounded else 0.5
        return alternating_binomial_sum(
            n, term, analytic=True, abscissa=lo * (1 - frac), spec=spec, warn=warn
        )
    return alternating_binomial_sum(
        n, term, analytic=True, first_analytic=1, spec=spec, warn=warn
    )


# ---------------------------------------------------------------------------
# configuration


def from_config(cfg: dict) -> BernsteinFunction:
    """Build a Bernstein function from a config mapping (see ``to_config``)."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError("subordinator config needs a 'kind'")
    kind = cfg["kind"]
    allowed = {
        "stable": {"alpha"},
        "tempered_stable": {"alpha", "theta"},
        "gamma": {"a"},
        "custom": {"singularity_order", "exponential_tail_rate", "density", "tail_index"},
        "killed": {"kill_rate", "base"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown subordinator kind {kind!r}")
    extra = set(cfg) - allowed[kind] - {"kind"}
    if extra:
        raise ValueError(f"unknown keys for {kind}: {sorted(extra)}")
    try:
        if kind == "stable":
            return Stable(float(cfg["alpha"]))
        if kind == "tempered_stable":
            return TemperedStable(float(cfg["alpha"]), float(cfg["theta"]))
        if kind == "gamma":
            return Gamma(float(cfg["a"]))
        if kind == "killed":
            return Killed(from_config(cfg["base"]), float(cfg["kill_rate"]))
        tail = cfg.get("exponential_tail_rate")
        idx = cfg.get("tail_index")
        measure = LevyMeasure.from_expression(
            str(cfg["density"]),
            float(cfg["singularity_order"]),
            None if tail is None else float(tail),
            None if idx is None else float(idx),
        )
        return Custom(measure)
    except KeyError as exc:
        raise ValueError(f"missing key {exc.args[0]!r} for {kind}") from exc
