"""Process descriptors, analytic dispatch and distribution tables."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

from . import birth, birthdeath, death
from .bernstein import BernsteinFunction
from .birth import RateSchedule
from .errors import CancellationWarning, ConfigError
from .numerics import DEFAULT_QUAD, DEFAULT_SERIES, EPS, QuadratureSpec, SeriesTruncation

__all__ = ["KINDS", "ProcessSpec", "DistributionTable", "distribution_table"]

KINDS = ("yule", "birth", "death", "sublinear_death", "birth_death")

#: consecutive negligible terms required before a pmf table is truncated
TAIL_RUN = 50


@dataclass(frozen=True)
class ProcessSpec:
    """Which classical process is time-changed, with its parameters.

    yule: rates lam k from one individual. birth: a RateSchedule from
    ``initial``. death / sublinear_death: rate mu, ``initial`` = n0.
    birth_death: rates lam, mu from ``initial`` progenitors.
    """

    kind: str
    initial: int = 1
    lam: float = 1.0
    mu: float = 1.0
    rates: Optional[RateSchedule] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown process kind {self.kind!r}; expected one of {KINDS}")
        if self.initial < 1:
            raise ConfigError("initial population must be >= 1")
        if self.kind == "yule" and self.initial != 1:
            raise ConfigError("the yule process starts from one individual; use kind 'birth'")
        if self.kind in ("yule", "birth_death") and not self.lam > 0:
            raise ConfigError("lam must be positive")
        if self.kind in ("death", "sublinear_death", "birth_death") and not self.mu > 0:
            raise ConfigError("mu must be positive")
        if self.kind == "birth_death" and self.initial != 1 and self.lam != self.mu:
            raise ConfigError("several progenitors are supported for lam == mu only")
        if self.kind == "birth" and self.rates is None:
            object.__setattr__(self, "rates", RateSchedule.linear(self.lam))
        if self.kind != "birth" and self.rates is not None:
            raise ConfigError("a rate schedule only applies to kind 'birth'")

    # ----- classical dynamics

    @property
    def is_birth(self) -> bool:
        return self.kind in ("yule", "birth")

    @property
    def is_death(self) -> bool:
        return self.kind in ("death", "sublinear_death")

    def schedule(self) -> RateSchedule:
        return RateSchedule.linear(self.lam) if self.kind == "yule" else self.rates

    def up_rate(self, k: int) -> float:
        if self.is_birth:
            return self.schedule().rate(k)
        if self.kind == "birth_death":
            return self.lam * k
        return 0.0

    def down_rate(self, k: int) -> float:
        if k <= 0 or self.is_birth:
            return 0.0
        if self.kind == "death":
            return self.mu * k
        if self.kind == "sublinear_death":
            return self.mu * (self.initial - k + 1)
        return self.mu * k

    def min_state(self) -> int:
        return self.initial if self.is_birth else 0

    def max_state(self) -> Optional[int]:
        return self.initial if self.is_death else None

    def death_spec(self) -> death.DeathSpec:
        variant = "linear" if self.kind == "death" else "sublinear"
        return death.DeathSpec(self.mu, self.initial, variant)

    def bd_spec(self) -> birthdeath.BDSpec:
        return birthdeath.BDSpec(self.lam, self.mu, self.initial)

    # ----- analytic laws

    def pmf(self, f: BernsteinFunction, t: float, k: int, *, full_output=False, series=DEFAULT_SERIES, quad=DEFAULT_QUAD):
        """Analytic Pr{X^f(t) = k}; with ``full_output`` also an error estimate."""
        if k < self.min_state() or (self.max_state() is not None and k > self.max_state()):
            val, err = 0.0, 0.0
        elif self.kind == "yule":
            val, err = birth.yule_pmf(self.lam, f, t, k, full_output=True)
        elif self.kind == "birth":
            val, err = birth.nonlinear_pmf(self.rates, f, t, self.initial, k, full_output=True)
        elif self.is_death:
            val = death.death_pmf(self.death_spec(), f, t, k)
            err = _declared(val, quad)
        else:
            val = birthdeath.bd_pmf(self.bd_spec(), f, t, k, series=series, quad=quad)
            err = _declared(val, quad)
        return (val, err) if full_output else val

    def extinction(self, f: BernsteinFunction, t: float) -> float:
        if self.is_birth:
            return 0.0
        if self.is_death:
            return death.death_extinction(self.death_spec(), f, t)
        return birthdeath.bd_extinction(self.bd_spec(), f, t)

    # ----- configuration

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "initial": self.initial}
        if self.kind in ("yule", "birth_death"):
            cfg["lam"] = self.lam
        if self.kind in ("death", "sublinear_death", "birth_death"):
            cfg["mu"] = self.mu
        if self.kind == "birth":
            cfg["rates"] = self.rates.to_config()
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "ProcessSpec":
        if not isinstance(cfg, dict):
            raise ConfigError("process must be a mapping")
        kind = cfg.get("kind")
        allowed = {
            "yule": {"lam"},
            "birth": {"rates"},
            "death": {"mu"},
            "sublinear_death": {"mu"},
            "birth_death": {"lam", "mu"},
        }
        if kind not in allowed:
            raise ConfigError(f"unknown process kind {kind!r}")
        extra = set(cfg) - allowed[kind] - {"kind", "initial"}
        if extra:
            raise ConfigError(f"unknown keys for process {kind!r}: {sorted(extra)}")
        kw = {"kind": kind, "initial": int(cfg.get("initial", 1))}
        try:
            if "lam" in cfg:
                kw["lam"] = float(cfg["lam"])
            if "mu" in cfg:
                kw["mu"] = float(cfg["mu"])
            if "rates" in cfg:
                kw["rates"] = RateSchedule.from_config(cfg["rates"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad process parameter: {exc}") from exc
        return cls(**kw)


def _declared(val, quad):
    """Error bound declared from the quadrature tolerances when no estimate is tracked."""
    return max(quad.tolerance_abs, quad.tolerance_rel * abs(val), EPS * abs(val))


@dataclass
class DistributionTable:
    """pmf over states with per-entry error estimates and the declared truncation."""

    process: dict
    subordinator: dict
    t: float
    states: list
    probabilities: list
    errors: list
    warnings: list
    truncated: bool = False
    last_state: Optional[int] = None
    rule: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(self.probabilities)

    def rows(self):
        for k, p, e, w in zip(self.states, self.probabilities, self.errors, self.warnings):
            yield {"t": self.t, "k": k, "probability": p, "abs_error_bound": e, "warnings": w}


def _entry(proc, f, t, k, series, quad):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CancellationWarning)
        p, e = proc.pmf(f, t, k, full_output=True, series=series, quad=quad)
    msgs = sorted({str(w.message) for w in caught if issubclass(w.category, CancellationWarning)})
    return p, e, "; ".join(msgs)


def distribution_table(
    proc: ProcessSpec,
    f: BernsteinFunction,
    t: float,
    states=None,
    *,
    series: SeriesTruncation = DEFAULT_SERIES,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> DistributionTable:
    """Tabulate the analytic pmf.

    With explicit ``states`` exactly those are evaluated. Otherwise death
    processes list 0..n0 and the others run from the lowest state until
    TAIL_RUN consecutive entries fall below epsilon/K (K the current state)
    or ``series.max_terms`` states have been visited.
    """
    tab = DistributionTable(proc.to_config(), f.to_config(), t, [], [], [], [])
    if states is not None:
        for k in states:
            p, e, w = _entry(proc, f, t, int(k), series, quad)
            tab.states.append(int(k))
            tab.probabilities.append(p)
            tab.errors.append(e)
            tab.warnings.append(w)
        return tab
    if proc.max_state() is not None:
        return distribution_table(proc, f, t, range(0, proc.max_state() + 1), series=series, quad=quad)
    k = proc.min_state()
    run = 0
    visited = 0
    while True:
        p, e, w = _entry(proc, f, t, k, series, quad)
        tab.states.append(k)
        tab.probabilities.append(p)
        tab.errors.append(e)
        tab.warnings.append(w)
        visited += 1
        run = run + 1 if abs(p) < series.epsilon / max(k, 1) else 0
        if run >= TAIL_RUN and visited >= series.min_terms:
            break
        if visited >= series.max_terms:
            tab.truncated = True
            break
        k += 1
    tab.last_state = k
    tab.rule = f"{TAIL_RUN} consecutive entries below epsilon/K, epsilon={series.epsilon:g}"
    return tab
