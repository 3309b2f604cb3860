"""Command-line front end.

    subpop pmf --config run.json --format csv --out table.csv

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 validation
failure. CSV output uses 17 significant digits, '.' decimals and LF line
endings; rows are sorted by t and then by k.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

from . import bernstein, birth, birthdeath, death
from .bernstein import BernsteinFunction, Custom, Stable
from .errors import (
    CancellationWarning,
    ConfigError,
    DegenerateRates,
    InfiniteMoment,
    PreconditionViolation,
    SubpopError,
    UnsupportedFamily,
    UnsupportedOrder,
)
from .montecarlo import Seed, estimate_subordinated_pmf
from .numerics import DEFAULT_QUAD, DEFAULT_SERIES, QuadratureSpec, SeriesTruncation
from .process import ProcessSpec, distribution_table
from .validation import run_suite

__all__ = ["RunConfig", "main", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_VALIDATION"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4

COMMANDS = ("pmf", "extinction", "moments", "sojourn", "explode", "simulate", "validate")

_QUAD_KEYS = {"node_count", "tolerance_abs", "tolerance_rel", "max_refinements"}
_SERIES_KEYS = {"epsilon", "min_terms", "max_terms"}


# ---------------------------------------------------------------------------
# configuration


def _time(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"time {v!r} is not a number")
    t = float(v)
    if not t >= 0:
        raise ConfigError(f"time {v!r} must be >= 0")
    return t


def _int(v, what) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{what} must be an integer, got {v!r}")
    return v


def _states(v):
    if v is None:
        return None
    if isinstance(v, dict):
        extra = set(v) - {"start", "stop"}
        if extra or "stop" not in v:
            raise ConfigError("a state range is {'start': a, 'stop': b} with b inclusive")
        start = _int(v.get("start", 0), "states.start")
        stop = _int(v["stop"], "states.stop")
        if start < 0 or stop < start:
            raise ConfigError("state range needs 0 <= start <= stop")
        return {"start": start, "stop": stop}
    if isinstance(v, list):
        out = [_int(k, "state") for k in v]
        if any(k < 0 for k in out):
            raise ConfigError("states must be nonnegative")
        return out
    raise ConfigError("states must be a list of integers or a {'start', 'stop'} range")


@dataclass
class RunConfig:
    """Everything a subcommand needs; mirrors the JSON config document.

    ``states`` is a list or an inclusive {"start", "stop"} range; ``times``
    may contain "inf" (sojourn only). ``quadrature`` and ``series`` override
    fields of the default QuadratureSpec and SeriesTruncation.
    ``reference_offset`` is added to the analytic reference in ``simulate``
    and exists to check that the harness can fail.
    """

    process: ProcessSpec
    subordinator: dict
    times: list = field(default_factory=lambda: [1.0])
    states: Optional[object] = None
    output: str = "csv"
    seed: int = 0
    n_paths: int = 100_000
    workers: int = 1
    orders: list = field(default_factory=lambda: [1, 2])
    regular: Optional[bool] = None
    quadrature: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    reference_offset: float = 0.0

    KEYS = (
        "process", "subordinator", "times", "states", "output", "seed", "n_paths",
        "workers", "orders", "regular", "tolerances", "reference_offset",
    )

    def __post_init__(self):
        try:
            bernstein.from_config(self.subordinator)
        except SubpopError as exc:
            raise ConfigError(str(exc)) from exc
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad subordinator: {exc}") from exc
        if self.output not in ("csv", "json"):
            raise ConfigError("output must be 'csv' or 'json'")
        if not self.times:
            raise ConfigError("times must not be empty")
        if self.n_paths < 1000:
            raise ConfigError("n_paths must be >= 1000")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if any(r < 1 for r in self.orders):
            raise ConfigError("moment orders must be >= 1")
        if set(self.quadrature) - _QUAD_KEYS:
            raise ConfigError(f"unknown quadrature keys {sorted(set(self.quadrature) - _QUAD_KEYS)}")
        if set(self.series) - _SERIES_KEYS:
            raise ConfigError(f"unknown series keys {sorted(set(self.series) - _SERIES_KEYS)}")
        try:
            self.quad_spec()
            self.series_spec()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad tolerance override: {exc}") from exc

    def f(self) -> BernsteinFunction:
        return bernstein.from_config(self.subordinator)

    def quad_spec(self) -> QuadratureSpec:
        return replace(DEFAULT_QUAD, **self.quadrature)

    def series_spec(self) -> SeriesTruncation:
        return replace(DEFAULT_SERIES, **self.series)

    def state_list(self) -> Optional[list]:
        if self.states is None:
            return None
        if isinstance(self.states, dict):
            return list(range(self.states["start"], self.states["stop"] + 1))
        return sorted(set(self.states))

    def to_dict(self) -> dict:
        out = {
            "process": self.process.to_config(),
            "subordinator": self.subordinator,
            "times": ["inf" if math.isinf(t) else t for t in self.times],
            "output": self.output,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "workers": self.workers,
            "orders": list(self.orders),
            "reference_offset": self.reference_offset,
        }
        if self.states is not None:
            out["states"] = self.states
        if self.regular is not None:
            out["regular"] = self.regular
        tol = {}
        if self.quadrature:
            tol["quadrature"] = dict(self.quadrature)
        if self.series:
            tol["series"] = dict(self.series)
        if tol:
            out["tolerances"] = tol
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(doc) - set(cls.KEYS)
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        for key in ("process", "subordinator"):
            if key not in doc:
                raise ConfigError(f"config needs {key!r}")
        tol = doc.get("tolerances", {})
        if not isinstance(tol, dict) or set(tol) - {"quadrature", "series"}:
            raise ConfigError("tolerances takes 'quadrature' and 'series' mappings")
        times = doc.get("times", [1.0])
        if not isinstance(times, list):
            raise ConfigError("times must be a list")
        regular = doc.get("regular")
        if regular is not None and not isinstance(regular, bool):
            raise ConfigError("regular must be true or false")
        offset = doc.get("reference_offset", 0.0)
        if isinstance(offset, bool) or not isinstance(offset, (int, float)):
            raise ConfigError("reference_offset must be a number")
        return cls(
            process=ProcessSpec.from_config(doc["process"]),
            subordinator=doc["subordinator"],
            times=[_time(t) for t in times],
            states=_states(doc.get("states")),
            output=doc.get("output", "csv"),
            seed=_int(doc.get("seed", 0), "seed"),
            n_paths=_int(doc.get("n_paths", 100_000), "n_paths"),
            workers=_int(doc.get("workers", 1), "workers"),
            orders=[_int(r, "order") for r in doc.get("orders", [1, 2])],
            regular=regular,
            quadrature=dict(tol.get("quadrature", {})),
            series=dict(tol.get("series", {})),
            reference_offset=float(offset),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


# ---------------------------------------------------------------------------
# output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


class Table:
    def __init__(self, command: str, columns: list):
        self.command = command
        self.columns = columns
        self.rows: list[dict] = []
        self.notes: dict = {}

    def add(self, **row):
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self, cfg: RunConfig) -> str:
        doc = {
            "command": self.command,
            "config": cfg.to_dict(),
            "columns": self.columns,
            "rows": [{c: _json_value(row.get(c)) for c in self.columns} for row in self.rows],
        }
        if self.notes:
            doc["notes"] = self.notes
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


class _Op:
    """Name of the library call in progress, for error messages."""

    name = "setup"


def _finite_times(cfg):
    if any(math.isinf(t) for t in cfg.times):
        raise ConfigError("t = inf is only accepted by the sojourn command")
    return sorted(cfg.times)


# ---------------------------------------------------------------------------
# commands


def cmd_pmf(cfg: RunConfig) -> Table:
    proc, f = cfg.process, cfg.f()
    tab = Table("pmf", ["t", "k", "probability", "abs_error_bound", "warnings"])
    states = cfg.state_list()
    for t in _finite_times(cfg):
        _Op.name = f"pmf table ({proc.kind}, t={t!r})"
        dt = distribution_table(proc, f, t, states, series=cfg.series_spec(), quad=cfg.quad_spec())
        for row in sorted(dt.rows(), key=lambda r: r["k"]):
            tab.add(**row)
        if states is None:
            tab.notes[_cell(t)] = {
                "last_state": dt.last_state,
                "truncated": dt.truncated,
                "rule": dt.rule,
            }
    if any(r["warnings"] for r in tab.rows):
        tab.notes["recommendation"] = "entries carry cancellation warnings; cross-check with 'subpop simulate'"
    return tab


def cmd_extinction(cfg: RunConfig) -> Table:
    proc, f = cfg.process, cfg.f()
    if proc.is_birth:
        raise ConfigError("extinction needs a death or birth_death process")
    tab = Table("extinction", ["t", "extinction_probability"])
    for t in _finite_times(cfg):
        _Op.name = f"extinction ({proc.kind}, t={t!r})"
        tab.add(t=t, extinction_probability=proc.extinction(f, t))
    return tab


def cmd_moments(cfg: RunConfig) -> Table:
    proc, f = cfg.process, cfg.f()
    tab = Table("moments", ["t", "quantity", "order", "value", "status"])

    def add(t, quantity, order, value):
        if isinstance(value, InfiniteMoment):
            tab.add(t=t, quantity=quantity, order=order, value=None, status="INFINITE")
        else:
            tab.add(t=t, quantity=quantity, order=order, value=value, status="FINITE")

    if proc.kind == "yule":
        for t in _finite_times(cfg):
            _Op.name = f"yule moments (t={t!r})"
            for r in sorted(cfg.orders):
                add(t, "factorial_moment", r, birth.yule_factorial_moment(proc.lam, f, t, r))
            add(t, "mean", 1, birth.yule_mean(proc.lam, f, t))
            add(t, "variance", 2, birth.yule_variance(proc.lam, f, t))
    elif proc.kind == "death":
        spec = proc.death_spec()
        for t in _finite_times(cfg):
            _Op.name = f"death moments (t={t!r})"
            for r in sorted(cfg.orders):
                if r > spec.n0:
                    raise ConfigError(f"moment order {r} exceeds n0 = {spec.n0}")
                add(t, "factorial_moment", r, death.death_factorial_moment(spec, f, t, r))
            add(t, "mean", 1, death.death_mean(spec, f, t))
            add(t, "variance", 2, death.death_variance(spec, f, t))
    else:
        raise ConfigError("moments are available for the yule and linear death processes")
    return tab


def cmd_sojourn(cfg: RunConfig) -> Table:
    proc, f = cfg.process, cfg.f()
    if proc.kind != "birth_death" or proc.lam != proc.mu:
        raise ConfigError("sojourn times need a birth_death process with lam = mu")
    states = cfg.state_list()
    if not states or min(states) < 1:
        raise ConfigError("sojourn needs states k >= 1")
    tab = Table("sojourn", ["k", "t", "mean", "lower_bound", "upper_bound"])
    bounded = isinstance(f, Stable)
    for t in sorted(cfg.times):
        for k in states:
            _Op.name = f"mean_sojourn (k={k}, t={t!r})"
            mean = birthdeath.mean_sojourn(proc.lam, f, t, k, quad=cfg.quad_spec())
            lo = hi = None
            if bounded and math.isinf(t):
                lo, hi = birthdeath.stable_sojourn_bounds(f.alpha, proc.lam, k)
            tab.add(k=k, t=t, mean=mean, lower_bound=lo, upper_bound=hi)
    return tab


def cmd_explode(cfg: RunConfig) -> Table:
    proc, f = cfg.process, cfg.f()
    if not proc.is_birth:
        raise ConfigError("explosion applies to the yule and birth processes")
    if proc.initial != 1:
        raise ConfigError("explosion masses are computed from one individual")
    sched = proc.schedule()
    decl = None if cfg.regular is None else birth.RegularityDeclaration(cfg.regular, "config")
    tab = Table("explode", ["t", "survival_mass", "explosion_probability", "abs_error_bound"])
    for t in _finite_times(cfg):
        _Op.name = f"survival_mass (t={t!r})"
        mass = birth.survival_mass(sched, decl, f, t, series=cfg.series_spec(), full_output=True)
        tab.add(
            t=t,
            survival_mass=mass.value,
            explosion_probability=birth.explosion_probability(sched, decl, f, t, series=cfg.series_spec()),
            abs_error_bound=mass.bound,
        )
    return tab


def cmd_simulate(cfg: RunConfig):
    proc, f = cfg.process, cfg.f()
    if isinstance(f, Custom) or isinstance(getattr(f, "base", None), Custom):
        raise ConfigError("simulate needs a named subordinator family")
    times = _finite_times(cfg)
    if len(times) != 1:
        raise ConfigError("simulate takes exactly one time")
    t = times[0]
    quad, series = cfg.quad_spec(), cfg.series_spec()

    def reference(k):
        _Op.name = f"analytic reference pmf (k={k}, t={t!r})"
        return proc.pmf(f, t, k, series=series, quad=quad) + cfg.reference_offset

    _Op.name = f"composition estimate (t={t!r})"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CancellationWarning)
        return estimate_subordinated_pmf(
            proc, f, t, cfg.n_paths, Seed(cfg.seed), workers=cfg.workers, reference=reference
        )


def cmd_validate(quad: QuadratureSpec = DEFAULT_QUAD, tol_abs: Optional[float] = None) -> Table:
    tab = Table("validate", ["check", "value", "threshold", "pass"])
    for c in run_suite(quad, tol_abs):
        _Op.name = f"validation check {c.name}"
        tab.add(**c.row())
    return tab


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="subpop",
        description="Laws of birth, death and birth-death processes time-changed by subordinators.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration (optional for validate)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="overrides the config 'output'")
    p.add_argument("--seed", type=int, help="root seed for simulate")
    p.add_argument("--paths", type=int, help="number of Monte Carlo paths for simulate")
    p.add_argument("--workers", type=int, help="worker processes for simulate")
    p.add_argument("--tol-abs", type=float, help="absolute quadrature tolerance; caps validate thresholds")
    p.add_argument("--tol-rel", type=float, help="relative quadrature tolerance")
    return p


def _load(args) -> Optional[RunConfig]:
    if args.config is None:
        if args.command != "validate":
            raise ConfigError(f"{args.command} needs --config")
        return None
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    cfg = RunConfig.from_json(text)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.paths is not None:
        cfg.n_paths = args.paths
    if args.workers is not None:
        cfg.workers = args.workers
    if args.tol_abs is not None:
        cfg.quadrature["tolerance_abs"] = args.tol_abs
    if args.tol_rel is not None:
        cfg.quadrature["tolerance_rel"] = args.tol_rel
    # re-run the checks on the overridden fields
    return RunConfig.from_dict(cfg.to_dict())


def _run(args):
    cfg = _load(args)
    fmt = args.format or (cfg.output if cfg is not None else "csv")
    code = EXIT_OK
    if args.command == "validate":
        if cfg is not None:
            quad = cfg.quad_spec()
        else:
            flags = {"tolerance_abs": args.tol_abs, "tolerance_rel": args.tol_rel}
            quad = replace(DEFAULT_QUAD, **{k: v for k, v in flags.items() if v is not None})
        tab = cmd_validate(quad, args.tol_abs)
        if not all(r["pass"] for r in tab.rows):
            code = EXIT_VALIDATION
        text = tab.to_csv() if fmt == "csv" else json.dumps(
            {"command": "validate", "columns": tab.columns, "rows": tab.rows},
            indent=2, sort_keys=True, allow_nan=False,
        ) + "\n"
        return text, code
    if args.command == "simulate":
        report = cmd_simulate(cfg)
        if not report.passed:
            code = EXIT_VALIDATION
        return (report.to_json() if fmt == "json" else report.to_csv()), code
    handler = {
        "pmf": cmd_pmf,
        "extinction": cmd_extinction,
        "moments": cmd_moments,
        "sojourn": cmd_sojourn,
        "explode": cmd_explode,
    }[args.command]
    tab = handler(cfg)
    return (tab.to_csv() if fmt == "csv" else tab.to_json(cfg)), code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _Op.name = "setup"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CancellationWarning)
            text, code = _run(args)
    except (ConfigError, PreconditionViolation, DegenerateRates, UnsupportedFamily, UnsupportedOrder) as exc:
        print(f"subpop {args.command}: configuration error in {_Op.name}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, SubpopError) as exc:
        print(
            f"subpop {args.command}: numerical failure in {_Op.name}: {type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"subpop {args.command}: invalid input in {_Op.name}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if code == EXIT_VALIDATION:
        print(f"subpop {args.command}: validation failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
