"""Monte Carlo: subordinator samplers, classical samplers and composition.

Composition sampling draws H = H^f(t) and then the classical process for
duration H, so the empirical law of X(H) estimates Pr{X^f(t) = k}.

Reproducibility: a :class:`Seed` names a root entropy and a stream id; every
chunk of paths gets its own stream spawned from the root, and chunk results
are merged in chunk order. The output therefore depends on the seed and the
chunk size but not on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bernstein import BernsteinFunction, Custom, Gamma, Killed, Stable, TemperedStable
from .errors import GridTooCoarse, UnsupportedFamily
from .process import ProcessSpec

__all__ = [
    "Seed",
    "KILLED",
    "CUTOFF",
    "K_MAX",
    "SimulationReport",
    "sample_subordinator",
    "sample_classical",
    "sample_holding_times",
    "estimate_subordinated_pmf",
]

#: value of H^f(t) after the killing time
KILLED = math.inf
#: final-state marker for paths that passed the explosion cutoff
CUTOFF = -1
K_MAX = 10**6
#: largest t theta^alpha (about the expected stable draws per sample) allowed
MAX_REJECTIONS = 10**4
CHUNK = 10_000


@dataclass(frozen=True)
class Seed:
    root: int
    stream_id: int = 0

    def __post_init__(self):
        for v in (self.root, self.stream_id):
            if not 0 <= v < 2**64:
                raise ValueError("seed fields are 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def to_config(self) -> dict:
        return {"root": self.root, "stream_id": self.stream_id}


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, Seed):
        return seed.generator()
    return Seed(int(seed)).generator()


# ---------------------------------------------------------------------------
# subordinators


def _positive_stable(alpha, rng, size):
    """Kanter's representation: E exp(-u X) = exp(-u^alpha)."""
    u = rng.uniform(0.0, math.pi, size)
    e = rng.exponential(1.0, size)
    a = np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
    b = (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    return a * b


def _tempered_stable(alpha, theta, t, rng, size):
    # H(t) is a sum of m pieces H(t/m); each piece is a stable draw kept with
    # probability e^{-theta X}. Expected draws per piece e^{(t/m) theta^alpha},
    # so m ~ t theta^alpha keeps the total near e t theta^alpha.
    load = t * theta**alpha
    if load > MAX_REJECTIONS:
        raise UnsupportedFamily("tempered-stable rejection would exceed the rejection cap")
    m = max(1, math.ceil(load))
    scale = (t / m) ** (1.0 / alpha)
    out = np.zeros(size)
    for _ in range(m):
        piece = np.empty(size)
        todo = np.arange(size)
        while todo.size:
            x = scale * _positive_stable(alpha, rng, todo.size)
            keep = rng.uniform(size=todo.size) < np.exp(-theta * x)
            piece[todo[keep]] = x[keep]
            todo = todo[~keep]
        out += piece
    return out


def sample_subordinator(f: BernsteinFunction, t: float, seed, size: Optional[int] = None):
    """Draw(s) of H^f(t); killed paths are ``KILLED`` (= inf).

    Stable: t^{1/alpha} times Kanter's variable. Gamma: Gamma(shape t, rate a).
    TemperedStable: exact stable rejection. Killed: inf with probability
    1 - e^{-kill t}, otherwise a draw of the base.
    """
    if not t >= 0:
        raise ValueError("t must be >= 0")
    rng = _rng(seed)
    n = 1 if size is None else int(size)
    base = f.unkilled
    if isinstance(base, Custom):
        raise UnsupportedFamily("sampling is available for the named families only")
    if t == 0:
        out = np.zeros(n)
    elif isinstance(base, Stable):
        out = t ** (1.0 / base.alpha) * _positive_stable(base.alpha, rng, n)
    elif isinstance(base, Gamma):
        out = rng.gamma(t, 1.0 / base.a, n)
    elif isinstance(base, TemperedStable):
        out = _tempered_stable(base.alpha, base.theta, t, rng, n)
    else:
        raise UnsupportedFamily(f"no sampler for {type(base).__name__}")
    if isinstance(f, Killed) and f.kill_rate > 0:
        death_time = rng.exponential(1.0 / f.kill_rate, n)
        out = np.where(death_time <= t, KILLED, out)
    return float(out[0]) if size is None else out


# ---------------------------------------------------------------------------
# classical processes


def _gillespie(proc: ProcessSpec, duration: float, rng, k_max: int) -> int:
    k, clock = proc.initial, 0.0
    while True:
        up, down = proc.up_rate(k), proc.down_rate(k)
        total = up + down
        if total == 0.0:
            return k
        clock += rng.exponential(1.0 / total)
        if clock > duration:
            return k
        k = k + 1 if rng.uniform() * total < up else k - 1
        if k > k_max:
            return CUTOFF


def _failures(p, rng):
    """Geometric number of failures before a success of probability p, as float.

    Inversion keeps it exact for p down to the smallest floats, where
    integer samplers overflow.
    """
    u = rng.uniform(size=np.shape(p))
    with np.errstate(divide="ignore", over="ignore"):
        return np.floor(np.log1p(-u) / np.log1p(-np.minimum(p, 1.0 - 1e-16)))


def _exact_classical(proc: ProcessSpec, s: np.ndarray, rng, k_max: int) -> np.ndarray:
    """Exact draws of X(s) for the processes with closed-form marginals."""
    r = proc.initial
    if proc.kind == "death":
        return rng.binomial(r, np.exp(-proc.mu * s))
    if proc.kind == "sublinear_death":
        # deaths by time s: Pr{D >= d} = (1 - e^{-mu s})^d, capped at n0
        d = _failures(np.exp(-proc.mu * s), rng)
        return (r - np.minimum(d, r)).astype(np.int64)
    if proc.kind in ("yule", "birth"):
        # N(s) - r is negative binomial: a sum of r geometric failure counts
        lam = proc.lam if proc.kind == "yule" else proc.rates.lam
        p = np.exp(-lam * s)
        total = np.full(s.shape, float(r))
        for _ in range(r):
            total += _failures(p, rng)
    else:
        # r independent one-progenitor copies; each is 0 w.p. alpha, else 1 + Geom(1 - beta)
        lam, mu = proc.lam, proc.mu
        d = lam - mu
        if d > 0:
            den = lam - mu * np.exp(-d * s)
            alpha = mu * -np.expm1(-d * s) / den
            beta = lam * -np.expm1(-d * s) / den
        else:
            e1 = s if d == 0 else np.expm1(d * s) / d
            den = 1.0 + lam * e1
            alpha, beta = mu * e1 / den, lam * e1 / den
        total = np.zeros(s.shape)
        for _ in range(r):
            alive = rng.uniform(size=s.shape) >= alpha
            total += np.where(alive, 1.0 + _failures(1.0 - beta, rng), 0.0)
    out = np.full(s.shape, CUTOFF, dtype=np.int64)
    ok = total <= k_max
    out[ok] = total[ok].astype(np.int64)
    return out


def _has_exact(proc: ProcessSpec) -> bool:
    return proc.kind != "birth" or proc.rates.kind == "linear"


def sample_classical(
    proc: ProcessSpec,
    duration,
    seed,
    *,
    k_max: int = K_MAX,
    method: str = "auto",
):
    """Final state(s) of the unsubordinated process after ``duration``.

    ``duration`` may be a float or an array of finite durations.
    "gillespie" simulates exponential holding times and unit jumps;
    "exact" draws from the closed-form marginal law (binomial, geometric,
    negative binomial); "auto" uses "exact" where available. States beyond
    ``k_max`` come back as ``CUTOFF``; extinction is state 0.
    """
    rng = _rng(seed)
    scalar = np.ndim(duration) == 0
    s = np.atleast_1d(np.asarray(duration, dtype=float))
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("durations must be finite and >= 0")
    if method == "auto":
        method = "exact" if _has_exact(proc) else "gillespie"
    if method == "exact":
        if not _has_exact(proc):
            raise ValueError("no closed-form sampler for this rate schedule")
        out = _exact_classical(proc, s, rng, k_max)
    elif method == "gillespie":
        out = np.array([_gillespie(proc, float(d), rng, k_max) for d in s], dtype=np.int64)
    else:
        raise ValueError("method must be 'auto', 'exact' or 'gillespie'")
    out = np.where(s == 0, proc.initial, out)
    return int(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# holding times


class HoldingSample(np.ndarray):
    """Array of holding times carrying the grid step and its bias bound."""

    step: float
    bias_bound: float


def _first_passage(f, levels, step, rng, max_steps=10**7):
    """Number of grid steps until H^f first exceeds each level."""
    n = levels.size
    out = np.zeros(n, dtype=np.int64)
    h = np.zeros(n)
    active = np.arange(n)
    k = 0
    while active.size:
        k += 1
        h[active] += sample_subordinator(f, step, rng, size=active.size)
        crossed = h[active] > levels[active]
        out[active[crossed]] = k
        active = active[~crossed]
        if k >= max_steps:
            raise GridTooCoarse("first-passage simulation did not finish")
    return out


def sample_holding_times(
    proc: ProcessSpec,
    f: BernsteinFunction,
    r: int,
    n: int,
    seed,
    *,
    step: float = 0.05,
    tolerance: float = 1e-3,
    max_halvings: int = 14,
):
    """n draws of the holding time of X^f in state r.

    The classical process leaves r after E ~ Exp(q_r); the subordinated one
    leaves at the first time H^f exceeds E. H^f is simulated on a grid, and
    the first grid time above E overshoots by less than one step. One path is
    simulated at the finest step; coarser grids are read off the same path
    (a passage at fine step m is at coarse step ceil(m / 2^j)), so successive
    halvings differ only by grid bias. Halving stops once the mean moves by
    less than ``tolerance`` relative. Raises GridTooCoarse if the final step
    exceeds 1% of the mean.
    """
    q = proc.up_rate(r) + proc.down_rate(r)
    if q <= 0:
        raise ValueError(f"state {r} is absorbing")
    rng = _rng(seed)
    levels = rng.exponential(1.0 / q, n)
    pilot = float(np.mean(_first_passage(f, levels[: min(n, 500)], step, rng))) * step
    J = 1
    while J < max_halvings and step / 2**J > 1e-3 * pilot:
        J += 1
    fine = _first_passage(f, levels, step / 2**J, rng)
    means = []
    for j in range(J + 1):
        width = step / 2**j
        y = np.ceil(fine / 2 ** (J - j)) * width
        means.append(float(np.mean(y)))
        if len(means) > 1 and abs(means[-1] - means[-2]) <= tolerance * means[-1]:
            break
    else:
        raise GridTooCoarse(f"holding-time mean still moving at step {step / 2**J:g}")
    if width > 0.01 * means[-1]:
        raise GridTooCoarse(f"grid step {width:g} exceeds 1% of the mean {means[-1]:g}")
    out = y.view(HoldingSample)
    out.step = width
    out.bias_bound = width
    return out


# ---------------------------------------------------------------------------
# composition estimator


def _fmt(x: float) -> str:
    return format(x, ".17g")


@dataclass
class SimulationReport:
    process: dict
    subordinator: dict
    t: float
    n_paths: int
    seed: dict
    counts: dict  # final state -> number of paths
    killed: int
    cutoff: int
    mean: Optional[float]
    variance: Optional[float]
    verdicts: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def empirical_pmf(self) -> dict:
        """state -> (frequency, 3 sigma half-width)."""
        n = self.n_paths
        return {k: (c / n, halfwidth(c / n, n)) for k, c in sorted(self.counts.items())}

    @property
    def killed_fraction(self) -> float:
        return self.killed / self.n_paths

    @property
    def cutoff_fraction(self) -> float:
        return self.cutoff / self.n_paths

    @property
    def extinction_fraction(self) -> float:
        return self.counts.get(0, 0) / self.n_paths

    @property
    def finite_paths(self) -> int:
        return self.n_paths - self.killed - self.cutoff

    @property
    def mean_halfwidth(self) -> Optional[float]:
        if self.variance is None or self.finite_paths < 2:
            return None
        return 3.0 * math.sqrt(self.variance / self.finite_paths)

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.verdicts)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "process": self.process,
            "subordinator": self.subordinator,
            "t": self.t,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "empirical_pmf": [
                {"state": k, "count": self.counts[k], "freq": p, "halfwidth": h}
                for k, (p, h) in self.empirical_pmf.items()
            ],
            "killed": {"count": self.killed, "freq": self.killed_fraction},
            "cutoff": {"count": self.cutoff, "freq": self.cutoff_fraction},
            "extinction_fraction": self.extinction_fraction,
            "mean": self.mean,
            "variance": self.variance,
            "mean_halfwidth": self.mean_halfwidth,
            "verdicts": self.verdicts,
            "passed": self.passed,
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "count", "freq", "halfwidth", "analytic", "pass"])
        verdict = {v["state"]: v for v in self.verdicts}
        rows = [(str(k), c) for k, c in sorted(self.counts.items())]
        rows += [("killed", self.killed), ("cutoff", self.cutoff)]
        for label, c in rows:
            p = c / self.n_paths
            v = verdict.get(label if not label.lstrip("-").isdigit() else int(label))
            w.writerow([
                label, c, _fmt(p), _fmt(halfwidth(p, self.n_paths)),
                _fmt(v["analytic"]) if v else "", (str(v["pass"]).lower() if v else ""),
            ])
        return buf.getvalue()


def halfwidth(p: float, n: int) -> float:
    return 3.0 * math.sqrt(p * (1.0 - p) / n)


def _run_chunk(args):
    proc, f, t, root, chunk_id, size, k_max, method, keep_raw = args
    rng = Seed(root, chunk_id).generator()
    h = sample_subordinator(f, t, rng, size=size)
    states = np.full(size, CUTOFF, dtype=np.int64)
    alive = np.isfinite(h)
    if alive.any():
        states[alive] = sample_classical(proc, h[alive], rng, k_max=k_max, method=method)
    killed = int(np.sum(~alive))
    finite = alive & (states != CUTOFF)
    cutoff = int(np.sum(alive & (states == CUTOFF)))
    vals = states[finite]
    counts = Counter(int(v) for v in vals)
    s1 = int(np.sum(vals, dtype=object)) if vals.size else 0
    s2 = int(np.sum(vals.astype(object) ** 2)) if vals.size else 0
    raw = (h.tolist(), states.tolist()) if keep_raw else None
    return counts, killed, cutoff, s1, s2, raw


def estimate_subordinated_pmf(
    proc: ProcessSpec,
    f: BernsteinFunction,
    t: float,
    n_paths: int,
    seed,
    *,
    workers: int = 1,
    chunk_size: int = CHUNK,
    k_max: int = K_MAX,
    method: str = "auto",
    reference: Optional[Callable[[int], float]] = None,
    threshold: Optional[float] = None,
    raw_csv: Optional[str] = None,
) -> SimulationReport:
    """Composition estimate of Pr{X^f(t) = k} with 3 sigma verdicts.

    Each state with empirical frequency above ``threshold`` (default
    10/n_paths) is compared with ``reference(k)`` (default: the analytic
    pmf) using sigma = sqrt(p(1-p)/n) from the analytic p. Killed paths are
    compared with 1 - e^{-kill t}.
    """
    if n_paths < 1000:
        raise ValueError("n_paths must be >= 1000")
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    seed = seed if isinstance(seed, Seed) else Seed(int(seed))
    started = time.perf_counter()
    sizes = [chunk_size] * (n_paths // chunk_size)
    if n_paths % chunk_size:
        sizes.append(n_paths % chunk_size)
    # chunk i draws from stream (stream_id, i); worker count does not matter
    base = seed.stream_id * 2**20
    jobs = [
        (proc, f, t, seed.root, base + i, size, k_max, method, raw_csv is not None)
        for i, size in enumerate(sizes)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(j) for j in jobs]

    counts = Counter()
    killed = cutoff = s1 = s2 = 0
    for c, kd, co, a, b, _ in results:
        counts.update(c)
        killed += kd
        cutoff += co
        s1 += a
        s2 += b
    m = n_paths - killed - cutoff
    mean = var = None
    if m >= 1:
        mean = s1 / m
    if m >= 2:
        var = (s2 - s1 * s1 / m) / (m - 1)

    report = SimulationReport(
        process=proc.to_config(),
        subordinator=f.to_config(),
        t=t,
        n_paths=n_paths,
        seed=seed.to_config(),
        counts=dict(sorted(counts.items())),
        killed=killed,
        cutoff=cutoff,
        mean=mean,
        variance=var,
    )
    ref = reference or (lambda k: proc.pmf(f, t, k))
    thr = 10.0 / n_paths if threshold is None else threshold
    for k, c in report.counts.items():
        phat = c / n_paths
        if phat <= thr:
            continue
        report.verdicts.append(_verdict(k, phat, ref(k), n_paths))
    if f.kill_rate > 0:
        report.verdicts.append(
            _verdict("killed", report.killed_fraction, -math.expm1(-f.kill_rate * t), n_paths)
        )
    report.wall_clock = time.perf_counter() - started

    if raw_csv is not None:
        with open(raw_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stream", "path", "h", "state"])
            for i, res in enumerate(results):
                hs, st = res[5]
                for j, (hv, sv) in enumerate(zip(hs, st)):
                    label = "KILLED" if math.isinf(hv) else _fmt(hv)
                    state = "" if math.isinf(hv) else ("CUTOFF" if sv == CUTOFF else sv)
                    w.writerow([jobs[i][4], j, label, state])
    return report


def _verdict(state, phat, p, n):
    sigma = math.sqrt(max(p * (1.0 - p), 0.0) / n)
    return {
        "state": state,
        "freq": phat,
        "analytic": p,
        "sigma": sigma,
        "z": (phat - p) / sigma if sigma > 0 else None,
        "pass": abs(phat - p) <= 3.0 * sigma,
    }
