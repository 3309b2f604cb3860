import csv
import json
import math

import numpy as np
import pytest
from scipy import special, stats

from subpop import birth, birthdeath, death
from subpop.bernstein import Custom, Gamma, Killed, LevyMeasure, Stable, TemperedStable
from subpop.birth import RateSchedule
from subpop.errors import UnsupportedFamily
from subpop.montecarlo import (
    CUTOFF,
    KILLED,
    Seed,
    estimate_subordinated_pmf,
    sample_classical,
    sample_holding_times,
    sample_subordinator,
)
from subpop.process import ProcessSpec

N = 1_000_000


def laplace_audit(f, t, seed, us=(0.5, 1.0, 2.0)):
    h = sample_subordinator(f, t, Seed(seed), size=N)
    for u in us:
        vals = np.exp(-u * h)  # exp(-inf) = 0 for killed paths
        exact = math.exp(-t * float(f(u)))
        assert abs(vals.mean() - exact) < 3.5 * vals.std() / math.sqrt(N) + 1e-12


# subordinators


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_stable_laplace(alpha):
    laplace_audit(Stable(alpha), 1.3, 1)


def test_gamma_laplace():
    laplace_audit(Gamma(2.0), 0.7, 2)


@pytest.mark.parametrize("alpha,theta,t", [(0.5, 1.0, 1.0), (0.3, 4.0, 2.0), (0.7, 0.5, 0.2)])
def test_tempered_laplace(alpha, theta, t):
    laplace_audit(TemperedStable(alpha, theta), t, 3)


def test_tempered_mean():
    alpha, theta, t = 0.5, 2.0, 1.5
    h = sample_subordinator(TemperedStable(alpha, theta), t, Seed(4), size=N)
    exact = t * alpha * theta ** (alpha - 1)
    assert abs(h.mean() - exact) < 3.5 * h.std() / math.sqrt(N)


def test_killed_laplace_and_fraction():
    f = Killed(Stable(0.5), 0.8)
    laplace_audit(f, 1.0, 5)
    h = sample_subordinator(f, 1.0, Seed(6), size=N)
    p = -math.expm1(-0.8)
    frac = np.mean(h == KILLED)
    assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / N)


def test_stable_half_ks():
    # H(t) for Stable(1/2) has Pr{H <= s} = erfc(t / (2 sqrt s))
    t = 0.7
    h = sample_subordinator(Stable(0.5), t, Seed(7), size=20_000)
    res = stats.kstest(h, lambda s: special.erfc(t / (2 * np.sqrt(s))))
    assert res.pvalue > 1e-3


def test_subordinator_at_zero():
    for f in (Stable(0.5), Gamma(1.0), TemperedStable(0.5, 1.0), Killed(Stable(0.5), 1.0)):
        assert np.all(sample_subordinator(f, 0.0, Seed(0), size=10) == 0)
        assert sample_subordinator(f, 0.0, Seed(0)) == 0.0


def test_subordinator_rejects():
    with pytest.raises(ValueError):
        sample_subordinator(Stable(0.5), -1.0, Seed(0))
    custom = Custom(LevyMeasure.from_expression("0.5 * s^(-1.5) / gamma(0.5)", 0.5, None, 0.5))
    with pytest.raises(UnsupportedFamily):
        sample_subordinator(custom, 1.0, Seed(0))
    with pytest.raises(UnsupportedFamily):
        sample_subordinator(TemperedStable(0.5, 1e6), 100.0, Seed(0), size=2)


def test_seed_streams():
    a = sample_subordinator(Stable(0.5), 1.0, Seed(3, 0), size=5)
    b = sample_subordinator(Stable(0.5), 1.0, Seed(3, 0), size=5)
    c = sample_subordinator(Stable(0.5), 1.0, Seed(3, 1), size=5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        Seed(-1)


# classical samplers


def two_sample_agree(x, y, states):
    n, m = len(x), len(y)
    for k in states:
        p1, p2 = np.mean(x == k), np.mean(y == k)
        p = (p1 * n + p2 * m) / (n + m)
        assert abs(p1 - p2) <= 3.5 * math.sqrt(p * (1 - p) * (1 / n + 1 / m)) + 1e-12, k


@pytest.mark.parametrize(
    "proc,s",
    [
        (ProcessSpec("yule", lam=1.0), 0.8),
        (ProcessSpec("death", 5, mu=1.0), 0.5),
        (ProcessSpec("sublinear_death", 4, mu=1.0), 0.3),
        (ProcessSpec("birth_death", lam=1.0, mu=2.0), 0.6),
        (ProcessSpec("birth_death", lam=2.0, mu=1.0), 0.4),
        (ProcessSpec("birth_death", 2, lam=1.0, mu=1.0), 0.5),
    ],
    ids=lambda v: v.kind if isinstance(v, ProcessSpec) else str(v),
)
def test_exact_matches_gillespie(proc, s):
    x = sample_classical(proc, np.full(20_000, s), Seed(11), method="exact")
    y = sample_classical(proc, np.full(20_000, s), Seed(12), method="gillespie")
    two_sample_agree(x, y, range(0, 8))


def test_exact_yule_law():
    s = 0.9
    x = sample_classical(ProcessSpec("yule", lam=1.0), np.full(N, s), Seed(13))
    for k in (1, 2, 5):
        p = math.exp(-s) * (1 - math.exp(-s)) ** (k - 1)
        assert abs(np.mean(x == k) - p) < 3 * math.sqrt(p * (1 - p) / N)


@pytest.mark.parametrize("lam,mu,r", [(1.5, 1.0, 1), (1.0, 1.5, 1), (1.0, 1.0, 3)])
def test_exact_bd_law(lam, mu, r):
    spec = birthdeath.BDSpec(lam, mu, r)
    x = sample_classical(ProcessSpec("birth_death", r, lam=lam, mu=mu), np.full(N, 0.7), Seed(14))
    for k in range(6):
        p = birthdeath.bd_classical_pmf(spec, 0.7, k)
        assert abs(np.mean(x == k) - p) < 3.5 * math.sqrt(p * (1 - p) / N) + 1e-12


def test_nonlinear_schedule_uses_gillespie():
    proc = ProcessSpec("birth", 1, rates=RateSchedule.power_law(1.0, 1.5))
    x = sample_classical(proc, np.full(20_000, 0.5), Seed(15))
    for k in (1, 2, 3):
        p = birth.classical_birth_pmf(proc.rates, 0.5, 1, k)
        assert abs(np.mean(x == k) - p) < 3.5 * math.sqrt(p * (1 - p) / 20_000)
    with pytest.raises(ValueError):
        sample_classical(proc, 0.5, Seed(0), method="exact")


def test_classical_cutoff_and_zero():
    proc = ProcessSpec("yule", lam=1.0)
    assert sample_classical(proc, 0.0, Seed(0)) == 1
    x = sample_classical(proc, np.full(100, 30.0), Seed(1), k_max=1000)
    assert np.all(x == CUTOFF)
    with pytest.raises(ValueError):
        sample_classical(proc, [np.inf], Seed(0))


# holding times


def test_holding_time_is_exponential():
    # a pure-birth path cannot return, so the holding time in r is Exp(f(q_r))
    f = Stable(0.5)
    proc = ProcessSpec("yule", lam=1.0)
    h = sample_holding_times(proc, f, 1, 4000, Seed(16))
    rate = float(f(1.0))
    assert h.bias_bound <= 0.01 * h.mean()
    res = stats.kstest(h - h.step / 2, stats.expon(scale=1 / rate).cdf)
    assert res.pvalue > 1e-3
    assert abs(h.mean() - 1 / rate) < 3.5 / rate / math.sqrt(4000) + h.bias_bound


def test_holding_time_absorbing():
    with pytest.raises(ValueError):
        sample_holding_times(ProcessSpec("death", 3, mu=1.0), Stable(0.5), 0, 10, Seed(0))


# composition estimator


def test_composition_matches_death_law():
    proc = ProcessSpec("death", 6, mu=1.0)
    rep = estimate_subordinated_pmf(proc, Stable(0.5), 1.0, 50_000, Seed(17))
    assert rep.verdicts and rep.passed
    assert rep.killed == 0 and rep.cutoff == 0
    assert sum(rep.counts.values()) == 50_000


def test_composition_killed_verdict():
    f = Killed(Gamma(1.0), 0.5)
    rep = estimate_subordinated_pmf(ProcessSpec("birth_death", lam=1.0, mu=1.0), f, 1.0, 20_000, Seed(18))
    names = [v["state"] for v in rep.verdicts]
    assert "killed" in names and rep.passed
    assert rep.killed_fraction == pytest.approx(-math.expm1(-0.5), abs=0.02)


def test_composition_mean_variance():
    proc = ProcessSpec("death", 10, mu=1.0)
    f = Gamma(1.0)
    rep = estimate_subordinated_pmf(proc, f, 1.0, 30_000, Seed(19))
    exact = death.death_mean(death.DeathSpec(1.0, 10), f, 1.0)
    assert abs(rep.mean - exact) < rep.mean_halfwidth


def test_composition_worker_invariance():
    proc = ProcessSpec("yule", lam=1.0)
    f = TemperedStable(0.5, 2.0)
    a = estimate_subordinated_pmf(proc, f, 1.0, 25_000, Seed(20), workers=1, chunk_size=5000)
    b = estimate_subordinated_pmf(proc, f, 1.0, 25_000, Seed(20), workers=3, chunk_size=5000)
    assert a.to_dict() == b.to_dict()
    c = estimate_subordinated_pmf(proc, f, 1.0, 25_000, Seed(20, 1), workers=1, chunk_size=5000)
    assert c.counts != a.counts


def test_wrong_reference_fails():
    proc = ProcessSpec("death", 3, mu=1.0)
    rep = estimate_subordinated_pmf(
        proc, Stable(0.5), 1.0, 20_000, Seed(21), reference=lambda k: proc.pmf(Stable(0.5), 1.0, k) + 0.05
    )
    assert not rep.passed


def test_report_serialization(tmp_path):
    proc = ProcessSpec("death", 2, mu=1.0)
    raw = tmp_path / "raw.csv"
    rep = estimate_subordinated_pmf(proc, Killed(Stable(0.5), 1.0), 0.5, 2000, Seed(22), raw_csv=str(raw))
    d = json.loads(rep.to_json())
    assert d["n_paths"] == 2000 and d["seed"] == {"root": 22, "stream_id": 0}
    assert "wall_clock" not in d and "wall_clock" in json.loads(rep.to_json(include_timing=True))
    text = rep.to_csv()
    assert "\r" not in text and text.splitlines()[0] == "state,count,freq,halfwidth,analytic,pass"
    assert any(line.startswith("killed,") for line in text.splitlines())
    rows = list(csv.DictReader(raw.open(newline="")))
    assert len(rows) == 2000
    assert any(r["h"] == "KILLED" and r["state"] == "" for r in rows)


def test_minimum_paths():
    with pytest.raises(ValueError):
        estimate_subordinated_pmf(ProcessSpec("yule"), Stable(0.5), 1.0, 999, Seed(0))


def test_yule_stable_chi_square():
    # calibrated companion to the per-state 3 sigma rule: one goodness-of-fit
    # test on the same sample (seed 12345, 1e5 paths), level 0.01
    proc, f, n = ProcessSpec("yule", lam=1.0), Stable(0.5), 100_000
    rep = estimate_subordinated_pmf(proc, f, 1.0, n, Seed(12345), threshold=1.0)
    obs, exp_ = [], []
    k = 1
    while True:
        e = n * proc.pmf(f, 1.0, k)
        if e < 5:
            break
        obs.append(rep.counts.get(k, 0))
        exp_.append(e)
        k += 1
    # tail bin: all states >= k plus the cutoff bucket
    obs.append(n - sum(obs))
    exp_.append(n - sum(exp_))
    assert exp_[-1] >= 5
    res = stats.chisquare(obs, exp_)
    assert res.pvalue > 0.01
