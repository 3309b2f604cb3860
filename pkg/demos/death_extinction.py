"""
Extinction of a subordinated linear death process
=================================================

n0 individuals die at rate mu each; the clock is a subordinator.
Extinction gets less likely with more progenitors, the linear and
sublinear variants share the same extinction law, and a composition
Monte Carlo run reproduces the analytic pmf.
"""

from subpop import DeathSpec, Gamma, ProcessSpec, Seed, Stable, TemperedStable
from subpop.death import death_extinction, death_pmf
from subpop.montecarlo import estimate_subordinated_pmf

t = 1.0
for f in (Stable(0.5), Gamma(1.0), TemperedStable(0.5, 1.0)):
    row = [death_extinction(DeathSpec(1.0, n0), f, t) for n0 in (1, 2, 5, 10, 20)]
    print(f"{f!r:>32}  " + "  ".join(f"{p:.6f}" for p in row))

lin = death_extinction(DeathSpec(1.0, 7, "linear"), Stable(0.5), 2.0)
sub = death_extinction(DeathSpec(1.0, 7, "sublinear"), Stable(0.5), 2.0)
print(f"\nlinear vs sublinear, n0=7, t=2: {lin:.15f} {sub:.15f}")

spec = DeathSpec(1.0, 5)
proc = ProcessSpec("death", 5, mu=1.0)
rep = estimate_subordinated_pmf(proc, Stable(0.5), t, 100_000, Seed(1))
print("\nk  analytic   empirical  +-3sigma")
for k, (p, h) in rep.empirical_pmf.items():
    print(f"{k}  {death_pmf(spec, Stable(0.5), t, k):.6f}   {p:.6f}   {h:.6f}")
print("all verdicts pass:", rep.passed)
