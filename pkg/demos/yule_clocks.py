"""
Yule process under three random clocks
======================================

A Yule process with rate 1, run on the clock H(t) of a subordinator.
The stable clock makes every moment infinite and the pmf tail so heavy
that partial sums creep towards 1; a tempered clock fixes both.
"""

import math

from subpop import Gamma, Stable, TemperedStable
from subpop.birth import yule_cdf, yule_factorial_moment, yule_pmf

t = 1.0
clocks = [Stable(0.5), TemperedStable(0.5, 2.0), Gamma(3.0)]

print("Pr{N(t) = k}, t = 1")
print("k      " + "".join(f"{repr(f):>38}" for f in clocks))
for k in (1, 2, 3, 5, 10, 100):
    print(f"{k:<7}" + "".join(f"{yule_pmf(1.0, f, t, k):>38.6e}" for f in clocks))

# the missing mass 1 - Pr{N <= K} shrinks like K^-alpha, K^-theta, K^-a
print("\n1 - Pr{N(t) <= K}")
for K in (10, 10**3, 10**5):
    print(f"K={K:<7}" + "".join(f"{1 - yule_cdf(1.0, f, t, K):>38.3e}" for f in clocks))

print("\nfactorial moments E N(N-1)...(N-r+1)")
for r in (1, 2, 3):
    vals = [yule_factorial_moment(1.0, f, t, r) for f in clocks]
    print(f"r={r:<5}" + "".join(f"{str(v) if not isinstance(v, float) else f'{v:.6g}':>38}" for v in vals))

# Gamma(a) clock, lam=1: E N(t) = (1 - 1/a)^{-a t}
print("\nGamma(3), t=2 mean:", yule_factorial_moment(1.0, Gamma(3.0), 2.0, 1), "closed form", (1 - 1 / 3) ** -2)
print("e^-1 check, stable k=1:", yule_pmf(1.0, Stable(0.5), 1.0, 1), math.exp(-1))
