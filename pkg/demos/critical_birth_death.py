"""
Critical birth-death process on a stable clock
==============================================

lam = mu = 1 from one progenitor, clock Stable(alpha). The subordinated
process leaves state 1 at rate lam^alpha Gamma(alpha + 2), spends a mean
time B(2 - alpha, k + alpha - 1)/Gamma(alpha) in state k over its whole
life, and dies at a time with a computable density.
"""

import math

import numpy as np

from subpop import BDSpec, Stable
from subpop import birthdeath as bd

f = Stable(0.5)
print("first jump rate:", bd.first_jump_rate(1.0, f), "closed form", math.gamma(2.5))

print("\nmean total sojourn in k (t = inf)")
print(" k   alpha=0.3   alpha=0.5   alpha=0.7   classical 1/k")
for k in (1, 2, 5, 10, 50):
    vals = [bd.stable_mean_sojourn(a, 1.0, k) for a in (0.3, 0.5, 0.7)]
    print(f"{k:>2}  " + "  ".join(f"{v:10.6f}" for v in vals) + f"  {bd.classical_mean_sojourn(1.0, math.inf, k):10.6f}")

print("\nextinction probability and extinction-time density")
for t in (0.1, 0.5, 1.0, 2.0, 5.0, 20.0):
    p = bd.bd_extinction(BDSpec(1.0, 1.0), f, t)
    d = bd.extinction_time_density(1.0, f, t)
    print(f"t={t:<5} P(extinct)={p:.6f}  density={d:.6f}")

# Pr{V_1(2) = 2} is an atom; the rest has a density on (0, 2)
tr = bd.SojournTransform(1.0, f, 1)
print("\natom Pr{V_1(2) = 2}:", bd.sojourn_atom(1.0, f, 1, 2.0))
for x in np.array([0.25, 1.0, 1.75]):
    print(f"density at {x}: {bd.sojourn_density(1.0, f, 1, 2.0, float(x), transform=tr):.6f}")
