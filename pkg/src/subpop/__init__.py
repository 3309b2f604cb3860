"""Birth, death and birth-death processes time-changed by subordinators.

Analytic laws (pmfs, extinction, moments, rates, explosion, sojourn times)
for Bernstein-function clocks, plus a composition Monte Carlo sampler to
check them.
"""

from .bernstein import Custom, Gamma, Killed, LevyMeasure, Stable, TemperedStable
from .birth import RateSchedule, RegularityDeclaration
from .birthdeath import BDSpec
from .death import DeathSpec
from .errors import INFINITE
from .montecarlo import Seed, estimate_subordinated_pmf
from .numerics import InversionSpec, QuadratureSpec, SeriesTruncation
from .process import ProcessSpec, distribution_table

__all__ = [
    "BDSpec",
    "Custom",
    "DeathSpec",
    "Gamma",
    "INFINITE",
    "InversionSpec",
    "Killed",
    "LevyMeasure",
    "ProcessSpec",
    "QuadratureSpec",
    "RateSchedule",
    "RegularityDeclaration",
    "Seed",
    "SeriesTruncation",
    "Stable",
    "TemperedStable",
    "distribution_table",
    "estimate_subordinated_pmf",
]

__version__ = "0.1.0"
