"""Numeric settings for model assembly."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from ..clpu import ClpuCoefficients
from ..vsg import VsgParams


class BudgetError(ValueError):
    """Raised before assembly when the fleet budget cannot host a single unit."""


@dataclass(frozen=True)
class Budgets:
    s_budget: float = 6.5   # MW, fleet
    e_budget: float = 10.0  # MWh, fleet
    s_min: float = 0.1      # MW, single unit
    s_max: float = 6.5
    e_min: float = 1.0      # MWh, single unit
    e_max: float = 10.0

    def check(self) -> None:
        if self.s_min > self.s_max or self.e_min > self.e_max:
            raise BudgetError("single-unit bounds are inverted (min > max)")
        if self.s_budget < self.s_min:
            raise BudgetError(
                f"fleet budget rule infeasible: rated-power budget {self.s_budget} MW is below the "
                f"single-unit minimum {self.s_min} MW, yet at least one BESS must be installed")
        if self.e_budget < self.e_min:
            raise BudgetError(
                f"fleet budget rule infeasible: energy budget {self.e_budget} MWh is below the "
                f"single-unit minimum {self.e_min} MWh, yet at least one BESS must be installed")


@dataclass(frozen=True)
class SafeRanges:
    frequency: tuple[float, float] = (59.5, 60.5)   # Hz
    qss: tuple[float, float] = (59.5, 60.5)         # Hz
    nadir: tuple[float, float] = (57.8, 61.8)       # Hz
    rocof: tuple[float, float] = (-4.0, 4.0)        # Hz/s
    voltage: tuple[float, float] = (0.95, 1.05)     # pu magnitude

    def __post_init__(self):
        for name in ("frequency", "qss", "nadir", "rocof", "voltage"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"safe range {name} must satisfy lower < upper, got {(lo, hi)}")


@dataclass(frozen=True)
class BuildParams:
    budgets: Budgets = field(default_factory=Budgets)
    ranges: SafeRanges = field(default_factory=SafeRanges)
    vsg: VsgParams = field(default_factory=VsgParams)
    clpu: ClpuCoefficients = field(default_factory=ClpuCoefficients)
    gamma_cl: float = 10.0
    gamma_nl: float = 1.0
    cost_fixed: float = 1.0
    cost_power: float = 1.0   # per MW
    cost_energy: float = 1.0  # per MWh
    soc_bounds: tuple[float, float] = (0.1, 0.9)
    soc_initial: float = 0.9
    eps: float = 0.02          # Hz
    big_m: float = 1e4         # cap on any big-M coefficient
    freq_big_m: float = 70.0   # Hz; spans [0, 61.8] with margin
    polygon_sides: int = 8
    size_step: float = 0.01    # MW, rated-power resolution
    pv_q_ratio: float = 0.352
    frequency_security: bool = True
    fixed: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.gamma_cl <= 0 or self.gamma_nl <= 0:
            raise ValueError("restoration weights must be positive")
        lo, hi = self.soc_bounds
        if not 0 <= lo < hi <= 1 or not lo <= self.soc_initial <= hi:
            raise ValueError("state-of-charge bounds must satisfy 0 <= lo <= initial <= hi <= 1")
        if self.polygon_sides < 4:
            raise ValueError("polygon needs at least 4 sides")
        if not self.size_step > 0:
            raise ValueError("size_step must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    @property
    def size_bits(self) -> int:
        levels = int(math.floor(self.budgets.s_max / self.size_step + 1e-9))
        return max(1, math.ceil(math.log2(levels + 1)))

    def polygon_error(self) -> float:
        """Worst-case radial shortfall of the inscribed polygon."""
        return 1.0 - math.cos(math.pi / self.polygon_sides)
