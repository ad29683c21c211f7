"""Core value types shared by the whole package.

Units and conventions:

- Price profiles are $/kWh per hour, demand profiles kWh per hour, both of
  length ``T`` (default 24 hourly slots).
- Hour indices in configuration and reports are 1-based (hour 1 = first
  slot); internal numpy indexing is 0-based.
- Incomes are $/year at construction and $/day ( = annual / 365) wherever
  energy burden is computed.

All value types are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "PriceProfile",
    "DemandProfile",
    "FlexParams",
    "Consumer",
    "Group",
    "BarrierConfig",
    "ScenarioConfig",
    "energy_burden",
    "hinge",
]

DAYS_PER_YEAR = 365


class DomainError(ValueError):
    """Invalid value or unit error raised by domain type constructors."""


def _as_readonly_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or infinite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PriceProfile:
    """Hourly price vector in $/kWh; entries must be finite and >= 0.

    Represents both retail tariffs and the wholesale reference price.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _as_readonly_vector(self.values, "price profile")
        if np.any(arr < 0.0):
            raise DomainError("price profile entries must be >= 0")
        object.__setattr__(self, "values", arr)

    @property
    def horizon(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class DemandProfile:
    """Hourly demand vector in kWh.

    Entries may be negative: demand-change profiles (deviations from a
    baseline) take both signs. Baseline profiles are additionally required
    to be non-negative where they are used (see :class:`Consumer`).
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _as_readonly_vector(self.values, "demand profile")
        )

    @property
    def horizon(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class FlexParams:
    """Quadratic response-cost parameters and hourly response bounds.

    c1 penalizes reduced demand and c2 shifted demand (both $/kWh^2, > 0).
    The four bound vectors are kWh per hour; shift bounds straddle zero
    elementwise, as do reduce bounds (the reduce upper bound is typically 0:
    pure reduction).
    """

    c1: float
    c2: float
    shift_lo: np.ndarray
    shift_hi: np.ndarray
    reduce_lo: np.ndarray
    reduce_hi: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.c1) and self.c1 > 0.0):
            raise DomainError(f"c1 must be > 0, got {self.c1}")
        if not (np.isfinite(self.c2) and self.c2 > 0.0):
            raise DomainError(f"c2 must be > 0, got {self.c2}")
        for name in ("shift_lo", "shift_hi", "reduce_lo", "reduce_hi"):
            object.__setattr__(
                self, name, _as_readonly_vector(getattr(self, name), name)
            )
        T = self.shift_lo.size
        for name in ("shift_hi", "reduce_lo", "reduce_hi"):
            if getattr(self, name).size != T:
                raise DomainError("flex bound vectors must share one length")
        if np.any(self.shift_lo > 0.0) or np.any(self.shift_hi < 0.0):
            raise DomainError("shift bounds must satisfy shift_lo <= 0 <= shift_hi")
        if np.any(self.reduce_lo > 0.0) or np.any(self.reduce_hi < 0.0):
            raise DomainError("reduce bounds must satisfy reduce_lo <= 0 <= reduce_hi")

    @property
    def horizon(self) -> int:
        return self.shift_lo.size


@dataclass(frozen=True)
class Consumer:
    """A consumer: income, non-responsive baseline demand, and flexibility.

    daily_income is derived as annual_income / 365.
    """

    id: int
    annual_income: float
    baseline: DemandProfile
    flex: FlexParams
    daily_income: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (np.isfinite(self.annual_income) and self.annual_income > 0.0):
            raise DomainError(f"annual_income must be > 0, got {self.annual_income}")
        if np.any(self.baseline.values < 0.0):
            raise DomainError("baseline demand must be non-negative")
        if self.flex.horizon != self.baseline.horizon:
            raise DomainError("flex bounds and baseline must share the horizon")
        derived = self.annual_income / DAYS_PER_YEAR
        if self.daily_income is None:
            object.__setattr__(self, "daily_income", derived)
        elif abs(self.daily_income - derived) > 1e-9 * max(1.0, derived):
            raise DomainError("daily_income must equal annual_income / 365")


@dataclass(frozen=True)
class Group:
    """A burden group: every member receives the identical tariff vector.

    avg_baseline and avg_daily_income are plain means over the members;
    model_id names the trained response model assigned to the group (one
    model per group), if any.
    """

    id: int
    members: tuple
    avg_baseline: DemandProfile
    avg_daily_income: float
    model_id: Optional[int] = None

    def __post_init__(self):
        if len(self.members) == 0:
            raise DomainError("group members must be non-empty")
        if self.avg_daily_income <= 0.0:
            raise DomainError("avg_daily_income must be > 0")
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class BarrierConfig:
    """Log-barrier schedule: mu0 grows by mu_growth each outer round until
    (number of barrier terms) / mu < epsilon."""

    mu0: float = 1.0
    mu_growth: float = 10.0
    epsilon: float = 1e-6
    max_outer: int = 12
    max_inner: int = 500

    def __post_init__(self):
        if self.mu0 <= 0.0:
            raise DomainError("mu0 must be > 0")
        if self.mu_growth <= 1.0:
            raise DomainError("mu_growth must be > 1")
        if self.epsilon <= 0.0:
            raise DomainError("epsilon must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything the tariff optimizer needs besides data and models.

    peak_hours and surge_hours are 1-based hour indices. beta is the peak
    demand reduction ratio; the peak constraint is enforced only when
    dr_enabled is True. om_cost is the utility's fixed O&M cost C in $.
    price_cap_factor bounds tariffs to [0, factor * max(wholesale)].
    gradient_mode selects between the exact lower-triangular response
    Jacobian ("full_jacobian") and its diagonal restriction
    ("paper_diagonal").
    """

    energy_burden_cap: float = 0.06
    alpha: float = 1.0
    beta: float = 0.0
    peak_hours: tuple = ()
    dr_enabled: bool = False
    om_cost: float = 0.0
    surge_hours: tuple = ()
    surge_multiplier: float = 1.0
    barrier: BarrierConfig = field(default_factory=BarrierConfig)
    gradient_mode: str = "full_jacobian"
    price_cap_factor: float = 5.0
    slack_margin: float = 1e-3
    mismatch_budget: float = 0.15

    def __post_init__(self):
        if self.energy_burden_cap <= 0.0:
            raise DomainError("energy_burden_cap must be > 0")
        if not 0.0 <= self.beta < 1.0:
            raise DomainError("beta must lie in [0, 1)")
        if self.alpha < 0.0:
            raise DomainError("alpha must be >= 0")
        if self.gradient_mode not in ("full_jacobian", "paper_diagonal"):
            raise DomainError(f"unknown gradient_mode {self.gradient_mode!r}")
        if self.dr_enabled and not self.peak_hours:
            raise DomainError("dr_enabled requires a non-empty peak_hours set")
        if self.surge_hours and self.surge_multiplier <= 1.0:
            raise DomainError("surge multiplier must be > 1")
        object.__setattr__(self, "peak_hours", tuple(sorted(self.peak_hours)))
        object.__setattr__(self, "surge_hours", tuple(sorted(self.surge_hours)))
        for h in self.peak_hours + self.surge_hours:
            if int(h) != h or h < 1:
                raise DomainError(f"hour indices are 1-based integers, got {h}")

    def validate_horizon(self, T: int) -> None:
        for h in self.peak_hours + self.surge_hours:
            if h > T:
                raise DomainError(f"hour index {h} exceeds horizon T={T}")


def energy_burden(demand: DemandProfile, price: PriceProfile, daily_income: float) -> float:
    """Bill-to-income ratio: dot(demand, price) / daily_income.

    Dimensionless; daily_income is $/day and must be positive.
    """
    if daily_income <= 0.0 or not np.isfinite(daily_income):
        raise DomainError(f"daily_income must be > 0, got {daily_income}")
    if demand.horizon != price.horizon:
        raise DomainError(
            f"profile length mismatch: demand T={demand.horizon}, price T={price.horizon}"
        )
    return float(np.dot(demand.values, price.values)) / daily_income


def hinge(x: float) -> float:
    """Positive part max(0, x); the subgradient convention at 0 is 0."""
    return x if x > 0.0 else 0.0
