"""Core value types for the equitable geographical load balancer.

Conventions used everywhere in this package:

* indices: ``i`` datacenter (0..N-1), ``j`` user region (0..J-1),
  ``k`` model (0..K-1), ``t`` hourly timestep (0..T-1)
* allocation tensors have shape ``(T, N, J, K)`` and hold requests
* units: kWh (energy), m^3 (water), ton (carbon), US$ (money)

All types are immutable after construction (numpy buffers are marked
read-only), so scenarios can be shared freely across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "DataCenter",
    "ModelProfile",
    "EnvironmentSeries",
    "WorkloadTrace",
    "MovingCostMatrix",
    "Scenario",
    "EquityConfig",
    "validate_scenario",
    "validate_allocation",
]


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DataCenter:
    """A single datacenter: PUE ratio and compute capacity (resource units)."""

    id: int
    pue: float
    capacity: float
    name: str = ""


@dataclass(frozen=True)
class ModelProfile:
    """One servable model size.

    ``energy_per_request`` / ``resource_per_request`` are per-datacenter
    vectors of length N (hardware heterogeneity is allowed; uniform fleets
    just repeat the value).  ``perf_cost`` is the per-request quality
    degradation relative to the best model, which has perf_cost == 0.
    """

    id: int
    energy_per_request: np.ndarray
    resource_per_request: np.ndarray
    perf_cost: float
    perf_score: float = 0.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "energy_per_request", _frozen(self.energy_per_request))
        object.__setattr__(self, "resource_per_request", _frozen(self.resource_per_request))


@dataclass(frozen=True)
class EnvironmentSeries:
    """Hourly per-datacenter environment traces, each of shape (N, T)."""

    energy_price: np.ndarray      # $/kWh
    carbon_intensity: np.ndarray  # ton/kWh
    wue: np.ndarray               # m^3/kWh, onsite + offsite combined

    def __post_init__(self):
        object.__setattr__(self, "energy_price", _frozen(self.energy_price))
        object.__setattr__(self, "carbon_intensity", _frozen(self.carbon_intensity))
        object.__setattr__(self, "wue", _frozen(self.wue))


@dataclass(frozen=True)
class WorkloadTrace:
    """Per-region request demand, shape (J, T)."""

    demand: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "demand", _frozen(self.demand))


@dataclass(frozen=True)
class MovingCostMatrix:
    """$/request for routing region j to datacenter i, shape (N, J)."""

    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", _frozen(self.d))


@dataclass(frozen=True)
class Scenario:
    """The full world description consumed by the cost engine and solver."""

    datacenters: tuple
    models: tuple
    environment: EnvironmentSeries
    workload: WorkloadTrace
    moving: MovingCostMatrix

    def __post_init__(self):
        object.__setattr__(self, "datacenters", tuple(self.datacenters))
        object.__setattr__(self, "models", tuple(self.models))

    # -- dimensions ---------------------------------------------------------
    @property
    def n_dcs(self) -> int:
        return len(self.datacenters)

    @property
    def n_regions(self) -> int:
        return self.workload.demand.shape[0]

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def horizon(self) -> int:
        return self.environment.energy_price.shape[1]

    # -- dense views used by the numeric code -------------------------------
    @property
    def pue(self) -> np.ndarray:
        return np.array([dc.pue for dc in self.datacenters])

    @property
    def capacity(self) -> np.ndarray:
        return np.array([dc.capacity for dc in self.datacenters])

    @property
    def perf_cost(self) -> np.ndarray:
        return np.array([m.perf_cost for m in self.models])

    @property
    def perf_score(self) -> np.ndarray:
        return np.array([m.perf_score for m in self.models])

    @property
    def energy_matrix(self) -> np.ndarray:
        """(N, K) kWh/request."""
        return np.stack([m.energy_per_request for m in self.models], axis=1)

    @property
    def resource_matrix(self) -> np.ndarray:
        """(N, K) resource units/request."""
        return np.stack([m.resource_per_request for m in self.models], axis=1)

    @property
    def demand(self) -> np.ndarray:
        return self.workload.demand

    @property
    def shape(self) -> tuple:
        return (self.horizon, self.n_dcs, self.n_regions, self.n_models)


QINF = math.inf


@dataclass(frozen=True)
class EquityConfig:
    """Objective configuration selecting among the algorithm variants.

    Separate exponents for the social and environmental fairness norms so
    that presets which regularize only one dimension are expressible.
    ``q = math.inf`` selects the exact max norm when evaluating; the solver
    substitutes a large finite exponent (see ``costs.QINF_PROXY``).
    """

    q_social: float = 1.0
    q_env: float = 1.0
    mu_c: float = 0.0        # $/ton
    mu_w: float = 0.0        # $/m^3
    include_social: bool = True
    include_env: bool = True
    social_weight: float = 1.0
    smoothing_eps: float = 1e-6
    env_pue: bool = True     # footprint accrues on facility energy (PUE-inflated)

    @classmethod
    def uniform(cls, q: float, **kw) -> "EquityConfig":
        return cls(q_social=q, q_env=q, **kw)

    def replace(self, **kw) -> "EquityConfig":
        return replace(self, **kw)

    def __post_init__(self):
        if self.q_social < 1 or self.q_env < 1:
            raise ValueError("fairness exponents must be >= 1")
        if self.mu_c < 0 or self.mu_w < 0:
            raise ValueError("mu_c and mu_w must be nonnegative")
        if self.smoothing_eps <= 0:
            raise ValueError("smoothing_eps must be positive")


# ---------------------------------------------------------------------------
# validation


def validate_scenario(s: Scenario) -> list:
    """Check every structural invariant; return a list of violation strings.

    An empty list means the scenario is valid.  Report-style on purpose:
    callers (CLI, loader) decide whether violations are fatal.
    """
    v = []
    N, J, K, T = s.n_dcs, s.n_regions, s.n_models, s.horizon

    if N < 1:
        v.append("scenario has no datacenters")
    if K < 1:
        v.append("scenario has no models")
    if J < 1:
        v.append("scenario has no regions")

    for dc in s.datacenters:
        if dc.pue < 1.0:
            v.append(f"datacenter {dc.id}: pue < 1 (got {dc.pue})")
        if not dc.capacity > 0:
            v.append(f"datacenter {dc.id}: capacity must be > 0 (got {dc.capacity})")

    for m in s.models:
        if m.energy_per_request.shape != (N,):
            v.append(f"model {m.id}: energy_per_request length {m.energy_per_request.shape} != N={N}")
        if m.resource_per_request.shape != (N,):
            v.append(f"model {m.id}: resource_per_request length {m.resource_per_request.shape} != N={N}")
        if np.any(m.energy_per_request < 0):
            v.append(f"model {m.id}: negative energy_per_request")
        if np.any(m.resource_per_request < 0):
            v.append(f"model {m.id}: negative resource_per_request")
        if m.perf_cost < 0:
            v.append(f"model {m.id}: perf_cost < 0")
    if s.models and min(m.perf_cost for m in s.models) > 0:
        v.append("no model has perf_cost == 0 (a best model is required)")

    env = s.environment
    for label, arr in (
        ("energy_price", env.energy_price),
        ("carbon_intensity", env.carbon_intensity),
        ("wue", env.wue),
    ):
        if arr.ndim != 2 or arr.shape[0] != N:
            v.append(f"{label}: shape {arr.shape} incompatible with N={N}")
        elif arr.shape[1] != T:
            v.append(f"{label}: horizon mismatch ({arr.shape[1]} != {T})")
        if np.any(arr < 0):
            v.append(f"{label}: negative entries")
        if not np.all(np.isfinite(arr)):
            v.append(f"{label}: non-finite entries")

    dem = s.workload.demand
    if dem.ndim != 2:
        v.append(f"demand: expected 2-d array, got shape {dem.shape}")
    else:
        if dem.shape[1] != T:
            v.append(f"demand: horizon mismatch ({dem.shape[1]} != {T})")
        if np.any(dem < 0):
            v.append("demand: negative entries")

    if s.moving.d.shape != (N, J):
        v.append(f"moving cost: shape {s.moving.d.shape} != (N={N}, J={J})")
    if np.any(s.moving.d < 0):
        v.append("moving cost: negative entries")

    # feasibility sanity bound: total demand must fit under the lightest model
    if not v and K >= 1:
        r_min = s.resource_matrix.min()
        total_cap = s.capacity.sum()
        worst = float(np.max(dem.sum(axis=0))) if dem.size else 0.0
        if worst * r_min > total_cap + 1e-9 * max(total_cap, 1.0):
            v.append(
                f"infeasible: peak demand {worst:g} x min resource/request {r_min:g} "
                f"exceeds total capacity {total_cap:g}"
            )
    return v


def validate_allocation(y: np.ndarray, s: Scenario, tol: float = 0.0) -> list:
    """Shape and nonnegativity checks for an allocation tensor."""
    v = []
    if y.shape != s.shape:
        v.append(f"allocation shape {y.shape} != scenario shape {s.shape}")
        return v
    if np.min(y) < -tol:
        v.append(f"allocation has negative entries (min {np.min(y):g})")
    if not np.all(np.isfinite(y)):
        v.append("allocation has non-finite entries")
    return v
