"""Shared fixtures: hand-built scenarios with explicit numbers."""

import numpy as np
import pytest

from eqglb.domain import (
    DataCenter,
    EnvironmentSeries,
    EquityConfig,
    ModelProfile,
    MovingCostMatrix,
    Scenario,
    WorkloadTrace,
)


def make_scenario(
    energy_price,
    carbon=None,
    wue=None,
    demand=None,
    energy_per_request=None,
    resource_per_request=None,
    perf_cost=None,
    perf_score=None,
    pue=None,
    capacity=None,
    moving=None,
):
    """Assemble a Scenario from plain arrays with permissive defaults.

    ``energy_price`` fixes (N, T); everything else defaults to benign
    values (zero carbon/water/moving, one model, ample capacity).
    """
    price = np.atleast_2d(np.asarray(energy_price, dtype=float))
    N, T = price.shape
    carbon = np.zeros((N, T)) if carbon is None else np.asarray(carbon, dtype=float)
    wue = np.zeros((N, T)) if wue is None else np.asarray(wue, dtype=float)
    demand = np.ones((1, T)) if demand is None else np.atleast_2d(np.asarray(demand, dtype=float))
    J = demand.shape[0]

    if energy_per_request is None:
        energy_per_request = np.full((N, 1), 0.001)
    epr = np.atleast_2d(np.asarray(energy_per_request, dtype=float))
    K = epr.shape[1]
    rpr = epr if resource_per_request is None else np.atleast_2d(np.asarray(resource_per_request, dtype=float))
    perf_cost = np.zeros(K) if perf_cost is None else np.asarray(perf_cost, dtype=float)
    perf_score = np.zeros(K) if perf_score is None else np.asarray(perf_score, dtype=float)
    pue = np.ones(N) if pue is None else np.broadcast_to(np.asarray(pue, dtype=float), (N,))
    if capacity is None:
        capacity = np.full(N, 1e9)
    else:
        capacity = np.broadcast_to(np.asarray(capacity, dtype=float), (N,))
    d = np.zeros((N, J)) if moving is None else np.asarray(moving, dtype=float)

    return Scenario(
        datacenters=tuple(
            DataCenter(id=i, pue=float(pue[i]), capacity=float(capacity[i])) for i in range(N)
        ),
        models=tuple(
            ModelProfile(
                id=k,
                energy_per_request=epr[:, k],
                resource_per_request=rpr[:, k],
                perf_cost=float(perf_cost[k]),
                perf_score=float(perf_score[k]),
            )
            for k in range(K)
        ),
        environment=EnvironmentSeries(price, carbon, wue),
        workload=WorkloadTrace(demand),
        moving=MovingCostMatrix(d),
    )


def random_scenario(rng, N=2, J=2, K=2, T=2, scale=1.0):
    """Random fully-populated scenario with O(1) magnitudes."""
    price = rng.uniform(0.05, 0.2, (N, T))
    carbon = rng.uniform(1e-4, 6e-4, (N, T))
    wue = rng.uniform(5e-4, 4e-3, (N, T))
    demand = scale * rng.uniform(1.0, 10.0, (J, T))
    epr = rng.uniform(5e-4, 5e-3, (N, K))
    perf_cost = np.sort(rng.uniform(0.0, 0.5, K))[::-1].copy()
    perf_cost[-1] = 0.0
    return make_scenario(
        price,
        carbon=carbon,
        wue=wue,
        demand=demand,
        energy_per_request=epr,
        resource_per_request=epr,
        perf_cost=perf_cost,
        pue=rng.uniform(1.0, 1.5, N),
        capacity=scale * rng.uniform(50.0, 200.0, N) * 5e-3,
        moving=rng.uniform(0.0, 1e-3, (N, J)),
    )


def random_allocation(rng, s, feasible_demand=True):
    """Random nonnegative allocation; demand equalities hold if requested."""
    T, N, J, K = s.shape
    y = rng.uniform(0.0, 1.0, (T, N, J, K))
    if feasible_demand:
        served = y.sum(axis=(1, 3))  # (T, J)
        y = y * (s.demand.T / served)[:, None, :, None]
    return y


@pytest.fixture
def rng():
    return np.random.default_rng(0)
