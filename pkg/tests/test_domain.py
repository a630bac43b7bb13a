"""Value-type invariants: immutability, validation reporting, config guards."""

import numpy as np
import pytest

from eqglb.domain import (
    DataCenter,
    EquityConfig,
    ModelProfile,
    Scenario,
    validate_allocation,
    validate_scenario,
)

from conftest import make_scenario, random_scenario


def test_shape_properties(rng):
    s = random_scenario(rng, N=3, J=4, K=2, T=5)
    assert s.shape == (5, 3, 4, 2)
    assert (s.n_dcs, s.n_regions, s.n_models, s.horizon) == (3, 4, 2, 5)
    assert s.energy_matrix.shape == (3, 2)
    assert s.resource_matrix.shape == (3, 2)
    assert s.demand.shape == (4, 5)


def test_arrays_frozen(rng):
    s = random_scenario(rng)
    with pytest.raises(ValueError):
        s.environment.energy_price[0, 0] = 1.0
    with pytest.raises(ValueError):
        s.workload.demand[0, 0] = 1.0
    with pytest.raises(ValueError):
        s.models[0].energy_per_request[0] = 1.0
    with pytest.raises(ValueError):
        s.moving.d[0, 0] = 1.0


def test_valid_scenario_reports_clean(rng):
    assert validate_scenario(random_scenario(rng)) == []


def test_validate_flags_bad_pue():
    s = make_scenario([[0.1]], pue=[0.8])
    msgs = validate_scenario(s)
    assert any("pue" in m for m in msgs)


def test_validate_flags_nonpositive_capacity():
    s = make_scenario([[0.1]], capacity=[0.0])
    assert any("capacity" in m for m in validate_scenario(s))


def test_validate_flags_negative_series():
    s = make_scenario([[0.1]], carbon=[[-1e-4]])
    assert any("carbon_intensity" in m and "negative" in m for m in validate_scenario(s))


def test_validate_flags_nonfinite_series():
    s = make_scenario([[np.nan]])
    assert any("energy_price" in m and "non-finite" in m for m in validate_scenario(s))


def test_validate_flags_horizon_mismatch():
    s = make_scenario([[0.1, 0.2]], demand=[[1.0, 2.0, 3.0]])
    assert any("demand" in m and "horizon" in m for m in validate_scenario(s))


def test_validate_flags_missing_best_model():
    s = make_scenario([[0.1]], perf_cost=[0.5])
    assert any("perf_cost == 0" in m for m in validate_scenario(s))


def test_validate_flags_negative_demand():
    s = make_scenario([[0.1]], demand=[[-2.0]])
    assert any("demand" in m for m in validate_scenario(s))


def test_validate_flags_moving_shape():
    s = make_scenario([[0.1]], moving=np.zeros((2, 3)))
    assert any("moving" in m for m in validate_scenario(s))


def test_validate_flags_infeasible_peak():
    s = make_scenario(
        [[0.1]], demand=[[1000.0]], energy_per_request=[[0.01]], capacity=[0.5]
    )
    assert any("infeasible" in m for m in validate_scenario(s))


def test_validate_allocation(rng):
    s = random_scenario(rng)
    y = np.zeros(s.shape)
    assert validate_allocation(y, s) == []
    assert validate_allocation(np.zeros((1, 1, 1, 1)), s)
    bad = y.copy()
    bad[0, 0, 0, 0] = -1.0
    assert any("negative" in m for m in validate_allocation(bad, s))
    bad2 = y.copy()
    bad2[0, 0, 0, 0] = np.inf
    assert any("non-finite" in m for m in validate_allocation(bad2, s))


def test_equity_config_guards():
    with pytest.raises(ValueError):
        EquityConfig(q_social=0.5)
    with pytest.raises(ValueError):
        EquityConfig(q_env=0.0)
    with pytest.raises(ValueError):
        EquityConfig(mu_c=-1.0)
    with pytest.raises(ValueError):
        EquityConfig(smoothing_eps=0.0)


def test_equity_config_uniform_and_replace():
    cfg = EquityConfig.uniform(8.0, mu_c=1500.0)
    assert cfg.q_social == cfg.q_env == 8.0
    cfg2 = cfg.replace(mu_w=60.0)
    assert cfg2.mu_w == 60.0 and cfg2.mu_c == 1500.0
    assert cfg.mu_w == 0.0  # original untouched


def test_dataclasses_frozen():
    dc = DataCenter(id=0, pue=1.2, capacity=5.0)
    with pytest.raises(AttributeError):
        dc.pue = 1.5
    cfg = EquityConfig()
    with pytest.raises(AttributeError):
        cfg.mu_c = 3.0
