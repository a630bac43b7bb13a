"""Cost-engine tests: naive-loop oracles, closed forms, gradient checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqglb import costs
from eqglb.costs import (
    QINF_PROXY,
    energy_per_dc,
    env_footprint_per_dc,
    env_inequity,
    lq_norm,
    moving_cost,
    objective_batch,
    objective_gradient,
    operational_cost,
    smoothed_objective,
    social_fairness,
    total_objective,
)
from eqglb.domain import EquityConfig

from conftest import make_scenario, random_allocation, random_scenario


# ---------------------------------------------------------------------------
# lq_norm


def test_lq_norm_q1_is_sum():
    x = np.array([0.3, 0.4, 1.2])
    assert lq_norm(x, 1.0) == pytest.approx(x.sum(), abs=0)


def test_lq_norm_345_scaling():
    # (0.3, 0.4): q=1 -> 0.7, q=2 -> 0.5 (3-4-5), q=inf -> 0.4
    x = np.array([0.3, 0.4])
    assert lq_norm(x, 1.0) == pytest.approx(0.7, abs=1e-15)
    assert lq_norm(x, 2.0) == pytest.approx(0.5, abs=1e-15)
    assert lq_norm(x, math.inf) == pytest.approx(0.4, abs=0)


def test_lq_norm_q64_golden():
    # reference for (3, 4) at q = 64 computed once with 50-digit mpmath:
    # (3^64 + 4^64)^(1/64) = 4.00000000063066811144...
    assert lq_norm(np.array([3.0, 4.0]), 64.0) == pytest.approx(
        4.000000000630668111440239, rel=1e-14
    )


def test_lq_norm_rejects_q_below_one():
    with pytest.raises(ValueError):
        lq_norm(np.array([1.0]), 0.5)


def test_lq_norm_smoothing_shift():
    x = np.array([0.0, 0.0])
    assert lq_norm(x, 2.0, eps=0.5) == pytest.approx(0.5, abs=1e-15)
    # smoothed value exceeds exact by at most eps
    x = np.array([1.0, 2.0])
    exact = lq_norm(x, 3.0)
    smoothed = lq_norm(x, 3.0, eps=1e-3)
    assert exact < smoothed < exact + 1e-3


def test_lq_norm_smoothing_rejected_for_inf():
    with pytest.raises(ValueError):
        lq_norm(np.array([1.0]), math.inf, eps=1e-6)


def test_lq_norm_overflow_free_at_large_q():
    x = np.array([1e200, 5e199])
    out = lq_norm(x, 64.0)
    assert np.isfinite(out)
    assert out == pytest.approx(1e200, rel=1e-12)


def test_lq_norm_axis():
    x = np.array([[0.3, 0.4], [1.0, 0.0]])
    out = lq_norm(x, 2.0, axis=1)
    assert out == pytest.approx([0.5, 1.0], abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=1, max_size=8),
    st.sampled_from([1.0, 1.5, 2.0, 4.0, 8.0, 64.0]),
)
def test_lq_norm_sandwich_property(vals, q):
    x = np.array(vals)
    n = lq_norm(x, q)
    mx = float(np.max(x))
    assert n >= mx - 1e-12 * max(mx, 1.0)
    assert n <= len(x) ** (1.0 / q) * mx + 1e-12 * max(mx, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1e3), min_size=1, max_size=6))
def test_lq_norm_monotone_in_q(vals):
    x = np.array(vals)
    qs = [1.0, 2.0, 4.0, 8.0, 64.0, math.inf]
    norms = [lq_norm(x, q) for q in qs]
    for a, b in zip(norms, norms[1:]):
        assert b <= a + 1e-12 * max(a, 1.0)


# ---------------------------------------------------------------------------
# energy / operational cost


def test_energy_zero_allocation():
    s = random_scenario(np.random.default_rng(1))
    assert np.all(energy_per_dc(np.zeros((s.n_dcs, s.n_regions, s.n_models)), s) == 0)


def test_energy_single_product():
    s = make_scenario([[0.1]], energy_per_request=[[0.002]])
    y_t = np.full((1, 1, 1), 1000.0)
    assert energy_per_dc(y_t, s) == pytest.approx([2.0], abs=0)


def test_energy_matches_triple_loop(rng):
    s = random_scenario(rng, N=3, J=2, K=2, T=1)
    y_t = rng.uniform(0, 5, (3, 2, 2))
    E = s.energy_matrix
    want = np.zeros(3)
    for i in range(3):
        for j in range(2):
            for k in range(2):
                want[i] += y_t[i, j, k] * E[i, k]
    assert energy_per_dc(y_t, s) == pytest.approx(want, abs=1e-12)


def test_energy_rejects_bad_shape():
    s = random_scenario(np.random.default_rng(2))
    with pytest.raises(ValueError):
        energy_per_dc(np.zeros((1, 1, 1)), s)


def test_operational_cost_formula(rng):
    s = random_scenario(rng, N=2, J=1, K=1, T=3)
    y_t = rng.uniform(0, 4, (2, 1, 1))
    t = 1
    e = energy_per_dc(y_t, s)
    want = sum(s.pue[i] * s.environment.energy_price[i, t] * e[i] for i in range(2))
    assert operational_cost(y_t, s, t) == pytest.approx(want, rel=1e-14)


def test_operational_cost_rejects_bad_t():
    s = random_scenario(np.random.default_rng(3), T=2)
    with pytest.raises(IndexError):
        operational_cost(np.zeros((s.n_dcs, s.n_regions, s.n_models)), s, 2)


# ---------------------------------------------------------------------------
# social fairness


def test_social_zero_when_best_model_only():
    s = make_scenario(
        [[0.1, 0.1]], energy_per_request=[[0.001, 0.002]], perf_cost=[0.4, 0.0],
        demand=[[10.0, 10.0]],
    )
    y_t = np.zeros((1, 1, 2))
    y_t[0, 0, 1] = 10.0  # all on the zero-cost model
    assert social_fairness(y_t, s, 0, q=8.0) == 0.0


def test_social_two_region_closed_form():
    # per-region averages 0.3 and 0.4 by construction
    s = make_scenario(
        [[0.1]], energy_per_request=[[0.001, 0.002]], perf_cost=[1.0, 0.0],
        demand=[[10.0], [10.0]],
    )
    y_t = np.zeros((1, 2, 2))
    y_t[0, 0] = [3.0, 7.0]
    y_t[0, 1] = [4.0, 6.0]
    assert social_fairness(y_t, s, 0, q=1.0) == pytest.approx(0.7, abs=1e-15)
    assert social_fairness(y_t, s, 0, q=2.0) == pytest.approx(0.5, abs=1e-15)
    assert social_fairness(y_t, s, 0, q=math.inf) == pytest.approx(0.4, abs=1e-15)


def test_social_matches_two_stage_oracle(rng):
    s = random_scenario(rng, N=2, J=3, K=2, T=1)
    y = random_allocation(rng, s)
    v = np.zeros(3)
    for j in range(3):
        served = sum(
            y[0, i, j, k] * s.perf_cost[k] for i in range(2) for k in range(2)
        )
        v[j] = served / s.demand[j, 0]
    want = float(np.sum(v**3) ** (1 / 3))
    assert social_fairness(y[0], s, 0, q=3.0) == pytest.approx(want, rel=1e-12)


def test_social_skips_zero_demand_region():
    s = make_scenario(
        [[0.1]], energy_per_request=[[0.001]], perf_cost=[0.0],
        demand=[[10.0], [0.0]],
    )
    y_t = np.zeros((1, 2, 1))
    y_t[0, 0, 0] = 10.0
    assert np.isfinite(social_fairness(y_t, s, 0, q=2.0))


# ---------------------------------------------------------------------------
# environmental footprint


def test_env_footprint_matches_naive_loop(rng):
    s = random_scenario(rng, N=3, J=2, K=2, T=4)
    y = random_allocation(rng, s)
    cfg = EquityConfig(mu_c=1500.0, mu_w=60.0)
    env = s.environment
    want = np.zeros(3)
    for i in range(3):
        for t in range(4):
            e_it = sum(y[t, i, j, k] * s.energy_matrix[i, k] for j in range(2) for k in range(2))
            want[i] += (
                cfg.mu_c * env.carbon_intensity[i, t] + cfg.mu_w * env.wue[i, t]
            ) * s.pue[i] * e_it
    assert env_footprint_per_dc(y, s, cfg) == pytest.approx(want, rel=1e-12)


def test_env_inequity_is_lq_of_footprints():
    H = np.array([3.0, 4.0])
    assert env_inequity(H, 1.0) == pytest.approx(7.0)
    assert env_inequity(H, 2.0) == pytest.approx(5.0)
    assert env_inequity(H, math.inf) == pytest.approx(4.0)


# ---------------------------------------------------------------------------
# moving cost


def test_moving_cost_zero_matrix(rng):
    s = random_scenario(rng, T=2)
    s = make_scenario(
        s.environment.energy_price,
        demand=s.demand,
        energy_per_request=s.energy_matrix,
    )  # moving defaults to the zero matrix
    y = random_allocation(rng, s)
    assert moving_cost(y, s) == 0.0


def test_moving_cost_single_entry():
    s = make_scenario([[0.1]], moving=[[0.01]])
    y = np.full((1, 1, 1, 1), 50.0)
    assert moving_cost(y, s) == pytest.approx(0.5, abs=0)


def test_moving_cost_matches_quadruple_loop(rng):
    s = random_scenario(rng, N=2, J=3, K=2, T=3)
    y = random_allocation(rng, s)
    want = 0.0
    for t in range(3):
        for i in range(2):
            for j in range(3):
                for k in range(2):
                    want += y[t, i, j, k] * s.moving.d[i, j]
    assert moving_cost(y, s) == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# total objective


def test_total_objective_reduces_to_operational(rng):
    s = random_scenario(rng, T=3)
    s = make_scenario(
        s.environment.energy_price,
        demand=s.demand,
        energy_per_request=s.energy_matrix,
        pue=s.pue,
    )  # zero carbon/wue/moving, zero perf cost
    y = random_allocation(rng, s)
    cfg = EquityConfig(q_social=1.0, q_env=1.0, mu_c=0.0, mu_w=0.0)
    bd = total_objective(y, s, cfg)
    want = sum(operational_cost(y[t], s, t) for t in range(3))
    assert bd.total == pytest.approx(want, rel=1e-12)
    assert bd.social_term.sum() == 0.0
    assert bd.env_term == 0.0


def test_total_objective_q1_is_weighted_sum(rng):
    s = random_scenario(rng, T=2)
    y = random_allocation(rng, s)
    cfg = EquityConfig(q_social=1.0, q_env=1.0, mu_c=1500.0, mu_w=60.0, social_weight=7.0)
    bd = total_objective(y, s, cfg)
    # q = 1 collapses both norms into plain sums
    want = bd.energy_cost.sum() + bd.moving_cost
    want += 7.0 * sum(social_fairness(y[t], s, t, 1.0) for t in range(2))
    want += env_footprint_per_dc(y, s, cfg).sum()
    assert bd.total == pytest.approx(want, rel=1e-12)


def test_total_objective_term_by_term(rng):
    s = random_scenario(rng, N=3, J=2, K=2, T=3)
    y = random_allocation(rng, s)
    cfg = EquityConfig(q_social=2.0, q_env=8.0, mu_c=1500.0, mu_w=60.0, social_weight=3.0)
    bd = total_objective(y, s, cfg)
    want = sum(operational_cost(y[t], s, t) for t in range(3))
    want += 3.0 * sum(social_fairness(y[t], s, t, 2.0) for t in range(3))
    want += env_inequity(env_footprint_per_dc(y, s, cfg), 8.0)
    want += moving_cost(y, s)
    assert bd.total == pytest.approx(want, rel=1e-12)


def test_total_objective_recompose(rng):
    s = random_scenario(rng)
    y = random_allocation(rng, s)
    cfg = EquityConfig(q_social=2.0, q_env=2.0, mu_c=100.0, mu_w=10.0)
    bd = total_objective(y, s, cfg)
    assert bd.recompose() == pytest.approx(bd.total, rel=1e-14)


def test_total_objective_positive_homogeneity(rng):
    # every term has zero intercept and is positively homogeneous degree 1
    s = random_scenario(rng, T=2)
    y = random_allocation(rng, s)
    cfg = EquityConfig(q_social=4.0, q_env=2.0, mu_c=1500.0, mu_w=60.0, social_weight=2.0)
    base = total_objective(y, s, cfg).total
    for alpha in [0.0, 0.3, 2.5]:
        assert total_objective(alpha * y, s, cfg).total == pytest.approx(
            alpha * base, rel=1e-12, abs=1e-12
        )


def test_objective_batch_matches_total(rng):
    s = random_scenario(rng, N=2, J=2, K=2, T=2)
    cfg = EquityConfig(q_social=2.0, q_env=8.0, mu_c=1500.0, mu_w=60.0, social_weight=2.0)
    ys = np.stack([random_allocation(rng, s) for _ in range(5)])
    got = objective_batch(ys, s, cfg)
    want = [total_objective(ys[b], s, cfg).total for b in range(5)]
    assert got == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# gradient


def _fd_gradient(y, s, cfg, idx, h=1e-5):
    y1 = y.copy()
    y1[idx] += h
    y0 = y.copy()
    y0[idx] -= h
    return (smoothed_objective(y1, s, cfg) - smoothed_objective(y0, s, cfg)) / (2 * h)


def test_gradient_linear_case_closed_form(rng):
    s = random_scenario(rng, N=2, J=2, K=1, T=2)
    s = make_scenario(
        s.environment.energy_price,
        demand=s.demand,
        energy_per_request=s.energy_matrix,
        pue=s.pue,
        moving=rng.uniform(0, 1e-3, (2, 2)),
    )
    cfg = EquityConfig(q_social=1.0, q_env=1.0, mu_c=0.0, mu_w=0.0, social_weight=0.0)
    y = random_allocation(rng, s)
    g = objective_gradient(y, s, cfg)
    for t in range(2):
        for i in range(2):
            for j in range(2):
                want = (
                    s.pue[i] * s.environment.energy_price[i, t] * s.energy_matrix[i, 0]
                    + s.moving.d[i, j]
                )
                assert g[t, i, j, 0] == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("q", [1.0, 2.0, 8.0])
def test_gradient_matches_finite_differences(rng, q):
    s = random_scenario(rng, N=2, J=2, K=2, T=2)
    cfg = EquityConfig(
        q_social=q, q_env=q, mu_c=1500.0, mu_w=60.0, social_weight=2.0, smoothing_eps=1e-4
    )
    for _ in range(5):
        y = random_allocation(rng, s)
        g = objective_gradient(y, s, cfg)
        for _ in range(4):
            idx = tuple(rng.integers(0, d) for d in s.shape)
            fd = _fd_gradient(y, s, cfg, idx)
            assert g[idx] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_gradient_finite_at_origin():
    s = random_scenario(np.random.default_rng(4))
    cfg = EquityConfig(q_social=8.0, q_env=8.0, mu_c=1500.0, mu_w=60.0, smoothing_eps=1e-6)
    g = objective_gradient(np.zeros(s.shape), s, cfg)
    assert np.all(np.isfinite(g))


def test_smoothed_tracks_exact(rng):
    s = random_scenario(rng)
    y = random_allocation(rng, s)
    cfg = EquityConfig(q_social=2.0, q_env=2.0, mu_c=1500.0, mu_w=60.0, smoothing_eps=1e-8)
    exact = total_objective(y, s, cfg).total
    smooth = smoothed_objective(y, s, cfg)
    # one eps shift per norm evaluation: T social norms + 1 env norm
    assert exact <= smooth <= exact + (s.horizon * cfg.social_weight + 1) * 1e-8 + 1e-9


def test_qinf_proxy_used_for_solver_path(rng):
    s = random_scenario(rng)
    y = random_allocation(rng, s)
    cfg = EquityConfig(q_social=math.inf, q_env=math.inf, mu_c=1500.0, mu_w=60.0)
    proxy = EquityConfig(q_social=QINF_PROXY, q_env=QINF_PROXY, mu_c=1500.0, mu_w=60.0)
    assert smoothed_objective(y, s, cfg) == pytest.approx(
        smoothed_objective(y, s, proxy), rel=1e-14
    )
    assert np.allclose(objective_gradient(y, s, cfg), objective_gradient(y, s, proxy))
