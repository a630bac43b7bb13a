"""Objective terms and their analytic gradients.

The objective over an allocation tensor y of shape (T, N, J, K) is

    sum_t operational_cost_t  +  w_s * sum_t f_t  +  g  +  moving cost

where f_t is an L_q norm of per-region average performance costs and g is
an L_q norm of per-datacenter environmental footprints over the horizon.
Every term is convex and positively homogeneous of degree 1 in y (linear
coefficients have zero intercept).

Two evaluation paths exist on purpose:

* ``total_objective``  -> exact norms (q == inf computes a true max); used
  for reporting and for every objective comparison in tests.
* ``smoothed_objective`` / ``objective_gradient`` -> the eps-shifted norm
  (sum x^q + eps^q)^(1/q), continuously differentiable on the nonnegative
  orthant; used by the first-order solver.  The shift overestimates the
  exact norm by at most eps per norm evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import EquityConfig, Scenario

__all__ = [
    "CostBreakdown",
    "energy_per_dc",
    "operational_cost",
    "social_fairness",
    "env_footprint_per_dc",
    "env_inequity",
    "moving_cost",
    "total_objective",
    "smoothed_objective",
    "objective_gradient",
    "lq_norm",
    "objective_batch",
    "QINF_PROXY",
]

# finite exponent substituted for q = inf inside the smoothed solver path;
# the approximation gap is bounded by N**(1/64) - 1 relative.
QINF_PROXY = 64.0


def lq_norm(x: np.ndarray, q: float, eps: float = 0.0, axis=None) -> np.ndarray:
    """(sum x_i^q + eps^q)^(1/q) for q >= 1; exact max for q == inf.

    q == 1 is always evaluated as a plain sum (no smoothing needed: the
    norm is already smooth on the orthant).
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    x = np.asarray(x, dtype=float)
    if math.isinf(q):
        if eps:
            raise ValueError("smoothing is not defined for q = inf; use a finite proxy")
        return np.max(x, axis=axis) if x.size else 0.0
    if q == 1:
        return np.sum(x, axis=axis)
    if eps:
        return (np.sum(x**q, axis=axis) + eps**q) ** (1.0 / q)
    # max-factoring keeps large finite q (e.g. 64) overflow-free
    m = np.max(x, axis=axis, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    r = np.sum((x / safe) ** q, axis=axis) ** (1.0 / q)
    out = np.max(x, axis=axis) * r
    return out if axis is not None else float(out)


@dataclass(frozen=True)
class CostBreakdown:
    """Full decomposition of the objective at a given allocation."""

    energy_cost: np.ndarray      # (T,) $
    per_dc_energy: np.ndarray    # (N, T) kWh, IT energy e_i(t)
    per_dc_env: np.ndarray       # (N,) $, footprint H_i over the horizon
    per_region_perf: np.ndarray  # (J, T) normalized performance cost
    social_term: np.ndarray      # (T,) $
    env_term: float              # $
    moving_cost: float           # $
    total: float                 # $

    def recompose(self) -> float:
        return float(self.energy_cost.sum() + self.social_term.sum() + self.env_term + self.moving_cost)


def _tensor(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 4:
        raise ValueError(f"allocation must be 4-d (T, N, J, K), got shape {y.shape}")
    return y


def energy_per_dc(y_t: np.ndarray, s: Scenario) -> np.ndarray:
    """IT energy e_i(t) in kWh for one timestep slice of shape (N, J, K)."""
    y_t = np.asarray(y_t, dtype=float)
    if y_t.shape != (s.n_dcs, s.n_regions, s.n_models):
        raise ValueError(f"slice shape {y_t.shape} != {(s.n_dcs, s.n_regions, s.n_models)}")
    return np.einsum("ijk,ik->i", y_t, s.energy_matrix)


def operational_cost(y_t: np.ndarray, s: Scenario, t: int) -> float:
    """Energy bill at timestep t: sum_i pue_i * price_{i,t} * e_i(t)."""
    if not 0 <= t < s.horizon:
        raise IndexError(f"timestep {t} out of range [0, {s.horizon})")
    e = energy_per_dc(y_t, s)
    return float(np.sum(s.pue * s.environment.energy_price[:, t] * e))


def social_fairness(y_t: np.ndarray, s: Scenario, t: int, q: float) -> float:
    """L_q norm over regions of the demand-normalized performance cost.

    Regions with zero demand at t contribute nothing (no served requests,
    no grievance).
    """
    y_t = np.asarray(y_t, dtype=float)
    lam = s.demand[:, t]
    raw = np.einsum("ijk,k->j", y_t, s.perf_cost)
    v = np.where(lam > 0, raw / np.where(lam > 0, lam, 1.0), 0.0)
    return float(lq_norm(v, q))


def _env_slope(s: Scenario, cfg: EquityConfig) -> np.ndarray:
    """(N, T) $/kWh of IT energy: mu_c * carbon + mu_w * water, PUE included."""
    env = s.environment
    slope = cfg.mu_c * env.carbon_intensity + cfg.mu_w * env.wue
    if cfg.env_pue:
        slope = slope * s.pue[:, None]
    return slope


def env_footprint_per_dc(y: np.ndarray, s: Scenario, cfg: EquityConfig) -> np.ndarray:
    """H_i: monetized carbon + water footprint of each datacenter over the horizon."""
    y = _tensor(y)
    e = np.einsum("tijk,ik->it", y, s.energy_matrix)  # (N, T)
    return np.einsum("it,it->i", _env_slope(s, cfg), e)


def env_inequity(H: np.ndarray, q: float) -> float:
    """L_q norm of the per-datacenter footprint vector; max for q = inf."""
    return float(lq_norm(np.asarray(H, dtype=float), q))


def moving_cost(y: np.ndarray, s: Scenario) -> float:
    """Total routing cost sum_{t,i,j,k} y * d[i, j]."""
    return float(np.einsum("tijk,ij->", _tensor(y), s.moving.d))


def total_objective(y: np.ndarray, s: Scenario, cfg: EquityConfig) -> CostBreakdown:
    """Evaluate every objective term with exact (unsmoothed) norms."""
    y = _tensor(y)
    T = s.horizon
    if y.shape != s.shape:
        raise ValueError(f"allocation shape {y.shape} != scenario shape {s.shape}")

    e = np.einsum("tijk,ik->it", y, s.energy_matrix)        # (N, T)
    energy_cost = np.einsum("i,it->t", s.pue, s.environment.energy_price * e)

    lam = s.demand                                          # (J, T)
    raw = np.einsum("tijk,k->jt", y, s.perf_cost)
    perf = np.where(lam > 0, raw / np.where(lam > 0, lam, 1.0), 0.0)

    if cfg.include_social:
        social = cfg.social_weight * lq_norm(perf, cfg.q_social, axis=0)
    else:
        social = np.zeros(T)

    H = np.einsum("it,it->i", _env_slope(s, cfg), e)
    env_term = env_inequity(H, cfg.q_env) if cfg.include_env else 0.0

    mv = float(np.einsum("tijk,ij->", y, s.moving.d))

    total = float(energy_cost.sum() + np.sum(social) + env_term + mv)
    return CostBreakdown(
        energy_cost=energy_cost,
        per_dc_energy=e,
        per_dc_env=H,
        per_region_perf=perf,
        social_term=np.asarray(social, dtype=float),
        env_term=float(env_term),
        moving_cost=mv,
        total=total,
    )


def _solver_q(q: float) -> float:
    return QINF_PROXY if math.isinf(q) else q


def smoothed_objective(y: np.ndarray, s: Scenario, cfg: EquityConfig) -> float:
    """Objective with eps-shifted norms; the function the solver minimizes."""
    y = _tensor(y)
    eps = cfg.smoothing_eps

    e = np.einsum("tijk,ik->it", y, s.energy_matrix)
    val = float(np.einsum("i,it->", s.pue, s.environment.energy_price * e))

    if cfg.include_social:
        qs = _solver_q(cfg.q_social)
        lam = s.demand
        raw = np.einsum("tijk,k->jt", y, s.perf_cost)
        perf = np.where(lam > 0, raw / np.where(lam > 0, lam, 1.0), 0.0)
        val += cfg.social_weight * float(np.sum(lq_norm(perf, qs, eps=eps if qs > 1 else 0.0, axis=0)))

    if cfg.include_env:
        qe = _solver_q(cfg.q_env)
        H = np.einsum("it,it->i", _env_slope(s, cfg), e)
        val += float(lq_norm(H, qe, eps=eps if qe > 1 else 0.0))

    val += float(np.einsum("tijk,ij->", y, s.moving.d))
    return val


def objective_gradient(y: np.ndarray, s: Scenario, cfg: EquityConfig) -> np.ndarray:
    """Gradient of ``smoothed_objective`` w.r.t. y, same (T, N, J, K) shape."""
    y = _tensor(y)
    T, N, J, K = s.shape
    eps = cfg.smoothing_eps
    E = s.energy_matrix

    # operational: gamma_i p_{i,t} E[i,k], constant in y
    op = (s.pue[:, None] * s.environment.energy_price).T[:, :, None, None] * E[None, :, None, :]
    grad = np.broadcast_to(op, (T, N, J, K)).copy()

    # moving: d[i,j]
    grad += s.moving.d[None, :, :, None]

    if cfg.include_social and cfg.social_weight > 0:
        qs = _solver_q(cfg.q_social)
        lam = s.demand  # (J, T)
        pos = lam > 0
        raw = np.einsum("tijk,k->jt", y, s.perf_cost)
        perf = np.where(pos, raw / np.where(pos, lam, 1.0), 0.0)
        if qs == 1:
            coef = np.where(pos, 1.0, 0.0)
        else:
            norm = (np.sum(perf**qs, axis=0) + eps**qs) ** ((qs - 1.0) / qs)  # (T,)
            coef = np.where(pos, perf ** (qs - 1.0) / norm[None, :], 0.0)
        per_region = cfg.social_weight * np.where(pos, coef / np.where(pos, lam, 1.0), 0.0)  # (J, T)
        grad += per_region.T[:, None, :, None] * s.perf_cost[None, None, None, :]

    if cfg.include_env:
        qe = _solver_q(cfg.q_env)
        slope = _env_slope(s, cfg)  # (N, T)
        e = np.einsum("tijk,ik->it", y, E)
        H = np.einsum("it,it->i", slope, e)
        if qe == 1:
            gH = np.ones(N)
        else:
            norm = (np.sum(H**qe) + eps**qe) ** ((qe - 1.0) / qe)
            gH = H ** (qe - 1.0) / norm
        grad += (gH[:, None] * slope).T[:, :, None, None] * E[None, :, None, :]

    return grad


def objective_batch(ys: np.ndarray, s: Scenario, cfg: EquityConfig) -> np.ndarray:
    """Exact objective for a stack of allocations, shape (B, T, N, J, K).

    Vectorized re-statement of ``total_objective`` used by the brute-force
    oracle, which must evaluate millions of grid candidates.
    """
    ys = np.asarray(ys, dtype=float)
    E = s.energy_matrix
    e = np.einsum("btijk,ik->bit", ys, E)
    val = np.einsum("i,bit->b", s.pue, s.environment.energy_price[None] * e)

    if cfg.include_social:
        lam = s.demand
        raw = np.einsum("btijk,k->bjt", ys, s.perf_cost)
        perf = np.where(lam[None] > 0, raw / np.where(lam > 0, lam, 1.0)[None], 0.0)
        val = val + cfg.social_weight * np.sum(lq_norm(perf, cfg.q_social, axis=1), axis=-1)

    if cfg.include_env:
        H = np.einsum("bit,it->bi", e, _env_slope(s, cfg))
        val = val + lq_norm(H, cfg.q_env, axis=1)

    val = val + np.einsum("btijk,ij->b", ys, s.moving.d)
    return val
