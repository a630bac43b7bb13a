"""Euclidean projection onto the per-timestep feasible set.

For each timestep the feasible set is a transportation-style polytope

    F_t = { y >= 0,
            sum_{i,k} y[i,j,k] = lambda_{j,t}          for every region j,
            sum_{j,k} r[i,k] * y[i,j,k] <= M_i         for every datacenter i }

computed by Dykstra's alternating projection between

  (a) the product of per-region scaled simplices (closed form via sorting),
  (b) the intersection of the nonnegative orthant with the per-datacenter
      capacity halfspaces (closed form per datacenter up to a 1-d root
      found by bisection; datacenters touch disjoint coordinates).

The feasible set is a product over timesteps, so the projection decouples
per t.  A fast path projects every timestep onto its simplices at once and
runs Dykstra only for the (usually few) timesteps whose capacity then
still binds.
"""

from __future__ import annotations

import math

import numpy as np

from .domain import Scenario

__all__ = [
    "InfeasibleTimestepError",
    "check_feasible",
    "project_rows_simplex",
    "project_feasible",
    "feasibility_residuals",
]


class InfeasibleTimestepError(ValueError):
    """Demand at some timestep cannot fit even with each DC's lightest model."""

    def __init__(self, t: int, demand: float, max_throughput: float):
        self.t = t
        super().__init__(
            f"timestep {t} infeasible: total demand {demand:g} exceeds max "
            f"servable throughput {max_throughput:g}"
        )


def check_feasible(s: Scenario) -> None:
    """Raise InfeasibleTimestepError on the first unservable timestep."""
    # max requests/step: each DC runs its cheapest-resource model flat out
    per_dc = s.capacity / s.resource_matrix.min(axis=1)
    cap = float(per_dc.sum())
    totals = s.demand.sum(axis=0)
    bad = np.nonzero(totals > cap * (1 + 1e-12))[0]
    if bad.size:
        t = int(bad[0])
        raise InfeasibleTimestepError(t, float(totals[t]), cap)


def project_rows_simplex(V: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Project each row of V onto {x >= 0, sum x = z_row} (sort-based, exact)."""
    V = np.asarray(V, dtype=float)
    z = np.broadcast_to(np.asarray(z, dtype=float), (V.shape[0],))
    n = V.shape[1]
    U = -np.sort(-V, axis=1)
    cssv = np.cumsum(U, axis=1) - z[:, None]
    ind = np.arange(1, n + 1)
    cond = U - cssv / ind > 0
    rho = np.maximum(np.count_nonzero(cond, axis=1), 1)
    theta = cssv[np.arange(len(V)), rho - 1] / rho
    return np.maximum(V - theta[:, None], 0.0)


def _project_rows_capacity(X: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project each row of X onto {x >= 0, a_row . x <= b_row}.

    KKT form: y = max(x - theta * a, 0) with theta >= 0 chosen so the
    constraint holds with equality when it binds.  phi(theta) = a . y is
    piecewise linear and nonincreasing with breakpoints x_c / a_c, so theta
    is found exactly by a sort and one prefix-sum scan per row.
    """
    X = np.asarray(X, dtype=float)
    y0 = np.maximum(X, 0.0)
    used = np.einsum("rc,rc->r", a, y0)
    hot = used > b
    if not np.any(hot):
        return y0
    Xh, ah, bh = X[hot], a[hot], b[hot]
    # coords with x <= 0 never activate for theta >= 0 (a > 0)
    t = np.maximum(Xh, 0.0) / ah  # breakpoints, zero rows inert
    order = np.argsort(-t, axis=1)
    ts = np.take_along_axis(t, order, axis=1)
    A = np.cumsum(np.take_along_axis(ah * np.maximum(Xh, 0.0), order, axis=1), axis=1)
    B = np.cumsum(np.take_along_axis(ah * ah, order, axis=1), axis=1)
    theta_m = (A - bh[:, None]) / B
    t_next = np.concatenate([ts[:, 1:], np.zeros((len(ts), 1))], axis=1)
    ok = (theta_m <= ts) & (theta_m >= t_next)
    m = np.argmax(ok, axis=1)  # first valid segment in decreasing-theta order
    theta = np.maximum(theta_m[np.arange(len(ts)), m], 0.0)
    out = y0.copy()
    out[hot] = np.maximum(Xh - theta[:, None] * ah, 0.0)
    return out


def _simplex_block(y: np.ndarray, demand_t: np.ndarray) -> np.ndarray:
    """Project every (t, j) fiber of a (Tb, N, J, K) block onto its simplex."""
    Tb, N, J, K = y.shape
    rows = y.transpose(0, 2, 1, 3).reshape(Tb * J, N * K)
    z = demand_t.reshape(Tb * J)  # demand_t is (Tb, J)
    out = project_rows_simplex(rows, z)
    return out.reshape(Tb, J, N, K).transpose(0, 2, 1, 3)


def _capacity_block(y: np.ndarray, rmat: np.ndarray, cap: np.ndarray) -> np.ndarray:
    """Project every (t, i) fiber of a (Tb, N, J, K) block onto its halfspace."""
    Tb, N, J, K = y.shape
    rows = y.reshape(Tb * N, J * K)
    a = np.tile(np.repeat(rmat[:, None, :], J, axis=1).reshape(N, J * K), (Tb, 1))
    b = np.tile(cap, Tb)
    out = _project_rows_capacity(rows, a, b)
    return out.reshape(Tb, N, J, K)


def _capacity_usage(y: np.ndarray, rmat: np.ndarray) -> np.ndarray:
    return np.einsum("tijk,ik->ti", y, rmat)


def _dykstra_block(y, demand_t, rmat, cap, tol, max_iters):
    """Dykstra between the simplices and the capacity set for one t-block.

    Timesteps converge at different rates, so each sweep drops the ones
    whose capacity violation is already within tolerance and keeps
    iterating on the shrinking remainder.
    """
    x = y.copy()
    p = np.zeros_like(y)
    q = np.zeros_like(y)
    out = np.empty_like(y)
    alive = np.arange(y.shape[0])
    for _ in range(max_iters):
        u = _simplex_block(x + p, demand_t[alive])
        p = x + p - u
        viol = np.max(_capacity_usage(u, rmat) - cap[None, :], axis=1)
        done = viol <= tol
        if np.any(done):
            out[alive[done]] = u[done]
            keep = ~done
            alive, x, p, q, u = alive[keep], x[keep], p[keep], q[keep], u[keep]
            if alive.size == 0:
                return out
        x_new = _capacity_block(u + q, rmat, cap)
        q = u + q - x_new
        x = x_new
    out[alive] = u
    return out


def _dual_newton(y, demand_t, rmat, cap, tol, theta, eta, max_newton=25):
    """Semismooth Newton on the capacity dual for one block of timesteps.

    On the current active face the dual gradient usage(theta) - cap is
    linear with generalized Jacobian

        -M[t] = -( diag_i sum_{j,k in A} r_ik^2
                   - sum_j outer(asum_tj) / |A_tj| ),

    where A is the set of positive allocation cells and asum_tj[i] is the
    active resource mass of datacenter i in region j.  Each step costs one
    simplex projection plus a batched N x N solve.  Rows that fail to
    converge are returned for the first-order fallback.

    Returns (u, theta, converged_mask) for the block.
    """
    Tb, N = y.shape[0], rmat.shape[0]
    conv = np.zeros(Tb, dtype=bool)
    res_prev = np.full(Tb, np.inf)
    bad = np.zeros(Tb, dtype=bool)
    stall = np.zeros(Tb, dtype=int)
    u = None
    eye = np.eye(N)
    for _ in range(max_newton):
        shift = theta[:, :, None, None] * rmat[None, :, None, :]
        u = _simplex_block(y - shift, demand_t)
        live = ~(conv | bad)
        if not np.any(live):
            break
        viol = _capacity_usage(u, rmat) - cap[None, :]
        res = np.max(np.abs(theta - np.maximum(theta + eta[None, :] * viol, 0.0)) / eta[None, :], axis=1)
        conv |= live & (res <= tol)
        # steps that keep failing to shrink the residual mean the active
        # face guess is cycling; hand those rows to the monotone fallback
        stall = np.where(live & (res > 0.5 * res_prev), stall + 1, 0)
        bad |= live & ~conv & (stall >= 3)
        res_prev = np.where(live, res, res_prev)
        live = ~(conv | bad)
        if not np.any(live):
            break
        A = u > 0.0
        cnt = np.maximum(A.sum(axis=(1, 3)), 1)                       # (Tb, J)
        asum = np.einsum("tnjk,nk->tnj", A, rmat)                     # (Tb, N, J)
        D = np.einsum("tnjk,nk->tn", A, rmat * rmat)                  # (Tb, N)
        M = D[:, :, None] * eye[None, :, :] - np.einsum(
            "tnj,tmj->tnm", asum / cnt[:, None, :], asum
        )
        # restrict to the dual active set: multipliers pinned at zero with
        # satisfied capacity stay out of the linear system
        act = (theta > 0.0) | (viol > 0.0)
        M = np.where(act[:, :, None] & act[:, None, :], M, 0.0)
        M += np.where(act, 1e-12 * (1.0 + D), 1.0)[:, :, None] * eye[None, :, :]
        rhs = np.where(act, viol, 0.0)
        dth = np.linalg.solve(M[live], rhs[live][:, :, None])[:, :, 0]
        theta[live] = np.maximum(theta[live] + dth, 0.0)
    return u, theta, conv


def _dual_block(y, demand_t, rmat, cap, tol, max_iters, theta0):
    """Capacity-multiplier dual ascent for one block of hot timesteps.

    The projection decomposes through its Lagrangian: for capacity
    multipliers theta[t, i] >= 0 the primal minimizer is the simplex
    projection of y - theta * r, and the dual gradient is the capacity
    violation of that point.  A semismooth Newton phase handles most rows
    in a few steps; the remainder fall back to diagonally preconditioned
    accelerated ascent (safe step 1 / (J * sum_k r^2)).  Warm-started
    multipliers from a previous nearby projection typically converge
    immediately.

    Returns (projection, theta, converged_mask).
    """
    Tb, N = y.shape[0], rmat.shape[0]
    J = y.shape[2]
    eta = 1.0 / (J * np.einsum("ik,ik->i", rmat, rmat))  # (N,)
    theta = np.maximum(theta0, 0.0).copy()
    out = np.empty_like(y)
    theta_out = theta.copy()

    u_n, theta, conv_n = _dual_newton(y, demand_t, rmat, cap, tol, theta, eta)
    out[conv_n] = u_n[conv_n]
    theta_out[conv_n] = theta[conv_n]
    if np.all(conv_n):
        return out, theta_out, np.ones(Tb, dtype=bool)
    alive = np.nonzero(~conv_n)[0]
    y, theta, demand_sub = y[alive], theta[alive], demand_t[alive]
    tk = 1.0
    mom = theta.copy()
    for _ in range(max_iters):
        shift = mom[:, :, None, None] * rmat[None, :, None, :]
        u = _simplex_block(y - shift, demand_sub)
        viol = _capacity_usage(u, rmat) - cap[None, :]
        theta_new = np.maximum(mom + eta[None, :] * viol, 0.0)
        # projected-gradient residual covers both violation and slackness
        res = np.max(np.abs(theta_new - mom) / eta[None, :], axis=1)
        done = res <= tol
        if np.any(done):
            out[alive[done]] = u[done]
            theta_out[alive[done]] = theta_new[done]
            keep = ~done
            alive = alive[keep]
            y, theta, theta_new, mom, viol, demand_sub = (
                y[keep], theta[keep], theta_new[keep], mom[keep], viol[keep], demand_sub[keep],
            )
            if alive.size == 0:
                return out, theta_out, np.ones(Tb, dtype=bool)
        tk_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        step = theta_new - theta
        # per-timestep adaptive restart: rows whose latest step opposes the
        # built-up momentum drop it instead of overshooting
        osc = np.einsum("tn,tn->t", step, mom - theta_new) > 0
        mom = theta_new + ((tk - 1.0) / tk_next) * step
        mom[osc] = theta_new[osc]
        theta, tk = theta_new, tk_next
    # leftovers did not converge; report them so the caller can fall back
    conv = np.ones(Tb, dtype=bool)
    conv[alive] = False
    theta_out[alive] = theta
    shift = theta[:, :, None, None] * rmat[None, :, None, :]
    out[alive] = _simplex_block(y - shift, demand_sub)
    return out, theta_out, conv


def project_feasible(
    y: np.ndarray,
    s: Scenario,
    tol: float = 1e-9,
    max_iters: int = 2000,
    state: dict = None,
) -> np.ndarray:
    """Euclidean projection of y onto the full product-over-t feasible set.

    The returned point satisfies the demand equalities exactly (the last
    half step is always a simplex projection) and violates capacity by at
    most ``tol`` resource units.

    ``state``, if given, is a mutable dict that carries the capacity
    multipliers between calls; passing the same dict for a sequence of
    nearby inputs (as the solver does) makes later projections much
    cheaper.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != s.shape:
        raise ValueError(f"allocation shape {y.shape} != scenario shape {s.shape}")
    check_feasible(s)
    rmat = s.resource_matrix
    cap = s.capacity
    demand_t = s.demand.T  # (T, J)
    T, N = y.shape[0], rmat.shape[0]

    theta_all = None if state is None else state.get("theta")
    if theta_all is None or theta_all.shape != (T, N):
        theta_all = np.zeros((T, N))

    out = _simplex_block(y, demand_t)
    viol = _capacity_usage(out, rmat) - cap[None, :]
    # if the simplex-only projection already fits under capacity at some t,
    # it is the exact projection there and the true multipliers vanish
    hot = np.nonzero(np.max(viol, axis=1) > tol)[0]
    theta_all = np.zeros((T, N)) if hot.size == 0 else theta_all.copy()
    if hot.size == 0:
        if state is not None:
            state["theta"] = theta_all
        return out
    proj, theta_hot, conv = _dual_block(
        y[hot], demand_t[hot], rmat, cap, tol, max_iters, theta_all[hot]
    )
    cold = np.ones(T, dtype=bool)
    cold[hot] = False
    theta_all[cold] = 0.0
    out[hot] = proj
    theta_all[hot] = theta_hot
    if not np.all(conv):
        stuck = hot[~conv]
        out[stuck] = _dykstra_block(y[stuck], demand_t[stuck], rmat, cap, tol, max_iters)
        theta_all[stuck] = 0.0
    if state is not None:
        state["theta"] = theta_all
    return out


def feasibility_residuals(y: np.ndarray, s: Scenario) -> dict:
    """Max demand / capacity / nonnegativity violations of an allocation."""
    y = np.asarray(y, dtype=float)
    served = np.einsum("tijk->tj", y)
    demand_res = float(np.max(np.abs(served - s.demand.T), initial=0.0))
    cap_res = float(np.max(_capacity_usage(y, s.resource_matrix) - s.capacity[None, :], initial=0.0))
    neg = float(max(0.0, -np.min(y, initial=0.0)))
    return {"demand": demand_res, "capacity": cap_res, "negativity": neg}
