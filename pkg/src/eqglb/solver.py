"""Offline full-horizon solver for the equitable load-balancing objective.

Projected gradient descent with Armijo backtracking on the smoothed
objective.  The feasible set is a product over timesteps, so projections
decouple per t (handled inside ``projection``), while the environmental
norm couples timesteps through the gradient only.

Also houses the exhaustive grid oracle used by the test suite to certify
global optimality on tiny instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import costs, projection
from .costs import _solver_q
from .domain import EquityConfig, Scenario

__all__ = [
    "SolverOptions",
    "SolveResult",
    "solve_offline",
    "kkt_residual",
    "brute_force_oracle",
    "uniform_allocation",
]


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    tol_rel_obj: float = 1e-8
    tol_feas: float = 1e-7
    projection_max_iters: int = 2000
    initial_step: float = 1.0
    step_shrink: float = 0.5
    step_grow: float = 30.0
    sufficient_decrease: float = 1e-4
    stall_window: int = 10
    tol_kkt: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.step_shrink < 1):
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.tol_rel_obj <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SolveResult:
    allocation: np.ndarray
    breakdown: costs.CostBreakdown
    iterations: int
    converged: bool
    feasibility_residual: float
    kkt_residual: float
    objective_history: np.ndarray = field(default=None)

    @property
    def objective(self) -> float:
        return self.breakdown.total


def uniform_allocation(s: Scenario) -> np.ndarray:
    """Spread each region's demand evenly over all (datacenter, model) pairs."""
    T, N, J, K = s.shape
    y = np.empty((T, N, J, K))
    y[:] = (s.demand.T / (N * K))[:, None, :, None]
    return y


def _proj_tol(s: Scenario, opts: SolverOptions) -> float:
    scale = max(float(np.max(s.capacity)), 1.0)
    return min(opts.tol_feas * scale * 1e-1, 1e-8 * scale)


def _curvature_estimate(x, g, s, cfg, proj):
    """Secant estimate of the local Lipschitz constant of the gradient."""
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return None
    h = proj(x - (1e-3 * (1.0 + float(np.linalg.norm(x))) / gn) * g) - x
    hn = float(np.linalg.norm(h))
    if hn == 0.0:
        return None
    g2 = costs.objective_gradient(x + h, s, cfg)
    est = float(np.linalg.norm(g2 - g)) / hn
    return est if est > 0 else None


def _pgd(y, s, cfg, opts, proj, budget, rel_tol, check_kkt, L0=None, proj_probe=None):
    """Monotone accelerated projected gradient (FISTA variant) from y.

    The step is backtracked against the quadratic upper bound at the
    momentum point; the kept iterate is always the best point seen, so the
    reported objective history is non-increasing.  Momentum restarts
    whenever the candidate fails to improve.  Returns (y, iterations_used,
    converged, objective_history, L).
    """
    f = lambda p: costs.smoothed_objective(p, s, cfg)
    x = y
    fx = f(x)
    x_prev = x
    z_mom = x
    t_k = 1.0
    L = L0 if L0 is not None else 1.0 / opts.initial_step
    history = [fx]
    quiet = 0  # consecutive accepted steps with negligible relative progress
    best_res = np.inf
    res_stalls = 0

    for it in range(1, budget + 1):
        g = costs.objective_gradient(z_mom, s, cfg)
        f_mom = f(z_mom)
        if it == 1 and L0 is None:
            est = _curvature_estimate(z_mom, g, s, cfg, proj)
            if est is not None:
                L = max(est, 1e-12)
        # linear stretches have no curvature to backtrack against, so L can
        # decay without bound; cap the displacement at a few multiples of
        # the iterate scale (the feasible set is bounded anyway)
        gn = float(np.linalg.norm(g))
        if gn > 0:
            L = max(L, gn / (10.0 * (1.0 + float(np.linalg.norm(x)))))
        for _ in range(80):
            z = proj(z_mom - g / L)
            d = z - z_mom
            fz = f(z)
            if fz <= f_mom + float(np.vdot(g, d)) + 0.5 * L * float(np.vdot(d, d)) + 1e-15 * abs(f_mom):
                break
            L /= opts.step_shrink  # shrink the step by growing L

        if fz < fx:
            x_new, fx_new = z, fz
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_k * t_k))
            z_next = x_new + (t_k / t_next) * (z - x_new) + ((t_k - 1.0) / t_next) * (x_new - x_prev)
            # the momentum point only hosts a gradient evaluation, so a
            # cheap orthant clip replaces the full (Dykstra) projection
            z_mom = np.maximum(z_next, 0.0)
        else:
            # no improvement: restart momentum at the incumbent
            x_new, fx_new = x, fx
            t_next = 1.0
            z_mom = x
        rel = (fx - fx_new) / max(abs(fx), 1.0)
        x_prev, x, fx, t_k = x, x_new, fx_new, t_next
        history.append(fx)
        L *= 0.5  # let the step regrow when local curvature relaxes
        quiet = quiet + 1 if rel < rel_tol else 0
        probe = quiet >= opts.stall_window or (check_kkt and it % 50 == 0)
        if probe and check_kkt and opts.tol_kkt > 0:
            # in the last continuation stage a stalled objective is not
            # enough: the iterate may still be crawling through a smoothing
            # layer, so only stop once the fixed-point gap certifies it
            pp = proj_probe or proj
            gx = costs.objective_gradient(x, s, cfg)
            xn = 1.0 + float(np.linalg.norm(x))
            px = pp(x - gx)
            res = float(np.linalg.norm(x - px)) / xn
            if res <= opts.tol_kkt:
                # unit gradient steps are scale-blind on large instances
                # (tiny slopes, huge tensors), so confirm with a step whose
                # length is comparable to the iterate itself
                gxn = float(np.linalg.norm(gx))
                if gxn > 0:
                    px2 = pp(x - (xn / gxn) * gx)
                    res2 = float(np.linalg.norm(x - px2)) / xn
                else:
                    res2 = 0.0
                if res2 <= 1e-5:
                    return x, it, True, history, L
            # stop once neither the objective nor the fixed-point gap moves;
            # grinding out the remaining budget cannot improve the iterate
            res_stalls = res_stalls + 1 if res > 0.9 * best_res else 0
            best_res = min(best_res, res)
            if res_stalls >= 3 and quiet >= opts.stall_window:
                return x, it, True, history, L
            quiet = 0
        elif quiet >= opts.stall_window:
            return x, it, True, history, L
    return x, budget, False, history, L


def _face_polish(y, s, cfg, opts, proj, budget=500):
    """Re-solve with near-zero coordinates pinned to zero; keep if better.

    Pinning uses a masked projection: forbidden coordinates are driven far
    negative before projecting, which zeroes them while the rest projects
    onto the reduced simplex.  The exact objective decides acceptance, so
    this step is monotone-safe.
    """
    T, N, J, K = s.shape
    base = (s.demand.T / (N * K))[:, None, :, None]  # mean cell value per (t, j)
    best_y = y
    best_val = costs.total_objective(y, s, cfg).total
    used = 0
    prev_mask = None
    for rel in (1e-3, 1e-6):
        mask = y > rel * base
        if mask.all() or (prev_mask is not None and np.array_equal(mask, prev_mask)):
            continue
        prev_mask = mask

        def proj_m(z, mask=mask):
            big = 1e3 * (float(np.max(np.abs(z))) + 1.0)
            return proj(np.where(mask, z, -big))

        y2 = proj_m(y)
        y2, it2, _, _, _ = _pgd(y2, s, cfg, opts, proj_m, budget, opts.tol_rel_obj, True)
        used += it2
        val2 = costs.total_objective(y2, s, cfg).total
        if val2 < best_val:
            best_y, best_val = y2, val2
    return best_y, used


def solve_offline(
    s: Scenario, cfg: EquityConfig, opts: SolverOptions = None, y0: np.ndarray = None
) -> SolveResult:
    """Minimize the smoothed objective over the feasible polytope.

    Deterministic: identical inputs produce bit-identical results.  Raises
    InfeasibleTimestepError if some timestep's demand cannot be served.
    ``y0``, when given, is projected and used as the starting point.
    """
    opts = opts or SolverOptions()
    projection.check_feasible(s)
    ptol = _proj_tol(s, opts)

    # in-loop projections may stop early: Dykstra cost concentrates in far
    # extrapolated points, and the line search only needs a feasible-enough
    # descent point.  The returned allocation gets a full-accuracy polish.
    loop_iters = opts.projection_max_iters

    # carries capacity multipliers between projections; consecutive solver
    # iterates are close, so warm-started projections converge in a few sweeps
    proj_state = {}

    # line-search steps tolerate a mildly loose projection (the incumbent is
    # monotone and the answer gets a tight final polish); stopping probes
    # compare against the iterate at residual scale and need the tight one
    loose_tol = max(ptol, 1e-6 * max(float(np.max(s.capacity)), 1.0))

    def proj(z):
        return projection.project_feasible(z, s, tol=loose_tol, max_iters=loop_iters, state=proj_state)

    def proj_probe(z):
        return projection.project_feasible(z, s, tol=ptol, max_iters=loop_iters, state=proj_state)

    # smoothing continuation: the eps-layer around an L_q kink has width
    # ~eps, and projected gradient steps are capped by that width whenever
    # the optimum zeroes a norm argument; solving a short sequence of
    # decreasing-eps problems with warm starts sidesteps the crawl
    needs_eps = (cfg.include_social and _solver_q(cfg.q_social) > 1) or (
        cfg.include_env and _solver_q(cfg.q_env) > 1
    )
    if y0 is not None:
        # a warm start is presumed near the tight-smoothing optimum already;
        # the eps continuation would only drag it back toward blurred stage
        # optima, so descend at the target smoothing directly
        stages = [1.0]
        y = proj_probe(np.asarray(y0, dtype=float))
    else:
        stages = [1e4, 1e2, 1.0] if needs_eps else [1.0]
        y = proj(uniform_allocation(s))
    history = []
    converged = False
    total_it = 0
    L = None
    for si, factor in enumerate(stages):
        final = si == len(stages) - 1
        stage_cfg = cfg.replace(smoothing_eps=cfg.smoothing_eps * factor)
        budget = opts.max_iters - total_it if final else min(opts.max_iters // 4, 500)
        rel_tol = opts.tol_rel_obj if final else opts.tol_rel_obj * 100
        y, used, converged, part, L = _pgd(
            y, s, stage_cfg, opts, proj, budget, rel_tol, final, L0=L, proj_probe=proj_probe
        )
        total_it += used
        history.extend(part)
        if total_it >= opts.max_iters:
            break

    if needs_eps and total_it < opts.max_iters:
        # face polish: when the exact optimum zeroes some coordinates the
        # smoothed optimum sits just inside the eps layer and first-order
        # steps crawl toward it; re-solving with near-zero coordinates
        # pinned to the kink face is smooth and fast, and the result is
        # kept only if it improves the exact (unsmoothed) objective
        y, extra = _face_polish(y, s, cfg, opts, proj)
        total_it += extra
    it = total_it

    # final polish so the returned point is feasible to tight tolerance
    y = projection.project_feasible(y, s, tol=ptol, max_iters=opts.projection_max_iters)
    res = projection.feasibility_residuals(y, s)
    feas = max(res["demand"], res["capacity"], res["negativity"])
    return SolveResult(
        allocation=y,
        breakdown=costs.total_objective(y, s, cfg),
        iterations=it,
        converged=converged and feas <= opts.tol_feas * max(float(np.max(s.capacity)), 1.0),
        feasibility_residual=feas,
        kkt_residual=kkt_residual(y, s, cfg, opts),
        objective_history=np.array(history),
    )


def kkt_residual(y: np.ndarray, s: Scenario, cfg: EquityConfig, opts: SolverOptions = None) -> float:
    """Projected-gradient fixed-point gap ||y - P(y - grad)|| / (1 + ||y||).

    Zero certifies global optimality of the smoothed convex objective.
    """
    opts = opts or SolverOptions()
    g = costs.objective_gradient(y, s, cfg)
    z = projection.project_feasible(y - g, s, tol=_proj_tol(s, opts), max_iters=opts.projection_max_iters)
    return float(np.linalg.norm(y - z) / (1.0 + np.linalg.norm(y)))


# ---------------------------------------------------------------------------
# exhaustive grid oracle (test-only scale)


def _compositions(total: int, parts: int):
    """All nonnegative integer vectors of given length summing to total."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield out


def brute_force_oracle(
    s: Scenario,
    cfg: EquityConfig,
    grid_step: float,
    max_candidates: float = 5e6,
    chunk: int = 100_000,
):
    """Enumerate feasible allocations on a grid; return (best_y, best_objective).

    The demand equality is eliminated by enumerating, for each (t, region)
    block, all integer compositions of round(lambda / grid_step) grid units
    over the N*K cells.  Capacity-violating candidates are discarded.  Guarded
    against combinatorial blowup; intended for N, J, K, T <= 2.
    """
    T, N, J, K = s.shape
    cells = N * K
    blocks = []
    comps = []
    count = 1.0
    for t in range(T):
        for j in range(J):
            lam = float(s.demand[j, t])
            n = max(int(round(lam / grid_step)), 1) if lam > 0 else 0
            c = math.comb(n + cells - 1, cells - 1)
            count *= c
            blocks.append((t, j, lam, n))
            if count > max_candidates:
                raise ValueError(
                    f"grid enumeration would need > {max_candidates:g} candidates"
                )
    for t, j, lam, n in blocks:
        arr = np.array(list(_compositions(n, cells)), dtype=float)
        arr *= lam / n if n > 0 else 0.0
        comps.append(arr.reshape(-1, N, K))

    counts = [len(c) for c in comps]
    total = int(np.prod(counts))
    best_obj = np.inf
    best_y = None
    rmat = s.resource_matrix
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        multi = np.unravel_index(idx, counts)
        ys = np.zeros((len(idx), T, N, J, K))
        for b, (t, j, lam, n) in enumerate(blocks):
            ys[:, t, :, j, :] = comps[b][multi[b]]
        usage = np.einsum("btijk,ik->bti", ys, rmat)
        ok = np.all(usage <= s.capacity[None, None, :] * (1 + 1e-9), axis=(1, 2))
        if not np.any(ok):
            continue
        vals = costs.objective_batch(ys[ok], s, cfg)
        m = int(np.argmin(vals))
        if vals[m] < best_obj:
            best_obj = float(vals[m])
            best_y = ys[ok][m].copy()
    if best_y is None:
        raise ValueError("no grid candidate satisfied the capacity constraints")
    return best_y, best_obj
