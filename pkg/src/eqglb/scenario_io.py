"""Scenario serialization (directory bundles) and the synthetic generator.

A scenario bundle is a directory with a ``manifest.json`` plus delimited
CSV files, one per series.  Numeric values are written with ``repr`` so a
save/load round trip is bit-exact.  Water-usage efficiency may be stored
either directly (``wue.csv``) or derived at load time from hourly weather
(``weather.csv`` + per-DC offsite EWIF + a piecewise WUE model recorded
in the manifest).
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict

import numpy as np

from .domain import (
    DataCenter,
    EnvironmentSeries,
    ModelProfile,
    MovingCostMatrix,
    Scenario,
    WorkloadTrace,
    validate_scenario,
)
from .wue import WueModel, wet_bulb

__all__ = [
    "ScenarioLoadError",
    "save_scenario",
    "load_scenario",
    "save_scenario_json",
    "load_scenario_json",
    "synth_scenario",
    "default_scenario",
]

FORMAT_VERSION = 1
UNITS = {
    "energy": "kWh",
    "water": "m^3",
    "carbon": "ton",
    "money": "USD",
    "workload": "requests",
    "timestep": "hour",
}


class ScenarioLoadError(Exception):
    """Raised for parse failures, unit mismatches, or invariant violations."""

    def __init__(self, path, msg, row=None):
        self.path = str(path)
        self.row = row
        where = f"{path}" + (f", row {row}" if row is not None else "")
        super().__init__(f"{where}: {msg}")


def _fmt(x) -> str:
    return repr(float(x))


def _write_matrix(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _write_series(path, prefix, arr):
    """arr is (N, T); written as rows over t with one column per entity."""
    n, horizon = arr.shape
    header = ["t"] + [f"{prefix}{i}" for i in range(n)]
    rows = [[t] + [_fmt(arr[i, t]) for i in range(n)] for t in range(horizon)]
    _write_matrix(path, header, rows)


def _read_series(path, n_expected, nonneg_label=None):
    try:
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            if len(header) != n_expected + 1:
                raise ScenarioLoadError(path, f"expected {n_expected + 1} columns, got {len(header)}")
            rows = []
            for lineno, row in enumerate(r, start=2):
                if len(row) != len(header):
                    raise ScenarioLoadError(path, "ragged row", row=lineno)
                try:
                    vals = [float(x) for x in row[1:]]
                except ValueError as e:
                    raise ScenarioLoadError(path, str(e), row=lineno)
                if nonneg_label and any(v < 0 for v in vals):
                    raise ScenarioLoadError(path, f"negative {nonneg_label}", row=lineno)
                rows.append(vals)
    except FileNotFoundError:
        raise ScenarioLoadError(path, "file not found")
    return np.array(rows, dtype=float).T  # (N, T)


def save_scenario(s: Scenario, out_dir, weather=None, wue_model: WueModel = None) -> None:
    """Write a scenario bundle.

    If ``weather`` is given (dict with ``dry_bulb`` (N, T), ``rh`` (N, T),
    ``offsite_ewif`` (N,)), the bundle stores raw weather and the WUE model
    instead of the derived wue series; loading re-derives it bit-exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    N, J, K, T = s.n_dcs, s.n_regions, s.n_models, s.horizon

    _write_matrix(
        os.path.join(out_dir, "datacenters.csv"),
        ["id", "name", "pue", "capacity"],
        [[dc.id, dc.name, _fmt(dc.pue), _fmt(dc.capacity)] for dc in s.datacenters],
    )
    _write_matrix(
        os.path.join(out_dir, "models.csv"),
        ["id", "name", "perf_cost", "perf_score"],
        [[m.id, m.name, _fmt(m.perf_cost), _fmt(m.perf_score)] for m in s.models],
    )
    _write_matrix(
        os.path.join(out_dir, "energy_per_request.csv"),
        ["dc"] + [f"model_{k}" for k in range(K)],
        [[i] + [_fmt(s.energy_matrix[i, k]) for k in range(K)] for i in range(N)],
    )
    _write_matrix(
        os.path.join(out_dir, "resource_per_request.csv"),
        ["dc"] + [f"model_{k}" for k in range(K)],
        [[i] + [_fmt(s.resource_matrix[i, k]) for k in range(K)] for i in range(N)],
    )
    _write_series(os.path.join(out_dir, "energy_price.csv"), "dc_", s.environment.energy_price)
    _write_series(os.path.join(out_dir, "carbon_intensity.csv"), "dc_", s.environment.carbon_intensity)
    _write_series(os.path.join(out_dir, "demand.csv"), "region_", s.workload.demand)
    _write_matrix(
        os.path.join(out_dir, "moving_cost.csv"),
        ["dc"] + [f"region_{j}" for j in range(J)],
        [[i] + [_fmt(s.moving.d[i, j]) for j in range(J)] for i in range(N)],
    )

    files = {
        "datacenters": "datacenters.csv",
        "models": "models.csv",
        "energy_per_request": "energy_per_request.csv",
        "resource_per_request": "resource_per_request.csv",
        "energy_price": "energy_price.csv",
        "carbon_intensity": "carbon_intensity.csv",
        "demand": "demand.csv",
        "moving_cost": "moving_cost.csv",
    }
    manifest = {
        "format_version": FORMAT_VERSION,
        "units": UNITS,
        "dimensions": {"n_dcs": N, "n_regions": J, "n_models": K, "horizon": T},
        "files": files,
    }
    if weather is not None:
        wue_model = wue_model or WueModel()
        dry, rh = weather["dry_bulb"], weather["rh"]
        header = ["t"]
        for i in range(N):
            header += [f"dry_{i}", f"rh_{i}"]
        rows = []
        for t in range(T):
            row = [t]
            for i in range(N):
                row += [_fmt(dry[i, t]), _fmt(rh[i, t])]
            rows.append(row)
        _write_matrix(os.path.join(out_dir, "weather.csv"), header, rows)
        files["weather"] = "weather.csv"
        manifest["offsite_ewif"] = [float(x) for x in weather["offsite_ewif"]]
        manifest["wue_model"] = asdict(wue_model)
    else:
        _write_series(os.path.join(out_dir, "wue.csv"), "dc_", s.environment.wue)
        files["wue"] = "wue.csv"

    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_scenario(path) -> Scenario:
    """Load and validate a scenario bundle (directory or manifest path)."""
    mpath = path
    if os.path.isdir(path):
        mpath = os.path.join(path, "manifest.json")
    base = os.path.dirname(mpath)
    try:
        with open(mpath) as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise ScenarioLoadError(mpath, "manifest not found")
    except json.JSONDecodeError as e:
        raise ScenarioLoadError(mpath, f"invalid JSON: {e}")

    if manifest.get("format_version") != FORMAT_VERSION:
        raise ScenarioLoadError(mpath, f"unsupported format_version {manifest.get('format_version')}")
    if manifest.get("units") != UNITS:
        raise ScenarioLoadError(mpath, f"unit mismatch: expected {UNITS}")
    dims = manifest["dimensions"]
    N, J, K, T = dims["n_dcs"], dims["n_regions"], dims["n_models"], dims["horizon"]
    files = {k: os.path.join(base, v) for k, v in manifest["files"].items()}

    dcs = []
    with open(files["datacenters"], newline="") as f:
        for lineno, row in enumerate(csv.DictReader(f), start=2):
            try:
                dcs.append(
                    DataCenter(
                        id=int(row["id"]), name=row["name"],
                        pue=float(row["pue"]), capacity=float(row["capacity"]),
                    )
                )
            except (KeyError, ValueError) as e:
                raise ScenarioLoadError(files["datacenters"], str(e), row=lineno)

    epr = _read_series(files["energy_per_request"], K).T   # stored rows=dc -> (N, K)
    rpr = _read_series(files["resource_per_request"], K).T
    if epr.shape != (N, K) or rpr.shape != (N, K):
        raise ScenarioLoadError(files["energy_per_request"], f"shape mismatch with dimensions {N}x{K}")

    models = []
    with open(files["models"], newline="") as f:
        for lineno, row in enumerate(csv.DictReader(f), start=2):
            try:
                k = int(row["id"])
                models.append(
                    ModelProfile(
                        id=k, name=row["name"],
                        energy_per_request=epr[:, k],
                        resource_per_request=rpr[:, k],
                        perf_cost=float(row["perf_cost"]),
                        perf_score=float(row["perf_score"]),
                    )
                )
            except (KeyError, ValueError, IndexError) as e:
                raise ScenarioLoadError(files["models"], str(e), row=lineno)

    price = _read_series(files["energy_price"], N, nonneg_label="energy price")
    carbon = _read_series(files["carbon_intensity"], N, nonneg_label="carbon intensity")
    demand = _read_series(files["demand"], J, nonneg_label="demand")
    d = _read_series(files["moving_cost"], J).T  # rows=dc -> (N, J)

    if "wue" in files:
        wue_arr = _read_series(files["wue"], N, nonneg_label="wue")
    elif "weather" in files:
        wx = _read_series(files["weather"], 2 * N)  # (2N, T)
        dry, rh = wx[0::2], wx[1::2]
        model = WueModel(**manifest["wue_model"])
        ewif = np.asarray(manifest["offsite_ewif"], dtype=float)
        if ewif.shape != (N,):
            raise ScenarioLoadError(mpath, f"offsite_ewif length {ewif.shape} != N={N}")
        wue_arr = model.onsite(wet_bulb(dry, rh)) + ewif[:, None]
    else:
        raise ScenarioLoadError(mpath, "bundle provides neither wue nor weather")

    s = Scenario(
        datacenters=tuple(dcs),
        models=tuple(models),
        environment=EnvironmentSeries(price, carbon, wue_arr),
        workload=WorkloadTrace(demand),
        moving=MovingCostMatrix(d),
    )
    violations = validate_scenario(s)
    if violations:
        raise ScenarioLoadError(mpath, "validation failed: " + "; ".join(violations))
    return s


def save_scenario_json(s: Scenario, path) -> None:
    """Single-file form of a scenario, convenient for test fixtures.

    Bit-exact like the directory bundle: floats travel as repr strings.
    """
    def series(a):
        return [[_fmt(x) for x in row] for row in np.asarray(a)]

    doc = {
        "format_version": FORMAT_VERSION,
        "units": UNITS,
        "datacenters": [
            {"id": dc.id, "name": dc.name, "pue": _fmt(dc.pue), "capacity": _fmt(dc.capacity)}
            for dc in s.datacenters
        ],
        "models": [
            {
                "id": m.id,
                "name": m.name,
                "perf_cost": _fmt(m.perf_cost),
                "perf_score": _fmt(m.perf_score),
                "energy_per_request": [_fmt(x) for x in m.energy_per_request],
                "resource_per_request": [_fmt(x) for x in m.resource_per_request],
            }
            for m in s.models
        ],
        "energy_price": series(s.environment.energy_price),
        "carbon_intensity": series(s.environment.carbon_intensity),
        "wue": series(s.environment.wue),
        "demand": series(s.workload.demand),
        "moving_cost": series(s.moving.d),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_scenario_json(path) -> Scenario:
    """Load the single-file form written by save_scenario_json."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ScenarioLoadError(path, "file not found")
    except json.JSONDecodeError as e:
        raise ScenarioLoadError(path, f"invalid JSON: {e}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ScenarioLoadError(path, f"unsupported format_version {doc.get('format_version')}")
    if doc.get("units") != UNITS:
        raise ScenarioLoadError(path, f"unit mismatch: expected {UNITS}")

    def series(key):
        try:
            return np.array([[float(x) for x in row] for row in doc[key]], dtype=float)
        except (KeyError, ValueError, TypeError) as e:
            raise ScenarioLoadError(path, f"{key}: {e}")

    try:
        dcs = tuple(
            DataCenter(id=int(d["id"]), name=d.get("name", ""),
                       pue=float(d["pue"]), capacity=float(d["capacity"]))
            for d in doc["datacenters"]
        )
        models = tuple(
            ModelProfile(
                id=int(m["id"]), name=m.get("name", ""),
                energy_per_request=np.array([float(x) for x in m["energy_per_request"]]),
                resource_per_request=np.array([float(x) for x in m["resource_per_request"]]),
                perf_cost=float(m["perf_cost"]), perf_score=float(m["perf_score"]),
            )
            for m in doc["models"]
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ScenarioLoadError(path, str(e))

    s = Scenario(
        datacenters=dcs,
        models=models,
        environment=EnvironmentSeries(series("energy_price"), series("carbon_intensity"), series("wue")),
        workload=WorkloadTrace(series("demand")),
        moving=MovingCostMatrix(series("moving_cost")),
    )
    violations = validate_scenario(s)
    if violations:
        raise ScenarioLoadError(path, "validation failed: " + "; ".join(violations))
    return s


# ---------------------------------------------------------------------------
# synthetic generation


def synth_scenario(
    seed: int = 0,
    n_dcs: int = 10,
    n_regions: int = 10,
    n_models: int = 3,
    horizon: int = 432,
    heterogeneity: float = 1.0,
    demand_scale: float = 1.0,
    moving_scale: float = 1.0,
    servers_per_dc: int = 150,
    server_power_kw: float = 6.5,
    pue: float = 1.1,
    utilization: float = 0.9,
    return_weather: bool = False,
):
    """Deterministic synthetic scenario with diurnal structure.

    Datacenter capacity is sized from a cluster of identical servers
    (default 150 x 6.5 kW = 975 kWh/h of IT power).  Cross-region spread
    of prices, carbon, climate, and grid water intensity scales with
    ``heterogeneity``; cheaper grids are drawn dirtier and thirstier so
    cost-chasing load concentrates its footprint.  ``utilization`` sets
    average total demand relative to the fleet's largest-model throughput,
    so values near or above 1 force model mixing at peak hours.
    """
    rng = np.random.default_rng(seed)
    N, J, K, T = n_dcs, n_regions, n_models, horizon
    h = heterogeneity
    hours = np.arange(T)

    # per-DC "greenness" in [0, 1]: green grids are pricier, cleaner, cooler
    u = rng.uniform(0.0, 1.0, size=N)
    u = 0.5 + h * (u - 0.5)
    jitter = lambda lo, hi, n=N: 1.0 + h * rng.uniform(lo, hi, size=n)

    # a continental fleet: nearby time zones make regional demand peaks
    # collide, so peak hours genuinely contend for capacity
    tz = h * rng.uniform(-3.0, 3.0, size=N)
    # price tracks greenness only loosely: among equally clean grids some
    # are much cheaper, so cost-aware placement and footprint-equalizing
    # placement genuinely disagree
    # renewables-heavy grids clear at low marginal cost, so clean power
    # is also the cheap power: cost-seeking load piles onto the same
    # few clean sites, concentrating their footprint
    price_base = (0.175 - 0.095 * u) * jitter(-0.25, 0.25)
    carbon_base = (0.00045 - 0.00026 * u) * jitter(-0.05, 0.05)
    # water intensity tracks the same fuel mix that sets carbon: keep the
    # jitter small so per-DC water stays tightly coupled to overall
    # footprint (decorrelating them makes footprint equalization blind to
    # water in particular)
    ewif = (0.0012 + 0.0048 * (1.0 - u) ** 2) * jitter(-0.05, 0.05)
    temp_base = 26.0 - 17.0 * u + h * rng.uniform(-1.5, 1.5, size=N)
    rh_base = 40.0 + h * rng.uniform(0.0, 35.0, size=N)

    diur = lambda phase: np.sin(2 * np.pi * (hours[None, :] - phase[:, None]) / 24.0)
    price = price_base[:, None] * (1.0 + 0.25 * diur(tz + 17.0)) \
        + h * 0.004 * rng.standard_normal((N, T))
    price = np.maximum(price, 0.01)
    carbon = carbon_base[:, None] * (1.0 + 0.30 * diur(tz + 19.0)) \
        + h * 2e-5 * rng.standard_normal((N, T))
    carbon = np.maximum(carbon, 2e-5)

    dry = (
        temp_base[:, None]
        + 7.0 * diur(tz + 15.0)
        + 3.0 * np.sin(2 * np.pi * hours[None, :] / (24.0 * 9.0) + u[:, None])
        + h * 0.8 * rng.standard_normal((N, T))
    )
    dry = np.clip(dry, -19.0, 45.0)
    rh = np.clip(
        rh_base[:, None] + 12.0 * diur(tz + 3.0) + h * 4.0 * rng.standard_normal((N, T)),
        5.0, 100.0,
    )
    wmodel = WueModel()
    wue_arr = wmodel.onsite(wet_bulb(dry, rh)) + ewif[:, None]

    # models: monotone trade-off, larger -> more energy, lower perf cost
    if K == 1:
        energy_base = np.array([0.004])
        s_cost = np.array([0.0])
        score = np.array([64.4])
    else:
        frac = np.linspace(0.0, 1.0, K)
        energy_base = 0.0008 * (0.004 / 0.0008) ** frac
        # sized so that even under a worst-case-style (large q) social norm,
        # whose marginal penalty in any one region is roughly 1/J of the
        # plain sum's, degrading model quality never pays for its energy
        # savings at going electricity-plus-footprint prices
        s_cost = 4.0 * (1.0 - frac)
        score = 54.9 + (64.4 - 54.9) * frac
    # per-DC hardware efficiency: cheap dirty grids host the densest,
    # most efficient clusters, so footprint-aware placement pays a mild
    # energy premium for moving load onto cleaner grids
    eff = (1.0 + h * (0.35 * u - 0.05)) * jitter(-0.03, 0.03)
    energy_nk = energy_base[None, :] * eff[:, None]
    resource_nk = energy_nk  # resource budget == IT power draw, kW per req/h

    capacity = float(servers_per_dc) * float(server_power_kw)
    dcs = tuple(
        DataCenter(id=i, name=f"dc{i}", pue=pue, capacity=capacity) for i in range(N)
    )
    models = tuple(
        ModelProfile(
            id=k, name=f"model{k}",
            energy_per_request=energy_nk[:, k],
            resource_per_request=resource_nk[:, k],
            perf_cost=float(s_cost[k]), perf_score=float(score[k]),
        )
        for k in range(K)
    )

    # demand: diurnal per region, sized against largest-model fleet throughput
    big_throughput = np.sum(capacity / resource_nk.max(axis=1))
    total_avg = demand_scale * utilization * big_throughput
    base_j = total_avg / J * (1.0 + 0.3 * h * rng.uniform(-1.0, 1.0, size=J))
    tz_j = tz[np.arange(J) % N] if N else np.zeros(J)
    day = np.sin(2 * np.pi * (hours[None, :] - tz_j[:, None] - 14.0) / 24.0)
    week = 0.1 * np.sin(2 * np.pi * hours[None, :] / (24.0 * 7.0))
    demand = base_j[:, None] * (1.0 + 0.35 * day + week)
    demand = np.maximum(demand, 0.0)
    # keep every timestep feasible: peak demand may exceed the largest
    # model's fleet throughput (forcing model mixing) but never the
    # smallest model's
    max_serve = float(np.sum(capacity / resource_nk.min(axis=1)))
    peak = float(demand.sum(axis=0).max())
    if peak > 0.97 * max_serve:
        demand *= 0.97 * max_serve / peak

    # moving cost: cheap within a geographic cluster, pricier across
    n_clusters = min(3, N)
    cluster_dc = (np.arange(N) * n_clusters) // max(N, 1)
    cluster_rg = cluster_dc[np.arange(J) % N] if N else np.zeros(J, dtype=int)
    far = (cluster_dc[:, None] != cluster_rg[None, :]).astype(float)
    d = moving_scale * (0.00008 + 0.0005 * far)

    scenario = Scenario(
        datacenters=dcs,
        models=models,
        environment=EnvironmentSeries(price, carbon, wue_arr),
        workload=WorkloadTrace(demand),
        moving=MovingCostMatrix(d),
    )
    if return_weather:
        weather = {"dry_bulb": dry, "rh": rh, "offsite_ewif": ewif}
        return scenario, weather, wmodel
    return scenario


def default_scenario(seed: int = 0, horizon: int = 432, **kw) -> Scenario:
    """The documented 10-DC, 10-region, 3-model comparison scenario."""
    return synth_scenario(seed=seed, horizon=horizon, **kw)
