"""Equitable geographical load balancing for AI inference workloads.

Offline convex optimizer and scenario simulator that routes inference
requests across datacenters while regularizing the regional distribution
of performance and environmental costs with L_q norms.
"""

from .costs import (
    CostBreakdown,
    env_footprint_per_dc,
    env_inequity,
    objective_gradient,
    smoothed_objective,
    total_objective,
)
from .domain import (
    DataCenter,
    EnvironmentSeries,
    EquityConfig,
    ModelProfile,
    MovingCostMatrix,
    Scenario,
    WorkloadTrace,
    validate_scenario,
)
from .experiment import PRESET_NAMES, compare_report, compute_metrics, preset_config, run_preset
from .projection import InfeasibleTimestepError, project_feasible
from .scenario_io import default_scenario, load_scenario, save_scenario, synth_scenario
from .solver import SolveResult, SolverOptions, brute_force_oracle, kkt_residual, solve_offline

__version__ = "0.1.0"
