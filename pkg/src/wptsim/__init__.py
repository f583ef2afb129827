"""Power allocation for wirelessly powered sensor networks.

Simulates a beacon-powered sensor field with nonlinear energy harvesting,
solves the offline convex allocation benchmark, and trains a trust-region
policy-gradient agent on the same task. The ``wpt`` CLI drives the
experiment harness; see README.md.
"""

from .allocate import (
    AllocationPlan,
    check_time_uniformity,
    closed_form_linear,
    evaluate_plan,
    solve_convex,
)
from .channel import SlotState, realize_horizon, realize_slot
from .errors import NumericalError, ScenarioError
from .estimation import (
    DistortionInput,
    distortion,
    distortion_gradient,
    simulate_uplink,
)
from .field import FieldStatistics, build_field, covariance_at, haar_unitary
from .harvest import EhModel, default_models, fit_model, harvested_energy, phi
from .scenario import (
    RlSettings,
    ScenarioConfig,
    SolverSettings,
    load_scenario,
    rng_stream,
    save_scenario,
)

__all__ = [
    "AllocationPlan",
    "DistortionInput",
    "EhModel",
    "FieldStatistics",
    "NumericalError",
    "RlSettings",
    "ScenarioConfig",
    "ScenarioError",
    "SlotState",
    "SolverSettings",
    "build_field",
    "check_time_uniformity",
    "closed_form_linear",
    "covariance_at",
    "default_models",
    "distortion",
    "distortion_gradient",
    "evaluate_plan",
    "fit_model",
    "harvested_energy",
    "haar_unitary",
    "load_scenario",
    "phi",
    "realize_horizon",
    "realize_slot",
    "rng_stream",
    "save_scenario",
    "simulate_uplink",
    "solve_convex",
]

__version__ = "0.1.0"
