"""Experiment harness: scenario-label matrix, budget sweeps, fading study.

Scenario labels read ``S-AM-RM``: solution method (OPT or RL), assumed EH
model, realized EH model, e.g. OPT-L-Q plans with the linear model and is
evaluated on quadratic hardware. RL labels carry no assumed/realized
mismatch (the agent makes no model assumption), so RL-X-X only.

All experiments are pure functions of (scenario, flags): rerunning
reproduces byte-identical CSV.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from .allocate import AllocationPlan, evaluate_plan, plan_distortion, solve_convex
from .channel import realize_horizon
from .errors import ScenarioError
from .field import FieldStatistics, build_field
from .harvest import EhModel, model_from_code
from .rl import BeaconEnv, GaussianPolicy, RunningNorm, rollout, train
from .scenario import ScenarioConfig, rng_stream


@dataclass(frozen=True)
class ExperimentResult:
    label: str
    budget: float
    normalized_distortion: float
    n_realizations: int
    std_error: float


@dataclass(frozen=True)
class Label:
    method: str    # OPT | RL
    assumed: str   # L | Q | S
    realized: str  # L | Q | S

    def __str__(self) -> str:
        return f"{self.method}-{self.assumed}-{self.realized}"


def parse_label(text: str) -> Label:
    parts = text.strip().upper().split("-")
    if len(parts) != 3 or parts[0] not in ("OPT", "RL") \
            or parts[1] not in "LQS" or parts[2] not in "LQS" \
            or len(parts[1]) != 1 or len(parts[2]) != 1:
        raise ScenarioError(f"malformed scenario label {text!r}; expected e.g. OPT-L-Q")
    if parts[0] == "RL" and parts[1] != parts[2]:
        raise ScenarioError(
            f"label {text!r}: RL makes no model assumption, so assumed and "
            "realized models must match (e.g. RL-Q-Q)"
        )
    return Label(parts[0], parts[1], parts[2])


def normalization_constant(stats: FieldStatistics, horizon: int) -> float:
    """P_x = sum_t tr K_t; the per-phase traces are normalized to n_s."""
    return float(sum(stats.eigenvalues[stats.phase_of(t)].sum()
                     for t in range(1, horizon + 1)))


def normalized_distortion(mean_distortion: float, stats: FieldStatistics,
                          horizon: int) -> float:
    return mean_distortion * horizon / normalization_constant(stats, horizon)


@dataclass
class TrainedPolicy:
    policy: GaussianPolicy
    obs_norm: RunningNorm
    model: EhModel


def _rl_policy_for(config: ScenarioConfig, stats: FieldStatistics, model: EhModel,
                   episodes: int, policies: dict | None, key: str) -> TrainedPolicy:
    if policies and key in policies:
        return policies[key]
    result = train(config, episodes, stats=stats, model=model)
    trained = TrainedPolicy(result.policy, result.obs_norm, model)
    if policies is not None:
        policies[key] = trained
    return trained


def _rl_mean_distortion(config: ScenarioConfig, stats: FieldStatistics,
                        trained: TrainedPolicy, slots) -> float:
    env = BeaconEnv(config, stats, trained.model, slots)
    trace = rollout(env, trained.policy, trained.obs_norm, None, greedy=True)
    return trace.mean_distortion


def sweep_budget(config: ScenarioConfig, budgets, labels, *,
                 rl_episodes: int = 2000, policies: dict | None = None
                 ) -> list[ExperimentResult]:
    """One row per (budget, label); labels may mix OPT and RL entries.

    RL labels use a supplied trained policy (``policies[label]``) or
    trigger training at each budget.
    """
    parsed = [parse_label(str(lab)) for lab in labels]
    results = []
    for budget in budgets:
        cfg = dataclasses.replace(config, power_budget=float(budget))
        stats = build_field(cfg, rng_stream(cfg, "field"))
        slots = realize_horizon(cfg, stats, rng_stream(cfg, "sweep-fading"))
        for lab in parsed:
            realized_model = model_from_code(lab.realized, cfg.eh_models)
            if lab.method == "OPT":
                assumed_model = model_from_code(lab.assumed, cfg.eh_models)
                plan = solve_convex(cfg, slots, stats, assumed_model)
                realized, _ = evaluate_plan(plan, slots, stats, realized_model, cfg)
            else:
                trained = _rl_policy_for(cfg, stats, realized_model, rl_episodes,
                                         policies, f"{lab}@{budget}")
                realized = _rl_mean_distortion(cfg, stats, trained, slots)
            results.append(ExperimentResult(
                label=str(lab), budget=float(budget),
                normalized_distortion=normalized_distortion(realized, stats, cfg.horizon),
                n_realizations=1, std_error=0.0,
            ))
    return results


@dataclass(frozen=True)
class FadingStudyRow:
    arm: str  # full_csi_opt | mean_channel_opt | rl
    normalized_distortion: float
    std_error: float
    n_realizations: int


def fading_study(config: ScenarioConfig, n_realizations: int = 100, *,
                 model: EhModel | None = None, trained: TrainedPolicy | None = None,
                 rl_episodes: int = 4000) -> list[FadingStudyRow]:
    """Average over fading draws: full-CSI optimization, the deterministic
    |Z|=1 plan replayed under realized fading, and the greedy RL policy."""
    model = model if model is not None else config.eh_model
    stats = build_field(config, rng_stream(config, "field"))

    det_cfg = dataclasses.replace(config, deterministic_fading=True)
    det_slots = realize_horizon(det_cfg, stats, rng_stream(config, "fading-study-det"))
    mean_plan = solve_convex(det_cfg, det_slots, stats, model)

    if trained is None:
        result = train(config, rl_episodes, stats=stats, model=model)
        trained = TrainedPolicy(result.policy, result.obs_norm, model)

    full, replay, rl_vals = [], [], []
    for k in range(n_realizations):
        slots = realize_horizon(config, stats, rng_stream(config, "fading-study", k))
        plan_k = solve_convex(config, slots, stats, model)
        full.append(plan_k.objective)
        realized, _ = evaluate_plan(mean_plan, slots, stats, model, config)
        replay.append(realized)
        rl_vals.append(_rl_mean_distortion(config, stats, trained, slots))

    horizon = config.horizon
    rows = []
    for arm, vals in (("full_csi_opt", full), ("mean_channel_opt", replay), ("rl", rl_vals)):
        vals = np.asarray(vals)
        rows.append(FadingStudyRow(
            arm=arm,
            normalized_distortion=normalized_distortion(float(vals.mean()), stats, horizon),
            std_error=float(vals.std() / np.sqrt(max(len(vals), 1))
                            * horizon / normalization_constant(stats, horizon)),
            n_realizations=n_realizations,
        ))
    return rows


def power_profile(plan: AllocationPlan, period: int):
    """Rows (t, i, p_watts) plus a periodicity score over interior slots.

    The score compares p[t] with p[t + period] for slots where both sit
    inside [period + 1, T - period], away from start/end transients; it is
    NaN when the horizon is too short for that window.
    """
    T, n = plan.horizon, plan.n_sensors
    rows = [(t + 1, i + 1, plan.sensor_power[t, i]) for t in range(T) for i in range(n)]
    scores = []
    for t in range(1, T + 1):
        if t >= period + 1 and t + period <= T - period:
            a = plan.sensor_power[t - 1]
            b = plan.sensor_power[t + period - 1]
            scale = np.maximum(np.abs(a), np.abs(b))
            scale = np.maximum(scale, 1e-300)
            scores.append(np.max(np.abs(a - b) / scale))
    score = float(max(scores)) if scores else float("nan")
    return rows, score


# --- CSV emission -------------------------------------------------------------


def write_results_csv(results: list[ExperimentResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "budget_watts", "normalized_distortion",
                         "n_realizations", "std_error"])
        for row in results:
            writer.writerow([row.label, f"{row.budget:.12g}",
                             f"{row.normalized_distortion:.12e}",
                             row.n_realizations, f"{row.std_error:.6e}"])


def write_fading_csv(rows: list[FadingStudyRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "normalized_distortion", "std_error", "n_realizations"])
        for row in rows:
            writer.writerow([row.arm, f"{row.normalized_distortion:.12e}",
                             f"{row.std_error:.6e}", row.n_realizations])


def write_profile_csv(rows, score: float, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "p_watts"])
        for t, i, p in rows:
            writer.writerow([t, i, f"{p:.12e}"])


def write_plan_csv(plan: AllocationPlan, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "p_watts", "q_watts"])
        for t in range(plan.horizon):
            for i in range(plan.n_sensors):
                writer.writerow([t + 1, i + 1, f"{plan.sensor_power[t, i]:.12e}",
                                 f"{plan.beacon_power[t, i]:.12e}"])


def read_plan_csv(path) -> AllocationPlan:
    """Rebuild a plan from the optimize CSV (no certificate attached)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "i", "p_watts", "q_watts"]:
        raise ScenarioError(f"{path}: expected plan CSV header t,i,p_watts,q_watts")
    body = [(int(t), int(i), float(p), float(q)) for t, i, p, q in rows[1:]]
    T = max(r[0] for r in body)
    n = max(r[1] for r in body)
    if len(body) != T * n:
        raise ScenarioError(f"{path}: expected {T * n} rows, got {len(body)}")
    p = np.zeros((T, n))
    q = np.zeros((T, n))
    for t, i, pv, qv in body:
        p[t - 1, i - 1] = pv
        q[t - 1, i - 1] = qv
    return AllocationPlan(sensor_power=p, beacon_power=q, objective=float("nan"),
                          kkt_residual=float("inf"), budget_slack=np.zeros(T),
                          neutrality_slack=np.zeros((T, n)))
