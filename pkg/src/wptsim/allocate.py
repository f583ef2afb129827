"""Offline convex benchmark for the joint beacon/sensor power allocation.

``solve_convex`` minimizes the mean LMMSE distortion over the horizon
subject to per-slot beacon budget, cumulative energy neutrality, and
nonnegativity, via a feasible-start log-barrier interior-point method.
``closed_form_linear`` implements the water-filling solution available
when channels and a diagonal field covariance are constant over time.
``evaluate_plan`` replays a plan against possibly different harvest
hardware, repairing battery shortfalls the way the deployed nodes would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import SlotState
from .errors import NumericalError, ScenarioError
from .estimation import DistortionInput, distortion, distortion_gradient, distortion_hessian
from .field import FieldStatistics, covariance_at
from .harvest import LINEAR, QUADRATIC, EhModel, phi, phi_derivative, phi_second_derivative
from .scenario import ScenarioConfig, SolverSettings

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class AllocationPlan:
    """A full-horizon allocation with its feasibility certificate.

    ``objective`` is the mean per-slot distortion. ``kkt_residual`` is the
    maximum of the stationarity norm (measured in the solver's relative
    coordinates), the complementary-slackness products, and any primal
    feasibility violation.
    """

    sensor_power: np.ndarray    # p, (T, n) Watts
    beacon_power: np.ndarray    # q, (T, n) Watts
    objective: float
    kkt_residual: float
    budget_slack: np.ndarray    # (T,)
    neutrality_slack: np.ndarray  # (T, n)
    budget_multiplier: float | None = None

    @property
    def horizon(self) -> int:
        return self.sensor_power.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.sensor_power.shape[1]

    def is_feasible(self, tol: float = FEASIBILITY_TOL) -> bool:
        return (
            bool(np.all(self.sensor_power >= -tol))
            and bool(np.all(self.beacon_power >= -tol))
            and bool(np.all(self.budget_slack >= -tol))
            and bool(np.all(self.neutrality_slack >= -tol))
        )


def _slot_inputs(config: ScenarioConfig, slots: list[SlotState], stats: FieldStatistics):
    factors = []
    for slot in slots:
        u, lam, _ = covariance_at(stats, slot.t)
        weights = slot.info_gain2 / slot.sigma2
        factors.append((u, lam, weights))
    return factors


def plan_distortion(config: ScenarioConfig, slots: list[SlotState], stats: FieldStatistics,
                    sensor_power: np.ndarray) -> float:
    """Mean distortion of a power schedule over the realized slots."""
    factors = _slot_inputs(config, slots, stats)
    total = 0.0
    for (u, lam, w), p in zip(factors, np.asarray(sensor_power, dtype=float)):
        total += distortion(DistortionInput(u, lam, w, config.noise_variance, p))
    return total / len(slots)


def plan_slacks(config: ScenarioConfig, slots: list[SlotState], model: EhModel,
                sensor_power: np.ndarray, beacon_power: np.ndarray):
    """Budget and energy-neutrality slacks of a plan (nonnegative iff feasible)."""
    tau_i, tau_e = config.tau_info, config.tau_energy
    h = np.stack([slot.energy_gain for slot in slots])
    harvested = tau_e * phi(model, beacon_power * h)
    budget_slack = config.power_budget - tau_e * beacon_power.sum(axis=1)
    neutrality_slack = np.cumsum(harvested, axis=0) - tau_i * np.cumsum(sensor_power, axis=0)
    return budget_slack, neutrality_slack


# --- interior-point solver ---------------------------------------------------


class _BarrierProblem:
    """Log-barrier formulation over z = [q.ravel(), b.ravel()].

    ``b[t, i]`` is the energy left in node i's battery after slot t, so the
    cumulative energy-neutrality constraints become simple battery
    nonnegativity and the sensor powers are derived:

        p[t] = (harvest(q[t]) + b[t-1] - b[t]) / tau_I,  b[0] = 0.

    At an optimum with tight neutrality every b[t, i] >= 0 is active with
    its own multiplier, where the cumulative-sum form has a degenerate
    multiplier split that defeats float64 centering below mu ~ 1e-8.
    Barrier terms cover p > 0, b > 0, q > 0, and the per-slot budget.
    """

    def __init__(self, config: ScenarioConfig, slots: list[SlotState],
                 stats: FieldStatistics, model: EhModel):
        self.config = config
        self.slots = slots
        self.model = model
        self.T = len(slots)
        self.n = config.n_sensors
        self.tau_i, self.tau_e = config.tau_info, config.tau_energy
        self.budget = config.power_budget
        self.noise = config.noise_variance
        self.factors = _slot_inputs(config, slots, stats)
        self.h = np.stack([slot.energy_gain for slot in slots])  # (T, n)

    def split(self, z: np.ndarray):
        tn = self.T * self.n
        return z[:tn].reshape(self.T, self.n), z[tn:].reshape(self.T, self.n)

    def pack(self, q: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.concatenate([q.ravel(), b.ravel()])

    def powers(self, q: np.ndarray, b: np.ndarray):
        """Derived sensor powers p and the per-slot harvested energy."""
        energy = self.tau_e * phi(self.model, q * self.h)
        prev = np.vstack([np.zeros(self.n), b[:-1]])
        p = (energy + prev - b) / self.tau_i
        return p, energy

    def objective(self, p: np.ndarray, *, with_hessian: bool):
        value = 0.0
        grad = np.zeros_like(p)
        hess_blocks = [] if with_hessian else None
        for t, (u, lam, w) in enumerate(self.factors):
            inp = DistortionInput(u, lam, w, self.noise, np.maximum(p[t], 0.0))
            value += distortion(inp)
            grad[t] = distortion_gradient(inp)
            if with_hessian:
                hess_blocks.append(distortion_hessian(inp))
        scale = 1.0 / self.T
        if with_hessian:
            hess_blocks = [blk * scale for blk in hess_blocks]
        return value * scale, grad * scale, hess_blocks

    def strictly_feasible(self, z: np.ndarray) -> bool:
        q, b = self.split(z)
        if np.any(q <= 0) or np.any(b <= 0):
            return False
        p, _ = self.powers(q, b)
        sb = self.budget - self.tau_e * q.sum(axis=1)
        return bool(np.all(p > 0) and np.all(sb > 0))

    def barrier_value(self, z: np.ndarray, mu: float) -> float:
        q, b = self.split(z)
        if np.any(q <= 0) or np.any(b <= 0):
            return np.inf
        p, _ = self.powers(q, b)
        sb = self.budget - self.tau_e * q.sum(axis=1)
        if np.any(p <= 0) or np.any(sb <= 0):
            return np.inf
        value, _, _ = self.objective(p, with_hessian=False)
        logs = np.log(p).sum() + np.log(q).sum() + np.log(b).sum() + np.log(sb).sum()
        return value - mu * logs

    def barrier_grad_hess(self, z: np.ndarray, mu: float, *, with_hessian: bool = True):
        T, n = self.T, self.n
        tn = T * n
        q, b = self.split(z)
        p, _ = self.powers(q, b)
        sb = self.budget - self.tau_e * q.sum(axis=1)
        value, obj_grad, obj_hess = self.objective(p, with_hessian=with_hessian)

        qin = q * self.h
        de = self.tau_e * self.h * phi_derivative(self.model, qin) / self.tau_i
        d2e = self.tau_e * self.h**2 * phi_second_derivative(self.model, qin) / self.tau_i

        # d(total)/dp, including the -mu log p barrier
        dp = obj_grad - mu / p
        grad_q = dp * de - mu / q + mu * self.tau_e / sb[:, None]
        # p[t] has +b[t-1]/tau_i and -b[t]/tau_i
        grad_b = -dp / self.tau_i - mu / b
        grad_b[:-1] += dp[1:] / self.tau_i
        grad = self.pack(grad_q, grad_b)
        total = value - mu * (np.log(p).sum() + np.log(q).sum()
                              + np.log(b).sum() + np.log(sb).sum())
        if not with_hessian:
            return total, grad, None

        # second derivative of (objective + p-barrier) in p, per slot
        hess = np.zeros((2 * tn, 2 * tn))
        qi = lambda t: np.arange(t * n, (t + 1) * n)          # noqa: E731
        bi = lambda t: np.arange(tn + t * n, tn + (t + 1) * n)  # noqa: E731
        for t in range(T):
            d2p = obj_hess[t] + np.diag(mu / p[t] ** 2)
            jq = de[t]
            idx_parts = [qi(t)]
            jac_parts = [np.diag(jq)]
            if t > 0:
                idx_parts.append(bi(t - 1))
                jac_parts.append(np.eye(n) / self.tau_i)
            idx_parts.append(bi(t))
            jac_parts.append(-np.eye(n) / self.tau_i)
            idx = np.concatenate(idx_parts)
            jac = np.concatenate(jac_parts, axis=0)  # (K, n): rows map z-block -> p[t]
            hess[np.ix_(idx, idx)] += jac @ d2p @ jac.T
            # curvature of the harvest map itself, weighted by d(total)/dp
            hess[qi(t), qi(t)] += dp[t] * d2e[t]
            # budget barrier: rank-1 over this slot's q block
            hess[np.ix_(qi(t), qi(t))] += mu * self.tau_e**2 / sb[t] ** 2
        diag = self.pack(mu / q**2, mu / b**2)
        hess[np.diag_indices_from(hess)] += diag
        return total, grad, hess


def _backtrack(problem: _BarrierProblem, z: np.ndarray, mu: float, value: float,
               grad: np.ndarray, step: np.ndarray):
    """Feasibility-preserving Armijo backtracking; None when no progress.

    Near convergence the predicted decrease drops below the float
    resolution of the barrier value; feasible steps are then accepted on
    the slope test alone (pure Newton phase) instead of stalling.
    """
    slope = float(grad @ step)
    if slope >= 0 or not np.all(np.isfinite(step)):
        return None
    resolution = 1e-13 * (1.0 + abs(value))
    alpha = 1.0
    for _ in range(60):
        cand = z + alpha * step
        if problem.strictly_feasible(cand):
            decrease = 1e-4 * alpha * slope
            cand_value = problem.barrier_value(cand, mu)
            if cand_value <= value + decrease:
                return cand
            if -decrease < resolution and cand_value <= value + resolution:
                return cand
        alpha *= 0.5
    return None


def _newton_stage(problem: _BarrierProblem, z: np.ndarray, mu: float,
                  tol: float, max_iter: int):
    """Damped Newton on the barrier objective.

    The Newton system is Jacobi-equilibrated and solved with one round of
    iterative refinement; the variables span many decades, so the raw
    Hessian can be too ill-conditioned for a bare Cholesky solve. Returns
    (z, stationarity) where stationarity is |grad * z|_inf, the gradient
    norm in relative (log-variable) coordinates.
    """
    stat = np.inf
    for _ in range(max_iter):
        value, grad, hess = problem.barrier_grad_hess(z, mu)
        stat = float(np.max(np.abs(grad * z)))
        if stat <= tol:
            return z, stat
        scale = 1.0 / np.sqrt(np.maximum(np.diagonal(hess), 1e-300))
        hs = hess * scale[:, None] * scale[None, :]
        gs = grad * scale
        factor = None
        jitter = 0.0
        for _ in range(6):
            try:
                factor = cho_factor(hs + jitter * np.eye(len(z)), lower=True,
                                    check_finite=False)
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 100.0, 1e-14)
        if factor is None:
            raise NumericalError(
                f"interior point: Hessian factorization failed at mu={mu:.1e}")
        y = cho_solve(factor, -gs, check_finite=False)
        y += cho_solve(factor, -gs - hs @ y, check_finite=False)  # refinement
        step = scale * y
        cand = _backtrack(problem, z, mu, value, grad, step)
        if cand is None:
            # fall back to steepest descent in the equilibrated metric
            cand = _backtrack(problem, z, mu, value, grad, -grad * scale**2)
        if cand is None:
            return z, stat  # stalled; caller decides whether stat is acceptable
        z = cand
    return z, stat


def solve_convex(config: ScenarioConfig, slots: list[SlotState], stats: FieldStatistics,
                 model: EhModel, settings: SolverSettings | None = None) -> AllocationPlan:
    """Solve the full-horizon allocation problem for a concave harvest model.

    Feasible-start log-barrier method: the barrier weight starts at 1 and
    decays by 10x per outer stage down to 1e-9, with a damped Newton inner
    loop. The solver works on the full (T, n) variable set; time uniformity
    under constant channels is an emergent property checked by tests, not
    an assumption.
    """
    settings = settings or config.solver
    if model.variant not in (LINEAR, QUADRATIC):
        raise ScenarioError(
            "solve_convex: the logistic model makes the problem non-convex; "
            "use the reinforcement-learning path instead"
        )
    if len(slots) != config.horizon:
        raise ScenarioError(
            f"solve_convex: expected {config.horizon} slots, got {len(slots)}"
        )
    solver_model = model
    if not settings.clamp_in_solver:
        solver_model = replace(model, saturation_input=math.inf)
    problem = _BarrierProblem(config, slots, stats, solver_model)
    T, n = problem.T, problem.n

    # strictly interior start: uniform beacon split backed off from the budget
    # face; sensors spend 90% of each slot's harvest (batteries bank the rest)
    q0 = np.full((T, n), 0.999 * config.power_budget / (n * config.tau_energy))
    e0 = config.tau_energy * phi(solver_model, q0 * problem.h)
    e0 = np.maximum(e0, 1e-12 * max(e0.max(), 1e-30))
    b0 = 0.1 * np.cumsum(e0, axis=0)
    z = problem.pack(q0, b0)
    if not problem.strictly_feasible(z):
        raise NumericalError("interior point: could not construct a strictly feasible start")

    mu = settings.barrier_initial
    stat = np.inf
    while True:
        final_stage = mu <= settings.barrier_final * (1.0 + 1e-12)
        # loose centering mid-path, tight only at the last stage
        tol = settings.gradient_tolerance if final_stage else max(0.3 * mu, 1e-9)
        z, stat = _newton_stage(problem, z, mu, tol, settings.max_newton_iterations)
        if final_stage:
            break
        mu = max(mu / settings.barrier_decay, settings.barrier_final)

    if stat > 1e-6:
        raise NumericalError(
            f"interior point: Newton stalled at stage mu={mu:.1e} with stationarity {stat:.2e}"
        )

    q, b = problem.split(z)
    p, _ = problem.powers(q, b)
    objective = plan_distortion(config, slots, stats, p)
    budget_slack, neutrality_slack = plan_slacks(config, slots, solver_model, p, q)
    kkt = max(stat, mu, float(-min(budget_slack.min(), neutrality_slack.min(), 0.0)))
    return AllocationPlan(
        sensor_power=p,
        beacon_power=q,
        objective=objective,
        kkt_residual=kkt,
        budget_slack=budget_slack,
        neutrality_slack=neutrality_slack,
    )


# --- closed form (constant channel, diagonal covariance, linear harvest) -----


def closed_form_linear(config: ScenarioConfig, info_gain2, energy_gain, sigma2,
                       model: EhModel) -> AllocationPlan:
    """Water-filling solution of the time-uniform linear-harvest problem.

    Valid when channels and the (diagonal) field covariance are constant
    over slots. The budget multiplier is found by bisection on the strictly
    decreasing map multiplier -> total beacon power.
    """
    if model.variant != LINEAR:
        raise ScenarioError("closed_form_linear: requires the linear harvest model")
    g2 = np.asarray(info_gain2, dtype=float)
    h = np.asarray(energy_gain, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if np.any(g2 <= 0) or np.any(h <= 0) or np.any(s2 <= 0):
        raise ScenarioError("closed_form_linear: gains and variances must be positive")
    zeta = model.zeta
    noise = config.noise_variance
    budget = config.power_budget

    a = h * zeta * s2 * noise / g2
    b = noise / g2

    def total_beacon(multiplier: float) -> float:
        p = np.maximum(np.sqrt(a / multiplier) - b, 0.0)
        return float(np.sum(p / (h * zeta)))

    lo, hi = 1e-20, 1e20
    for _ in range(200):
        if total_beacon(lo) >= budget:
            break
        lo /= 10.0
    for _ in range(200):
        if total_beacon(hi) <= budget:
            break
        hi *= 10.0
    for _ in range(400):
        mid = math.sqrt(lo * hi)  # bisect in log space over the huge bracket
        if total_beacon(mid) > budget:
            lo = mid
        else:
            hi = mid
        if abs(total_beacon(mid) - budget) <= 1e-10 * budget:
            break
    multiplier = math.sqrt(lo * hi)
    if abs(total_beacon(multiplier) - budget) > 1e-8 * budget:
        raise NumericalError("closed_form_linear: budget bisection did not converge")

    p = np.maximum(np.sqrt(a / multiplier) - b, 0.0)
    q = p / (h * zeta)
    T = config.horizon
    p_plan = np.tile(p, (T, 1))
    q_plan = np.tile(q, (T, 1))
    err = float(np.sum(noise * s2 / (g2 * p + noise)))
    budget_slack = np.full(T, budget - config.tau_energy * q.sum())
    neutrality = np.zeros((T, len(p)))  # exact: p = zeta * h * q by construction
    return AllocationPlan(
        sensor_power=p_plan,
        beacon_power=q_plan,
        objective=err,
        kkt_residual=abs(total_beacon(multiplier) - budget) / budget,
        budget_slack=budget_slack,
        neutrality_slack=neutrality,
        budget_multiplier=multiplier,
    )


def check_time_uniformity(plan: AllocationPlan) -> float:
    """Max over nodes of the relative spread of p and q across slots."""
    worst = 0.0
    for matrix in (plan.sensor_power, plan.beacon_power):
        spread = matrix.max(axis=0) - matrix.min(axis=0)
        scale = np.maximum(np.abs(matrix).max(axis=0), 1e-300)
        worst = max(worst, float((spread / scale).max()))
    return worst


# --- plan replay under (possibly) mismatched hardware ------------------------


def evaluate_plan(plan: AllocationPlan, slots: list[SlotState], stats: FieldStatistics,
                  actual_model: EhModel, config: ScenarioConfig):
    """Replay a plan against the actual harvest hardware and channel draws.

    Battery shortfalls are repaired the way a deployed node would behave:
    if the stored energy cannot cover the planned transmit power, the node
    sends with everything it has; whatever remains after slot T-1 is spent
    at the final slot.
    """
    if len(slots) != plan.horizon:
        raise ScenarioError(f"evaluate_plan: plan covers {plan.horizon} slots, got {len(slots)}")
    tau_i, tau_e = config.tau_info, config.tau_energy
    T, n = plan.horizon, plan.n_sensors
    repaired = np.zeros((T, n))
    battery = np.zeros(n)
    for t, slot in enumerate(slots):
        harvested = tau_e * phi(actual_model, plan.beacon_power[t] * slot.energy_gain)
        available = battery + harvested
        if t == T - 1:
            spend = available  # leftover energy is used in the final slot
        else:
            spend = np.minimum(tau_i * plan.sensor_power[t], available)
        repaired[t] = spend / tau_i
        battery = available - spend
    realized = plan_distortion(config, slots, stats, repaired)
    budget_slack, neutrality_slack = plan_slacks(config, slots, actual_model,
                                                 repaired, plan.beacon_power)
    repaired_plan = AllocationPlan(
        sensor_power=repaired,
        beacon_power=plan.beacon_power.copy(),
        objective=realized,
        kkt_residual=np.inf,  # repaired plans carry no optimality certificate
        budget_slack=budget_slack,
        neutrality_slack=neutrality_slack,
    )
    return realized, repaired_plan
