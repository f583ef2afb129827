"""Trust-region policy optimization on the beacon environment.

Each iteration collects a batch of episodes, estimates advantages with
GAE, takes a natural-gradient step (conjugate-gradient solve of the
Fisher system followed by a KL-constrained backtracking line search), and
refits the value baseline with Adam on discounted-return targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..channel import realize_horizon
from ..errors import NumericalError, ScenarioError
from ..field import FieldStatistics, build_field
from ..harvest import EhModel
from ..scenario import ScenarioConfig, rng_stream
from .env import BeaconEnv, EpisodeTrace
from .nets import Adam, Mlp
from .policy import GaussianPolicy


@dataclass
class RunningNorm:
    """Streaming mean/variance used to standardize observations."""

    mean: np.ndarray
    var: np.ndarray
    count: float = 0.0

    @classmethod
    def for_dim(cls, dim: int) -> "RunningNorm":
        return cls(mean=np.zeros(dim), var=np.ones(dim), count=0.0)

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(batch)
        b_count = batch.shape[0]
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        if self.count == 0.0:
            self.mean, self.var, self.count = b_mean, np.maximum(b_var, 0.0), float(b_count)
            return
        total = self.count + b_count
        delta = b_mean - self.mean
        new_mean = self.mean + delta * (b_count / total)
        m_a = self.var * self.count
        m_b = b_var * b_count
        new_var = (m_a + m_b + delta**2 * self.count * b_count / total) / total
        self.mean, self.var, self.count = new_mean, new_var, total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / np.sqrt(self.var + 1e-8)


def discount_cumsum(values: np.ndarray, gamma: float) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    acc = 0.0
    for t in range(len(values) - 1, -1, -1):
        acc = values[t] + gamma * acc
        out[t] = acc
    return out


def gae_advantages(rewards: np.ndarray, values: np.ndarray, gamma: float,
                   lam: float) -> np.ndarray:
    """Generalized advantage estimation over one finite episode (no bootstrap)."""
    next_values = np.append(values[1:], 0.0)
    deltas = rewards + gamma * next_values - values
    return discount_cumsum(deltas, gamma * lam)


def conjugate_gradient(matvec, rhs: np.ndarray, iterations: int,
                       residual_tol: float = 1e-12) -> np.ndarray:
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = rhs.copy()
    rs = float(r @ r)
    for _ in range(iterations):
        ap = matvec(p)
        denom = float(p @ ap)
        if denom <= 0 or not np.isfinite(denom):
            raise NumericalError("conjugate gradient: curvature is not positive definite")
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if rs_new < residual_tol:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def rollout(env: BeaconEnv, policy: GaussianPolicy, norm: RunningNorm,
            rng: np.random.Generator | None, greedy: bool = False) -> EpisodeTrace:
    """Run one episode; observations are standardized before the policy."""
    T = env.config.horizon
    obs_raw = env.reset()
    raw_obs = np.zeros((T, env.obs_dim))
    norm_obs = np.zeros((T, env.obs_dim))
    actions = np.zeros((T, env.act_dim))
    log_probs = np.zeros(T)
    rewards = np.zeros(T)
    beacon = np.zeros((T, env.config.n_sensors))
    sensor = np.zeros((T, env.config.n_sensors))
    batteries = np.zeros((T + 1, env.config.n_sensors))
    for t in range(T):
        raw_obs[t] = obs_raw
        x = norm.normalize(obs_raw)
        norm_obs[t] = x
        if greedy:
            action = policy.mean(x[None, :])[0]
            logp = 0.0
        else:
            action, logp = policy.sample(x[None, :], rng)
            action, logp = action[0], float(logp[0])
        obs_raw, reward, done, info = env.step(action)
        actions[t] = action
        log_probs[t] = logp
        rewards[t] = reward
        beacon[t] = info["beacon_power"]
        sensor[t] = info["sensor_power"]
        batteries[t + 1] = info["battery"]
    return EpisodeTrace(
        observations=norm_obs, raw_observations=raw_obs, raw_actions=actions,
        beacon_power=beacon, sensor_power=sensor, rewards=rewards,
        batteries=batteries, log_probs=log_probs,
    )


@dataclass
class CurvePoint:
    episode: int
    slots_seen: int
    mean_distortion: float
    kl: float
    entropy: float


@dataclass
class TrainResult:
    policy: GaussianPolicy
    value: Mlp
    obs_norm: RunningNorm
    curve: list[CurvePoint] = field(default_factory=list)
    episodes: int = 0


def _episode_slots(config: ScenarioConfig, stats: FieldStatistics, episode: int):
    """Fresh fading per episode; the phase schedule restarts every episode."""
    return realize_horizon(config, stats, rng_stream(config, "rl-fading", episode))


def train(config: ScenarioConfig, total_episodes: int, *,
          stats: FieldStatistics | None = None, model: EhModel | None = None,
          callback=None, paper_scale: bool = False) -> TrainResult:
    """Train the agent for (up to) ``total_episodes`` episodes.

    ``callback(result, point)`` runs after every iteration; returning True
    stops training early (used for train-until-threshold runs). The
    learning curve records both episode and slot counters.
    """
    if total_episodes < 1:
        raise ScenarioError("total_episodes must be >= 1")
    rl = config.rl.at_paper_scale() if paper_scale else config.rl
    model = model if model is not None else config.eh_model
    if stats is None:
        stats = build_field(config, rng_stream(config, "field"))

    n = config.n_sensors
    init_rng = rng_stream(config, "rl-init")
    obs_dim = n + 1 + (1 if rl.obs_include_phase else 0)
    policy = GaussianPolicy(obs_dim, 2 * n, rl.policy_hidden, init_rng, rl.log_std_init)
    value = Mlp((obs_dim, *rl.value_hidden, 1), init_rng)
    value_opt = Adam(value.n_params, lr=rl.value_learning_rate)
    norm = RunningNorm.for_dim(obs_dim)
    result = TrainResult(policy=policy, value=value, obs_norm=norm)

    deterministic = config.deterministic_fading
    env = BeaconEnv(config, stats, model, _episode_slots(config, stats, 0))

    episode = 0
    iterations = int(np.ceil(total_episodes / rl.batch_episodes))
    for iteration in range(iterations):
        batch = min(rl.batch_episodes, total_episodes - episode)
        traces: list[EpisodeTrace] = []
        for _ in range(batch):
            if not deterministic:
                env.set_slots(_episode_slots(config, stats, episode))
            act_rng = rng_stream(config, "rl-actions", episode)
            traces.append(rollout(env, policy, norm, act_rng))
            episode += 1

        obs = np.concatenate([tr.observations for tr in traces])
        actions = np.concatenate([tr.raw_actions for tr in traces])
        returns, advantages = [], []
        for tr in traces:
            tr.values = value.forward(tr.observations)[:, 0]
            returns.append(discount_cumsum(tr.rewards, rl.discount))
            advantages.append(gae_advantages(tr.rewards, tr.values, rl.discount,
                                             rl.gae_lambda))
        returns = np.concatenate(returns)
        advantages = np.concatenate(advantages)
        spread = advantages.std()
        if spread > 1e-12:
            advantages = (advantages - advantages.mean()) / spread
        else:
            advantages = advantages - advantages.mean()

        kl = _policy_update(policy, obs, actions, advantages, rl)
        _value_update(value, value_opt, obs, returns, rl,
                      rng_stream(config, "rl-value", iteration))
        norm.update(np.concatenate([tr.raw_observations for tr in traces]))

        point = CurvePoint(
            episode=episode,
            slots_seen=episode * config.horizon,
            mean_distortion=float(np.mean([tr.mean_distortion for tr in traces])),
            kl=kl,
            entropy=policy.entropy(),
        )
        result.curve.append(point)
        result.episodes = episode
        if callback is not None and callback(result, point):
            break
    return result


def _policy_update(policy: GaussianPolicy, obs: np.ndarray, actions: np.ndarray,
                   advantages: np.ndarray, rl) -> float:
    """Natural-gradient step with KL-constrained backtracking; returns achieved KL."""
    n_samples = len(advantages)
    grad = policy.log_prob_grad(obs, actions, advantages / n_samples)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("policy gradient contains non-finite values")
    if float(grad @ grad) < 1e-24:
        return 0.0

    def fvp(v):
        return policy.fisher_vector_product(obs, v) + rl.cg_damping * v

    try:
        direction = conjugate_gradient(fvp, grad, rl.cg_iterations)
    except NumericalError:
        return 0.0  # skip this update, keep collecting
    shs = float(direction @ fvp(direction))
    if shs <= 0 or not np.isfinite(shs):
        return 0.0
    full_step = np.sqrt(2.0 * rl.kl_radius / shs) * direction

    theta_old = policy.get_flat()
    old_mean = policy.mean(obs)
    old_log_std = policy.log_std.copy()
    old_logp = policy.log_prob(obs, actions)
    for halving in range(10):
        policy.set_flat(theta_old + full_step * (0.5**halving))
        kl = policy.kl_mean(obs, old_mean, old_log_std)
        ratio = np.exp(policy.log_prob(obs, actions) - old_logp)
        surrogate = float(np.mean(ratio * advantages))
        if kl <= rl.kl_radius and surrogate > 0.0:
            return float(kl)
    policy.set_flat(theta_old)  # no acceptable step; reject the update
    return 0.0


def _value_update(value: Mlp, opt: Adam, obs: np.ndarray, targets: np.ndarray,
                  rl, rng: np.random.Generator, minibatch: int = 64) -> None:
    n_samples = len(targets)
    for _ in range(rl.value_passes):
        perm = rng.permutation(n_samples)
        for start in range(0, n_samples, minibatch):
            idx = perm[start:start + minibatch]
            pred = value.forward(obs[idx], cache=True)[:, 0]
            grad_out = (2.0 / len(idx)) * (pred - targets[idx])[:, None]
            grad = value.backward(grad_out)
            value.set_flat(value.get_flat() - opt.step(grad))
    if not np.all(np.isfinite(value.get_flat())):
        raise NumericalError("value network diverged to non-finite weights")


def evaluate_policy(config: ScenarioConfig, policy: GaussianPolicy, norm: RunningNorm,
                    n_episodes: int, *, stats: FieldStatistics | None = None,
                    model: EhModel | None = None, fading_label: str = "eval-fading"):
    """Greedy evaluation (policy mean, no sampling) over fresh episode seeds."""
    if n_episodes < 1:
        raise ScenarioError("n_episodes must be >= 1")
    model = model if model is not None else config.eh_model
    if stats is None:
        stats = build_field(config, rng_stream(config, "field"))
    distortions = np.zeros(n_episodes)
    env = None
    for k in range(n_episodes):
        slots = realize_horizon(config, stats, rng_stream(config, fading_label, k))
        if env is None:
            env = BeaconEnv(config, stats, model, slots)
        else:
            env.set_slots(slots)
        trace = rollout(env, policy, norm, None, greedy=True)
        distortions[k] = trace.mean_distortion
    return float(distortions.mean()), float(distortions.std())
