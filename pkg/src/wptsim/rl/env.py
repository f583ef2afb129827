"""MDP wrapper around the sensing problem.

One episode is one horizon of T slots. The agent observes the carried
battery levels and the previous reward, and outputs 2n raw actions:
n beacon logits (softmax onto the budget simplex, so the per-slot budget
holds by construction) and n spend-ratio logits (squashed into [0, 1], so
batteries never go negative).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..channel import SlotState
from ..errors import ScenarioError
from ..estimation import DistortionInput, distortion
from ..field import FieldStatistics, covariance_at
from ..harvest import EhModel, phi
from ..scenario import ScenarioConfig


def softmax_allocation(logits: np.ndarray, budget: float) -> np.ndarray:
    """Map unbounded logits onto the budget simplex (max-shifted for stability)."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return budget * weights / weights.sum(axis=-1, keepdims=True)


def squash_ratio(logits: np.ndarray) -> np.ndarray:
    """Logistic squash of spend-ratio logits into [0, 1]."""
    return expit(logits)


@dataclass
class EpisodeTrace:
    """Everything recorded during one episode rollout."""

    observations: np.ndarray = None   # (T, obs_dim), normalized as seen by the nets
    raw_observations: np.ndarray = None  # (T, obs_dim), unnormalized
    raw_actions: np.ndarray = None    # (T, 2n)
    beacon_power: np.ndarray = None   # (T, n) mapped q
    sensor_power: np.ndarray = None   # (T, n) mapped p
    rewards: np.ndarray = None        # (T,), = -distortion
    batteries: np.ndarray = None      # (T+1, n) carried levels, starts at zero
    log_probs: np.ndarray = None      # (T,)
    values: np.ndarray = field(default=None, repr=False)

    def discounted_return(self, gamma: float) -> float:
        steps = np.arange(len(self.rewards))
        return float(np.sum(self.rewards * gamma**steps))

    @property
    def mean_distortion(self) -> float:
        return float(-np.mean(self.rewards))


class BeaconEnv:
    """Slot-by-slot environment; the slot schedule is fixed per episode."""

    def __init__(self, config: ScenarioConfig, stats: FieldStatistics, model: EhModel,
                 slots: list[SlotState]):
        self.config = config
        self.stats = stats
        self.model = model
        self.include_phase = config.rl.obs_include_phase
        self.obs_dim = config.n_sensors + 1 + (1 if self.include_phase else 0)
        self.act_dim = 2 * config.n_sensors
        self.set_slots(slots)
        self._battery = None
        self._t = None
        self._last_reward = 0.0

    def set_slots(self, slots: list[SlotState]) -> None:
        if len(slots) != self.config.horizon:
            raise ScenarioError(
                f"episode needs {self.config.horizon} slots, got {len(slots)}"
            )
        self.slots = slots
        self._factors = []
        for slot in slots:
            u, lam, _ = covariance_at(self.stats, slot.t)
            self._factors.append((u, lam, slot.info_gain2 / slot.sigma2))

    # -- gym-style interface --

    def reset(self, slots: list[SlotState] | None = None) -> np.ndarray:
        if slots is not None:
            self.set_slots(slots)
        self._battery = np.zeros(self.config.n_sensors)
        self._t = 0
        self._last_reward = 0.0
        return self._observation()

    def _observation(self) -> np.ndarray:
        parts = [self._battery, [self._last_reward]]
        if self.include_phase:
            upcoming = self.slots[min(self._t, len(self.slots) - 1)].t
            parts.append([(upcoming % self.config.covariance_period)
                          / self.config.covariance_period])
        return np.concatenate(parts)

    def step(self, raw_action: np.ndarray):
        if self._t is None or self._t >= self.config.horizon:
            raise RuntimeError("step called on a finished episode; call reset()")
        n = self.config.n_sensors
        raw_action = np.asarray(raw_action, dtype=float).reshape(self.act_dim)
        slot = self.slots[self._t]
        u, lam, weights = self._factors[self._t]

        beacon = softmax_allocation(raw_action[:n], self.config.power_budget
                                    / self.config.tau_energy)
        harvested = self.config.tau_energy * phi(self.model, beacon * slot.energy_gain)
        stored = self._battery + harvested
        ratio = squash_ratio(raw_action[n:])
        spend = ratio * stored
        power = spend / self.config.tau_info
        reward = -distortion(DistortionInput(u, lam, weights,
                                             self.config.noise_variance, power))
        self._battery = stored - spend
        self._t += 1
        self._last_reward = reward
        done = self._t >= self.config.horizon
        info = {"beacon_power": beacon, "sensor_power": power,
                "battery": self._battery.copy(), "slot": slot.t}
        return self._observation(), reward, done, info
