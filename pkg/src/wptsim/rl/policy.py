"""Diagonal Gaussian policy with a global learned log-std."""

from __future__ import annotations

import numpy as np

from .nets import Mlp

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG_2PI = np.log(2.0 * np.pi)


class GaussianPolicy:
    """Action mean from an MLP; state-independent log-std vector.

    The raw (pre-squash) action density is exact, so importance ratios and
    KL terms in the trust-region update are exact as well.
    """

    def __init__(self, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator,
                 log_std_init: float = -0.5):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.net = Mlp((obs_dim, *hidden, act_dim), rng, out_scale=0.01)
        self.log_std = np.full(act_dim, float(log_std_init))

    @property
    def n_params(self) -> int:
        return self.net.n_params + self.act_dim

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.net.get_flat(), self.log_std])

    def set_flat(self, flat: np.ndarray) -> None:
        self.net.set_flat(flat[: self.net.n_params])
        self.log_std = np.clip(flat[self.net.n_params:], LOG_STD_MIN, LOG_STD_MAX)

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.net.forward(obs)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        mean = self.mean(obs)
        std = np.exp(self.log_std)
        action = mean + std * rng.standard_normal(mean.shape)
        return action, self._log_prob(action, mean)

    def log_prob(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self._log_prob(np.atleast_2d(actions), self.mean(obs))

    def _log_prob(self, actions: np.ndarray, mean: np.ndarray) -> np.ndarray:
        std = np.exp(self.log_std)
        z = (actions - mean) / std
        return -0.5 * np.sum(z**2 + _LOG_2PI, axis=-1) - np.sum(self.log_std)

    def log_prob_grad(self, obs: np.ndarray, actions: np.ndarray,
                      coeff: np.ndarray) -> np.ndarray:
        """Flat gradient of sum_k coeff_k * log pi(a_k | o_k)."""
        mean = self.net.forward(obs, cache=True)
        var = np.exp(2.0 * self.log_std)
        delta = (np.atleast_2d(actions) - mean) / var
        net_grad = self.net.backward(coeff[:, None] * delta)
        ls_grad = np.sum(coeff[:, None] * ((np.atleast_2d(actions) - mean) ** 2 / var - 1.0),
                         axis=0)
        return np.concatenate([net_grad, ls_grad])

    def kl_mean(self, obs: np.ndarray, old_mean: np.ndarray,
                old_log_std: np.ndarray) -> float:
        """Batch-mean KL(old || new) between diagonal Gaussians."""
        new_mean = self.mean(obs)
        new_log_std = self.log_std
        var_old = np.exp(2.0 * old_log_std)
        var_new = np.exp(2.0 * new_log_std)
        per_dim = (new_log_std - old_log_std
                   + (var_old + (old_mean - new_mean) ** 2) / (2.0 * var_new) - 0.5)
        return float(np.mean(np.sum(per_dim, axis=-1)))

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (1.0 + _LOG_2PI)))

    def fisher_vector_product(self, obs: np.ndarray, vector: np.ndarray) -> np.ndarray:
        """Exact FIM-vector product, averaged over the observation batch.

        For a Gaussian with state-independent log-std the FIM block for the
        mean parameters is J^T diag(1/var) J (Gauss-Newton form, exact at
        the expansion point) and the log-std block is 2 per dimension; the
        cross blocks vanish.
        """
        v_net = vector[: self.net.n_params]
        v_ls = vector[self.net.n_params:]
        batch = np.atleast_2d(obs).shape[0]
        var = np.exp(2.0 * self.log_std)
        jv = self.net.jvp(obs, v_net) / var
        self.net.forward(obs, cache=True)
        f_net = self.net.backward(jv) / batch
        return np.concatenate([f_net, 2.0 * v_ls])
