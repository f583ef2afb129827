"""LMMSE field-reconstruction distortion and its validators.

The per-slot distortion is tr[(Lambda^-1 + U^H G P U / sigma_w^2)^-1];
the Monte-Carlo sampler simulates the uncoded analog uplink and the LMMSE
sink estimator directly, providing an independent check of the formula.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NumericalError


@dataclass(frozen=True)
class DistortionInput:
    """Everything the distortion formula needs for one slot.

    ``weights`` holds g_i = |g_i|^2 / sigma_{x_i}^2 (channel gain over
    signal variance), matching the diagonal weighting of the formula.
    """

    basis: np.ndarray        # U, (n, s) complex with orthonormal columns
    eigenvalues: np.ndarray  # (s,) positive, trace-normalized upstream
    weights: np.ndarray      # (n,) positive
    noise_variance: float
    powers: np.ndarray       # p, (n,) nonnegative Watts

    def __post_init__(self):
        object.__setattr__(self, "basis", np.asarray(self.basis, dtype=complex))
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "powers", np.asarray(self.powers, dtype=float))
        if np.any(self.eigenvalues <= 0):
            raise ValueError("eigenvalues must be strictly positive")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be strictly positive")
        if np.any(self.powers < 0):
            raise ValueError("sensor powers must be nonnegative")
        if self.noise_variance <= 0:
            raise ValueError("noise variance must be positive")

    @property
    def signal_variances(self) -> np.ndarray:
        return (np.abs(self.basis) ** 2) @ self.eigenvalues

    @property
    def prior_trace(self) -> float:
        return float(self.eigenvalues.sum())


def _inner_cholesky(inp: DistortionInput) -> np.ndarray:
    """Cholesky factor of Lambda^-1 + U^H diag(w p) U / sigma_w^2.

    Retries once with a trace-scaled diagonal jitter: Lambda^-1 spans many
    orders of magnitude at small eigenvalue bases.
    """
    scaled = inp.basis.conj().T * (inp.weights * inp.powers / inp.noise_variance)
    m = scaled @ inp.basis
    m[np.diag_indices_from(m)] += 1.0 / inp.eigenvalues
    m = 0.5 * (m + m.conj().T)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        jitter = 1e-14 * np.trace(m).real
        try:
            return np.linalg.cholesky(m + jitter * np.eye(m.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "distortion: inner matrix is not positive definite "
                "(invariant breach upstream)"
            ) from exc


def distortion(inp: DistortionInput) -> float:
    """Mean-square reconstruction error at the sink for one slot."""
    chol = _inner_cholesky(inp)
    inv_factor = solve_triangular(chol, np.eye(chol.shape[0], dtype=complex), lower=True)
    return float(np.sum(np.abs(inv_factor) ** 2))


def distortion_gradient(inp: DistortionInput) -> np.ndarray:
    """d err / d p_i = -(w_i / sigma_w^2) * ||M^-1 u_i||^2; all <= 0."""
    chol = _inner_cholesky(inp)
    x = cho_solve((chol, True), inp.basis.conj().T)
    return -(inp.weights / inp.noise_variance) * np.sum(np.abs(x) ** 2, axis=0)


def distortion_hessian(inp: DistortionInput) -> np.ndarray:
    """Exact Hessian in the sensor powers (used by the convex solver)."""
    chol = _inner_cholesky(inp)
    uh = inp.basis.conj().T
    x = cho_solve((chol, True), uh)          # M^-1 U^H
    b = inp.basis @ x                        # U M^-1 U^H, (n, n)
    c = x.conj().T @ x                       # U M^-2 U^H, (n, n)
    coeff = inp.weights / inp.noise_variance
    return 2.0 * np.real(b * c.conj()) * np.outer(coeff, coeff)


@dataclass(frozen=True)
class UplinkSample:
    """Empirical statistics from the Monte-Carlo uplink simulation."""

    mse: float
    per_node_power: np.ndarray
    n_samples: int


def simulate_uplink(inp: DistortionInput, n_samples: int,
                    rng: np.random.Generator) -> UplinkSample:
    """Simulate the uncoded uplink and LMMSE sink estimate directly.

    Draws field realizations x ~ CN(0, U Lambda U^H), scales them by the
    amplification factors with zero channel phase (the error depends on
    |g|^2 only), adds proper complex noise, and applies K_xy K_y^-1.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    u = inp.basis
    n, s = u.shape
    sigma2 = inp.signal_variances
    gain = np.sqrt(inp.weights * inp.powers)  # |g_i| sqrt(p_i / sigma_i^2)

    z = (rng.standard_normal((s, n_samples))
         + 1j * rng.standard_normal((s, n_samples))) / np.sqrt(2.0)
    x = (u * np.sqrt(inp.eigenvalues)) @ z
    noise = np.sqrt(inp.noise_variance / 2.0) * (
        rng.standard_normal((n, n_samples)) + 1j * rng.standard_normal((n, n_samples))
    )
    y = gain[:, None] * x + noise

    cov = (u * inp.eigenvalues) @ u.conj().T
    k_xy = cov * gain[None, :]
    k_y = gain[:, None] * cov * gain[None, :] + inp.noise_variance * np.eye(n)
    estimator = k_xy @ np.linalg.inv(k_y)
    residual = x - estimator @ y

    mse = float(np.mean(np.sum(np.abs(residual) ** 2, axis=0)))
    tx_power = (inp.powers / sigma2) * np.mean(np.abs(x) ** 2, axis=1)
    return UplinkSample(mse=mse, per_node_power=tx_power, n_samples=n_samples)


def slot_distortion_input(slot, basis, eigenvalues, noise_variance, powers) -> DistortionInput:
    """Assemble the distortion input for one realized slot."""
    return DistortionInput(
        basis=basis,
        eigenvalues=eigenvalues,
        weights=slot.info_gain2 / slot.sigma2,
        noise_variance=noise_variance,
        powers=powers,
    )
