"""Second-order statistics of the unknown field.

The field covariance is periodic over slots with period kappa: each phase
has a geometric eigenvalue profile (rescaled to trace n_s) and a fixed
eigenvector basis drawn once from the Haar-uniform unitary distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig


@dataclass(frozen=True)
class FieldStatistics:
    """Per-phase factors (U, eigenvalues) of the field covariance."""

    period: int
    bases: tuple[np.ndarray, ...]
    eigenvalues: tuple[np.ndarray, ...]

    @property
    def n_sensors(self) -> int:
        return self.bases[0].shape[0]

    def phase_of(self, t: int) -> int:
        return t % self.period

    def covariance(self, t: int) -> np.ndarray:
        u, lam, _ = covariance_at(self, t)
        return (u * lam) @ u.conj().T


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform n x n unitary via QR of a complex Ginibre matrix.

    Dividing each Q column by the unit phase of the matching R diagonal
    entry removes the sign/phase ambiguity that would otherwise bias QR
    away from the Haar measure.
    """
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def phase_eigenvalues(n_sensors: int, base: float, phase: int) -> np.ndarray:
    """Geometric eigenvalue profile of one phase, rescaled to trace n_s."""
    nu = base**phase
    raw = nu ** np.arange(n_sensors, dtype=float)
    return n_sensors * raw / raw.sum()


def build_field(config: ScenarioConfig, rng: np.random.Generator) -> FieldStatistics:
    """Draw the per-phase covariance factors for one experiment.

    One Haar basis per phase, shared by every slot in that phase. With the
    diagonal-covariance toggle the basis is the identity, which keeps the
    covariance diagonal as required by the closed-form benchmark.
    """
    n = config.n_sensors
    bases = []
    eigenvalues = []
    for phase in range(config.covariance_period):
        u = np.eye(n, dtype=complex) if config.diagonal_covariance else haar_unitary(n, rng)
        u.flags.writeable = False
        lam = phase_eigenvalues(n, config.eigenvalue_base, phase)
        lam.flags.writeable = False
        bases.append(u)
        eigenvalues.append(lam)
    return FieldStatistics(config.covariance_period, tuple(bases), tuple(eigenvalues))


def covariance_at(stats: FieldStatistics, t: int):
    """Factors (U, eigenvalues, per-node variances) in effect at slot t >= 1.

    Slots in the same phase share the exact same factor objects, so
    periodicity holds identically rather than to rounding.
    """
    if t < 1:
        raise ValueError(f"slot index must be >= 1, got {t}")
    phase = stats.phase_of(t)
    u = stats.bases[phase]
    lam = stats.eigenvalues[phase]
    sigma2 = (np.abs(u) ** 2) @ lam
    return u, lam, sigma2
