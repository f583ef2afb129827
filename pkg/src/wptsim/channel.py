"""Per-slot channel realization: downlink energy gains and uplink info gains.

Gains follow an aperture/path-loss law scaled by independent complex
fading; the deterministic-fading flag forces |Z| = 1 for the line-of-sight
benchmarks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .field import FieldStatistics, covariance_at
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class SlotState:
    """Realized channel and field variances for one slot."""

    t: int
    energy_gain: np.ndarray  # h_i, beacon -> node power gain
    info_gain2: np.ndarray   # |g_i|^2, node -> sink power gain
    sigma2: np.ndarray       # per-node signal variances at this slot
    z_energy: np.ndarray
    z_info: np.ndarray


def fading_draw(config: ScenarioConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    """Proper complex Gaussian CN(mean, variance) draws.

    Properness splits the fluctuation evenly between independent real and
    imaginary parts (variance/2 each), so E|Z|^2 = mean^2 + variance.
    """
    if config.deterministic_fading:
        return np.ones(size, dtype=complex)
    spread = np.sqrt(config.fading_variance / 2.0)
    return (
        config.fading_mean
        + spread * rng.standard_normal(size)
        + 1j * spread * rng.standard_normal(size)
    )


def path_gain(aperture_tx: float, aperture_rx: float, wavelength: float,
              distance, exponent: float) -> np.ndarray:
    return aperture_tx * aperture_rx / (wavelength**2 * np.asarray(distance) ** exponent)


def realize_slot(config: ScenarioConfig, stats: FieldStatistics, t: int,
                 rng: np.random.Generator) -> SlotState:
    """Draw one slot's gains; fading is fresh and independent per (t, node)."""
    if t < 1:
        raise ValueError(f"slot index must be >= 1, got {t}")
    lam = config.wavelength
    z_e = fading_draw(config, rng, config.n_sensors)
    z_i = fading_draw(config, rng, config.n_sensors)
    h = path_gain(config.aperture_energy, config.aperture_node, lam,
                  config.distances_to_beacon(), config.path_exponent_energy) * np.abs(z_e) ** 2
    g2 = path_gain(config.aperture_info, config.aperture_node, lam,
                   config.distances_to_sink(), config.path_exponent_info) * np.abs(z_i) ** 2
    _, _, sigma2 = covariance_at(stats, t)
    for arr in (h, g2, sigma2, z_e, z_i):
        arr.flags.writeable = False
    return SlotState(t=t, energy_gain=h, info_gain2=g2, sigma2=sigma2,
                     z_energy=z_e, z_info=z_i)


def realize_horizon(config: ScenarioConfig, stats: FieldStatistics,
                    rng: np.random.Generator) -> list[SlotState]:
    """Realize slots t = 1..T from a single stream."""
    return [realize_slot(config, stats, t, rng) for t in range(1, config.horizon + 1)]


def dump_channels_csv(slots: list[SlotState], path) -> None:
    """Debug dump of realized gains, one row per (slot, node)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "h", "g2", "sigma2"])
        for slot in slots:
            for i in range(len(slot.energy_gain)):
                writer.writerow([
                    slot.t, i + 1,
                    f"{slot.energy_gain[i]:.12e}",
                    f"{slot.info_gain2[i]:.12e}",
                    f"{slot.sigma2[i]:.12e}",
                ])
