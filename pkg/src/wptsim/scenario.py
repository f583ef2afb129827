"""Experiment configuration: schema parsing, validation, deterministic RNG.

A scenario file is a single JSON document with top-level sections
``network``, ``channel``, ``field``, ``harvest``, ``solver``, ``rl`` and
``seed``. Unknown keys anywhere are an error (fail-closed); missing keys
take the documented defaults. All powers are stored in Watts internally;
the file format accepts either bare numbers (Watts) or suffixed strings
("3 mW"). See docs/scenario-schema.md.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .harvest import (
    LINEAR,
    LOGISTIC,
    QUADRATIC,
    VARIANTS,
    EhModel,
    default_models,
)
from .units import parse_power

SPEED_OF_LIGHT = 3e8


@dataclass(frozen=True)
class SolverSettings:
    """Interior-point knobs; defaults match the documented method contract."""

    barrier_initial: float = 1.0
    barrier_final: float = 1e-9
    barrier_decay: float = 10.0
    gradient_tolerance: float = 1e-8
    max_newton_iterations: int = 200
    clamp_in_solver: bool = True


@dataclass(frozen=True)
class RlSettings:
    """Agent hyperparameters; paper-scale network sizes behind a flag."""

    policy_hidden: tuple[int, ...] = (32, 32, 32)
    value_hidden: tuple[int, ...] = (32, 32, 32)
    batch_episodes: int = 20
    discount: float = 0.995
    gae_lambda: float = 0.98
    kl_radius: float = 0.01
    cg_iterations: int = 10
    cg_damping: float = 0.1
    value_learning_rate: float = 1e-3
    value_passes: int = 10
    log_std_init: float = -0.5
    obs_include_phase: bool = False

    def at_paper_scale(self) -> "RlSettings":
        return dataclasses.replace(
            self, policy_hidden=(90, 127, 180), value_hidden=(90, 21, 5)
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one experiment; immutable after load."""

    power_budget: float
    n_sensors: int = 8
    horizon: int = 20
    noise_variance: float = 0.1e-6
    slot_durations: tuple[float, float] = (1.0, 1.0)
    beacon_position: tuple[float, float] = (-1.0, 0.0)
    sink_position: tuple[float, float] = (4.0, 0.0)
    node_positions: tuple[tuple[float, float], ...] | None = None
    aperture_energy: float = 0.2
    aperture_info: float = 0.2
    aperture_node: float = 0.005
    carrier_frequency: float = 2.45e9
    wave_speed: float = SPEED_OF_LIGHT
    path_exponent_energy: float = 2.0
    path_exponent_info: float = 3.0
    fading_mean: float = 1.0
    fading_variance: float = 0.2
    deterministic_fading: bool = False
    covariance_period: int = 4
    eigenvalue_base: float = 0.2
    diagonal_covariance: bool = False
    eh_models: dict[str, EhModel] = field(default_factory=default_models)
    active_model: str = QUADRATIC
    solver: SolverSettings = field(default_factory=SolverSettings)
    rl: RlSettings = field(default_factory=RlSettings)
    seed: int = 0

    def __post_init__(self):
        if self.node_positions is None:
            object.__setattr__(
                self,
                "node_positions",
                tuple((0.0, float(j - 4)) for j in range(1, self.n_sensors + 1)),
            )
        else:
            object.__setattr__(
                self,
                "node_positions",
                tuple((float(x), float(y)) for x, y in self.node_positions),
            )
        validate_config(self)

    # -- derived quantities (pure functions of the config) --

    @property
    def eh_model(self) -> EhModel:
        return self.eh_models[self.active_model]

    @property
    def tau_info(self) -> float:
        return self.slot_durations[0]

    @property
    def tau_energy(self) -> float:
        return self.slot_durations[1]

    @property
    def wavelength(self) -> float:
        return self.wave_speed / self.carrier_frequency

    def distances_to_beacon(self) -> np.ndarray:
        return _distances(self.node_positions, self.beacon_position)

    def distances_to_sink(self) -> np.ndarray:
        return _distances(self.node_positions, self.sink_position)


def _distances(points, origin) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return np.hypot(pts[:, 0] - origin[0], pts[:, 1] - origin[1])


def validate_config(config: ScenarioConfig) -> None:
    def require(cond: bool, name: str, message: str):
        if not cond:
            raise ScenarioError(f"{name}: {message}")

    require(config.n_sensors >= 1, "n_sensors", f"must be >= 1, got {config.n_sensors}")
    require(config.horizon >= 1, "horizon", f"must be >= 1, got {config.horizon}")
    require(config.power_budget > 0, "power_budget", f"must be > 0 W, got {config.power_budget}")
    require(
        config.noise_variance > 0, "noise_variance", f"must be > 0 W, got {config.noise_variance}"
    )
    require(
        len(config.node_positions) == config.n_sensors,
        "geometry",
        f"expected {config.n_sensors} node positions, got {len(config.node_positions)}",
    )
    require(
        all(d > 0 for d in config.slot_durations) and len(config.slot_durations) == 2,
        "slot_durations",
        f"must be two positive durations, got {config.slot_durations}",
    )
    require(config.covariance_period >= 1, "covariance_period",
            f"must be >= 1, got {config.covariance_period}")
    require(
        0.0 < config.eigenvalue_base <= 1.0,
        "eigenvalue_base",
        f"must be in (0, 1], got {config.eigenvalue_base}",
    )
    for name, value in [
        ("aperture_energy", config.aperture_energy),
        ("aperture_info", config.aperture_info),
        ("aperture_node", config.aperture_node),
        ("carrier_frequency", config.carrier_frequency),
        ("wave_speed", config.wave_speed),
    ]:
        require(value > 0, name, f"must be > 0, got {value}")
    require(config.fading_variance >= 0, "fading_variance",
            f"must be >= 0, got {config.fading_variance}")
    if np.any(config.distances_to_beacon() <= 0):
        raise ScenarioError("geometry: a node coincides with the energy beacon")
    if np.any(config.distances_to_sink() <= 0):
        raise ScenarioError("geometry: a node coincides with the sink")
    require(config.active_model in config.eh_models, "harvest.active",
            f"model {config.active_model!r} is not configured")


# --- deterministic RNG streams ----------------------------------------------


def rng_stream(config: ScenarioConfig, label: str, index: int = 0) -> np.random.Generator:
    """Independent, reproducible random stream keyed by (seed, label, index).

    Counter-based derivation: the same key always yields the same stream and
    distinct keys share no state, so parallel rollouts and Monte-Carlo
    averages reproduce regardless of execution order.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    label_key = int.from_bytes(digest[:8], "little")
    seq = np.random.SeedSequence([int(config.seed), label_key, int(index)])
    return np.random.default_rng(seq)


# --- schema parsing ----------------------------------------------------------

_TOP_KEYS = {"network", "channel", "field", "harvest", "solver", "rl", "seed"}


def _check_keys(mapping: dict, allowed: set[str], where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)} (schema is fail-closed)")


def _pair(value, name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{name}: expected a pair, got {value!r}")
    return (float(value[0]), float(value[1]))


def _parse_harvest(section: dict) -> tuple[dict[str, EhModel], str]:
    _check_keys(section, {"active", LINEAR, QUADRATIC, LOGISTIC}, "harvest")
    models = default_models()
    for variant in VARIANTS:
        spec = section.get(variant)
        if spec is None:
            continue
        _check_keys(spec, {"zeta", "alpha", "beta", "saturation_input"}, f"harvest.{variant}")
        sat = spec.get("saturation_input")
        sat_w = parse_power(sat) if sat is not None else None
        if variant == LINEAR:
            if "zeta" not in spec:
                raise ScenarioError("harvest.linear: missing 'zeta'")
            models[variant] = EhModel.linear(float(spec["zeta"]), saturation_input=sat_w)
        elif variant == QUADRATIC:
            if "alpha" not in spec:
                raise ScenarioError("harvest.quadratic: missing 'alpha'")
            models[variant] = EhModel.quadratic(spec["alpha"], saturation_input=sat_w)
        else:
            if "beta" not in spec:
                raise ScenarioError("harvest.logistic: missing 'beta'")
            models[variant] = EhModel.logistic(spec["beta"], saturation_input=sat_w)
    active = section.get("active", QUADRATIC)
    if active not in VARIANTS:
        raise ScenarioError(f"harvest.active: unknown variant {active!r}")
    return models, active


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "scenario")
    kwargs: dict = {}

    network = doc.get("network", {})
    _check_keys(
        network,
        {"n_sensors", "horizon", "power_budget", "slot_durations", "geometry"},
        "network",
    )
    if "power_budget" not in network:
        raise ScenarioError("network.power_budget: required (no default)")
    kwargs["power_budget"] = parse_power(network["power_budget"])
    if "n_sensors" in network:
        kwargs["n_sensors"] = int(network["n_sensors"])
    if "horizon" in network:
        kwargs["horizon"] = int(network["horizon"])
    if "slot_durations" in network:
        kwargs["slot_durations"] = _pair(network["slot_durations"], "network.slot_durations")
    geometry = network.get("geometry", {})
    _check_keys(geometry, {"beacon", "sink", "nodes"}, "network.geometry")
    if "beacon" in geometry:
        kwargs["beacon_position"] = _pair(geometry["beacon"], "geometry.beacon")
    if "sink" in geometry:
        kwargs["sink_position"] = _pair(geometry["sink"], "geometry.sink")
    if "nodes" in geometry:
        kwargs["node_positions"] = tuple(
            _pair(p, "geometry.nodes[]") for p in geometry["nodes"]
        )

    channel = doc.get("channel", {})
    _check_keys(
        channel,
        {"apertures", "carrier_frequency", "wave_speed", "path_exponents", "fading",
         "noise_variance"},
        "channel",
    )
    apertures = channel.get("apertures", {})
    _check_keys(apertures, {"energy", "info", "node"}, "channel.apertures")
    if "energy" in apertures:
        kwargs["aperture_energy"] = float(apertures["energy"])
    if "info" in apertures:
        kwargs["aperture_info"] = float(apertures["info"])
    if "node" in apertures:
        kwargs["aperture_node"] = float(apertures["node"])
    if "carrier_frequency" in channel:
        kwargs["carrier_frequency"] = float(channel["carrier_frequency"])
    if "wave_speed" in channel:
        kwargs["wave_speed"] = float(channel["wave_speed"])
    exponents = channel.get("path_exponents", {})
    _check_keys(exponents, {"energy", "info"}, "channel.path_exponents")
    if "energy" in exponents:
        kwargs["path_exponent_energy"] = float(exponents["energy"])
    if "info" in exponents:
        kwargs["path_exponent_info"] = float(exponents["info"])
    fading = channel.get("fading", {})
    _check_keys(fading, {"mean", "variance", "deterministic"}, "channel.fading")
    if "mean" in fading:
        kwargs["fading_mean"] = float(fading["mean"])
    if "variance" in fading:
        kwargs["fading_variance"] = float(fading["variance"])
    if "deterministic" in fading:
        kwargs["deterministic_fading"] = bool(fading["deterministic"])
    if "noise_variance" in channel:
        kwargs["noise_variance"] = parse_power(channel["noise_variance"])

    field_section = doc.get("field", {})
    _check_keys(field_section, {"period", "eigenvalue_base", "diagonal"}, "field")
    if "period" in field_section:
        kwargs["covariance_period"] = int(field_section["period"])
    if "eigenvalue_base" in field_section:
        kwargs["eigenvalue_base"] = float(field_section["eigenvalue_base"])
    if "diagonal" in field_section:
        kwargs["diagonal_covariance"] = bool(field_section["diagonal"])

    if "harvest" in doc:
        kwargs["eh_models"], kwargs["active_model"] = _parse_harvest(doc["harvest"])

    solver = doc.get("solver", {})
    _check_keys(
        solver,
        {"barrier_initial", "barrier_final", "barrier_decay", "gradient_tolerance",
         "max_newton_iterations", "clamp_in_solver"},
        "solver",
    )
    if solver:
        kwargs["solver"] = SolverSettings(
            **{k: (bool(v) if k == "clamp_in_solver" else type(getattr(SolverSettings(), k))(v))
               for k, v in solver.items()}
        )

    rl = doc.get("rl", {})
    _check_keys(
        rl,
        {"policy_hidden", "value_hidden", "batch_episodes", "discount", "gae_lambda",
         "kl_radius", "cg_iterations", "cg_damping", "value_learning_rate", "value_passes",
         "log_std_init", "obs_include_phase"},
        "rl",
    )
    if rl:
        defaults = RlSettings()
        cast = {}
        for key, value in rl.items():
            current = getattr(defaults, key)
            if isinstance(current, tuple):
                cast[key] = tuple(int(v) for v in value)
            elif isinstance(current, bool):
                cast[key] = bool(value)
            elif isinstance(current, int):
                cast[key] = int(value)
            else:
                cast[key] = float(value)
        kwargs["rl"] = RlSettings(**cast)

    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    return ScenarioConfig(**kwargs)


def load_scenario(path) -> ScenarioConfig:
    """Load and validate a scenario JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(config: ScenarioConfig) -> dict:
    """Explicit JSON form of a config; load(save(x)) == x."""
    harvest: dict = {"active": config.active_model}
    for variant, model in config.eh_models.items():
        entry: dict = {}
        if model.zeta is not None:
            entry["zeta"] = model.zeta
        if model.alpha is not None:
            entry["alpha"] = list(model.alpha)
        if model.beta is not None:
            entry["beta"] = list(model.beta)
        if model.saturation_input is not None:
            entry["saturation_input"] = model.saturation_input
        harvest[variant] = entry
    return {
        "network": {
            "n_sensors": config.n_sensors,
            "horizon": config.horizon,
            "power_budget": config.power_budget,
            "slot_durations": list(config.slot_durations),
            "geometry": {
                "beacon": list(config.beacon_position),
                "sink": list(config.sink_position),
                "nodes": [list(p) for p in config.node_positions],
            },
        },
        "channel": {
            "apertures": {
                "energy": config.aperture_energy,
                "info": config.aperture_info,
                "node": config.aperture_node,
            },
            "carrier_frequency": config.carrier_frequency,
            "wave_speed": config.wave_speed,
            "path_exponents": {
                "energy": config.path_exponent_energy,
                "info": config.path_exponent_info,
            },
            "fading": {
                "mean": config.fading_mean,
                "variance": config.fading_variance,
                "deterministic": config.deterministic_fading,
            },
            "noise_variance": config.noise_variance,
        },
        "field": {
            "period": config.covariance_period,
            "eigenvalue_base": config.eigenvalue_base,
            "diagonal": config.diagonal_covariance,
        },
        "harvest": harvest,
        "solver": dataclasses.asdict(config.solver),
        "rl": {**dataclasses.asdict(config.rl),
               "policy_hidden": list(config.rl.policy_hidden),
               "value_hidden": list(config.rl.value_hidden)},
        "seed": config.seed,
    }


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(config), fh, indent=2)
        fh.write("\n")
