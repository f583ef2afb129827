"""Energy-harvesting transfer functions and their calibration.

Three rectifier models map RF input power (Watts) to harvested power
(Watts): an ideal linear model, a concave quadratic model, and a
logistic (sigmoidal) model. All shipped default parameters are fitted
to a synthetic calibration dataset (monotone rise, saturation at 2.8 mW
input); they are placeholders for real measurement data, which users can
supply through ``fit_model`` / ``wpt fit-eh``.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import NumericalError, ScenarioError

LINEAR = "linear"
QUADRATIC = "quadratic"
LOGISTIC = "logistic"
VARIANTS = (LINEAR, QUADRATIC, LOGISTIC)

#: Input power beyond which quadratic hardware saturates (Watts).
DEFAULT_QUADRATIC_SATURATION = 2.8e-3

#: Single-letter scenario-label codes for each variant.
VARIANT_CODES = {"L": LINEAR, "Q": QUADRATIC, "S": LOGISTIC}


@dataclass(frozen=True)
class EhModel:
    """One harvest transfer function with its parameters.

    ``saturation_input`` clamps the output flat (at the value attained
    there) for inputs beyond it; ``None`` disables the clamp. Quadratic
    models default to the 2.8 mW hardware saturation point.
    """

    variant: str
    zeta: float | None = None
    alpha: tuple[float, float, float] | None = None
    beta: tuple[float, float, float] | None = None
    saturation_input: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ScenarioError(f"eh_model.variant: unknown variant {self.variant!r}")
        if self.variant == LINEAR:
            if self.zeta is None or not 0.0 < self.zeta <= 1.0:
                raise ScenarioError(
                    f"eh_model.zeta: conversion efficiency must be in (0, 1], got {self.zeta}"
                )
        elif self.variant == QUADRATIC:
            if self.alpha is None or len(self.alpha) != 3:
                raise ScenarioError("eh_model.alpha: quadratic model needs three coefficients")
            if not self.alpha[0] < 0.0:
                raise ScenarioError(
                    f"eh_model.alpha: leading coefficient must be negative, got {self.alpha[0]}"
                )
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
            if self.saturation_input is None:
                object.__setattr__(self, "saturation_input", DEFAULT_QUADRATIC_SATURATION)
        else:
            if self.beta is None or len(self.beta) != 3:
                raise ScenarioError("eh_model.beta: logistic model needs three parameters")
            if not all(b > 0.0 for b in self.beta):
                raise ScenarioError(f"eh_model.beta: all parameters must be positive, got {self.beta}")
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.saturation_input is not None and self.saturation_input <= 0.0:
            raise ScenarioError(
                f"eh_model.saturation_input: must be positive Watts, got {self.saturation_input}"
            )

    @classmethod
    def linear(cls, zeta: float, saturation_input: float | None = None) -> "EhModel":
        return cls(LINEAR, zeta=float(zeta), saturation_input=saturation_input)

    @classmethod
    def quadratic(cls, alpha, saturation_input: float | None = None) -> "EhModel":
        return cls(QUADRATIC, alpha=tuple(alpha), saturation_input=saturation_input)

    @classmethod
    def logistic(cls, beta, saturation_input: float | None = None) -> "EhModel":
        return cls(LOGISTIC, beta=tuple(beta), saturation_input=saturation_input)

    @property
    def code(self) -> str:
        """Single-letter label code (L/Q/S)."""
        return {LINEAR: "L", QUADRATIC: "Q", LOGISTIC: "S"}[self.variant]


def _raw_phi(model: EhModel, x: np.ndarray) -> np.ndarray:
    if model.variant == LINEAR:
        return model.zeta * x
    if model.variant == QUADRATIC:
        a1, a2, a3 = model.alpha
        return a1 * x * x + a2 * x + a3
    b1, b2, b3 = model.beta
    s = 1.0 / (1.0 + np.exp(b1 * b2))
    # exp argument is clipped so extreme inputs saturate instead of overflowing
    pbar = b3 / (1.0 + np.exp(np.clip(-b1 * (x - b2), -700.0, 700.0)))
    return (pbar - b3 * s) / (1.0 - s)


def phi(model: EhModel, input_power) -> float | np.ndarray:
    """Harvested power (Watts) for the given RF input power (Watts).

    Output is clamped flat beyond ``saturation_input`` and floored at zero.
    Raises on negative input.
    """
    x = np.asarray(input_power, dtype=float)
    if np.any(x < 0.0):
        raise ScenarioError("phi: input power must be nonnegative")
    if model.saturation_input is not None:
        x = np.minimum(x, model.saturation_input)
    out = np.maximum(_raw_phi(model, x), 0.0)
    return float(out) if np.isscalar(input_power) or out.ndim == 0 else out


def phi_derivative(model: EhModel, input_power) -> float | np.ndarray:
    """First derivative of ``phi``; zero on the saturated/floored regions."""
    x = np.asarray(input_power, dtype=float)
    if model.variant == LINEAR:
        d = np.full_like(x, model.zeta)
    elif model.variant == QUADRATIC:
        a1, a2, _ = model.alpha
        d = 2.0 * a1 * x + a2
    else:
        b1, b2, b3 = model.beta
        s = 1.0 / (1.0 + np.exp(b1 * b2))
        sig = 1.0 / (1.0 + np.exp(np.clip(-b1 * (x - b2), -700.0, 700.0)))
        d = b3 * b1 * sig * (1.0 - sig) / (1.0 - s)
    if model.saturation_input is not None:
        d = np.where(x >= model.saturation_input, 0.0, d)
    d = np.where(_raw_phi(model, np.minimum(x, model.saturation_input)
                          if model.saturation_input is not None else x) < 0.0, 0.0, d)
    return float(d) if np.isscalar(input_power) or d.ndim == 0 else d


def phi_second_derivative(model: EhModel, input_power) -> float | np.ndarray:
    """Second derivative of ``phi``; zero on the saturated/floored regions."""
    x = np.asarray(input_power, dtype=float)
    if model.variant == LINEAR:
        d2 = np.zeros_like(x)
    elif model.variant == QUADRATIC:
        d2 = np.full_like(x, 2.0 * model.alpha[0])
    else:
        b1, b2, b3 = model.beta
        s = 1.0 / (1.0 + np.exp(b1 * b2))
        sig = 1.0 / (1.0 + np.exp(np.clip(-b1 * (x - b2), -700.0, 700.0)))
        d2 = b3 * b1 * b1 * sig * (1.0 - sig) * (1.0 - 2.0 * sig) / (1.0 - s)
    if model.saturation_input is not None:
        d2 = np.where(x >= model.saturation_input, 0.0, d2)
    d2 = np.where(_raw_phi(model, np.minimum(x, model.saturation_input)
                           if model.saturation_input is not None else x) < 0.0, 0.0, d2)
    return float(d2) if np.isscalar(input_power) or d2.ndim == 0 else d2


def harvested_energy(model: EhModel, beacon_power, gain, tau_energy: float = 1.0):
    """Energy harvested in one slot: tau_E * phi(q * h)."""
    q = np.asarray(beacon_power, dtype=float)
    if np.any(q < 0.0):
        raise ScenarioError("harvested_energy: beacon power must be nonnegative")
    if np.any(np.asarray(gain) <= 0.0):
        raise ScenarioError("harvested_energy: channel gain must be positive")
    return tau_energy * phi(model, q * np.asarray(gain, dtype=float))


# --- calibration -----------------------------------------------------------


def fit_model(variant: str, samples) -> EhModel:
    """Least-squares fit of one model variant to (input W, output W) samples.

    Linear and quadratic fits use normal equations; the logistic fit uses a
    damped Gauss-Newton iteration started from slope/half-max heuristics.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ScenarioError("fit_model: samples must be pairs of (input, output)")
    x, y = data[:, 0], data[:, 1]
    if np.any(x < 0.0):
        raise ScenarioError("fit_model: input powers must be nonnegative")
    n_params = 1 if variant == LINEAR else 3
    if len(x) < n_params:
        raise ScenarioError(
            f"fit_model: need at least {n_params} samples for {variant}, got {len(x)}"
        )

    if variant == LINEAR:
        zeta = float(np.dot(x, y) / np.dot(x, x))
        return EhModel.linear(zeta)

    if variant == QUADRATIC:
        design = np.column_stack([x * x, x, np.ones_like(x)])
        coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
        if coeffs[0] >= 0.0:
            # concavity is required downstream; pin the curvature just below zero
            eps = 1e-12
            sub = np.column_stack([x, np.ones_like(x)])
            tail, *_ = np.linalg.lstsq(sub, y + eps * x * x, rcond=None)
            coeffs = np.array([-eps, tail[0], tail[1]])
            warnings.warn("quadratic fit was convex; refitted with curvature pinned to -1e-12")
        a1, a2, a3 = (float(c) for c in coeffs)
        vertex = -a2 / (2.0 * a1)
        sat = vertex if vertex > 0.0 else None
        return EhModel.quadratic((a1, a2, a3), saturation_input=sat)

    if variant != LOGISTIC:
        raise ScenarioError(f"fit_model: unknown variant {variant!r}")
    return _fit_logistic(x, y)


def _logistic_residual(theta: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Residuals and analytic Jacobian in log-parameter space."""
    b1, b2, b3 = np.exp(theta)
    s = 1.0 / (1.0 + np.exp(b1 * b2))
    u = np.clip(b1 * (x - b2), -700.0, 700.0)
    sig = 1.0 / (1.0 + np.exp(-u))
    denom = 1.0 - s
    r = (b3 * sig - b3 * s) / denom - y

    dsig_db1 = sig * (1.0 - sig) * (x - b2)
    dsig_db2 = sig * (1.0 - sig) * (-b1)
    ds_db1 = -s * (1.0 - s) * b2
    ds_db2 = -s * (1.0 - s) * b1
    # d/db of [b3*(sig - s)/(1 - s)] via quotient rule in s
    common = b3 * ((dsig_db1 - ds_db1) * denom + (sig - s) * ds_db1) / denom**2
    d_db1 = common
    common = b3 * ((dsig_db2 - ds_db2) * denom + (sig - s) * ds_db2) / denom**2
    d_db2 = common
    d_db3 = (sig - s) / denom
    jac = np.column_stack([d_db1 * b1, d_db2 * b2, d_db3 * b3])  # chain rule for log-params
    return r, jac


def _fit_logistic(x: np.ndarray, y: np.ndarray, max_iter: int = 500,
                  step_tol: float = 1e-10) -> EhModel:
    if np.all(y <= 0.0):
        raise ScenarioError("fit_model: logistic fit needs positive outputs")
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    b3 = float(ys.max())
    half = 0.5 * b3
    above = np.flatnonzero(ys >= half)
    k = int(above[0]) if len(above) else len(ys) - 1
    if k == 0:
        b2 = max(float(xs[0]), 1e-6)
    else:
        frac = (half - ys[k - 1]) / max(ys[k] - ys[k - 1], 1e-300)
        b2 = float(xs[k - 1] + frac * (xs[k] - xs[k - 1]))
        b2 = max(b2, 1e-12)
    dx = np.diff(xs)
    slopes = np.diff(ys)[dx > 0] / dx[dx > 0]
    b1 = max(4.0 * float(slopes.max()) / b3, 1e-9) if len(slopes) else 1.0

    theta = np.log(np.array([b1, b2, b3]))
    for iteration in range(max_iter):
        r, jac = _logistic_residual(theta, x, y)
        sse = float(r @ r)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        scale = 1.0
        for _ in range(40):
            r_new, _ = _logistic_residual(theta + scale * step, x, y)
            if float(r_new @ r_new) < sse:
                break
            scale *= 0.5
        else:
            scale = 0.0
        if scale == 0.0:
            break
        theta = theta + scale * step
        if np.linalg.norm(scale * step) <= step_tol * (1.0 + np.linalg.norm(theta)):
            b1, b2, b3 = np.exp(theta)
            return EhModel.logistic((b1, b2, b3))
    r, _ = _logistic_residual(theta, x, y)
    raise NumericalError(
        f"fit_model: logistic Gauss-Newton did not converge after {max_iter} iterations "
        f"(residual {float(np.sqrt(np.mean(r * r))):.3e})"
    )


# --- shipped synthetic calibration ------------------------------------------

#: Quadratic ground truth behind the synthetic dataset: vertex at exactly
#: 2.8 mW input, peak output 1.12 mW (40% conversion at the peak).
SYNTHETIC_QUADRATIC = EhModel.quadratic(
    (-142.85714285714286, 0.8, 0.0), saturation_input=DEFAULT_QUADRATIC_SATURATION
)

_DATA_PACKAGE = "wptsim.data"
_DATA_FILE = "eh_calibration_synthetic.csv"


def synthetic_calibration() -> np.ndarray:
    """The shipped synthetic dataset as an (n, 2) array in Watts."""
    text = resources.files(_DATA_PACKAGE).joinpath(_DATA_FILE).read_text(encoding="utf-8")
    return load_calibration_csv(io.StringIO(text))


def load_calibration_csv(file_or_path) -> np.ndarray:
    """Read a two-column `input_mw,output_mw` CSV into Watts pairs."""
    if hasattr(file_or_path, "read"):
        rows = list(csv.reader(file_or_path))
    else:
        with open(file_or_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["input_mw", "output_mw"]:
        raise ScenarioError("calibration CSV must start with header 'input_mw,output_mw'")
    try:
        pairs = [(float(a) * 1e-3, float(b) * 1e-3) for a, b in rows[1:]]
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"calibration CSV has a malformed row: {exc}") from exc
    if not pairs:
        raise ScenarioError("calibration CSV contains no samples")
    return np.asarray(pairs)


_DEFAULTS_CACHE: dict[str, EhModel] = {}


def default_models() -> dict[str, EhModel]:
    """All three variants calibrated against the synthetic dataset.

    The quadratic entry is the exact ground truth of the dataset; the
    linear and logistic entries are least-squares fits to it.
    """
    if not _DEFAULTS_CACHE:
        data = synthetic_calibration()
        _DEFAULTS_CACHE[QUADRATIC] = SYNTHETIC_QUADRATIC
        _DEFAULTS_CACHE[LINEAR] = fit_model(LINEAR, data)
        _DEFAULTS_CACHE[LOGISTIC] = fit_model(LOGISTIC, data)
    return dict(_DEFAULTS_CACHE)


def model_from_code(code: str, models: dict[str, EhModel] | None = None) -> EhModel:
    """Resolve a scenario-label letter (L/Q/S) to a model instance."""
    variant = VARIANT_CODES.get(code.upper())
    if variant is None:
        raise ScenarioError(f"unknown EH model code {code!r}; expected L, Q, or S")
    table = models if models is not None else default_models()
    return table[variant]
