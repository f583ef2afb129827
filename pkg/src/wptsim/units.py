"""Power-unit handling: Watts internally, suffixed strings at the boundary."""

from __future__ import annotations

from .errors import ScenarioError

_SUFFIXES = {
    "w": 1.0,
    "mw": 1e-3,
    "uw": 1e-6,
    "µw": 1e-6,  # µW
    "nw": 1e-9,
    "kw": 1e3,
}


def parse_power(value) -> float:
    """Parse a power value into Watts.

    Bare numbers are taken as Watts; strings carry an explicit suffix,
    e.g. "3 mW", "0.1uW", "2.5 W".
    """
    if isinstance(value, bool):
        raise ScenarioError(f"expected a power value, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ScenarioError(f"expected a power value, got {value!r}")
    text = value.strip().lower().replace(" ", "")
    for suffix in sorted(_SUFFIXES, key=len, reverse=True):
        if text.endswith(suffix):
            number = text[: -len(suffix)]
            try:
                return float(number) * _SUFFIXES[suffix]
            except ValueError:
                raise ScenarioError(f"malformed power value {value!r}") from None
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(
            f"malformed power value {value!r}; use a number (Watts) or a unit suffix (W, mW, uW, nW)"
        ) from None


def format_power(watts: float) -> str:
    """Render Watts with the most readable suffix."""
    mag = abs(watts)
    if mag == 0.0:
        return "0 W"
    if mag >= 1.0:
        return f"{watts:.6g} W"
    if mag >= 1e-3:
        return f"{watts * 1e3:.6g} mW"
    if mag >= 1e-6:
        return f"{watts * 1e6:.6g} uW"
    return f"{watts * 1e9:.6g} nW"
