"""Unit-suffix parsing shared by the scenario loader and the CLI.

Everything inside the model is plain SI floats (bit/s, W, J/bit, J, s, m,
Hz). Suffixes are only understood here, at the config boundary.
"""

from __future__ import annotations

import math
import re

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY_RE = re.compile(rf"^\s*({_NUMBER})\s*([^\s\d].*?)?\s*$")

# kind -> {suffix: multiplier to SI}; the first entry is the canonical SI suffix
SUFFIXES: dict[str, dict[str, float]] = {
    "rate": {"bps": 1.0, "kbps": 1e3, "Mbps": 1e6},
    "power": {"W": 1.0, "nW": 1e-9, "uW": 1e-6, "µW": 1e-6, "mW": 1e-3},
    "energy_per_bit": {
        "J/bit": 1.0,
        "J": 1.0,
        "pJ/bit": 1e-12,
        "pJ": 1e-12,
        "nJ/bit": 1e-9,
        "nJ": 1e-9,
    },
    "charge": {"mAh": 1.0},
    "voltage": {"V": 1.0},
    "time": {"s": 1.0, "h": 3600.0, "d": 86400.0},
    "distance": {"m": 1.0, "cm": 1e-2},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6},
    "fraction": {},
}


class UnitError(ValueError):
    """A quantity string could not be parsed for the requested kind."""


def parse_quantity(value: str | float | int, kind: str) -> float:
    """Convert ``value`` to the SI unit of ``kind``.

    Bare numbers are taken to already be in SI units. Strings may carry a
    suffix from :data:`SUFFIXES`, e.g. ``"100 pJ/bit"`` or ``"4Mbps"``.
    """
    table = SUFFIXES[kind]
    if isinstance(value, bool):
        raise UnitError(f"expected a {kind} quantity, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    else:
        m = _QUANTITY_RE.match(str(value))
        if m is None:
            raise UnitError(f"malformed {kind} quantity {value!r}")
        number, suffix = m.group(1), m.group(2)
        if suffix is None:
            out = float(number)
        elif suffix in table:
            out = float(number) * table[suffix]
        else:
            allowed = ", ".join(k for k in table if k != "µW") or "none"
            raise UnitError(
                f"unknown {kind} unit suffix {suffix!r} in {value!r} (accepted: {allowed})"
            )
    if not math.isfinite(out):
        raise UnitError(f"{kind} quantity {value!r} is not finite")
    return out


def format_quantity(value: float, kind: str) -> str:
    """Lossless text form of an SI value (``repr`` keeps every bit)."""
    table = SUFFIXES[kind]
    if not table:
        return repr(float(value))
    return f"{float(value)!r} {next(iter(table))}"


def parse_rate_range(text: str) -> tuple[float, float, str, int]:
    """Parse a sweep range ``min:max:spacing:points`` such as ``1kbps:10Mbps:log:50``."""
    parts = text.split(":")
    if len(parts) != 4:
        raise UnitError(f"sweep must look like MIN:MAX:log|linear:POINTS, got {text!r}")
    lo = parse_quantity(parts[0], "rate")
    hi = parse_quantity(parts[1], "rate")
    spacing = parts[2].strip().lower()
    if spacing not in ("log", "linear"):
        raise UnitError(f"sweep spacing must be 'log' or 'linear', got {parts[2]!r}")
    try:
        points = int(parts[3])
    except ValueError:
        raise UnitError(f"sweep point count must be an integer, got {parts[3]!r}") from None
    return lo, hi, spacing, points
