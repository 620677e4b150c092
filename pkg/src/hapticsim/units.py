"""Quantity strings such as ``"300 g"`` or ``"5 cm"`` converted to SI floats."""

from __future__ import annotations

import math
import re

# dimension -> unit symbol -> factor to SI
UNITS: dict[str, dict[str, float]] = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3},
    "mass": {"kg": 1.0, "g": 1e-3},
    "time": {"s": 1.0, "ms": 1e-3},
    "force": {"N": 1.0, "mN": 1e-3},
    "stiffness": {"N/m": 1.0},
    "damping": {"N*s/m": 1.0, "N s/m": 1.0},
    "angular_stiffness": {"N*m/rad": 1.0, "N m/rad": 1.0},
    "angular_damping": {"N*m*s/rad": 1.0, "N m s/rad": 1.0},
    "frequency": {"Hz": 1.0},
    "current": {"A": 1.0, "mA": 1e-3},
    "speed": {"m/s": 1.0, "cm/s": 1e-2, "mm/s": 1e-3},
    "acceleration": {"m/s^2": 1.0, "m/s2": 1.0},
    "decay": {"1/s": 1.0},
    "amplitude_gain": {"N*s/m": 1.0},
    "dimensionless": {},
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


class UnitError(ValueError):
    pass


def parse_quantity(value, dimension: str) -> float:
    """SI value of ``value``: a bare number (already SI) or ``"<number> <unit>"``."""
    if isinstance(value, bool):
        raise UnitError(f"expected a {dimension} quantity, got a boolean")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _QUANTITY.match(value)
        if not m:
            raise UnitError(f"cannot read {value!r} as a {dimension} quantity")
        number, unit = float(m.group(1)), m.group(2)
        if not unit:
            out = number
        else:
            table = UNITS[dimension]
            if unit not in table:
                for dim, other in UNITS.items():
                    if unit in other:
                        raise UnitError(f"unit mismatch: {value!r} is a {dim}, expected a {dimension}")
                raise UnitError(f"unknown unit {unit!r} in {value!r}")
            out = number * table[unit]
    else:
        raise UnitError(f"expected a {dimension} quantity, got {type(value).__name__}")
    if not math.isfinite(out):
        raise UnitError(f"non-finite {dimension} {value!r}")
    return out


def parse_vector(value, dimension: str, size: int = 3) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or len(value) != size:
        raise UnitError(f"expected a list of {size} {dimension} values")
    return tuple(parse_quantity(v, dimension) for v in value)
