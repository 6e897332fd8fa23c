"""
Helper utilities for the sparse support detection toolkit
"""

import logging
import math
from typing import Any, Dict, List, Sequence

import numpy as np

from utils.errors import ConfigError

logger = logging.getLogger(__name__)


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Random stream for (seed, keys); independent of evaluation order"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(sequence)


def seed_label(seed: int, *keys: int) -> str:
    """Printable name of the substream returned by derive_rng"""
    return ":".join(str(int(k)) for k in (seed, *keys))


def parse_float_list(text: str) -> List[float]:
    """Parse '0.5,1,2' or 'linspace:start:stop:count' into a list of floats"""
    text = str(text).strip()
    if not text:
        raise ConfigError("Empty value list")

    if text.startswith("linspace:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"Expected linspace:start:stop:count, got {text!r}")
        try:
            start, stop, count = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as e:
            raise ConfigError(f"Invalid linspace spec {text!r}: {e}") from e
        if count < 1:
            raise ConfigError(f"linspace count must be positive: {text!r}")
        return [float(v) for v in np.linspace(start, stop, count)]

    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(f"Invalid number list {text!r}: {e}") from e


def as_float_list(value: Any) -> List[float]:
    """Accept a list from a JSON file or a string from the command line"""
    if isinstance(value, str):
        return parse_float_list(value)
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(v) for v in value]


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def is_increasing(values: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


def format_number(value: float) -> str:
    """Shortest round-trip text for a float; used for all CSV output"""
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return repr(value)


def format_tag(value: float) -> str:
    """Compact number for file names (0.05 -> 0.05, 5.0 -> 5)"""
    return f"{float(value):g}"


def artifact_stem(kind: str, q: float, sigma_x: float, l: int, mode: str = "") -> str:
    """File stem embedding the parameter set, e.g. heatmap_q0.02_sx10_L4_full"""
    stem = f"{kind}_q{format_tag(q)}_sx{format_tag(sigma_x)}_L{int(l)}"
    if mode:
        stem = f"{stem}_{mode}"
    return stem


def validation_result(errors: List[str], warnings: List[str]) -> Dict[str, Any]:
    """Common shape of every validate() result"""
    return {
        "valid": len(errors) == 0,
        "errors": errors,
        "warnings": warnings
    }


def raise_if_invalid(result: Dict[str, Any], what: str) -> None:
    """Log warnings and raise ConfigError on errors of a validate() result"""
    for warning in result["warnings"]:
        logger.warning(f"{what}: {warning}")
    if not result["valid"]:
        raise ConfigError(f"Invalid {what}: " + "; ".join(result["errors"]))


def single_value(values: Any, name: str) -> float:
    """The one value of a setting that also accepts lists (q, sigma_x)"""
    values = as_float_list(values)
    if len(values) != 1:
        raise ConfigError(f"{name} takes exactly one value here, got {values}")
    return values[0]
