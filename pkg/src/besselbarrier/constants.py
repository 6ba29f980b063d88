"""Calibrated constants for the existence-only bounds.

Values live in data/constants.json together with their provenance; the file
named by the BB_CONSTANTS environment variable overrides it.
"""

from __future__ import annotations

import json
import os
from functools import lru_cache
from importlib import resources
from pathlib import Path

DEFAULTS = {
    "c_env": 1.0,
    "c_nonsharp": 4.0,
    "concave_slack": 1.0,
    "ratio_K": 2.0,
    "r_bound": 2.0,
    "p_abx_limit": 5.0,
}


@lru_cache(maxsize=None)
def load_constants(path: str | None = None) -> dict:
    path = path or os.environ.get("BB_CONSTANTS")
    if path:
        text = Path(path).read_text()
    else:
        text = resources.files("besselbarrier").joinpath("data/constants.json").read_text()
    return json.loads(text)


def get_constant(name: str) -> float:
    try:
        entry = load_constants().get(name)
    except FileNotFoundError:
        entry = None
    if entry is None:
        return DEFAULTS[name]
    return float(entry["value"] if isinstance(entry, dict) else entry)
