"""Numeric defaults and state-cap resolution.

All defaults live in ``defaults.json`` next to this module, not hardcoded
in the numerical modules, so tolerance adjustments require no code changes.
The file is read lazily, so swapping it (or passing ``path=``) before a call
takes effect immediately.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from .errors import SpaceValidationError

_DEFAULTS_PATH = Path(__file__).parent / "defaults.json"

MAX_STATES_ENV = "NOISE_LAB_MAX_STATES"


def load_defaults(path: Path | None = None) -> dict[str, Any]:
    """Load the numeric defaults.

    Parameters
    ----------
    path : Path, optional
        Override the packaged ``defaults.json``. Useful for tests that need
        an isolated configuration.

    Returns
    -------
    dict
        Parsed JSON (``_doc`` fields included; callers ignore them).
    """
    with open(path or _DEFAULTS_PATH, encoding="utf-8") as f:
        return json.load(f)


def default(key: str) -> Any:
    """Single default value by key."""
    return load_defaults()[key]


def resolve_max_states(max_states: int | None = None) -> int:
    """Resolve the state cap from argument, env var, or the defaults file."""
    if max_states is not None:
        cap = int(max_states)
    else:
        env_value = os.environ.get(MAX_STATES_ENV)
        if env_value:
            try:
                cap = int(env_value)
            except ValueError:
                raise SpaceValidationError(
                    f"{MAX_STATES_ENV}={env_value!r} is not an integer"
                ) from None
        else:
            cap = int(default("max_states"))
    if cap < 1:
        raise SpaceValidationError(f"state cap must be positive, got {cap}")
    return cap
