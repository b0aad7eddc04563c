"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class NoiseLabError(Exception):
    """Base class for all noise-lab failures."""

    exit_code: int = 1


class InputParseError(NoiseLabError):
    """Unreadable file, malformed JSON, or a schema violation."""

    exit_code = 1


class SpaceValidationError(NoiseLabError, ValueError):
    """An argument violates a documented invariant (probabilities, indices, grids, partitions)."""

    exit_code = 2


class ToleranceError(NoiseLabError):
    """A numerical identity failed beyond its tolerance."""

    exit_code = 3


class StateCapError(NoiseLabError, ValueError):
    """The state space is larger than the configured cap."""

    exit_code = 4
