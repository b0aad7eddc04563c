"""JSON ingestion and serialization, content hashing, and result files.

This module is the single entry point for reading space and random-variable
files and for writing every output file. All other code (CLI, scripts,
tests) should import from here rather than parsing JSON directly.

Output files are written atomically (temporary file in the target directory,
then ``os.replace``) and start with metadata: ``# key: value`` lines for
CSV, a ``metadata`` object for JSON. Nothing time-dependent goes into the
metadata, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .config import default
from .errors import InputParseError, SpaceValidationError
from .space import FactorSpace, ProductSpace, RandomVariable, build_space

# jsonschema is a declared dependency, but the structural checks below still
# catch malformed values if it is missing from a stripped-down environment.
try:
    import jsonschema as _jsonschema
except ImportError:  # pragma: no cover
    _jsonschema = None  # type: ignore[assignment]

_SCHEMA_DIR = Path(__file__).parent / "schemas"


# ── Reading ───────────────────────────────────────────────────


def read_json(path: Path | str) -> Any:
    """Parse a JSON file; errors carry the line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputParseError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise InputParseError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line.strip()}"
        ) from exc


def _check_schema(data: Any, name: str) -> None:
    if _jsonschema is None:  # pragma: no cover
        return
    schema = json.loads((_SCHEMA_DIR / f"{name}.json").read_text(encoding="utf-8"))
    try:
        _jsonschema.validate(instance=data, schema=schema)
    except _jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputParseError(f"schema: {where}: {exc.message}") from exc


def space_from_dict(data: dict[str, Any], *, max_states: int | None = None) -> ProductSpace:
    """Build a validated space from ``{"factors": [{"outcomes": [...], "probs": [...]}, ...]}``."""
    _check_schema(data, "space")
    factors = []
    for i, raw in enumerate(data["factors"]):
        try:
            factors.append(FactorSpace(tuple(raw["outcomes"]), np.array(raw["probs"], dtype=float)))
        except SpaceValidationError as exc:
            raise SpaceValidationError(f"factor[{i}]: {exc}") from exc
    return build_space(factors, max_states=max_states)


def load_space(path: Path | str, *, max_states: int | None = None) -> ProductSpace:
    return space_from_dict(read_json(path), max_states=max_states)


def space_hash(space: ProductSpace) -> str:
    """SHA-256 of the canonical JSON form of the space."""
    canonical = json.dumps(space.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def rv_from_dict(data: dict[str, Any], space: ProductSpace) -> RandomVariable:
    """Random variable from ``{"space_hash": ..., "values": [[re, im], ...]}``.

    Raises
    ------
    SpaceValidationError
        If the hash does not match *space* or the value count is wrong.
    """
    _check_schema(data, "random_variable")
    expected = space_hash(space)
    if data["space_hash"] != expected:
        raise SpaceValidationError(
            f"random variable was written for space {data['space_hash'][:12]}…, "
            f"not {expected[:12]}…"
        )
    pairs = np.array(data["values"], dtype=np.float64).reshape(-1, 2)
    return RandomVariable(space, pairs[:, 0] + 1j * pairs[:, 1])


def load_rv(path: Path | str, space: ProductSpace) -> RandomVariable:
    return rv_from_dict(read_json(path), space)


# ── Serialization ─────────────────────────────────────────────


def complex_pairs(values: np.ndarray) -> list[list[float]]:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=np.complex128)]


def rv_to_dict(X: RandomVariable) -> dict[str, Any]:
    return {"space_hash": space_hash(X.space), "values": complex_pairs(X.values)}


def metadata(
    *,
    space: ProductSpace | None = None,
    seed: int | None = None,
    tolerances: dict[str, float] | None = None,
    **extra: Any,
) -> dict[str, Any]:
    """Header block written at the top of every output file."""
    from . import __version__

    meta: dict[str, Any] = {"tool": "noise-lab", "version": __version__}
    if space is not None:
        meta["space_hash"] = space_hash(space)
    if seed is not None:
        meta["seed"] = int(seed)
    if tolerances:
        meta["tolerances"] = dict(sorted(tolerances.items()))
    meta.update(extra)
    return meta


def write_text_atomic(path: Path | str, text: str) -> None:
    """Write *text* to a temporary sibling, then rename it over *path*."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dump_json(payload: dict[str, Any], meta: dict[str, Any] | None = None) -> str:
    body = {"metadata": meta, **payload} if meta is not None else payload
    return json.dumps(body, indent=2) + "\n"


def write_json(path: Path | str, payload: dict[str, Any], meta: dict[str, Any] | None = None) -> None:
    write_text_atomic(path, dump_json(payload, meta))


def dump_csv(frame: pd.DataFrame, meta: dict[str, Any] | None = None) -> str:
    """CSV text with ``# key: value`` header lines and 17-significant-digit floats."""
    header = ""
    if meta:
        header = "".join(
            f"# {k}: {json.dumps(v, sort_keys=True) if isinstance(v, dict) else v}\n"
            for k, v in meta.items()
        )
    body = frame.to_csv(index=False, float_format=default("csv_float_format"), lineterminator="\n")
    return header + body


def write_csv(path: Path | str, frame: pd.DataFrame, meta: dict[str, Any] | None = None) -> None:
    write_text_atomic(path, dump_csv(frame, meta))


def read_csv(path: Path | str) -> pd.DataFrame:
    """Read a CSV written by :func:`write_csv`, skipping the metadata header."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")
