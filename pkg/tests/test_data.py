"""Tests for noise_lab.data: JSON ingestion, hashing and result files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from noise_lab import data
from noise_lab.config import MAX_STATES_ENV, load_defaults, resolve_max_states
from noise_lab.errors import InputParseError, SpaceValidationError, StateCapError
from noise_lab.space import coordinate

FIXTURES = Path(__file__).parent / "fixtures"


def test_load_two_coins(two_coins):
    space = data.load_space(FIXTURES / "two_coins.json")
    assert space == two_coins
    assert data.space_hash(space) == data.space_hash(two_coins)


def test_bad_probs_names_the_factor():
    with pytest.raises(SpaceValidationError, match=r"factor\[1\]: probabilities sum to 0.9"):
        data.load_space(FIXTURES / "bad_probs.json")


def test_malformed_json_reports_position():
    with pytest.raises(InputParseError, match=r"malformed.json:5:\d+"):
        data.load_space(FIXTURES / "malformed.json")


def test_missing_file(tmp_path):
    with pytest.raises(InputParseError, match="cannot read"):
        data.load_space(tmp_path / "nope.json")


@pytest.mark.parametrize(
    "payload",
    [
        {},
        {"factors": [{"outcomes": [0, 1]}]},
        {"factors": [{"outcomes": [0, 1], "probs": ["a", "b"]}]},
    ],
)
def test_schema_violations(payload):
    with pytest.raises(InputParseError, match="schema"):
        data.space_from_dict(payload)


def test_empty_factor_list_is_validation_error():
    with pytest.raises(SpaceValidationError, match="empty factor list"):
        data.space_from_dict({"factors": []})


def test_space_cap_from_env(monkeypatch):
    monkeypatch.setenv(MAX_STATES_ENV, "3")
    with pytest.raises(StateCapError):
        data.load_space(FIXTURES / "two_coins.json")


def test_hash_changes_with_probabilities(two_coins):
    other = data.space_from_dict(
        {"factors": [{"outcomes": [-1, 1], "probs": [0.25, 0.75]}] * 2}
    )
    assert data.space_hash(other) != data.space_hash(two_coins)
    assert len(data.space_hash(two_coins)) == 64


def test_rv_roundtrip_through_file(tmp_path, two_coins):
    X = coordinate(two_coins, 0) + 1j * coordinate(two_coins, 1)
    path = tmp_path / "x.json"
    data.write_json(path, data.rv_to_dict(X), data.metadata(space=two_coins))
    Y = data.load_rv(path, two_coins)
    assert np.array_equal(X.values, Y.values)


def test_rv_hash_mismatch(two_coins):
    payload = data.rv_to_dict(coordinate(two_coins, 0))
    payload["space_hash"] = "0" * 64
    with pytest.raises(SpaceValidationError, match="written for space"):
        data.rv_from_dict(payload, two_coins)


def test_rv_value_count_mismatch(two_coins):
    payload = data.rv_to_dict(coordinate(two_coins, 0))
    payload["values"] = payload["values"][:3]
    with pytest.raises(SpaceValidationError, match="3 values"):
        data.rv_from_dict(payload, two_coins)


def test_metadata_fields(two_coins):
    meta = data.metadata(space=two_coins, seed=7, tolerances={"b": 1e-8, "a": 1e-10}, t=0.5)
    assert meta["tool"] == "noise-lab"
    assert meta["seed"] == 7
    assert list(meta["tolerances"]) == ["a", "b"]
    assert meta["space_hash"] == data.space_hash(two_coins)
    assert meta["t"] == 0.5


def test_csv_full_precision_and_header(tmp_path):
    values = np.array([1.0 / 3.0, np.pi, 1e-300, 0.1 + 0.2])
    frame = pd.DataFrame({"t": np.arange(4), "v": values})
    path = tmp_path / "out.csv"
    data.write_csv(path, frame, {"tool": "noise-lab", "tolerances": {"x": 1e-10}})
    text = path.read_text(encoding="utf-8")
    assert text.startswith("# tool: noise-lab\n# tolerances: {\"x\": 1e-10}\nt,v\n")
    back = data.read_csv(path)
    assert np.array_equal(back["v"].to_numpy(), values)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = tmp_path / "sub" / "out.json"
    data.write_json(path, {"a": 1})
    data.write_json(path, {"a": 2})
    assert json.loads(path.read_text())["a"] == 2
    assert [p.name for p in path.parent.iterdir()] == ["out.json"]


# ── Configuration ─────────────────────────────────────────────


def test_defaults_file():
    defaults = load_defaults()
    assert defaults["max_states"] == 2**24
    assert defaults["averaging_max_m"] == 12
    assert defaults["csv_float_format"] == "%.17g"


def test_resolve_max_states_order(monkeypatch):
    monkeypatch.delenv(MAX_STATES_ENV, raising=False)
    assert resolve_max_states() == 2**24
    monkeypatch.setenv(MAX_STATES_ENV, "100")
    assert resolve_max_states() == 100
    assert resolve_max_states(50) == 50


def test_resolve_max_states_bad_env(monkeypatch):
    monkeypatch.setenv(MAX_STATES_ENV, "lots")
    with pytest.raises(SpaceValidationError, match="not an integer"):
        resolve_max_states()
