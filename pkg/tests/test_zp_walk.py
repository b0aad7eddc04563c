"""Tests for noise_lab.zp_walk: the ±1 walk on Z_p and its sensitive character."""

from __future__ import annotations

import math

import numpy as np
import pytest

from noise_lab.efron_stein import cond_expect, is_in_H1, level_weights
from noise_lab.errors import SpaceValidationError, StateCapError, ToleranceError
from noise_lab.noise import noise_operator
from noise_lab.space import RandomVariable, expectation, inner, norm
from noise_lab.zp_walk import (
    build_walk_space,
    character,
    check_walk_invariants,
    closed_form_noise_character,
    closed_form_norm,
    increment,
    rotate,
    rotation_average,
    sensitivity_decay_table,
    stable_part,
    walk_coordinate,
    walk_h1_basis,
    walk_tail_basis,
)

TOL = 1e-10


# ── Construction ──────────────────────────────────────────────


@pytest.mark.parametrize("p, m, states", [(3, 2, 6), (5, 4, 40), (7, 1, 7)])
def test_state_counts(p, m, states):
    assert build_walk_space(p, m).space.total_states == states


@pytest.mark.parametrize("p", [4, 10])
def test_even_p_rejected(p):
    with pytest.raises(SpaceValidationError, match="p must be odd"):
        build_walk_space(p, 3)


@pytest.mark.parametrize("p, m", [(1, 3), (3, 0)])
def test_small_parameters_rejected(p, m):
    with pytest.raises(SpaceValidationError):
        build_walk_space(p, m)


def test_walk_state_cap():
    with pytest.raises(StateCapError, match="above the cap"):
        build_walk_space(5, 6, max_states=100)


@pytest.mark.parametrize("p, m", [(3, 1), (3, 4), (5, 3), (7, 4)])
def test_walk_invariants(p, m):
    assert check_walk_invariants(build_walk_space(p, m)) == []


def test_positions_follow_increments():
    ws = build_walk_space(5, 3)
    x0, x1, x2 = (walk_coordinate(ws, k).real for k in range(3))
    e1, e2 = increment(ws, 1).real, increment(ws, 2).real
    assert np.array_equal(np.mod(x0 + e1, 5), x1)
    assert np.array_equal(np.mod(x1 + e2, 5), x2)


def test_increment_range():
    ws = build_walk_space(3, 3)
    with pytest.raises(SpaceValidationError, match="out of range"):
        increment(ws, 0)


# ── Character ─────────────────────────────────────────────────


@pytest.mark.parametrize("p, m", [(3, 3), (5, 4)])
def test_character_basics(p, m):
    ws = build_walk_space(p, m)
    chi = character(ws)
    assert abs(expectation(chi)) <= 1e-12
    assert norm(chi) == pytest.approx(1.0)
    assert level_weights(chi).sum() == pytest.approx(1.0)


def test_closed_form_check_value():
    assert closed_form_norm(3, 3, math.log(2.0)) == pytest.approx(0.21875, abs=1e-15)
    ws = build_walk_space(3, 3)
    assert norm(noise_operator(character(ws), math.log(2.0))) == pytest.approx(0.21875, abs=TOL)


@pytest.mark.parametrize("p", [3, 5, 7])
@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_exact_matches_closed_form(p, t):
    for m in range(1, 11):
        ws = build_walk_space(p, m)
        exact = norm(noise_operator(character(ws), t))
        assert abs(exact - closed_form_norm(p, m, t)) <= TOL


def test_closed_form_at_zero_time():
    for m in (1, 4, 9):
        assert closed_form_norm(5, m, 0.0) == pytest.approx(1.0)


def test_closed_form_character():
    ws = build_walk_space(5, 4)
    for t in (0.0, 0.3, 1.7):
        exact = noise_operator(character(ws), t)
        assert norm(exact - closed_form_noise_character(ws, t)) <= TOL


# ── Rotation symmetry ─────────────────────────────────────────


def test_rotate_shifts_every_position():
    ws = build_walk_space(5, 3)
    for k in range(3):
        xk = walk_coordinate(ws, k)
        assert np.array_equal(rotate(xk, ws, 1).real, np.mod(xk.real + 1, 5))


def test_rotation_average_examples():
    ws = build_walk_space(5, 3)
    assert norm(rotation_average(character(ws), ws)) <= TOL

    tail = walk_coordinate(ws, 2).real
    ind = RandomVariable(ws.space, (tail == 0).astype(float))
    assert np.allclose(rotation_average(ind, ws).values, 1.0 / 5)

    inc = increment(ws, 1) * increment(ws, 2) + 2 * increment(ws, 2)
    assert norm(rotation_average(inc, ws) - inc) <= TOL


def test_rotation_average_is_conditional_expectation(make_rv):
    ws = build_walk_space(3, 4)
    for _ in range(5):
        X = make_rv(ws.space)
        assert norm(rotation_average(X, ws) - cond_expect(X, ws.increments)) <= 1e-12
        assert norm(stable_part(X, ws) - rotation_average(X, ws)) <= 1e-12


def test_character_has_no_stable_part():
    ws = build_walk_space(7, 4)
    assert norm(stable_part(character(ws), ws)) <= 1e-12


def test_rotation_average_wrong_space(two_coins, make_rv):
    ws = build_walk_space(3, 2)
    with pytest.raises(SpaceValidationError, match="walk space"):
        rotation_average(make_rv(two_coins), ws)


# ── First chaos ───────────────────────────────────────────────


def test_increments_are_h1_and_orthonormal(rng):
    ws = build_walk_space(5, 5)
    basis = walk_h1_basis(ws)
    assert len(basis) == 4
    for i, e in enumerate(basis):
        assert is_in_H1(e)
        assert norm(noise_operator(e, 0.6) - math.exp(-0.6) * e) <= TOL
        for f in basis[i + 1:]:
            assert abs(inner(e, f)) <= 1e-12
    c = rng.standard_normal(len(basis))
    combo = RandomVariable(ws.space, sum(ck * e.values for ck, e in zip(c, basis)))
    assert is_in_H1(combo)


def test_tail_basis_is_truncation_h1():
    ws = build_walk_space(5, 3)
    tail = walk_tail_basis(ws)
    assert len(tail) == 4
    for i, g in enumerate(tail):
        assert is_in_H1(g)
        assert norm(g) == pytest.approx(1.0)
        for h in tail[i + 1:] + walk_h1_basis(ws):
            assert abs(inner(g, h)) <= 1e-12


# ── Decay table ───────────────────────────────────────────────


def test_decay_table_ratio():
    table = sensitivity_decay_table(3, 0.5, range(2, 11))
    expected_ratio = math.sqrt(0.25 + math.exp(-1.0) * 0.75)
    assert expected_ratio == pytest.approx(0.7252, abs=1e-4)
    assert np.isnan(table["ratio"].iloc[0])
    assert np.allclose(table["ratio"].iloc[1:], expected_ratio, atol=1e-10)
    assert np.allclose(table["increment_norm"], math.exp(-0.5), atol=1e-12)
    assert np.allclose(table["exact"], table["closed_form"], atol=TOL)
    assert list(table.columns) == ["m", "exact", "closed_form", "ratio", "increment_norm"]


def test_decay_table_at_zero_time():
    table = sensitivity_decay_table(5, 0.0, [1, 2, 3])
    assert np.allclose(table["exact"], 1.0)
    assert np.isnan(table["increment_norm"].iloc[0])


def test_decay_table_cap_checked_up_front():
    with pytest.raises(StateCapError):
        sensitivity_decay_table(5, 0.5, [2, 3, 12], max_states=1000)


def test_decay_table_tolerance_failure(monkeypatch):
    import noise_lab.zp_walk as zp_walk

    monkeypatch.setattr(zp_walk, "closed_form_norm", lambda p, m, t: 2.0)
    with pytest.raises(ToleranceError, match="closed form"):
        zp_walk.sensitivity_decay_table(3, 0.5, [2])
