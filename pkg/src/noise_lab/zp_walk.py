"""The stationary ±1 random walk on Z_p, truncated to m atoms.

Factor layout of the underlying product space:

- factor 0: ``X_{m-1}``, uniform on ``{0..p-1}`` (the tail atom)
- factor k, ``1 <= k <= m-1``: the increment ``X_k - X_{k-1}``, fair ±1

``X_0`` and the other positions are derived (mod-p arithmetic), never
stored. The character ``exp(2πi X_0 / p)`` loses a factor
``sqrt(cos²(2π/p) + e^{-2t} sin²(2π/p))`` of its noised norm with every
extra increment, so along the tower of truncations it is sensitive, while
each increment keeps ``||U_t ·|| = e^{-t}``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import resolve_max_states
from .efron_stein import cond_expect
from .errors import SpaceValidationError, StateCapError, ToleranceError
from .noise import noise_operator
from .space import (
    FactorSpace,
    ProductSpace,
    RandomVariable,
    SubsetIndex,
    build_space,
    coordinate,
    norm,
)

logger = logging.getLogger(__name__)

TAIL_FACTOR = 0


@dataclass(frozen=True, eq=False)
class WalkSpace:
    """Truncated walk: p odd, m atoms (one tail, ``m - 1`` increments)."""

    p: int
    m: int
    space: ProductSpace

    @property
    def increments(self) -> SubsetIndex:
        """Factors 1..m-1: the σ-field of increments."""
        return SubsetIndex(((1 << self.m) - 1) & ~1, self.m)

    __hash__ = None  # type: ignore[assignment]


def _check_walk_params(p: int, m: int) -> None:
    if int(p) != p or p < 3:
        raise SpaceValidationError(f"p must be an odd integer >= 3, got {p}")
    if p % 2 == 0:
        raise SpaceValidationError(f"p must be odd, got {p}")
    if int(m) != m or m < 1:
        raise SpaceValidationError(f"m must be a positive integer, got {m}")


def build_walk_space(p: int, m: int, *, max_states: int | None = None) -> WalkSpace:
    """Product space of the walk truncated to m atoms (``p * 2**(m-1)`` states)."""
    _check_walk_params(p, m)
    cap = resolve_max_states(max_states)
    n_states = p * 2 ** (m - 1)
    if n_states > cap:
        raise StateCapError(f"walk p={p}, m={m} has {n_states} states, above the cap of {cap}")
    factors = [FactorSpace.uniform(list(range(p)))]
    factors += [FactorSpace((-1, 1), np.array([0.5, 0.5])) for _ in range(m - 1)]
    return WalkSpace(int(p), int(m), build_space(factors, max_states=cap))


# ── Coordinates ───────────────────────────────────────────────


def _position_tensor(ws: WalkSpace, k: int) -> np.ndarray:
    """Integer tensor of ``X_k = X_{m-1} - sum_{j>k} (X_j - X_{j-1}) mod p``."""
    if not 0 <= k < ws.m:
        raise SpaceValidationError(f"walk position {k} out of range 0..{ws.m - 1}")
    shape = ws.space.shape
    pos = np.broadcast_to(np.arange(ws.p).reshape((ws.p,) + (1,) * (ws.m - 1)), shape)
    for j in range(k + 1, ws.m):
        step = np.array([-1, 1]).reshape([2 if i == j else 1 for i in range(ws.m)])
        pos = pos - step
    return np.mod(pos, ws.p)


def walk_coordinate(ws: WalkSpace, k: int) -> RandomVariable:
    """``X_k`` as a real variable with values in ``{0..p-1}``."""
    return RandomVariable(ws.space, _position_tensor(ws, k).reshape(-1).astype(np.float64))


def increment(ws: WalkSpace, k: int) -> RandomVariable:
    """``X_k - X_{k-1}`` as a real ±1 variable, ``1 <= k <= m-1``."""
    if not 1 <= k < ws.m:
        raise SpaceValidationError(f"increment {k} out of range 1..{ws.m - 1}")
    return coordinate(ws.space, k)


def character(ws: WalkSpace, j: int = 1) -> RandomVariable:
    """``exp(2πi j X_0 / p)``; ``j = 1`` is the sensitive variable."""
    x0 = _position_tensor(ws, 0).reshape(-1)
    return RandomVariable(ws.space, np.exp(2j * np.pi * j * x0 / ws.p))


# ── Symmetry ──────────────────────────────────────────────────


def rotate(X: RandomVariable, ws: WalkSpace, r: int = 1) -> RandomVariable:
    """``X ∘ R^r`` where R adds 1 to every position (the tail moves, increments stay)."""
    tensor = np.roll(X.tensor, -r, axis=TAIL_FACTOR)
    return RandomVariable(ws.space, tensor.reshape(-1))


def rotation_average(X: RandomVariable, ws: WalkSpace) -> RandomVariable:
    """``(X + X∘R + ... + X∘R^{p-1}) / p``: the R-invariant part of X."""
    if X.space != ws.space:
        raise SpaceValidationError("random variable is not defined on this walk space")
    acc = np.zeros(ws.space.total_states, dtype=np.complex128)
    for r in range(ws.p):
        acc += rotate(X, ws, r).values
    return RandomVariable(ws.space, acc / ws.p)


# ── First chaos ───────────────────────────────────────────────


def walk_h1_basis(ws: WalkSpace) -> list[RandomVariable]:
    """The increments ``X_1 - X_0, ..., X_{m-1} - X_{m-2}`` (empty for m = 1)."""
    return [increment(ws, k) for k in range(1, ws.m)]


def walk_tail_basis(ws: WalkSpace) -> list[RandomVariable]:
    """Orthonormal mean-zero real functions of ``X_{m-1}``.

    They lie in H₁ of the truncation only; the limit walk has no such
    elements, so callers report them apart from :func:`walk_h1_basis`.
    """
    tail = coordinate(ws.space, TAIL_FACTOR).values.real
    basis = []
    for j in range(1, (ws.p - 1) // 2 + 1):
        angle = 2.0 * np.pi * j * tail / ws.p
        basis.append(RandomVariable(ws.space, math.sqrt(2.0) * np.cos(angle)))
        basis.append(RandomVariable(ws.space, math.sqrt(2.0) * np.sin(angle)))
    return basis


# ── Closed forms ──────────────────────────────────────────────


def closed_form_norm(p: int, m: int, t: float) -> float:
    """``e^{-t} (cos²(2π/p) + e^{-2t} sin²(2π/p))^{(m-1)/2}``."""
    _check_walk_params(p, m)
    if not t >= 0.0:
        raise SpaceValidationError(f"t must be non-negative, got {t}")
    theta = 2.0 * math.pi / p
    base = math.cos(theta) ** 2 + math.exp(-2.0 * t) * math.sin(theta) ** 2
    return math.exp(-t) * base ** ((m - 1) / 2.0)


def closed_form_noise_character(ws: WalkSpace, t: float) -> RandomVariable:
    """``U_t χ`` written out: ``e^{-t} exp(2πi X_{m-1}/p) prod_k (cos(2π/p) - i e^{-t} sin(2π/p) ε_k)``."""
    theta = 2.0 * math.pi / ws.p
    tail = coordinate(ws.space, TAIL_FACTOR).values.real
    out = math.exp(-t) * np.exp(1j * theta * tail)
    for eps in walk_h1_basis(ws):
        out = out * (math.cos(theta) - 1j * math.exp(-t) * math.sin(theta) * eps.values.real)
    return RandomVariable(ws.space, out)


# ── Invariant checks ──────────────────────────────────────────


def check_walk_invariants(ws: WalkSpace, tol: float = 1e-12) -> list[str]:
    """Enumeration checks of the walk construction. Empty list means all hold.

    1. every ``X_k`` is uniform on Z_p
    2. ``X_0 = X_{m-1} - sum of increments (mod p)``
    3. the tail and the increments are independent (product law on indicators)
    """
    errors: list[str] = []
    probs = ws.space.probs
    for k in range(ws.m):
        pos = _position_tensor(ws, k).reshape(-1)
        freq = np.bincount(pos, weights=probs, minlength=ws.p)
        if np.max(np.abs(freq - 1.0 / ws.p)) > tol:
            errors.append(f"X_{k} is not uniform: {freq.tolist()}")

    x0 = _position_tensor(ws, 0).reshape(-1)
    total = coordinate(ws.space, TAIL_FACTOR).values.real.astype(np.int64)
    for eps in walk_h1_basis(ws):
        total = total - eps.values.real.astype(np.int64)
    if not np.array_equal(np.mod(total, ws.p), x0):
        errors.append("X_0 differs from X_{m-1} minus the increments")

    tail = coordinate(ws.space, TAIL_FACTOR).values.real
    for k, eps in enumerate(walk_h1_basis(ws), start=1):
        for a in range(ws.p):
            for s in (-1.0, 1.0):
                ia = (tail == a).astype(np.float64)
                ib = (eps.values.real == s).astype(np.float64)
                joint = float(np.dot(probs, ia * ib))
                if abs(joint - float(np.dot(probs, ia)) * float(np.dot(probs, ib))) > tol:
                    errors.append(f"tail and increment {k} are not independent at ({a}, {s:+.0f})")
    return errors


# ── Decay table ───────────────────────────────────────────────


def sensitivity_decay_table(
    p: int,
    t: float,
    m_range: Iterable[int],
    *,
    tol: float = 1e-10,
    max_states: int | None = None,
    progress: bool = False,
) -> pd.DataFrame:
    """Exact vs closed-form ``||U_t χ||`` per truncation m.

    Columns: ``m, exact, closed_form, ratio, increment_norm`` where ``ratio``
    is ``exact(m) / exact(m_prev)`` for consecutive rows and
    ``increment_norm`` is ``||U_t (X_1 - X_0)||`` (NaN when m = 1).

    Raises
    ------
    StateCapError
        If any m in the range needs more states than the cap (checked up front).
    ToleranceError
        If exact and closed form differ by more than *tol*.
    """
    ms = sorted(int(m) for m in m_range)
    if not ms:
        raise SpaceValidationError("empty m range")
    _check_walk_params(p, ms[0])
    cap = resolve_max_states(max_states)
    if p * 2 ** (ms[-1] - 1) > cap:
        raise StateCapError(f"walk p={p}, m={ms[-1]} has {p * 2 ** (ms[-1] - 1)} states, above the cap of {cap}")

    rows = []
    prev = None
    for m in tqdm(ms, desc=f"Walk p={p}", disable=not progress):
        ws = build_walk_space(p, m, max_states=cap)
        exact = norm(noise_operator(character(ws), t))
        closed = closed_form_norm(p, m, t)
        if abs(exact - closed) > tol:
            raise ToleranceError(
                f"p={p}, m={m}, t={t}: exact {exact:.17g} vs closed form {closed:.17g}"
            )
        inc_norm = norm(noise_operator(increment(ws, 1), t)) if m > 1 else float("nan")
        rows.append(
            {
                "m": m,
                "exact": exact,
                "closed_form": closed,
                "ratio": exact / prev if prev else float("nan"),
                "increment_norm": inc_norm,
            }
        )
        prev = exact
        logger.debug("walk p=%d m=%d: exact=%.17g", p, m, exact)
    return pd.DataFrame(rows, columns=["m", "exact", "closed_form", "ratio", "increment_norm"])


def stable_part(X: RandomVariable, ws: WalkSpace) -> RandomVariable:
    """Projection onto the increment σ-field, computed as a conditional expectation."""
    return cond_expect(X, ws.increments)
