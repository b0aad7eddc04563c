"""Finite product probability spaces, factor subsets, and random variables.

This module is the single place that knows how states are enumerated:
row-major over the factors with factor 0 varying slowest (the order of
``itertools.product`` and of ``np.ravel_multi_index``). Everything
downstream (projections, semigroups, serialization) works on the dense
``values`` vector of a :class:`RandomVariable` or on its tensor view
``values.reshape(space.shape)``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .config import default, resolve_max_states
from .errors import SpaceValidationError, StateCapError

# ── Domain types ──────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class FactorSpace:
    """One finite probability space: a single atom of the product.

    Outcomes are opaque labels (numbers, strings); only their order matters.
    Every probability must be strictly positive.
    """

    outcomes: tuple[Any, ...]
    probs: np.ndarray  # (n_k,) float64, read-only

    def __post_init__(self) -> None:
        outcomes = tuple(self.outcomes)
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if len(outcomes) == 0:
            raise SpaceValidationError("factor has no outcomes")
        if len(outcomes) != len(probs):
            raise SpaceValidationError(
                f"factor has {len(outcomes)} outcomes but {len(probs)} probabilities"
            )
        if not np.all(np.isfinite(probs)) or np.any(probs <= 0.0):
            bad = [float(p) for p in probs if not (np.isfinite(p) and p > 0.0)]
            raise SpaceValidationError(
                f"probabilities must be strictly positive, got {bad}"
            )
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > default("prob_sum_tol"):
            raise SpaceValidationError(f"probabilities sum to {total:.15g}")
        probs.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, outcomes: Sequence[Any]) -> FactorSpace:
        n = len(outcomes)
        return cls(tuple(outcomes), np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return len(self.outcomes)

    def to_dict(self) -> dict[str, list]:
        return {"outcomes": list(self.outcomes), "probs": self.probs.tolist()}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FactorSpace):
            return NotImplemented
        return self.outcomes == other.outcomes and np.array_equal(
            self.probs, other.probs
        )

    # ndarray fields cannot be hashed.
    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class ProductSpace:
    """Ordered product of factor spaces with the product measure."""

    factors: tuple[FactorSpace, ...]

    def __post_init__(self) -> None:
        factors = tuple(self.factors)
        if not factors:
            raise SpaceValidationError("empty factor list")
        object.__setattr__(self, "factors", factors)

    @property
    def m(self) -> int:
        return len(self.factors)

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @cached_property
    def total_states(self) -> int:
        return math.prod(self.shape)

    @cached_property
    def probs(self) -> np.ndarray:
        """Product probability of every state, in enumeration order."""
        joint = np.ones(1)
        for f in self.factors:
            joint = np.multiply.outer(joint, f.probs).reshape(-1)
        joint.setflags(write=False)
        return joint

    def factor_weights(self, k: int) -> np.ndarray:
        """Probabilities of factor *k*, shaped to broadcast against the tensor view."""
        self.check_factor(k)
        shape = [1] * self.m
        shape[k] = self.shape[k]
        return self.factors[k].probs.reshape(shape)

    def check_factor(self, k: int) -> None:
        if not 0 <= k < self.m:
            raise SpaceValidationError(
                f"factor index {k} out of range for a space with {self.m} factors"
            )

    def outcome(self, index: int) -> tuple[Any, ...]:
        """Outcome labels of one state."""
        coords = np.unravel_index(index, self.shape)
        return tuple(f.outcomes[int(c)] for f, c in zip(self.factors, coords))

    def outcomes(self) -> Iterator[tuple[Any, ...]]:
        """All outcome tuples in enumeration order."""
        return itertools.product(*(f.outcomes for f in self.factors))

    def to_dict(self) -> dict[str, list]:
        return {"factors": [f.to_dict() for f in self.factors]}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProductSpace):
            return NotImplemented
        return self is other or self.factors == other.factors

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, slots=True)
class SubsetIndex:
    """A subset of factor indices ``{0..m-1}`` stored as a bitmask."""

    bits: int
    m: int

    def __post_init__(self) -> None:
        if self.m < 0:
            raise SpaceValidationError(f"m must be non-negative, got {self.m}")
        if not 0 <= self.bits < (1 << self.m):
            raise SpaceValidationError(
                f"bitmask {self.bits:#x} does not fit in {self.m} bits"
            )

    @classmethod
    def empty(cls, m: int) -> SubsetIndex:
        return cls(0, m)

    @classmethod
    def full(cls, m: int) -> SubsetIndex:
        return cls((1 << m) - 1, m)

    @classmethod
    def from_members(cls, members: Iterable[int], m: int) -> SubsetIndex:
        bits = 0
        for k in members:
            if not 0 <= k < m:
                raise SpaceValidationError(f"member {k} out of range for m={m}")
            bits |= 1 << k
        return cls(bits, m)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(k for k in range(self.m) if self.bits >> k & 1)

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __contains__(self, k: object) -> bool:
        return isinstance(k, (int, np.integer)) and 0 <= k < self.m and bool(self.bits >> int(k) & 1)

    def _check(self, other: SubsetIndex) -> None:
        if other.m != self.m:
            raise SpaceValidationError(
                f"subsets over different factor counts ({self.m} vs {other.m})"
            )

    def __or__(self, other: SubsetIndex) -> SubsetIndex:
        self._check(other)
        return SubsetIndex(self.bits | other.bits, self.m)

    def __and__(self, other: SubsetIndex) -> SubsetIndex:
        self._check(other)
        return SubsetIndex(self.bits & other.bits, self.m)

    def __sub__(self, other: SubsetIndex) -> SubsetIndex:
        self._check(other)
        return SubsetIndex(self.bits & ~other.bits, self.m)

    def complement(self) -> SubsetIndex:
        return SubsetIndex(((1 << self.m) - 1) & ~self.bits, self.m)

    def issubset(self, other: SubsetIndex) -> bool:
        self._check(other)
        return self.bits & ~other.bits == 0

    def to_hex(self) -> str:
        return f"{self.bits:x}"

    def __repr__(self) -> str:
        return f"SubsetIndex({set(self.members) or '{}'}, m={self.m})"


def iter_subsets(m: int) -> Iterator[SubsetIndex]:
    """All ``2**m`` subsets in increasing bitmask order."""
    for bits in range(1 << m):
        yield SubsetIndex(bits, m)


def iter_submasks(bits: int) -> Iterator[int]:
    """All submasks of *bits*, largest first, ending with 0."""
    sub = bits
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & bits


@dataclass(frozen=True, eq=False)
class RandomVariable:
    """A complex-valued function on the states of a product space.

    ``values`` has length ``space.total_states`` in enumeration order and is
    read-only; every operation returns a new variable.
    """

    space: ProductSpace
    values: np.ndarray = field(repr=False)  # (total_states,) complex128

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.complex128).reshape(-1)
        if values.shape[0] != self.space.total_states:
            raise SpaceValidationError(
                f"random variable has {values.shape[0]} values but the space "
                f"has {self.space.total_states} states"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def tensor(self) -> np.ndarray:
        """Read-only view with one axis per factor."""
        return self.values.reshape(self.space.shape)

    def is_real(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values.imag) <= tol))

    @property
    def real(self) -> np.ndarray:
        return self.values.real.copy()

    def __add__(self, other: RandomVariable | complex) -> RandomVariable:
        if isinstance(other, RandomVariable):
            return add(self, other)
        return RandomVariable(self.space, self.values + other)

    __radd__ = __add__

    def __sub__(self, other: RandomVariable | complex) -> RandomVariable:
        if isinstance(other, RandomVariable):
            return subtract(self, other)
        return RandomVariable(self.space, self.values - other)

    def __neg__(self) -> RandomVariable:
        return scale(self, -1.0)

    def __mul__(self, other: RandomVariable | complex) -> RandomVariable:
        if isinstance(other, RandomVariable):
            return multiply(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    __hash__ = None  # type: ignore[assignment]


# ── Construction ──────────────────────────────────────────────


def build_space(
    factors: Sequence[FactorSpace], *, max_states: int | None = None
) -> ProductSpace:
    """Validated product space.

    Raises
    ------
    SpaceValidationError
        Empty factor list (invalid factors already fail in ``FactorSpace``).
    StateCapError
        More than the resolved state cap (``NOISE_LAB_MAX_STATES`` or 2**24).
    """
    space = ProductSpace(tuple(factors))
    cap = resolve_max_states(max_states)
    if space.total_states > cap:
        raise StateCapError(
            f"space has {space.total_states} states, above the cap of {cap}"
        )
    return space


def constant(space: ProductSpace, c: complex) -> RandomVariable:
    return RandomVariable(space, np.full(space.total_states, c, dtype=np.complex128))


def from_function(space: ProductSpace, f: Callable[..., complex]) -> RandomVariable:
    """Evaluate ``f(*outcome_labels)`` on every state."""
    values = np.fromiter(
        (complex(f(*labels)) for labels in space.outcomes()),
        dtype=np.complex128,
        count=space.total_states,
    )
    return RandomVariable(space, values)


def coordinate(
    space: ProductSpace, k: int, mapping: Callable[[Any], complex] | None = None
) -> RandomVariable:
    """The variable ``omega -> mapping(omega_k)``; labels are used as numbers by default."""
    space.check_factor(k)
    fmap = mapping or complex
    per_outcome = np.array(
        [fmap(label) for label in space.factors[k].outcomes], dtype=np.complex128
    )
    shape = [1] * space.m
    shape[k] = space.shape[k]
    tensor = np.broadcast_to(per_outcome.reshape(shape), space.shape)
    return RandomVariable(space, tensor.reshape(-1))


def indicator(space: ProductSpace, predicate: Callable[..., bool]) -> RandomVariable:
    return from_function(space, lambda *labels: 1.0 if predicate(*labels) else 0.0)


# ── Inner-product structure ───────────────────────────────────


def _check_same_space(X: RandomVariable, Y: RandomVariable) -> None:
    if X.space != Y.space:
        raise SpaceValidationError("random variables live on different spaces")


def expectation(X: RandomVariable) -> complex:
    """Full average ``sum_w P(w) X(w)``."""
    return complex(np.dot(X.space.probs, X.values))


def inner(X: RandomVariable, Y: RandomVariable) -> complex:
    """``E[X conj(Y)]``: linear in the first argument."""
    _check_same_space(X, Y)
    return complex(np.dot(X.space.probs, X.values * np.conj(Y.values)))


def norm(X: RandomVariable) -> float:
    return math.sqrt(max(float(np.dot(X.space.probs, np.abs(X.values) ** 2)), 0.0))


# ── Per-factor averaging ──────────────────────────────────────


def factor_mean(tensor: np.ndarray, space: ProductSpace, k: int) -> np.ndarray:
    """Average of a tensor over axis *k*, kept as a length-1 axis."""
    return np.sum(tensor * space.factor_weights(k), axis=k, keepdims=True)


def marginal_average(X: RandomVariable, k: int) -> RandomVariable:
    """Conditional expectation given every coordinate except *k*."""
    X.space.check_factor(k)
    avg = factor_mean(X.tensor, X.space, k)
    return RandomVariable(X.space, np.broadcast_to(avg, X.space.shape).reshape(-1))


def is_measurable(X: RandomVariable, A: SubsetIndex, tol: float = 0.0) -> bool:
    """True iff X is constant along every coordinate outside *A*."""
    if A.m != X.space.m:
        raise SpaceValidationError(f"subset over m={A.m} on a space with m={X.space.m}")
    t = X.tensor
    for k in range(X.space.m):
        if k in A:
            continue
        if np.max(np.abs(t - t.take([0], axis=k))) > tol:
            return False
    return True


# ── Pointwise algebra ─────────────────────────────────────────


def pointwise_map(f: Callable[..., complex], X: RandomVariable, *others: RandomVariable) -> RandomVariable:
    """Apply *f* statewise to one or more variables on the same space.

    Real-valued inputs are passed to *f* as floats so real functions
    (``max``, ``abs``, clipping) behave as on the real line. *f* is tried
    on whole arrays first and falls back to one call per state.
    """
    for Y in others:
        _check_same_space(X, Y)
    args = [Z.values.real if Z.is_real() else Z.values for Z in (X, *others)]
    n = X.space.total_states
    try:
        out = np.asarray(f(*args), dtype=np.complex128)
        if out.shape != (n,):
            raise ValueError("not elementwise")
    except (TypeError, ValueError):
        out = np.fromiter(
            (complex(f(*vals)) for vals in zip(*(a.tolist() for a in args))),
            dtype=np.complex128,
            count=n,
        )
    return RandomVariable(X.space, out)


def add(X: RandomVariable, Y: RandomVariable) -> RandomVariable:
    _check_same_space(X, Y)
    return RandomVariable(X.space, X.values + Y.values)


def subtract(X: RandomVariable, Y: RandomVariable) -> RandomVariable:
    _check_same_space(X, Y)
    return RandomVariable(X.space, X.values - Y.values)


def scale(X: RandomVariable, c: complex) -> RandomVariable:
    return RandomVariable(X.space, c * X.values)


def multiply(X: RandomVariable, Y: RandomVariable) -> RandomVariable:
    _check_same_space(X, Y)
    return RandomVariable(X.space, X.values * Y.values)
