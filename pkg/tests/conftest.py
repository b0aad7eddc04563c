"""Shared fixtures: seeded RNG and factories for random spaces and variables."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from noise_lab.space import FactorSpace, ProductSpace, RandomVariable, build_space, coordinate

FIXTURES = Path(__file__).parent / "fixtures"


def _random_factor(rng: np.random.Generator, size: int) -> FactorSpace:
    w = rng.uniform(0.2, 1.0, size)
    return FactorSpace(tuple(range(size)), w / w.sum())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture
def make_space(rng):
    """``make_space(m=None, max_size=3)``: random product space, m in 1..4 when not given."""

    def factory(m: int | None = None, max_size: int = 3) -> ProductSpace:
        m = int(rng.integers(1, 5)) if m is None else m
        sizes = rng.integers(2, max_size + 1, size=m) if max_size >= 2 else np.ones(m, dtype=int)
        return build_space([_random_factor(rng, int(s)) for s in sizes])

    return factory


@pytest.fixture
def make_rv(rng):
    """``make_rv(space, real=False)``: random variable with standard normal entries."""

    def factory(space: ProductSpace, real: bool = False) -> RandomVariable:
        values = rng.standard_normal(space.total_states)
        if not real:
            values = values + 1j * rng.standard_normal(space.total_states)
        return RandomVariable(space, values)

    return factory


@pytest.fixture
def make_h1(rng):
    """``make_h1(space)``: a sum of centered single-factor functions (an element of H₁)."""

    def factory(space: ProductSpace, real: bool = True) -> RandomVariable:
        total = np.zeros(space.total_states, dtype=np.complex128)
        for k, f in enumerate(space.factors):
            g = rng.standard_normal(f.size)
            if not real:
                g = g + 1j * rng.standard_normal(f.size)
            g = g - np.dot(f.probs, g)
            lookup = dict(zip(f.outcomes, g))
            total += coordinate(space, k, mapping=lambda label, lookup=lookup: lookup[label]).values
        return RandomVariable(space, total)

    return factory


@pytest.fixture
def two_coins() -> ProductSpace:
    coin = FactorSpace((-1, 1), np.array([0.5, 0.5]))
    return build_space([coin, coin])
