"""Conditional expectations, the Efron–Stein decomposition, levels and Wick products.

Every projection here is a product of per-factor operators: the factor mean
``M_k`` and its complement ``1 - M_k``. ``E_A`` applies ``M_k`` for the
factors outside A; ``Pr_{H_A}`` applies ``1 - M_k`` inside A and ``M_k``
outside. No basis of any H_A is ever built.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .config import default
from .errors import SpaceValidationError
from .space import (
    ProductSpace,
    RandomVariable,
    SubsetIndex,
    factor_mean,
    iter_submasks,
    norm,
)

logger = logging.getLogger(__name__)


def _check_subset(space: ProductSpace, A: SubsetIndex) -> None:
    if A.m != space.m:
        raise SpaceValidationError(
            f"subset over m={A.m} used on a space with m={space.m}"
        )


def _full(tensor: np.ndarray, space: ProductSpace) -> np.ndarray:
    return np.broadcast_to(tensor, space.shape).reshape(-1)


# ── Projections ───────────────────────────────────────────────


def cond_expect(X: RandomVariable, A: SubsetIndex) -> RandomVariable:
    """``E[X | F_A]``: average out every factor not in *A*."""
    space = X.space
    _check_subset(space, A)
    t = X.tensor
    for k in range(space.m):
        if k not in A:
            t = factor_mean(t, space, k)
    return RandomVariable(space, _full(t, space))


def project_HA(X: RandomVariable, A: SubsetIndex) -> RandomVariable:
    """Orthogonal projection onto H_A: the part depending on exactly the factors in *A*."""
    space = X.space
    _check_subset(space, A)
    t = X.tensor
    for k in range(space.m):
        mean = factor_mean(t, space, k)
        t = t - mean if k in A else mean
    return RandomVariable(space, _full(t, space))


def inclusion_exclusion_component(X: RandomVariable, A: SubsetIndex) -> RandomVariable:
    """``sum_{B ⊆ A} (-1)^{|A \\ B|} E_B X``: independent cross-check of :func:`project_HA`."""
    _check_subset(X.space, A)
    acc = np.zeros(X.space.total_states, dtype=np.complex128)
    for sub in iter_submasks(A.bits):
        sign = -1.0 if (A.bits & ~sub).bit_count() % 2 else 1.0
        acc += sign * cond_expect(X, SubsetIndex(sub, A.m)).values
    return RandomVariable(X.space, acc)


# ── Decomposition ─────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Decomposition:
    """All components ``X_A`` of one random variable, keyed by subset."""

    space: ProductSpace
    components: dict[SubsetIndex, RandomVariable]

    def component(self, A: SubsetIndex) -> RandomVariable:
        return self.components[A]

    def reconstruct(self) -> RandomVariable:
        total = np.zeros(self.space.total_states, dtype=np.complex128)
        for bits in sorted(c.bits for c in self.components):
            total += self.components[SubsetIndex(bits, self.space.m)].values
        return RandomVariable(self.space, total)

    def level_weights(self) -> np.ndarray:
        weights = np.zeros(self.space.m + 1)
        for A, comp in self.components.items():
            weights[len(A)] += norm(comp) ** 2
        return weights

    def nonzero(self, tol: float) -> dict[SubsetIndex, RandomVariable]:
        """Components whose norm exceeds *tol*, in bitmask order."""
        return {
            A: self.components[A]
            for A in sorted(self.components, key=lambda s: s.bits)
            if norm(self.components[A]) > tol
        }


def decompose(X: RandomVariable) -> Decomposition:
    """Split X into its ``2**m`` Efron–Stein components.

    Factors are peeled one at a time: every partial component splits into
    its factor mean (factor k outside the subset) and the centered rest
    (factor k inside). Averaged branches keep a collapsed axis, so the work
    shrinks as subsets lose members.
    """
    space = X.space
    partial: dict[int, np.ndarray] = {0: X.tensor}
    for k in range(space.m):
        nxt: dict[int, np.ndarray] = {}
        for bits, t in partial.items():
            mean = factor_mean(t, space, k)
            nxt[bits] = mean
            nxt[bits | (1 << k)] = t - mean
        partial = nxt
    logger.debug("decomposed %d states into %d components", space.total_states, len(partial))
    components = {
        SubsetIndex(bits, space.m): RandomVariable(space, _full(partial[bits], space))
        for bits in sorted(partial)
    }
    return Decomposition(space, components)


# ── Levels ────────────────────────────────────────────────────


def _level_tensors(X: RandomVariable, top: int) -> list[np.ndarray]:
    """Level parts 0..top of X.

    After factor k the running list holds, for each j, the part of X with
    exactly j centered factors among ``0..k``:
    ``L_j <- M_k L_j + (1 - M_k) L_{j-1}``. Levels above *top* never feed
    back into lower ones, so they are not kept; peak memory is about
    ``top + 2`` state tensors.
    """
    space = X.space
    levels: list[np.ndarray] = [X.tensor]
    for k in range(space.m):
        means = [factor_mean(t, space, k) for t in levels]
        nxt = [means[0]]
        for j in range(1, len(levels)):
            nxt.append(means[j] + (levels[j - 1] - means[j - 1]))
        if len(levels) <= top:
            nxt.append(levels[-1] - means[-1])
        levels = nxt
    return levels


def level_components(X: RandomVariable) -> np.ndarray:
    """All level projections at once, shape ``(m + 1, total_states)``."""
    return np.stack([_full(t, X.space) for t in _level_tensors(X, X.space.m)])


def _check_level(space: ProductSpace, n: int) -> None:
    if not 0 <= n <= space.m:
        raise SpaceValidationError(f"level {n} out of range 0..{space.m}")


def level_project(X: RandomVariable, n: int) -> RandomVariable:
    """Projection onto H_n, the sum of H_A over ``|A| = n``."""
    _check_level(X.space, n)
    return RandomVariable(X.space, _full(_level_tensors(X, n)[n], X.space))


def level_weights(X: RandomVariable) -> np.ndarray:
    """``(||level_project(X, n)||**2)`` for ``n = 0..m``; sums to ``||X||**2``."""
    comps = level_components(X)
    return np.abs(comps) ** 2 @ X.space.probs


# ── First chaos ───────────────────────────────────────────────


@dataclass(frozen=True)
class H1Report:
    """Outcome of an H₁ membership test with its witness."""

    in_h1: bool
    spectral_defect: float  # ||X - level_project(X, 1)||
    partition: tuple[SubsetIndex, ...] | None  # first failing partition, if any
    defect: float  # residual ||X - sum_blocks E_block X|| on that partition

    def __bool__(self) -> bool:
        return self.in_h1


def partition_residual(X: RandomVariable, blocks: Iterable[SubsetIndex]) -> float:
    """``||X - sum_i E_{A_i} X||`` for the blocks of a partition."""
    acc = X.values.copy()
    for B in blocks:
        acc -= cond_expect(X, B).values
    return norm(RandomVariable(X.space, acc))


def is_in_H1(X: RandomVariable, tol: float | None = None) -> H1Report:
    """Decide ``X ∈ H₁`` spectrally; report the singleton-partition residual as witness.

    The witness partition is named only when its residual exceeds *tol*.
    For m >= 2 that happens exactly when the spectral test fails. At m = 1
    the singleton partition is the trivial one, its residual is always zero,
    and a failing X (a nonzero mean) is reported with ``partition=None`` and
    the spectral defect.
    """
    tol = default("h1_tol") if tol is None else tol
    m = X.space.m
    spectral = norm(X - level_project(X, 1))
    singletons = tuple(SubsetIndex(1 << k, m) for k in range(m))
    singleton_defect = partition_residual(X, singletons)
    if spectral <= tol:
        return H1Report(True, spectral, None, singleton_defect)
    if singleton_defect <= tol:
        return H1Report(False, spectral, None, spectral)
    return H1Report(False, spectral, singletons, singleton_defect)


def wick_product(
    X: RandomVariable, Y: RandomVariable, tol: float | None = None
) -> RandomVariable:
    """``:XY: = sum_{a != b} (E_a X)(E_b Y)`` for X, Y in H₁.

    Raises
    ------
    SpaceValidationError
        If either argument is not in H₁ within *tol*.
    """
    for name, Z in (("X", X), ("Y", Y)):
        report = is_in_H1(Z, tol)
        if not report:
            raise SpaceValidationError(
                f"wick_product needs {name} in H1 (defect {report.spectral_defect:.3g})"
            )
    if X.space != Y.space:
        raise SpaceValidationError("random variables live on different spaces")
    m = X.space.m
    ex = [cond_expect(X, SubsetIndex(1 << a, m)).values for a in range(m)]
    ey = [cond_expect(Y, SubsetIndex(1 << b, m)).values for b in range(m)]
    # (sum_a E_a X)(sum_b E_b Y) minus the diagonal a == b
    total = sum(ex) * sum(ey) - sum(x * y for x, y in zip(ex, ey))
    return RandomVariable(X.space, total)
