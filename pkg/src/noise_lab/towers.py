"""Partitions of factors, refinement towers, and the coarse-grained semigroups.

A finite subalgebra is represented by its atoms: a partition of the factor
indices into blocks. On the subalgebra generated by a partition P, the
noise semigroup acts on ``H_S`` as ``e^{-t·touched(S, P)}`` where
``touched`` counts the blocks that S meets. Refining P can only increase
``touched``, which is where the monotonicity of the tower comes from.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from tqdm import tqdm

from .efron_stein import partition_residual
from .errors import SpaceValidationError, ToleranceError
from .noise import _check_t
from .space import RandomVariable, SubsetIndex, factor_mean, norm

logger = logging.getLogger(__name__)


# ── Domain types ──────────────────────────────────────────────


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty blocks covering ``{0..m-1}``, ordered by smallest member."""

    blocks: tuple[SubsetIndex, ...]
    m: int

    def __post_init__(self) -> None:
        blocks = tuple(sorted(self.blocks, key=lambda b: b.members[0] if b.bits else -1))
        seen = 0
        for b in blocks:
            if b.m != self.m:
                raise SpaceValidationError(f"block over m={b.m} in a partition over m={self.m}")
            if b.bits == 0:
                raise SpaceValidationError("partition blocks must be nonempty")
            if seen & b.bits:
                raise SpaceValidationError(
                    f"blocks overlap on factors {sorted(SubsetIndex(seen & b.bits, self.m).members)}"
                )
            seen |= b.bits
        if seen != (1 << self.m) - 1:
            missing = SubsetIndex(((1 << self.m) - 1) & ~seen, self.m).members
            raise SpaceValidationError(f"partition does not cover factors {list(missing)}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def discrete(cls, m: int) -> Partition:
        return cls(tuple(SubsetIndex(1 << k, m) for k in range(m)), m)

    @classmethod
    def single_block(cls, m: int) -> Partition:
        return cls((SubsetIndex.full(m),), m)

    @classmethod
    def from_lists(cls, blocks: Iterable[Iterable[int]], m: int) -> Partition:
        return cls(tuple(SubsetIndex.from_members(b, m) for b in blocks), m)

    @classmethod
    def parse(cls, text: str, m: int | None = None) -> Partition:
        """``"0,1|2"`` -> blocks {0,1} and {2}; *m* defaults to the largest index + 1."""
        try:
            lists = [[int(tok) for tok in block.split(",") if tok.strip()] for block in text.split("|")]
        except ValueError:
            raise SpaceValidationError(f"cannot parse partition '{text}'") from None
        if m is None:
            m = max((k for b in lists for k in b), default=-1) + 1
        return cls.from_lists(lists, m)

    def __len__(self) -> int:
        return len(self.blocks)

    def refines(self, coarser: Partition) -> bool:
        """True iff every block of ``self`` lies inside a block of *coarser*."""
        if coarser.m != self.m:
            return False
        return all(any(b.issubset(c) for c in coarser.blocks) for b in self.blocks)

    def __str__(self) -> str:
        return "|".join(",".join(str(k) for k in b.members) for b in self.blocks)


@dataclass(frozen=True)
class Tower:
    """A refinement chain of partitions, coarsest first."""

    partitions: tuple[Partition, ...]

    def __post_init__(self) -> None:
        parts = tuple(self.partitions)
        if not parts:
            raise SpaceValidationError("tower needs at least one partition")
        for i in range(len(parts) - 1):
            if not parts[i + 1].refines(parts[i]):
                raise SpaceValidationError(
                    f"tower stage {i + 1} ({parts[i + 1]}) does not refine stage {i} ({parts[i]})"
                )
        object.__setattr__(self, "partitions", parts)

    @classmethod
    def parse(cls, text: str, m: int | None = None) -> Tower:
        """``"0,1|2;0|1|2"``: ``|`` separates blocks, ``;`` separates stages."""
        stages = [s for s in text.split(";") if s.strip()]
        if m is None:
            m = max(Partition.parse(s).m for s in stages)
        return cls(tuple(Partition.parse(s, m) for s in stages))

    @property
    def m(self) -> int:
        return self.partitions[0].m

    @property
    def finest(self) -> Partition:
        return self.partitions[-1]

    def interleave(self, other: Tower) -> Tower:
        """Alternate stages ``self[0], other[0], self[1], ...``; raises unless each refines the previous."""
        merged: list[Partition] = []
        for i in range(max(len(self.partitions), len(other.partitions))):
            for tower in (self, other):
                if i < len(tower.partitions):
                    merged.append(tower.partitions[i])
        return Tower(tuple(merged))

    def __len__(self) -> int:
        return len(self.partitions)


# ── Combinatorics ─────────────────────────────────────────────


def saturation(S: SubsetIndex, P: Partition) -> SubsetIndex:
    """Union of all blocks of *P* that meet *S*."""
    bits = 0
    for b in P.blocks:
        if b.bits & S.bits:
            bits |= b.bits
    return SubsetIndex(bits, P.m)


def touched(S: SubsetIndex, P: Partition) -> int:
    """Number of blocks of *P* that meet *S*."""
    return sum(1 for b in P.blocks if b.bits & S.bits)


# ── Coarse levels and semigroups ──────────────────────────────


def _check_space(X: RandomVariable, P: Partition) -> None:
    if P.m != X.space.m:
        raise SpaceValidationError(f"partition over m={P.m} on a space with m={X.space.m}")


def coarse_level_components(X: RandomVariable, P: Partition) -> np.ndarray:
    """Coarse level projections, shape ``(len(P) + 1, total_states)``.

    Same recursion as the fine levels with the block mean ``M_B`` (average
    over every factor of B) in place of a single factor mean.
    """
    _check_space(X, P)
    space = X.space

    def block_mean(t: np.ndarray, block: SubsetIndex) -> np.ndarray:
        for k in block:
            t = factor_mean(t, space, k)
        return t

    levels: list[np.ndarray] = [X.tensor]
    for block in P.blocks:
        means = [block_mean(t, block) for t in levels]
        nxt = [means[0]]
        for j in range(1, len(levels)):
            nxt.append(means[j] + (levels[j - 1] - means[j - 1]))
        nxt.append(levels[-1] - means[-1])
        levels = nxt
    return np.stack([np.broadcast_to(t, space.shape).reshape(-1) for t in levels])


def coarse_level_project(X: RandomVariable, P: Partition, n: int) -> RandomVariable:
    """Sum of ``project_HA(X, S)`` over the S that touch exactly *n* blocks of *P*."""
    if not 0 <= n <= len(P):
        raise SpaceValidationError(f"coarse level {n} out of range 0..{len(P)}")
    return RandomVariable(X.space, coarse_level_components(X, P)[n])


def coarse_level_weights(X: RandomVariable, P: Partition) -> np.ndarray:
    return np.abs(coarse_level_components(X, P)) ** 2 @ X.space.probs


def coarse_noise_operator(X: RandomVariable, P: Partition, t: float) -> RandomVariable:
    """``U_t^{(P)} X = sum_S e^{-t·touched(S, P)} project_HA(X, S)``."""
    _check_t(t)
    comps = coarse_level_components(X, P)
    return RandomVariable(X.space, np.exp(-t * np.arange(len(P) + 1)) @ comps)


def coarse_noise_form(X: RandomVariable, P: Partition, t: float) -> float:
    """``(U_t^{(P)} X, X)``."""
    _check_t(t)
    w = coarse_level_weights(X, P)
    return float(np.dot(np.exp(-t * np.arange(len(w))), w))


def coarse_generator_form(X: RandomVariable, P: Partition) -> float:
    """``(N^{(P)} X, X)``."""
    w = coarse_level_weights(X, P)
    return float(np.dot(np.arange(len(w)), w))


# ── Monotonicity ──────────────────────────────────────────────


@dataclass(frozen=True)
class MonotoneReport:
    u_coarse: float
    u_fine: float
    n_coarse: float
    n_fine: float
    tol: float

    @property
    def holds(self) -> bool:
        return self.u_coarse >= self.u_fine - self.tol and self.n_coarse <= self.n_fine + self.tol


def check_monotone(
    X: RandomVariable,
    t: float,
    P_coarse: Partition,
    P_fine: Partition,
    tol: float = 1e-10,
) -> MonotoneReport:
    """Compare the semigroup and generator forms on a coarse and a refining partition.

    Raises
    ------
    SpaceValidationError
        If *P_fine* does not refine *P_coarse*.
    ToleranceError
        If ``(U_t^{coarse} X, X) >= (U_t^{fine} X, X)`` or
        ``(N^{coarse} X, X) <= (N^{fine} X, X)`` fails beyond *tol*.
    """
    if not P_fine.refines(P_coarse):
        raise SpaceValidationError(f"{P_fine} does not refine {P_coarse}")
    report = MonotoneReport(
        u_coarse=coarse_noise_form(X, P_coarse, t),
        u_fine=coarse_noise_form(X, P_fine, t),
        n_coarse=coarse_generator_form(X, P_coarse),
        n_fine=coarse_generator_form(X, P_fine),
        tol=tol,
    )
    if not report.holds:
        raise ToleranceError(
            f"monotonicity violated between {P_coarse} and {P_fine}: "
            f"U-forms {report.u_coarse:.17g} vs {report.u_fine:.17g}, "
            f"N-forms {report.n_coarse:.17g} vs {report.n_fine:.17g}"
        )
    return report


def tower_forms(
    X: RandomVariable, tower: Tower, t: float, *, tol: float = 1e-10, progress: bool = False
) -> pd.DataFrame:
    """Quadratic forms at every stage of a tower, checking monotonicity between neighbours.

    The rows are the finite-level diagnostics of the limit semigroup; the
    last row is the value at the finest partition.
    """
    _check_space(X, tower.finest)
    rows = []
    stages = tower.partitions
    for i, P in enumerate(tqdm(stages, desc="Tower stages", disable=not progress)):
        if i > 0:
            check_monotone(X, t, stages[i - 1], P, tol)
        rows.append(
            {
                "stage": i,
                "partition": str(P),
                "n_form": coarse_generator_form(X, P),
                "u_form": coarse_noise_form(X, P, t),
            }
        )
    logger.debug("tower of %d stages checked at t=%g", len(stages), t)
    return pd.DataFrame(rows, columns=["stage", "partition", "n_form", "u_form"])


# ── First chaos via partitions ────────────────────────────────


def h1_partition_test(
    X: RandomVariable, partitions: Sequence[Partition], tol: float = 1e-8
) -> bool:
    """True iff ``X = sum_blocks E_block X`` within *tol* for every supplied partition.

    Over ``all_partitions(m)`` this matches :func:`is_in_H1` for m >= 2. At
    m = 1 the only partition is the full set, ``E_T X = X`` always, and the
    test passes for every X, constants included.
    """
    for P in partitions:
        _check_space(X, P)
        if partition_residual(X, P.blocks) > tol:
            return False
    return True


def all_partitions(m: int) -> list[Partition]:
    """Every partition of ``{0..m-1}`` (Bell-number many; small m only)."""

    def rec(k: int, blocks: list[int]) -> Iterable[list[int]]:
        if k == m:
            yield list(blocks)
            return
        for i in range(len(blocks)):
            blocks[i] |= 1 << k
            yield from rec(k + 1, blocks)
            blocks[i] &= ~(1 << k)
        blocks.append(1 << k)
        yield from rec(k + 1, blocks)
        blocks.pop()

    return [Partition(tuple(SubsetIndex(b, m) for b in bl), m) for bl in rec(0, [])]


def coarse_h1_defect(X: RandomVariable, P: Partition) -> float:
    """``||X - coarse_level_project(X, P, 1)||``."""
    return norm(X - coarse_level_project(X, P, 1))
