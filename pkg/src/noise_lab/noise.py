"""Bernoulli subset measures, the noise semigroup, its generator, and Monte-Carlo resampling.

Time ``t`` is the canonical parameter; the keep-probability ``p = exp(-t)``
is derived. ``U_t`` is computed spectrally (``e^{-nt}`` on level n) by
default; the subset average ``sum_A mu_p(A) E_A`` is kept as an oracle and
refused above ``averaging_max_m`` factors.

Random draws use numpy's counter-based Philox generator. A draw is fully
determined by ``(seed, stream, chunk)``:

====== ==================================
stream use
====== ==================================
0      Y-draws (original data)
1      Z-draws (independent copies)
2      A-draws (which atoms are kept)
3      exponential clocks of the subset process
====== ==================================
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import default
from .efron_stein import cond_expect, level_components, level_weights
from .errors import SpaceValidationError, StateCapError
from .space import (
    ProductSpace,
    RandomVariable,
    SubsetIndex,
    expectation,
    factor_mean,
    inner,
    iter_subsets,
    norm,
    pointwise_map,
)

logger = logging.getLogger(__name__)

STREAM_Y = 0
STREAM_Z = 1
STREAM_A = 2
STREAM_CLOCK = 3

_SEED_MASK = (1 << 64) - 1
MASK_ARRAY_MAX_M = 63  # bit 63 would be the int64 sign bit


# ── Random streams ────────────────────────────────────────────


def make_rng(seed: int, stream: int = 0, chunk: int = 0) -> np.random.Generator:
    """Philox generator keyed by *seed*; *stream* and *chunk* select disjoint counter ranges."""
    if not 0 <= seed <= _SEED_MASK:
        raise SpaceValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    counter = (int(chunk) << 192) | (int(stream) << 128)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


def _as_rng(rng: np.random.Generator | int, stream: int) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(int(rng), stream)


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise SpaceValidationError(f"p must lie in [0, 1], got {p}")


def _check_t(t: float) -> None:
    if not t >= 0.0:
        raise SpaceValidationError(f"t must be non-negative, got {t}")


def keep_probability(t: float) -> float:
    """``p = exp(-t)``."""
    _check_t(t)
    return math.exp(-t)


# ── Subset measures ───────────────────────────────────────────


def bernoulli_mass(A: SubsetIndex, p: float, m: int | None = None) -> float:
    """``p^|A| (1-p)^(m-|A|)``."""
    _check_p(p)
    if m is not None and m != A.m:
        raise SpaceValidationError(f"subset over m={A.m}, expected m={m}")
    k = len(A)
    return p**k * (1.0 - p) ** (A.m - k)


@dataclass(frozen=True)
class SubsetMeasure:
    """A finitely supported probability distribution on subsets of ``{0..m-1}``."""

    m: int
    support: Mapping[SubsetIndex, float]

    def __post_init__(self) -> None:
        support = {}
        for A, w in sorted(self.support.items(), key=lambda kv: kv[0].bits):
            if A.m != self.m:
                raise SpaceValidationError(f"subset over m={A.m} in a measure over m={self.m}")
            if not w >= 0.0:
                raise SpaceValidationError(f"negative weight {w} on {A}")
            support[A] = float(w)
        total = math.fsum(support.values())
        if abs(total - 1.0) > default("prob_sum_tol"):
            raise SpaceValidationError(f"subset weights sum to {total:.15g}")
        object.__setattr__(self, "support", support)

    @classmethod
    def bernoulli(cls, p: float, m: int) -> SubsetMeasure:
        _check_p(p)
        return cls(m, {A: bernoulli_mass(A, p) for A in iter_subsets(m)})

    @classmethod
    def dirac(cls, A: SubsetIndex) -> SubsetMeasure:
        return cls(A.m, {A: 1.0})

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[SubsetIndex, float]], m: int) -> SubsetMeasure:
        support: dict[SubsetIndex, float] = {}
        for A, w in pairs:
            support[A] = support.get(A, 0.0) + w
        return cls(m, support)

    def mass(self, A: SubsetIndex) -> float:
        return self.support.get(A, 0.0)

    def mass_containing(self, B: SubsetIndex) -> float:
        """``mu({A : A ⊇ B})``: the eigenvalue of ``U_mu`` on H_B."""
        return math.fsum(w for A, w in self.support.items() if B.issubset(A))

    def __hash__(self) -> int:
        return hash((self.m, tuple(sorted((A.bits, w) for A, w in self.support.items()))))


def intersect_distribution(mu1: SubsetMeasure, mu2: SubsetMeasure) -> SubsetMeasure:
    """Law of ``A ∩ B`` for independent ``A ~ mu1``, ``B ~ mu2``."""
    if mu1.m != mu2.m:
        raise SpaceValidationError(f"measures over m={mu1.m} and m={mu2.m}")
    acc: dict[int, list[float]] = {}
    for A, wa in mu1.support.items():
        for B, wb in mu2.support.items():
            acc.setdefault(A.bits & B.bits, []).append(wa * wb)
    return SubsetMeasure(
        mu1.m, {SubsetIndex(bits, mu1.m): math.fsum(ws) for bits, ws in acc.items()}
    )


def _mask(flags: np.ndarray) -> int:
    return sum(1 << int(k) for k in np.flatnonzero(flags))


def _check_mask_width(m: int) -> None:
    if m > MASK_ARRAY_MAX_M:
        raise SpaceValidationError(
            f"int64 mask arrays hold at most {MASK_ARRAY_MAX_M} atoms, got m={m}; "
            "use the single-draw sampler"
        )


def sample_bernoulli(p: float, m: int, rng: np.random.Generator | int) -> SubsetIndex:
    """One subset, each atom kept independently with probability *p*."""
    _check_p(p)
    keep = _as_rng(rng, STREAM_A).random(m) < p
    return SubsetIndex(_mask(keep), m)


def sample_bernoulli_masks(
    p: float, m: int, n: int, rng: np.random.Generator | int
) -> np.ndarray:
    """*n* independent Bernoulli subsets as an int64 bitmask array."""
    _check_p(p)
    _check_mask_width(m)
    keep = _as_rng(rng, STREAM_A).random((n, m)) < p
    return keep.astype(np.int64) @ (1 << np.arange(m, dtype=np.int64))


def subset_process_clocks(m: int, rng: np.random.Generator | int, size: int | None = None) -> np.ndarray:
    """Exclusion times of the m atoms: independent rate-1 exponential clocks."""
    shape = (m,) if size is None else (size, m)
    return _as_rng(rng, STREAM_CLOCK).exponential(1.0, shape)


def simulate_subset_process(m: int, t: float, rng: np.random.Generator | int) -> SubsetIndex:
    """State at time *t* of the process that starts at the full set and drops each atom when its clock rings."""
    _check_t(t)
    alive = subset_process_clocks(m, rng) >= t
    return SubsetIndex(_mask(alive), m)


def simulate_subset_process_masks(
    m: int, t: float, n: int, rng: np.random.Generator | int
) -> np.ndarray:
    _check_t(t)
    _check_mask_width(m)
    alive = subset_process_clocks(m, rng, size=n) >= t
    return alive.astype(np.int64) @ (1 << np.arange(m, dtype=np.int64))


# ── Semigroup ─────────────────────────────────────────────────


def noise_operator_spectral(X: RandomVariable, t: float) -> RandomVariable:
    """``U_t X = sum_n e^{-nt} level_project(X, n)``."""
    _check_t(t)
    comps = level_components(X)
    factors = np.exp(-t * np.arange(X.space.m + 1))
    return RandomVariable(X.space, factors @ comps)


def generalized_noise(X: RandomVariable, mu: SubsetMeasure) -> RandomVariable:
    """``U_mu X = sum_A mu(A) E_A X``."""
    if mu.m != X.space.m:
        raise SpaceValidationError(f"measure over m={mu.m} on a space with m={X.space.m}")
    acc = np.zeros(X.space.total_states, dtype=np.complex128)
    for A, w in mu.support.items():
        if w:
            acc += w * cond_expect(X, A).values
    return RandomVariable(X.space, acc)


def noise_operator_averaging(X: RandomVariable, t: float) -> RandomVariable:
    """``U_t X = sum_A mu_p(A) E_A X`` with ``p = e^{-t}``: exhaustive, oracle use only."""
    p = keep_probability(t)
    limit = default("averaging_max_m")
    if X.space.m > limit:
        logger.warning("averaging path refused for m=%d", X.space.m)
        raise StateCapError(
            f"averaging path needs 2**m subset projections; m={X.space.m} exceeds {limit}"
        )
    return generalized_noise(X, SubsetMeasure.bernoulli(p, X.space.m))


def noise_operator(X: RandomVariable, t: float, method: str = "spectral") -> RandomVariable:
    """The noise semigroup ``U_t``; ``method`` is ``"spectral"`` or ``"averaging"``."""
    if method == "spectral":
        return noise_operator_spectral(X, t)
    if method == "averaging":
        return noise_operator_averaging(X, t)
    raise SpaceValidationError(f"unknown method '{method}'. Must be 'spectral' or 'averaging'")


def local_noise_operator(X: RandomVariable, A: SubsetIndex, t: float) -> RandomVariable:
    """``U_t^A ⊗ 1``: noise on the factors in *A* only, built factor by factor."""
    _check_t(t)
    space = X.space
    if A.m != space.m:
        raise SpaceValidationError(f"subset over m={A.m} on a space with m={space.m}")
    decay = math.exp(-t)
    tensor = X.tensor
    for k in A:
        mean = factor_mean(tensor, space, k)
        tensor = mean + decay * (tensor - mean)
    return RandomVariable(space, np.broadcast_to(tensor, space.shape).reshape(-1))


def generator_apply(X: RandomVariable) -> RandomVariable:
    """``N X = sum_n n level_project(X, n)``."""
    comps = level_components(X)
    return RandomVariable(X.space, np.arange(X.space.m + 1, dtype=np.float64) @ comps)


def noise_quadratic_form(X: RandomVariable, t: float) -> float:
    """``((1 - U_t) X, X)`` evaluated on the level weights."""
    _check_t(t)
    w = level_weights(X)
    return float(np.dot(1.0 - np.exp(-t * np.arange(len(w))), w))


def generator_form(X: RandomVariable) -> float:
    """``(N X, X)``."""
    w = level_weights(X)
    return float(np.dot(np.arange(len(w)), w))


def contraction_gap(X: RandomVariable, f: Callable[[float], float], t: float) -> float:
    """``((1-U_t)X, X) - ((1-U_t)f(X), f(X))``; non-negative for 1-Lipschitz *f*."""
    return noise_quadratic_form(X, t) - noise_quadratic_form(pointwise_map(f, X), t)


def contraction_gap_2d(
    X: RandomVariable, Y: RandomVariable, f: Callable[[float, float], float], t: float
) -> float:
    """Two-argument version; non-negative for *f* 1-Lipschitz in the Euclidean norm."""
    return (
        noise_quadratic_form(X, t)
        + noise_quadratic_form(Y, t)
        - noise_quadratic_form(pointwise_map(f, X, Y), t)
    )


# ── μ-averaged operators ──────────────────────────────────────


def mu_sup_p(mu: SubsetMeasure) -> float:
    """``max_k mu({A : k ∈ A})``: the largest eigenvalue of ``U_mu`` off the constants."""
    if mu.m < 1:
        raise SpaceValidationError("mu_sup_p needs m >= 1")
    return max(mu.mass_containing(SubsetIndex(1 << k, mu.m)) for k in range(mu.m))


def generalized_noise_bound(X: RandomVariable, mu: SubsetMeasure) -> float:
    """Slack of ``(U_mu X, X) <= (1-p)|E X|**2 + p ||X||**2``; non-negative up to rounding."""
    p = mu_sup_p(mu)
    form = inner(generalized_noise(X, mu), X).real
    return (1.0 - p) * abs(expectation(X)) ** 2 + p * norm(X) ** 2 - form


# ── Monte-Carlo resampling ────────────────────────────────────


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n_samples: int
    seed: int


def _draw_states(space: ProductSpace, rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, m) outcome indices drawn from the product measure by inverse CDF."""
    u = rng.random((n, space.m))
    coords = np.empty((n, space.m), dtype=np.int64)
    for k, f in enumerate(space.factors):
        cdf = np.cumsum(f.probs)
        coords[:, k] = np.minimum(np.searchsorted(cdf, u[:, k], side="right"), f.size - 1)
    return coords


def resample(
    space: ProductSpace, t: float, n: int, seed: int, chunk: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Flat state indices of n pairs ``(Y, Y')``: ``Y'_k = Y_k`` if atom k is kept, else an independent copy."""
    p = keep_probability(t)
    y = _draw_states(space, make_rng(seed, STREAM_Y, chunk), n)
    z = _draw_states(space, make_rng(seed, STREAM_Z, chunk), n)
    keep = make_rng(seed, STREAM_A, chunk).random((n, space.m)) < p
    y_prime = np.where(keep, y, z)
    return (
        np.ravel_multi_index(tuple(y.T), space.shape),
        np.ravel_multi_index(tuple(y_prime.T), space.shape),
    )


def _mc_chunk(
    values: np.ndarray, space: ProductSpace, t: float, n: int, seed: int, chunk: int
) -> tuple[int, float, float]:
    idx, idx_prime = resample(space, t, n, seed, chunk)
    d = 0.5 * np.abs(values[idx] - values[idx_prime]) ** 2
    mean = float(d.mean())
    return n, mean, float(np.sum((d - mean) ** 2))


def mc_noise_form(
    X: RandomVariable,
    t: float,
    n_samples: int,
    seed: int,
    *,
    n_jobs: int = 1,
    chunk_size: int | None = None,
) -> MCEstimate:
    """Unbiased estimate of ``((1 - U_t) X, X)`` as ``mean(|X(Y) - X(Y')|**2) / 2``.

    Samples are drawn in fixed-size chunks, each on its own sub-stream, and
    merged in chunk order, so the result does not depend on *n_jobs*.
    """
    if n_samples < 1:
        raise SpaceValidationError("n_samples must be at least 1")
    _check_t(t)
    chunk_size = chunk_size or int(default("mc_chunk_size"))
    n_chunks = -(-n_samples // chunk_size)
    sizes = [min(chunk_size, n_samples - c * chunk_size) for c in range(n_chunks)]
    logger.debug("mc_noise_form: %d samples in %d chunks, n_jobs=%d", n_samples, n_chunks, n_jobs)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_mc_chunk)(X.values, X.space, t, sizes[c], seed, c) for c in range(n_chunks)
    )
    # Chan et al. pairwise merge of (count, mean, M2), in chunk order
    count, mean, m2 = 0, 0.0, 0.0
    for n_b, mean_b, m2_b in parts:
        delta = mean_b - mean
        total = count + n_b
        mean += delta * n_b / total
        m2 += m2_b + delta * delta * count * n_b / total
        count = total
    stderr = math.sqrt(m2 / (count - 1) / count) if count > 1 else float("nan")
    return MCEstimate(mean, stderr, n_samples, seed)


# ── Sensitivity curves ────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class NoiseCurve:
    """The three sensitivity functionals on a time grid."""

    t_grid: np.ndarray
    dist: np.ndarray  # ||X - U_t X||
    norm_drop: np.ndarray  # ||X|| - ||U_t X||
    quad_form: np.ndarray  # ((1 - U_t) X, X)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.t_grid,
                "dist": self.dist,
                "norm_drop": self.norm_drop,
                "quad_form": self.quad_form,
            }
        )

    __hash__ = None  # type: ignore[assignment]


def check_t_grid(t_grid: Iterable[float], *, strict: bool = False) -> np.ndarray:
    grid = np.asarray(list(t_grid), dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise SpaceValidationError("t grid must be a non-empty list of times")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise SpaceValidationError("t grid must contain finite non-negative times")
    steps = np.diff(grid)
    if np.any(steps <= 0) if strict else np.any(steps < 0):
        raise SpaceValidationError("t grid must be sorted" + (" strictly increasing" if strict else ""))
    return grid


def sensitivity_curves(X: RandomVariable, t_grid: Iterable[float]) -> NoiseCurve:
    """Exact ``||X - U_t X||``, ``||X|| - ||U_t X||`` and ``((1-U_t)X, X)`` via the level weights."""
    grid = check_t_grid(t_grid)
    w = level_weights(X)
    decay = np.exp(-np.outer(grid, np.arange(len(w))))  # (T, m+1)
    dist = np.sqrt(np.maximum(((1.0 - decay) ** 2) @ w, 0.0))
    norm_drop = math.sqrt(float(w.sum())) - np.sqrt(np.maximum((decay**2) @ w, 0.0))
    quad = (1.0 - decay) @ w
    return NoiseCurve(grid, dist, norm_drop, quad)
