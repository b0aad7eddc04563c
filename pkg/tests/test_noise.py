"""Tests for noise_lab.noise: subset measures, the semigroup, its generator and the MC estimator."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import expm

from noise_lab.efron_stein import cond_expect
from noise_lab.errors import SpaceValidationError, StateCapError
from noise_lab.noise import (
    SubsetMeasure,
    bernoulli_mass,
    check_t_grid,
    contraction_gap,
    contraction_gap_2d,
    generalized_noise,
    generalized_noise_bound,
    generator_apply,
    generator_form,
    intersect_distribution,
    keep_probability,
    local_noise_operator,
    make_rng,
    mc_noise_form,
    mu_sup_p,
    noise_operator,
    noise_quadratic_form,
    resample,
    sample_bernoulli,
    sample_bernoulli_masks,
    sensitivity_curves,
    simulate_subset_process,
    simulate_subset_process_masks,
)
from noise_lab.space import (
    FactorSpace,
    RandomVariable,
    SubsetIndex,
    build_space,
    constant,
    coordinate,
    expectation,
    inner,
    iter_subsets,
    norm,
)

TOL = 1e-10


def _S(members, m):
    return SubsetIndex.from_members(members, m)


# ── Subset measures ───────────────────────────────────────────


@pytest.mark.parametrize(
    "p, expected",
    [(0.5, 0.125), (0.9, 0.081)],
)
def test_bernoulli_mass(p, expected):
    assert bernoulli_mass(_S([0, 1], 3), p) == pytest.approx(expected)


def test_bernoulli_p_one():
    mu = SubsetMeasure.bernoulli(1.0, 3)
    assert mu.mass(SubsetIndex.full(3)) == 1.0
    assert all(mu.mass(A) == 0.0 for A in iter_subsets(3) if A != SubsetIndex.full(3))


def test_bernoulli_mass_rejects_bad_p():
    with pytest.raises(SpaceValidationError, match=r"\[0, 1\]"):
        bernoulli_mass(SubsetIndex.empty(2), 1.5)


def test_subset_measure_must_sum_to_one():
    with pytest.raises(SpaceValidationError, match="sum to 0.5"):
        SubsetMeasure(2, {SubsetIndex.empty(2): 0.5})


def test_intersect_small_example():
    half = SubsetMeasure.bernoulli(0.5, 1)
    conv = intersect_distribution(half, half)
    assert conv.mass(_S([0], 1)) == pytest.approx(0.25)
    assert conv.mass(SubsetIndex.empty(1)) == pytest.approx(0.75)


def test_intersect_with_full_set_is_identity():
    mu = SubsetMeasure.bernoulli(0.3, 3)
    conv = intersect_distribution(SubsetMeasure.dirac(SubsetIndex.full(3)), mu)
    for A in iter_subsets(3):
        assert conv.mass(A) == pytest.approx(mu.mass(A), abs=1e-15)


@pytest.mark.parametrize("m", range(1, 7))
@pytest.mark.parametrize("p1, p2", [(0.3, 0.3), (0.3, 0.7), (0.7, 0.7)])
def test_bernoulli_convolution(m, p1, p2):
    conv = intersect_distribution(SubsetMeasure.bernoulli(p1, m), SubsetMeasure.bernoulli(p2, m))
    target = SubsetMeasure.bernoulli(p1 * p2, m)
    for A in iter_subsets(m):
        assert abs(conv.mass(A) - target.mass(A)) <= 1e-12


# ── Sampling ──────────────────────────────────────────────────


def test_sample_bernoulli_extremes():
    assert sample_bernoulli(0.0, 5, 1) == SubsetIndex.empty(5)
    assert sample_bernoulli(1.0, 5, 1) == SubsetIndex.full(5)


def test_sample_bernoulli_frequencies():
    masks = sample_bernoulli_masks(0.5, 8, 100_000, make_rng(7, stream=2))
    freq = [np.mean((masks >> k) & 1) for k in range(8)]
    assert np.allclose(freq, 0.5, atol=0.01)


def test_subset_process():
    assert simulate_subset_process(6, 0.0, 3) == SubsetIndex.full(6)
    assert simulate_subset_process(6, 50.0, 3) == SubsetIndex.empty(6)
    masks = simulate_subset_process_masks(6, 0.5, 100_000, make_rng(11, stream=3))
    freq = [np.mean((masks >> k) & 1) for k in range(6)]
    assert np.allclose(freq, math.exp(-0.5), atol=0.01)


@pytest.mark.parametrize("m", [63, 64, 100])
def test_samplers_beyond_int64_width(m):
    assert sample_bernoulli(1.0, m, 0) == SubsetIndex.full(m)
    assert sample_bernoulli(0.0, m, 0) == SubsetIndex.empty(m)
    assert simulate_subset_process(m, 0.0, 0) == SubsetIndex.full(m)
    drawn = sample_bernoulli(0.5, m, 5)
    assert drawn.m == m and 0 < len(drawn) < m


def test_mask_arrays_refuse_wide_spaces():
    assert sample_bernoulli_masks(1.0, 63, 2, 0).tolist() == [(1 << 63) - 1] * 2
    with pytest.raises(SpaceValidationError, match="at most 63 atoms"):
        sample_bernoulli_masks(0.5, 64, 10, 0)
    with pytest.raises(SpaceValidationError, match="at most 63 atoms"):
        simulate_subset_process_masks(64, 0.5, 10, 0)


def test_make_rng_streams_are_distinct_and_reproducible():
    a = make_rng(42, stream=0).random(4)
    assert np.array_equal(a, make_rng(42, stream=0).random(4))
    assert not np.array_equal(a, make_rng(42, stream=1).random(4))
    assert not np.array_equal(a, make_rng(42, stream=0, chunk=1).random(4))


def test_make_rng_rejects_bad_seed():
    with pytest.raises(SpaceValidationError, match="64-bit"):
        make_rng(-1)


# ── Semigroup ─────────────────────────────────────────────────


def test_noise_at_zero_is_identity(make_space, make_rv):
    space = make_space()
    X = make_rv(space)
    assert norm(noise_operator(X, 0.0) - X) <= TOL


def test_noise_on_h1(make_space, make_h1):
    space = make_space(m=3)
    X = make_h1(space)
    for t in (0.1, 0.7, 2.0):
        assert norm(noise_operator(X, t) - math.exp(-t) * X) <= TOL


@pytest.mark.parametrize("m", [1, 2, 4])
def test_noise_on_centered_product(m):
    coin = FactorSpace((-1, 1), np.array([0.5, 0.5]))
    space = build_space([coin] * m)
    X = constant(space, 1.0)
    for k in range(m):
        X = X * coordinate(space, k)
    assert norm(noise_operator(X, 0.4) - math.exp(-0.4 * m) * X) <= TOL


def test_spectral_and_averaging_agree(make_space, make_rv):
    for m in range(1, 7):
        space = make_space(m=m, max_size=2)
        X = make_rv(space)
        for t in (0.1, 0.5, 1.3):
            diff = noise_operator(X, t, "spectral") - noise_operator(X, t, "averaging")
            assert norm(diff) <= TOL


def test_averaging_refused_above_limit():
    coin = FactorSpace.uniform((0, 1))
    space = build_space([coin] * 13)
    X = coordinate(space, 0)
    with pytest.raises(StateCapError, match="m=13"):
        noise_operator(X, 0.5, "averaging")
    # the spectral path has no such limit
    assert norm(noise_operator(X, 0.5) - math.exp(-0.5) * X) <= TOL


def test_unknown_method(two_coins):
    with pytest.raises(SpaceValidationError, match="unknown method"):
        noise_operator(coordinate(two_coins, 0), 0.5, "fft")


def test_negative_t(two_coins):
    with pytest.raises(SpaceValidationError, match="non-negative"):
        noise_operator(coordinate(two_coins, 0), -0.1)


def test_semigroup_law(make_space, make_rv):
    for _ in range(10):
        space = make_space()
        X = make_rv(space)
        for s in (0.1, 0.5, 1.3):
            for t in (0.1, 0.5, 1.3):
                lhs = noise_operator(noise_operator(X, t), s)
                assert norm(lhs - noise_operator(X, s + t)) <= TOL


def test_noise_commutes_with_cond_expect(make_space, make_rv):
    for _ in range(5):
        space = make_space(m=3)
        X = make_rv(space)
        for A in iter_subsets(space.m):
            for t in (0.3, 1.1):
                lhs = cond_expect(noise_operator(X, t), A)
                assert norm(lhs - noise_operator(cond_expect(X, A), t)) <= TOL


def test_contraction_and_self_adjoint(make_space, make_rv):
    for _ in range(10):
        space = make_space()
        X, Y = make_rv(space), make_rv(space)
        UX = noise_operator(X, 0.6)
        assert norm(UX) <= norm(X) + 1e-12
        assert inner(UX, Y) == pytest.approx(inner(X, noise_operator(Y, 0.6)), abs=1e-12)


def test_matches_matrix_exponential(make_space):
    """U_t = exp(-tN), with N built column by column from generator_apply."""
    space = make_space(m=3)
    n = space.total_states
    N = np.column_stack([generator_apply(RandomVariable(space, np.eye(n)[i])).values for i in range(n)])
    rng = np.random.default_rng(5)
    X = RandomVariable(space, rng.standard_normal(n))
    for t in (0.2, 1.1):
        expected = expm(-t * N) @ X.values
        assert np.max(np.abs(noise_operator(X, t).values - expected)) <= 1e-9


def test_local_noise_operator(make_space, make_rv):
    space = make_space(m=3)
    X = make_rv(space)
    assert norm(local_noise_operator(X, SubsetIndex.full(3), 0.8) - noise_operator(X, 0.8)) <= TOL
    assert norm(local_noise_operator(X, SubsetIndex.empty(3), 0.8) - X) <= TOL
    # noise on disjoint blocks composes to the full operator
    A, B = _S([0], 3), _S([1, 2], 3)
    composed = local_noise_operator(local_noise_operator(X, A, 0.8), B, 0.8)
    assert norm(composed - noise_operator(X, 0.8)) <= TOL


# ── Generator ─────────────────────────────────────────────────


def test_generator_examples(two_coins):
    w1, w2 = coordinate(two_coins, 0), coordinate(two_coins, 1)
    assert norm(generator_apply(constant(two_coins, 4.0))) <= TOL
    assert norm(generator_apply(w1 * w2) - 2 * (w1 * w2)) <= TOL


def test_generator_additive_over_blocks(make_space, make_rv):
    """N = N^A ⊗ 1 + 1 ⊗ N^B on products of functions of disjoint blocks."""
    space = make_space(m=4)
    A, B = _S([0, 1], 4), _S([2, 3], 4)
    F = cond_expect(make_rv(space), A)
    G = cond_expect(make_rv(space), B)
    lhs = generator_apply(F * G)
    rhs = generator_apply(F) * G + F * generator_apply(G)
    assert norm(lhs - rhs) <= TOL


def test_generator_form_is_derivative(make_space, make_rv):
    space = make_space(m=3)
    X = make_rv(space)
    h = 1e-6
    slope = noise_quadratic_form(X, h) / h
    assert slope == pytest.approx(generator_form(X), rel=1e-4)


# ── μ-averaged operators ──────────────────────────────────────


def test_generalized_noise_examples(make_space, make_rv):
    space = make_space(m=3)
    X = make_rv(space)
    A0 = _S([0, 2], 3)
    assert norm(generalized_noise(X, SubsetMeasure.dirac(A0)) - cond_expect(X, A0)) <= TOL

    half = SubsetMeasure.from_pairs([(SubsetIndex.empty(3), 0.5), (SubsetIndex.full(3), 0.5)], 3)
    expected = 0.5 * constant(space, expectation(X)) + 0.5 * X
    assert norm(generalized_noise(X, half) - expected) <= TOL

    mu = SubsetMeasure.bernoulli(math.exp(-0.7), 3)
    assert norm(generalized_noise(X, mu) - noise_operator(X, 0.7)) <= TOL


def test_mu_sup_p_examples():
    assert mu_sup_p(SubsetMeasure.dirac(SubsetIndex.full(3))) == 1.0
    assert mu_sup_p(SubsetMeasure.dirac(SubsetIndex.empty(3))) == 0.0
    half = SubsetMeasure.from_pairs([(SubsetIndex.empty(3), 0.5), (SubsetIndex.full(3), 0.5)], 3)
    assert mu_sup_p(half) == pytest.approx(0.5)
    assert mu_sup_p(SubsetMeasure.bernoulli(0.3, 4)) == pytest.approx(0.3)


def _random_measure(rng, m):
    support = rng.choice(2**m, size=min(2**m, 4), replace=False)
    weights = rng.uniform(0.1, 1.0, len(support))
    weights /= weights.sum()
    return SubsetMeasure.from_pairs(
        [(SubsetIndex(int(b), m), float(w)) for b, w in zip(support, weights)], m
    )


@pytest.mark.slow
def test_generalized_noise_bound(make_space, make_rv, rng):
    for _ in range(200):
        space = make_space()
        X = make_rv(space)
        mu = _random_measure(rng, space.m)
        assert generalized_noise_bound(X, mu) >= -TOL


def test_generalized_noise_bound_equality(make_space, make_rv):
    space = make_space(m=3)
    X = make_rv(space)
    p = 0.35
    mu = SubsetMeasure.from_pairs([(SubsetIndex.empty(3), 1 - p), (SubsetIndex.full(3), p)], 3)
    assert mu_sup_p(mu) == pytest.approx(p)
    assert generalized_noise_bound(X, mu) == pytest.approx(0.0, abs=TOL)


# ── Contraction under Lipschitz maps ──────────────────────────

_LIPSCHITZ = [
    np.abs,
    np.sin,
    lambda x: np.clip(x, -0.5, 0.5),
    lambda x: 0.5 * x + 1.0,
    lambda x: np.maximum(x, 0.0),
]

_LIPSCHITZ_2D = [
    max,
    min,
    lambda x, y: math.sqrt(x * x + y * y),
    lambda x, y: (x + y) / math.sqrt(2.0),
]


@pytest.mark.slow
def test_contraction_property(make_space, make_rv, rng):
    for i in range(200):
        space = make_space()
        X = make_rv(space, real=True)
        f = _LIPSCHITZ[i % len(_LIPSCHITZ)]
        t = float(rng.uniform(0.01, 3.0))
        assert contraction_gap(X, f, t) >= -TOL


@pytest.mark.slow
def test_contraction_property_2d(make_space, make_rv, rng):
    for i in range(50):
        space = make_space()
        X, Y = make_rv(space, real=True), make_rv(space, real=True)
        f = _LIPSCHITZ_2D[i % len(_LIPSCHITZ_2D)]
        t = float(rng.uniform(0.01, 3.0))
        assert contraction_gap_2d(X, Y, f, t) >= -TOL


# ── Monte-Carlo ───────────────────────────────────────────────


def test_resample_keeps_everything_at_t_zero(two_coins):
    idx, idx_prime = resample(two_coins, 0.0, 1000, seed=3)
    assert np.array_equal(idx, idx_prime)


def test_mc_constant_is_zero(make_space):
    space = make_space(m=3)
    est = mc_noise_form(constant(space, 2.0), 0.5, 5000, seed=1)
    assert est.estimate == 0.0
    assert est.stderr == 0.0


def test_mc_single_coin():
    coin = FactorSpace((-1, 1), np.array([0.5, 0.5]))
    space = build_space([coin])
    X = coordinate(space, 0)
    est = mc_noise_form(X, math.log(2.0), 100_000, seed=42)
    assert abs(est.estimate - 0.5) <= 3 * est.stderr


@pytest.mark.slow
def test_mc_matches_exact(make_space, make_rv):
    """20 cases at n = 1e5: at most one outside 3 standard errors, none outside 4.5.

    "Within 3 standard errors" is read per case as a 99.7% event, so with 20
    independent cases a single excursion is expected about 5% of the time.
    One is allowed; the 4.5 bound still catches a biased estimator.
    """
    z_scores = []
    for case in range(20):
        space = make_space()
        X = make_rv(space)
        t = 0.25 + 0.1 * case
        est = mc_noise_form(X, t, 100_000, seed=1000 + case)
        exact = noise_quadratic_form(X, t)
        z_scores.append(abs(est.estimate - exact) / est.stderr)
    z = np.array(z_scores)
    assert np.sum(z > 3.0) <= 1, z
    assert np.all(z <= 4.5), z


def test_mc_independent_of_jobs_and_reproducible(make_space, make_rv):
    space = make_space(m=3)
    X = make_rv(space)
    a = mc_noise_form(X, 0.5, 10_000, seed=9, chunk_size=1000)
    b = mc_noise_form(X, 0.5, 10_000, seed=9, chunk_size=1000, n_jobs=2)
    c = mc_noise_form(X, 0.5, 10_000, seed=9, chunk_size=1000)
    assert a == b == c


def test_mc_rejects_zero_samples(two_coins):
    with pytest.raises(SpaceValidationError, match="n_samples"):
        mc_noise_form(coordinate(two_coins, 0), 0.5, 0, seed=1)


# ── Sensitivity curves ────────────────────────────────────────


def test_curves_constant(make_space):
    curve = sensitivity_curves(constant(make_space(m=2), 3.0), [0.0, 0.5, 2.0])
    assert np.allclose(curve.dist, 0.0)
    assert np.allclose(curve.norm_drop, 0.0, atol=1e-12)
    assert np.allclose(curve.quad_form, 0.0)


def test_curves_on_level_n(two_coins):
    X = coordinate(two_coins, 0) * coordinate(two_coins, 1)
    grid = np.linspace(0.0, 3.0, 7)
    curve = sensitivity_curves(X, grid)
    assert np.allclose(curve.quad_form, 1.0 - np.exp(-2.0 * grid))
    assert np.allclose(curve.dist, 1.0 - np.exp(-2.0 * grid))
    assert np.allclose(curve.norm_drop, 1.0 - np.exp(-2.0 * grid))


def test_curves_half_time_identity(make_space, make_rv):
    """((1 - U_t)X, X) = ||X||² - ||U_{t/2} X||²."""
    for _ in range(10):
        space = make_space()
        X = make_rv(space)
        grid = [0.0, 0.3, 1.0, 2.5]
        curve = sensitivity_curves(X, grid)
        for t, q in zip(grid, curve.quad_form):
            assert q == pytest.approx(norm(X) ** 2 - norm(noise_operator(X, t / 2)) ** 2, abs=TOL)
            assert q == pytest.approx(noise_quadratic_form(X, t), abs=TOL)


def test_curves_direct_definitions(make_space, make_rv):
    space = make_space(m=3)
    X = make_rv(space)
    curve = sensitivity_curves(X, [0.4])
    UX = noise_operator(X, 0.4)
    assert curve.dist[0] == pytest.approx(norm(X - UX), abs=TOL)
    assert curve.norm_drop[0] == pytest.approx(norm(X) - norm(UX), abs=TOL)
    assert list(curve.to_frame().columns) == ["t", "dist", "norm_drop", "quad_form"]


@pytest.mark.parametrize("grid", [[], [0.5, 0.2], [-0.1, 0.3]])
def test_bad_t_grid(grid):
    with pytest.raises(SpaceValidationError, match="t grid"):
        check_t_grid(grid)


def test_keep_probability():
    assert keep_probability(0.0) == 1.0
    assert keep_probability(math.log(2.0)) == pytest.approx(0.5)
