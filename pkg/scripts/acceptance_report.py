"""Run the acceptance checks end-to-end and print one PASS/FAIL line per check.

Each check draws its own random spaces from a fixed seed, so the report is
reproducible. Exit status is 0 only if every check passes.

Usage: python scripts/acceptance_report.py [--quick]
"""

from __future__ import annotations

import argparse
import itertools
import math
import sys
import time
from collections.abc import Callable
from pathlib import Path

import numpy as np
from tqdm import tqdm

# Ensure project root is on the path
PROJECT_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT_ROOT / "src"))

from noise_lab.efron_stein import cond_expect, decompose, inclusion_exclusion_component, is_in_H1
from noise_lab.errors import ToleranceError
from noise_lab.noise import (
    SubsetMeasure,
    contraction_gap,
    contraction_gap_2d,
    generalized_noise_bound,
    intersect_distribution,
    mc_noise_form,
    mu_sup_p,
    noise_operator,
    noise_quadratic_form,
)
from noise_lab.space import (
    FactorSpace,
    ProductSpace,
    RandomVariable,
    SubsetIndex,
    build_space,
    inner,
    iter_subsets,
    norm,
)
from noise_lab.towers import Partition, Tower, all_partitions, check_monotone, h1_partition_test, tower_forms
from noise_lab.zp_walk import build_walk_space, character, closed_form_norm, increment

# ── Configuration ────────────────────────────────────────────

SEED = 20240607
TOL = 1e-10


def _space(rng: np.random.Generator, m_max: int = 4, size_max: int = 3, m_min: int = 1) -> ProductSpace:
    m = int(rng.integers(m_min, m_max + 1))
    factors = []
    for _ in range(m):
        w = rng.uniform(0.2, 1.0, int(rng.integers(2, size_max + 1)))
        factors.append(FactorSpace(tuple(range(len(w))), w / w.sum()))
    return build_space(factors)


def _rv(space: ProductSpace, rng: np.random.Generator, real: bool = False) -> RandomVariable:
    v = rng.standard_normal(space.total_states)
    if not real:
        v = v + 1j * rng.standard_normal(space.total_states)
    return RandomVariable(space, v)


def _h1(space: ProductSpace, rng: np.random.Generator) -> RandomVariable:
    total = np.zeros(space.shape)
    for k, f in enumerate(space.factors):
        g = rng.standard_normal(f.size)
        g -= np.dot(f.probs, g)
        shape = [1] * space.m
        shape[k] = f.size
        total = total + g.reshape(shape)
    return RandomVariable(space, total.reshape(-1))


# ── Checks ───────────────────────────────────────────────────


def check_lattice(rng, quick):
    worst = 0.0
    for _ in range(5 if quick else 20):
        X = _rv(_space(rng), rng)
        for A, B in itertools.product(iter_subsets(X.space.m), repeat=2):
            worst = max(worst, norm(cond_expect(cond_expect(X, B), A) - cond_expect(X, A & B)))
    return worst <= TOL, f"max defect {worst:.2e}"


def check_decomposition(rng, quick):
    worst = 0.0
    for _ in range(20 if quick else 100):
        X = _rv(_space(rng), rng)
        dec = decompose(X)
        worst = max(worst, norm(dec.reconstruct() - X))
        comps = list(dec.components.items())
        for (A, a), (_, b) in itertools.combinations(comps, 2):
            worst = max(worst, abs(inner(a, b)))
        for A, a in comps:
            worst = max(worst, norm(a - inclusion_exclusion_component(X, A)))
    return worst <= TOL, f"max defect {worst:.2e}"


def check_semigroup(rng, quick):
    worst = 0.0
    for m in range(1, 7):
        X = _rv(build_space([FactorSpace.uniform((0, 1))] * m), rng)
        for s, t in itertools.product((0.1, 0.5, 1.3), repeat=2):
            worst = max(worst, norm(noise_operator(X, t) - noise_operator(X, t, "averaging")))
            worst = max(worst, norm(noise_operator(noise_operator(X, s), t) - noise_operator(X, s + t)))
    return worst <= TOL, f"max defect {worst:.2e}"


def check_convolution(rng, quick):
    worst = 0.0
    for m in range(1, 7):
        for p1, p2 in itertools.product((0.3, 0.7), repeat=2):
            conv = intersect_distribution(SubsetMeasure.bernoulli(p1, m), SubsetMeasure.bernoulli(p2, m))
            target = SubsetMeasure.bernoulli(p1 * p2, m)
            worst = max(worst, max(abs(conv.mass(A) - target.mass(A)) for A in iter_subsets(m)))
    return worst <= 1e-12, f"max defect {worst:.2e}"


def check_walk(rng, quick):
    worst = 0.0
    m_top = 6 if quick else 10
    for p, t in itertools.product((3, 5, 7), (0.1, 0.5, 1.0)):
        for m in range(1, m_top + 1):
            ws = build_walk_space(p, m)
            worst = max(worst, abs(norm(noise_operator(character(ws), t)) - closed_form_norm(p, m, t)))
            if m > 1:
                inc = increment(ws, 1)
                worst = max(worst, abs(norm(noise_operator(inc, t)) - math.exp(-t)))
    ratios = [closed_form_norm(5, m + 1, 0.5) / closed_form_norm(5, m, 0.5) for m in range(1, m_top)]
    decays = max(ratios) < 1.0 and np.allclose(ratios, ratios[0])
    return worst <= TOL and decays, f"max defect {worst:.2e}, ratio {ratios[0]:.6f}"


def check_monte_carlo(rng, quick):
    n_cases = 5 if quick else 20
    z = []
    for case in range(n_cases):
        X = _rv(_space(rng), rng)
        t = float(rng.uniform(0.1, 2.0))
        est = mc_noise_form(X, t, 100_000, seed=SEED + case)
        z.append(abs(est.estimate - noise_quadratic_form(X, t)) / est.stderr)
    outside = int(np.sum(np.array(z) > 3.0))
    return outside <= max(1, n_cases // 20), f"{outside}/{n_cases} beyond 3 stderr, max z {max(z):.2f}"


def check_contraction(rng, quick):
    fs = [np.abs, np.sin, lambda x: np.clip(x, -0.5, 0.5)]
    fs2 = [max, min, lambda x, y: math.hypot(x, y)]
    worst = 0.0
    for i in range(50 if quick else 200):
        X = _rv(_space(rng), rng, real=True)
        worst = min(worst, contraction_gap(X, fs[i % 3], float(rng.uniform(0.01, 3.0))))
    for i in range(10 if quick else 50):
        space = _space(rng)
        X, Y = _rv(space, rng, real=True), _rv(space, rng, real=True)
        worst = min(worst, contraction_gap_2d(X, Y, fs2[i % 3], float(rng.uniform(0.01, 3.0))))
    return worst >= -TOL, f"min gap {worst:.2e}"


def _refine(P: Partition, rng) -> Partition:
    blocks = []
    for b in P.blocks:
        for k in b.members:
            if not blocks or rng.random() < 0.5 or not (blocks[-1] & b.bits):
                blocks.append(1 << k)
            else:
                blocks[-1] |= 1 << k
    return Partition(tuple(SubsetIndex(x, P.m) for x in blocks), P.m)


def check_towers(rng, quick):
    violations = 0
    for _ in range(50 if quick else 200):
        X = _rv(_space(rng, m_max=5, size_max=2), rng)
        parts = all_partitions(X.space.m)
        coarse = parts[int(rng.integers(0, len(parts)))]
        try:
            check_monotone(X, float(rng.uniform(0.05, 2.0)), coarse, _refine(coarse, rng), tol=TOL)
        except ToleranceError:
            violations += 1
    X = _rv(build_space([FactorSpace.uniform((0, 1))] * 4), rng)
    a = Tower.parse("0,1,2,3;0,1|2|3;0|1|2|3")
    b = Tower.parse("0,1|2,3;0|1|2|3")
    ends = [tower_forms(X, tw, 0.5)["u_form"].iloc[-1] for tw in (a, b, a.interleave(b))]
    spread = max(ends) - min(ends)
    return violations == 0 and spread <= TOL, f"{violations} violations, terminal spread {spread:.2e}"


def check_h1_equivalence(rng, quick):
    mismatches = 0
    # m = 1 is excluded: the only partition is the full set, which every X passes.
    for i in range(30 if quick else 100):
        space = _space(rng, m_min=2)
        X = _h1(space, rng) if i % 2 == 0 else _rv(space, rng)
        if bool(is_in_H1(X, 1e-8)) != h1_partition_test(X, all_partitions(space.m), 1e-8):
            mismatches += 1
    single = _space(rng, m_max=1)
    X = _rv(single, rng) + 1.0
    degenerate = h1_partition_test(X, all_partitions(1), 1e-8) and is_in_H1(X, 1e-8).partition is None
    return mismatches == 0 and degenerate, f"{mismatches} mismatches (m >= 2)"


def check_generalized_bound(rng, quick):
    worst = math.inf
    for _ in range(50 if quick else 200):
        X = _rv(_space(rng), rng)
        m = X.space.m
        support = rng.choice(2**m, size=min(2**m, 3), replace=False)
        w = rng.uniform(0.1, 1.0, len(support))
        mu = SubsetMeasure.from_pairs([(SubsetIndex(int(b), m), float(x)) for b, x in zip(support, w / w.sum())], m)
        worst = min(worst, generalized_noise_bound(X, mu))
    X = _rv(_space(rng), rng)
    p = 0.4
    extremal = SubsetMeasure.from_pairs(
        [(SubsetIndex.empty(X.space.m), 1 - p), (SubsetIndex.full(X.space.m), p)], X.space.m
    )
    equality = abs(generalized_noise_bound(X, extremal)) <= TOL and abs(mu_sup_p(extremal) - p) <= 1e-15
    return worst >= -TOL and equality, f"min slack {worst:.2e}"


CHECKS: list[tuple[str, Callable]] = [
    ("lattice law E_A E_B = E_(A∩B)", check_lattice),
    ("decomposition completeness", check_decomposition),
    ("semigroup consistency", check_semigroup),
    ("Bernoulli convolution", check_convolution),
    ("walk closed form", check_walk),
    ("Monte-Carlo fidelity", check_monte_carlo),
    ("Lipschitz contraction", check_contraction),
    ("tower monotonicity", check_towers),
    ("H1 partition equivalence", check_h1_equivalence),
    ("generalized noise bound", check_generalized_bound),
]


def main() -> None:
    parser = argparse.ArgumentParser(description="Run the acceptance checks and print PASS/FAIL lines.")
    parser.add_argument("--quick", action="store_true", help="Fewer random cases per check.")
    args = parser.parse_args()

    all_pass = True
    for i, (name, fn) in enumerate(tqdm(CHECKS, desc="Checks", disable=not sys.stderr.isatty()), start=1):
        rng = np.random.default_rng(SEED + i)
        t0 = time.perf_counter()
        ok, detail = fn(rng, args.quick)
        all_pass &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {i:2d}. {name:<32s} {detail}  ({time.perf_counter() - t0:.1f}s)")
    sys.exit(0 if all_pass else 1)


if __name__ == "__main__":
    main()
