"""noise-lab: noise stability and sensitivity on finite product probability spaces."""

__version__ = "0.1.0"

from .efron_stein import (
    Decomposition,
    H1Report,
    cond_expect,
    decompose,
    is_in_H1,
    level_project,
    level_weights,
    project_HA,
    wick_product,
)
from .errors import (
    InputParseError,
    NoiseLabError,
    SpaceValidationError,
    StateCapError,
    ToleranceError,
)
from .noise import (
    NoiseCurve,
    SubsetMeasure,
    bernoulli_mass,
    generalized_noise,
    generator_apply,
    intersect_distribution,
    mc_noise_form,
    mu_sup_p,
    noise_operator,
    sample_bernoulli,
    sensitivity_curves,
    simulate_subset_process,
)
from .space import (
    FactorSpace,
    ProductSpace,
    RandomVariable,
    SubsetIndex,
    build_space,
    expectation,
    inner,
    marginal_average,
    norm,
    pointwise_map,
)
from .towers import (
    Partition,
    Tower,
    check_monotone,
    coarse_level_project,
    coarse_noise_operator,
    h1_partition_test,
    saturation,
)
from .zp_walk import (
    WalkSpace,
    build_walk_space,
    character,
    closed_form_norm,
    rotation_average,
    sensitivity_decay_table,
    walk_h1_basis,
)

__all__ = [
    "Decomposition",
    "FactorSpace",
    "H1Report",
    "InputParseError",
    "NoiseCurve",
    "NoiseLabError",
    "Partition",
    "ProductSpace",
    "RandomVariable",
    "SpaceValidationError",
    "StateCapError",
    "SubsetIndex",
    "SubsetMeasure",
    "ToleranceError",
    "Tower",
    "WalkSpace",
    "bernoulli_mass",
    "build_space",
    "build_walk_space",
    "character",
    "check_monotone",
    "closed_form_norm",
    "coarse_level_project",
    "coarse_noise_operator",
    "cond_expect",
    "decompose",
    "expectation",
    "generalized_noise",
    "generator_apply",
    "h1_partition_test",
    "inner",
    "intersect_distribution",
    "is_in_H1",
    "level_project",
    "level_weights",
    "marginal_average",
    "mc_noise_form",
    "mu_sup_p",
    "noise_operator",
    "norm",
    "pointwise_map",
    "project_HA",
    "rotation_average",
    "sample_bernoulli",
    "saturation",
    "sensitivity_curves",
    "sensitivity_decay_table",
    "simulate_subset_process",
    "walk_h1_basis",
    "wick_product",
]
