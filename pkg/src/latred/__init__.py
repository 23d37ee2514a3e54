"""Lattice reduction and perturbation-reduction for unconstrained submodular optimization."""

from latred.core import (
    ElementSet,
    GroundSet,
    Lattice,
    ModularWeights,
    derive_seed,
    lattice_membership,
    modular_eval,
    uniform_noise,
)
from latred.oracles import SetFunction, verify_submodularity
from latred.perturbation import (
    Perturbation,
    perturbed_oracle,
    pr_maximize,
    pr_minimize,
    scale_ratio,
)
from latred.reduction import (
    lattice_stats,
    reduce_max,
    reduce_min,
    reducibility_index,
    reduction_rate,
)

__version__ = "0.1.0"

__all__ = [
    "ElementSet",
    "GroundSet",
    "Lattice",
    "ModularWeights",
    "Perturbation",
    "SetFunction",
    "derive_seed",
    "lattice_membership",
    "lattice_stats",
    "modular_eval",
    "perturbed_oracle",
    "pr_maximize",
    "pr_minimize",
    "reduce_max",
    "reduce_min",
    "reducibility_index",
    "reduction_rate",
    "scale_ratio",
    "uniform_noise",
    "verify_submodularity",
]
