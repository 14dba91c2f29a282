"""Boltzmann generators for small 2D particle systems.

Two interchangeable exact-likelihood flows over a double-well many-body
potential: an equivariant continuous flow whose density inherits the
energy's permutation/rotation/translation symmetries, and an affine
coupling baseline that deliberately does not.  Plus the machinery around
them: a mean-free Gaussian prior, Metropolis-Hastings data generation,
likelihood and reverse-KL training, importance reweighting, and
second-order energy minimization for discovering metastable states.
"""

from .coupling import CouplingFlow
from .energy import DoubleWell, DoubleWellParams, EnergyModel, GaussianEnergy
from .eqflow import EquivariantFlow, radial_divergence, radial_dynamics
from .flowbase import FlowModel
from .generator import (
    MinimumRecord,
    WeightedSample,
    distinct_minima,
    effective_sample_size,
    generate,
    minimize_energy,
    minimize_many,
    reweighted_expectation,
    signature,
)
from .geometry import (
    Permutation,
    Rotation,
    Translation,
    apply_group,
    as_configuration,
    compose,
    pairwise_distances,
    random_group_element,
    remove_mean,
)
from .mcmc import ChainResult, McmcConfig, mh_step, perturb_minimum, run_chain
from .params import ParamStore
from .prior import MeanFreePrior
from .radialnet import RadialNet
from .training import Adam, Checkpoint, TrainConfig, kl_loss, nll_loss, train_loop

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "ChainResult",
    "Checkpoint",
    "CouplingFlow",
    "DoubleWell",
    "DoubleWellParams",
    "EnergyModel",
    "EquivariantFlow",
    "FlowModel",
    "GaussianEnergy",
    "McmcConfig",
    "MeanFreePrior",
    "MinimumRecord",
    "ParamStore",
    "Permutation",
    "RadialNet",
    "Rotation",
    "TrainConfig",
    "Translation",
    "WeightedSample",
    "apply_group",
    "as_configuration",
    "compose",
    "distinct_minima",
    "effective_sample_size",
    "generate",
    "kl_loss",
    "mh_step",
    "minimize_energy",
    "minimize_many",
    "nll_loss",
    "pairwise_distances",
    "perturb_minimum",
    "radial_divergence",
    "radial_dynamics",
    "random_group_element",
    "remove_mean",
    "reweighted_expectation",
    "run_chain",
    "signature",
    "train_loop",
]
