"""Dyson model toolkit: exact enumeration, seeded Monte Carlo and the one-sided gap experiments."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("dyson-lab")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .model import (
    ALPHA_STAR,
    BoundaryRule,
    CapacityError,
    ConditioningPattern,
    Configuration,
    DomainError,
    DysonError,
    ModelSpec,
    SpecificationError,
    SummabilityError,
    Window,
    alternating_block_energy,
    coupling,
    flip_delta,
    single_site_spec,
    uas_tail,
    window_energy,
)
from .exact import ExactDistribution, conditional, enumerate_window, fkg_dominates, magnetization
from .sampler import ChainState, RunStats, heatbath_sweep, metropolis_sweep, monotone_pair_sweep, run
from .markov import (
    ChainSpec,
    NNFieldSpec,
    chain_to_field,
    erasure_entropy_density,
    field_conditional,
    field_to_chain,
    g_function,
    ks_entropy,
)
