"""Dissipative preparation of entangled dark states in driven Rydberg ensembles."""

__version__ = "0.1.0"

from .model import (
    AtomScheme,
    ConfigError,
    CrossCouplings,
    EnsembleGeometry,
    PairCouplings,
    ResourceLimitError,
    ScenarioConfig,
    blockade_radius,
    normalize_units,
    denormalize_units,
    pairwise_couplings,
)
from .hilbert import (
    HilbertSpace,
    composite_space,
    full_space,
    restricted_space,
    subset_space,
    symmetric_states,
)
from .operators import (
    DensityMatrix,
    LindbladChannel,
    Liouvillian,
    QOperator,
    StateVector,
    collapse_operators,
    dark_state,
    dump_operator,
    hamiltonian_full,
    hamiltonian_restricted,
    liouvillian,
)
from .dynamics import (
    EffectiveDecayFit,
    IntegratorSettings,
    SteadyStateError,
    Trajectory,
    evolve,
    fit_effective_decay,
    steady_state,
    validate_state,
)
from .observables import (
    composite_dark_population,
    dark_state_population,
    purity,
    w_state_population,
)
