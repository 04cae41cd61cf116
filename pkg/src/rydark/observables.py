"""Scalar quantities extracted from density matrices.

All populations are real overlaps <psi|rho|psi>; purity is Tr[rho^2].
"Fidelity" throughout means dark-state population, never the square-root
Uhlmann form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hilbert import HilbertSpace, symmetric_states
from .model import AtomScheme, ConfigError
from .operators import DensityMatrix, StateVector, dark_state

OBSERVABLE_KINDS = ("projector-population", "purity", "pure-state-fidelity", "level-population")


@dataclass(eq=False)
class ObservableSpec:
    name: str
    kind: str
    target: np.ndarray | str | None = None

    def __post_init__(self) -> None:
        if self.kind not in OBSERVABLE_KINDS:
            raise ConfigError(f"observable kind {self.kind!r} unknown")


def _overlap(rho: np.ndarray, vector: np.ndarray) -> float:
    value = complex(vector.conj() @ rho @ vector)
    if abs(value.imag) > 1e-10:
        raise RuntimeError(f"population has imaginary part {value.imag:.3e}")
    return value.real


def dark_state_population(rho: DensityMatrix, psi_d: StateVector) -> float:
    """<psi_D| rho |psi_D>."""
    if rho.space.dim != psi_d.space.dim:
        raise ConfigError("dark_state_population: state and rho live on different spaces")
    return _overlap(rho.matrix, psi_d.vector)


def purity(rho: DensityMatrix) -> float:
    """Tr[rho^2]; 1 for pure states, 1/d for the maximally mixed state."""
    value = complex(np.trace(rho.matrix @ rho.matrix))
    return value.real


def w_state_population(rho: DensityMatrix, space: HilbertSpace) -> float:
    """Population of the collective W-state |S> = (1/sqrt(N)) sum_k |S_k>."""
    if rho.space.dim != space.dim:
        raise ConfigError("w_state_population: rho does not live on the given space")
    return _overlap(rho.matrix, symmetric_states(space)["S"])


def composite_dark_population(rho: DensityMatrix, space: HilbertSpace,
                              omega_R: float, omega_M: float) -> float:
    """Overlap with the 2N-atom dark state embedded in a composite space
    (|G> -> G|G, the S_k enumerated across both ensembles)."""
    if space.kind != "composite":
        raise ConfigError("composite_dark_population: needs a composite space")
    left, right = space.factors
    psi = dark_state(left.n_atoms + right.n_atoms, omega_R, omega_M, space)
    return dark_state_population(rho, psi)


def level_population(rho: DensityMatrix, label: str) -> float:
    idx = rho.space.index_of(label)
    return float(rho.matrix[idx, idx].real)


def make_observable(name: str, space: HilbertSpace, scheme: AtomScheme,
                    n_atoms: int) -> Callable[[np.ndarray], float]:
    """Resolve an observable name from a run config into a fast callable.

    Known names: P_D (dark-state population), purity, P_W (W-state
    population, restricted spaces), pop:<label> (basis-state population).
    """
    if name == "P_D":
        psi = dark_state(n_atoms, scheme.omega_R, scheme.omega_M, space).vector
        return lambda rho: _overlap(rho, psi)
    if name == "purity":
        return lambda rho: complex(np.trace(rho @ rho)).real
    if name == "P_W":
        target = symmetric_states(space)["S"]
        return lambda rho: _overlap(rho, target)
    if name.startswith("pop:"):
        idx = space.index_of(name[4:])
        return lambda rho: float(rho[idx, idx].real)
    raise ConfigError(f"observables: unknown name {name!r}")
