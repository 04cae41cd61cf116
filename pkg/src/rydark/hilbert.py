"""Basis construction and indexing for the three space families.

Full product spaces enumerate per-atom levels g, r, s (and e for 4-level
atoms) lexicographically with atom 0 as the most significant digit, so the
index of a label is plain positional base-`levels` arithmetic.  Restricted
single-excitation spaces use the fixed ordering [G, R_1..R_N, S_1..S_N];
composite spaces are left-major tensor products of two restricted spaces
with labels "left|right".  These orderings are frozen so operator matrices
and CSV outputs are reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .model import ConfigError, ResourceLimitError

LEVELS_3 = "grs"
LEVELS_4 = "grse"

#: hard cap on full-space dimension (default 4^6)
DIMENSION_CAP = 4096


@dataclass(frozen=True, eq=False)
class HilbertSpace:
    kind: str                      # "full-3" | "full-4" | "restricted" | "composite" | "custom"
    n_atoms: int                   # per ensemble for composite spaces
    labels: tuple
    index: Mapping[str, int] = field(repr=False)
    factors: tuple | None = None   # (left, right) for composite spaces

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise ConfigError(f"label {label!r} does not exist in this {self.kind} space") from None

    def basis_vector(self, label: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=complex)
        vec[self.index_of(label)] = 1.0
        return vec


def _make_space(kind: str, n_atoms: int, labels: Iterable[str], factors=None) -> HilbertSpace:
    labels = tuple(labels)
    index = MappingProxyType({label: i for i, label in enumerate(labels)})
    if len(index) != len(labels):
        raise ValueError("duplicate basis labels")
    return HilbertSpace(kind=kind, n_atoms=n_atoms, labels=labels, index=index, factors=factors)


def full_space(n_atoms: int, levels: int = 3, cap: int = DIMENSION_CAP) -> HilbertSpace:
    """Full product space of n_atoms atoms with 3 or 4 levels each."""
    if n_atoms < 1:
        raise ConfigError(f"n_atoms: must be >= 1, got {n_atoms}")
    if levels not in (3, 4):
        raise ConfigError(f"levels: must be 3 or 4, got {levels}")
    dim = levels**n_atoms
    if dim > cap:
        raise ResourceLimitError(
            f"full space dimension {levels}^{n_atoms} = {dim} exceeds the cap {cap}"
        )
    alphabet = LEVELS_3 if levels == 3 else LEVELS_4
    labels = []
    for idx in range(dim):
        digits = []
        rem = idx
        for _ in range(n_atoms):
            rem, digit = divmod(rem, levels)
            digits.append(alphabet[digit])
        labels.append("".join(reversed(digits)))
    return _make_space(f"full-{levels}", n_atoms, labels)


def restricted_space(n_atoms: int) -> HilbertSpace:
    """Blockade-restricted single-excitation space, dimension 2N+1."""
    if n_atoms < 1:
        raise ConfigError(f"n_atoms: must be >= 1, got {n_atoms}")
    labels = ["G"]
    labels += [f"R{k}" for k in range(1, n_atoms + 1)]
    labels += [f"S{k}" for k in range(1, n_atoms + 1)]
    return _make_space("restricted", n_atoms, labels)


def composite_space(left: HilbertSpace, right: HilbertSpace) -> HilbertSpace:
    """Left-major tensor product of two restricted spaces.

    index("a|b") = index(a) * dim(right) + index(b).
    """
    for name, space in (("left", left), ("right", right)):
        if space.kind != "restricted":
            raise ConfigError(f"composite_space: {name} factor must be restricted, got {space.kind}")
    labels = [f"{a}|{b}" for a in left.labels for b in right.labels]
    return _make_space("composite", left.n_atoms, labels, factors=(left, right))


def custom_space(labels: Iterable[str], n_atoms: int) -> HilbertSpace:
    """Space over an explicit ordered label list (scenario-specific bases)."""
    return _make_space("custom", n_atoms, labels)


def subset_space(parent: HilbertSpace, labels: Iterable[str]) -> tuple[HilbertSpace, np.ndarray]:
    """Custom space spanned by a subset of a parent basis (original order).

    Returns the new space and the parent indices of the retained labels, so
    operators on the parent can be projected by plain row/column selection.
    """
    keep = list(labels)
    missing = [l for l in keep if l not in parent.index]
    if missing:
        raise ConfigError(f"subset_space: labels not in parent: {missing[:5]}")
    order = np.array(sorted(parent.index[l] for l in keep), dtype=int)
    sub_labels = [parent.labels[i] for i in order]
    return _make_space("custom", parent.n_atoms, sub_labels), order


def restricted_label_to_full(label: str, n_atoms: int) -> str:
    """Embed G/R_k/S_k into the full-3 product basis (1-based atom index)."""
    sites = ["g"] * n_atoms
    if label != "G":
        level, k = label[0].lower(), int(label[1:])
        if not 1 <= k <= n_atoms:
            raise ConfigError(f"label {label!r} exceeds atom count {n_atoms}")
        sites[k - 1] = level
    return "".join(sites)


def embed_restricted_in_full(restricted: HilbertSpace, full: HilbertSpace) -> np.ndarray:
    """Indices of the restricted basis states inside a full-3/full-4 space,
    in restricted basis order."""
    if restricted.kind != "restricted":
        raise ConfigError("embed_restricted_in_full: first argument must be restricted")
    if restricted.n_atoms != full.n_atoms:
        raise ConfigError("embed_restricted_in_full: atom counts differ")
    return np.array(
        [full.index_of(restricted_label_to_full(l, restricted.n_atoms)) for l in restricted.labels],
        dtype=int,
    )


def symmetric_states(space: HilbertSpace) -> dict[str, np.ndarray]:
    """Unit-norm uniform superpositions over the R_k and the S_k states."""
    if space.kind != "restricted":
        raise ConfigError(f"symmetric_states: needs a restricted space, got {space.kind}")
    n = space.n_atoms
    r_sym = np.zeros(space.dim, dtype=complex)
    s_sym = np.zeros(space.dim, dtype=complex)
    for k in range(1, n + 1):
        r_sym[space.index_of(f"R{k}")] = 1.0
        s_sym[space.index_of(f"S{k}")] = 1.0
    return {"R_sym": r_sym / np.sqrt(n), "S": s_sym / np.sqrt(n)}
