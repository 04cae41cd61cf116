"""Hamiltonians, jump operators, dark states, and the Liouvillian.

Matrices are dense numpy arrays below DENSE_LIMIT and scipy CSR at or above
it; both representations must agree and the tests check them against each
other.  The master equation is assembled in standard trace-preserving GKSL
form,

    rho_dot = -i[H, rho] + sum_k (C_k rho C_k^dag - 1/2 {C_k^dag C_k, rho}),

and vectorization is column-stacking throughout: vec(A rho B) =
(B^T kron A) vec(rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import HilbertSpace
from .model import AtomScheme, ConfigError, CrossCouplings, PairCouplings

#: spaces at or above this dimension use sparse operator storage
DENSE_LIMIT = 256

HERMITIAN_TOL = 1e-12

LEVEL_INDEX = {"g": 0, "r": 1, "s": 2, "e": 3}


def _max_abs(matrix) -> float:
    if sp.issparse(matrix):
        return 0.0 if matrix.nnz == 0 else float(np.max(np.abs(matrix.data)))
    return 0.0 if matrix.size == 0 else float(np.max(np.abs(matrix)))


def to_dense(matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


def to_sparse(matrix) -> sp.csr_matrix:
    return matrix.tocsr() if sp.issparse(matrix) else sp.csr_matrix(matrix)


@dataclass(eq=False)
class QOperator:
    """Complex square matrix attached to a Hilbert space."""

    space: HilbertSpace
    matrix: object
    hermitian: bool = False

    def __post_init__(self) -> None:
        shape = self.matrix.shape
        if shape != (self.space.dim, self.space.dim):
            raise ConfigError(f"operator shape {shape} does not match space dim {self.space.dim}")
        if self.hermitian:
            defect = _max_abs(self.matrix - self.matrix.conj().T)
            if defect >= HERMITIAN_TOL:
                raise ConfigError(f"operator flagged hermitian has defect {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.space.dim

    def dense(self) -> np.ndarray:
        return to_dense(self.matrix)


@dataclass(eq=False)
class LindbladChannel:
    """Jump operator with its rate already folded in (op = sqrt(rate) * structure)."""

    op: QOperator
    name: str = ""


@dataclass(eq=False)
class StateVector:
    space: HilbertSpace
    vector: np.ndarray

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=complex)
        if self.vector.shape != (self.space.dim,):
            raise ConfigError("state vector length does not match space dimension")
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > 1e-12:
            raise ConfigError(f"state vector is not unit norm (|norm - 1| = {abs(norm - 1):.3e})")

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.vector, self.vector.conj()))


@dataclass(eq=False)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self) -> None:
        self.matrix = np.asarray(to_dense(self.matrix), dtype=complex)
        if self.matrix.shape != (self.space.dim, self.space.dim):
            raise ConfigError("density matrix shape does not match space dimension")


@dataclass(eq=False)
class Liouvillian:
    """Superoperator matrix L (dim d^2) with rho_dot_vec = L rho_vec."""

    space: HilbertSpace
    matrix: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho, dtype=complex).flatten(order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = math.isqrt(v.shape[0])
    return np.asarray(v, dtype=complex).reshape((d, d), order="F")


# --- construction helpers -----------------------------------------------------

def op_from_elements(space: HilbertSpace, entries: Iterable[tuple], hermitian: bool = False) -> QOperator:
    """Operator from (bra_label, ket_label, value) triples; repeats add up."""
    rows, cols, vals = [], [], []
    for bra, ket, value in entries:
        rows.append(space.index_of(bra))
        cols.append(space.index_of(ket))
        vals.append(complex(value))
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(space.dim, space.dim), dtype=complex)
    matrix = coo.tocsr() if space.dim >= DENSE_LIMIT else coo.toarray()
    return QOperator(space, matrix, hermitian=hermitian)


def _level_matrix(levels: int, bra: str, ket: str) -> np.ndarray:
    out = np.zeros((levels, levels), dtype=complex)
    out[LEVEL_INDEX[bra], LEVEL_INDEX[ket]] = 1.0
    return out


def site_operator(space: HilbertSpace, atom: int, single: np.ndarray):
    """Place a single-atom operator on atom `atom` (0-based) of a full space."""
    if space.kind not in ("full-3", "full-4"):
        raise ConfigError(f"site_operator: needs a full product space, got {space.kind}")
    levels = 3 if space.kind == "full-3" else 4
    n = space.n_atoms
    if not 0 <= atom < n:
        raise ConfigError(f"site_operator: atom {atom} out of range for N = {n}")
    sparse = space.dim >= DENSE_LIMIT
    if sparse:
        left = sp.identity(levels**atom, dtype=complex, format="csr")
        right = sp.identity(levels**(n - 1 - atom), dtype=complex, format="csr")
        return sp.kron(sp.kron(left, sp.csr_matrix(single)), right, format="csr")
    left = np.eye(levels**atom, dtype=complex)
    right = np.eye(levels**(n - 1 - atom), dtype=complex)
    return np.kron(np.kron(left, single), right)


# --- Hamiltonians ---------------------------------------------------------------

def hamiltonian_full(scheme: AtomScheme, couplings: PairCouplings, space: HilbertSpace) -> QOperator:
    """Full product-space Hamiltonian in the rotating frame (all detunings zero).

    Single-atom part per atom k: Omega_R(|g><r| + h.c.) + Omega_M(|r><s| + h.c.),
    plus omega_E(|r><e| + h.c.) for 4-level atoms.  Each unordered pair (i, j)
    adds the diagonal van der Waals shifts V_rr |r_i r_j><r_i r_j| and
    V_ss |s_i s_j><s_i s_j| and the resonant exchange
    V_rs(|r_i s_j><s_i r_j| + h.c.), so the drive-free {rs, sr} block has
    eigenvalues +-V_rs.
    """
    if space.kind not in ("full-3", "full-4"):
        raise ConfigError(f"hamiltonian_full: needs a full space, got {space.kind}")
    if (space.kind == "full-4") != scheme.engineered:
        raise ConfigError(
            "hamiltonian_full: 4-level space requires the engineered omega_E/kappa "
            "block and vice versa"
        )
    levels = 3 if space.kind == "full-3" else 4
    n = space.n_atoms
    for name in ("v_rr", "v_ss", "v_rs"):
        if getattr(couplings, name).shape != (n, n):
            raise ConfigError(f"hamiltonian_full: {name} shape does not match N = {n}")

    drive = scheme.omega_R * _level_matrix(levels, "g", "r") \
        + scheme.omega_M * _level_matrix(levels, "r", "s")
    if scheme.engineered:
        drive = drive + scheme.omega_E * _level_matrix(levels, "r", "e")
    drive = drive + drive.conj().T

    h = None
    for k in range(n):
        term = site_operator(space, k, drive)
        h = term if h is None else h + term

    n_r = _level_matrix(levels, "r", "r")
    n_s = _level_matrix(levels, "s", "s")
    rs = _level_matrix(levels, "r", "s")
    sr = _level_matrix(levels, "s", "r")
    for i in range(n):
        for j in range(i + 1, n):
            if "rr" not in couplings.perfect_channels and couplings.v_rr[i, j] != 0.0:
                h = h + couplings.v_rr[i, j] * (site_operator(space, i, n_r) @ site_operator(space, j, n_r))
            if "ss" not in couplings.perfect_channels and couplings.v_ss[i, j] != 0.0:
                h = h + couplings.v_ss[i, j] * (site_operator(space, i, n_s) @ site_operator(space, j, n_s))
            if "rs" not in couplings.perfect_channels and couplings.v_rs[i, j] != 0.0:
                exchange = site_operator(space, i, rs) @ site_operator(space, j, sr)
                h = h + couplings.v_rs[i, j] * (exchange + exchange.conj().T)
    return QOperator(space, h, hermitian=True)


def hamiltonian_restricted(scheme: AtomScheme, space: HilbertSpace,
                           cross_couplings: CrossCouplings | None = None) -> QOperator:
    """Effective single-excitation Hamiltonian.

    On a restricted space this is exactly
    sum_k (Omega_R |G><R_k| + Omega_M |R_k><S_k| + h.c.).  On a composite
    space it is each factor's restricted Hamiltonian plus the finite
    inter-ensemble terms supplied by cross_couplings.
    """
    if space.kind == "restricted":
        entries = []
        for k in range(1, space.n_atoms + 1):
            entries.append(("G", f"R{k}", scheme.omega_R))
            entries.append((f"R{k}", "G", scheme.omega_R))
            entries.append((f"R{k}", f"S{k}", scheme.omega_M))
            entries.append((f"S{k}", f"R{k}", scheme.omega_M))
        return op_from_elements(space, entries, hermitian=True)

    if space.kind != "composite":
        raise ConfigError(f"hamiltonian_restricted: needs restricted or composite, got {space.kind}")
    if cross_couplings is None:
        raise ConfigError("hamiltonian_restricted: composite space needs cross_couplings")
    left, right = space.factors
    n_l, n_r = left.n_atoms, right.n_atoms
    for name in ("v_ss", "v_rs"):
        matrix = getattr(cross_couplings, name)
        if matrix.shape != (n_l, n_r):
            raise ConfigError(f"cross_couplings.{name}: expected shape ({n_l}, {n_r})")

    h_left = hamiltonian_restricted(scheme, left).dense()
    h_right = hamiltonian_restricted(scheme, right).dense()
    h = np.kron(h_left, np.eye(right.dim)) + np.kron(np.eye(left.dim), h_right)

    for i in range(1, n_l + 1):
        for j in range(1, n_r + 1):
            v_ss = cross_couplings.v_ss[i - 1, j - 1]
            if v_ss != 0.0:
                idx = space.index_of(f"S{i}|S{j}")
                h[idx, idx] += v_ss
            if cross_couplings.v_rr is not None:
                v_rr = cross_couplings.v_rr[i - 1, j - 1]
                if v_rr != 0.0:
                    idx = space.index_of(f"R{i}|R{j}")
                    h[idx, idx] += v_rr
            v_rs = cross_couplings.v_rs[i - 1, j - 1]
            if v_rs != 0.0:
                a = space.index_of(f"R{i}|S{j}")
                b = space.index_of(f"S{i}|R{j}")
                h[a, b] += v_rs
                h[b, a] += v_rs
    matrix = sp.csr_matrix(h) if space.dim >= DENSE_LIMIT else h
    return QOperator(space, matrix, hermitian=True)


# --- dark state ------------------------------------------------------------------

def _ground_and_s_labels(space: HilbertSpace) -> tuple[str, list]:
    if space.kind == "composite":
        left, right = space.factors
        s_labels = [f"S{k}|G" for k in range(1, left.n_atoms + 1)]
        s_labels += [f"G|S{k}" for k in range(1, right.n_atoms + 1)]
        return "G|G", s_labels
    if "G" in space.index:
        s_labels = sorted(
            (l for l in space.labels if l.startswith("S") and l[1:].isdigit()),
            key=lambda l: int(l[1:]),
        )
        return "G", s_labels
    # product-style labels ("gsgg" etc.) from full or subset spaces
    ground = "g" * space.n_atoms
    if ground in space.index:
        s_labels = sorted(
            (l for l in space.labels if l.count("s") == 1 and l.count("g") == space.n_atoms - 1),
            key=lambda l: l.index("s"),
        )
        return ground, s_labels
    raise ConfigError(f"dark_state: space has no recognizable ground label ({space.kind})")


def dark_state(n_atoms: int, omega_R: float, omega_M: float, space: HilbertSpace) -> StateVector:
    """The decoupled steady state: (Omega_M |G> - sqrt(N) Omega_R |S>) / Omega_N
    with Omega_N = sqrt(Omega_M^2 + N Omega_R^2) and |S> the uniform
    single-excitation state over the S_k."""
    if omega_R == 0.0 and omega_M == 0.0:
        raise ConfigError("dark_state: undefined for omega_R = omega_M = 0")
    g_label, s_labels = _ground_and_s_labels(space)
    if len(s_labels) != n_atoms:
        raise ConfigError(
            f"dark_state: space carries {len(s_labels)} S states but N = {n_atoms}"
        )
    omega_n = math.sqrt(omega_M**2 + n_atoms * omega_R**2)
    vector = np.zeros(space.dim, dtype=complex)
    vector[space.index_of(g_label)] = omega_M / omega_n
    for label in s_labels:
        vector[space.index_of(label)] = -omega_R / omega_n
    return StateVector(space, vector)


# --- jump operators --------------------------------------------------------------

def _restricted_channels(scheme: AtomScheme, space: HilbertSpace,
                         gamma_r_atoms: Sequence[float] | None) -> list:
    n = space.n_atoms
    channels = []
    base = scheme.gamma_r if scheme.gamma_r is not None else 0.0
    rates = list(gamma_r_atoms) if gamma_r_atoms is not None else [base] * n
    if len(rates) != n:
        raise ConfigError(f"gamma_r_atoms: expected {n} rates, got {len(rates)}")
    for k in range(1, n + 1):
        rate = rates[k - 1]
        if rate > 0:
            channels.append(LindbladChannel(
                op_from_elements(space, [("G", f"R{k}", math.sqrt(rate))]), f"decay_r{k}"))
        if scheme.gamma_r_intrinsic > 0:
            channels.append(LindbladChannel(
                op_from_elements(space, [("G", f"R{k}", math.sqrt(scheme.gamma_r_intrinsic))]),
                f"decay_r_intr{k}"))
        if scheme.gamma_s > 0:
            channels.append(LindbladChannel(
                op_from_elements(space, [("G", f"S{k}", math.sqrt(scheme.gamma_s))]),
                f"decay_s{k}"))
        if scheme.gamma_d > 0 and scheme.dephase_scope == "atom":
            amp = math.sqrt(2.0 * scheme.gamma_d)
            if "r" in scheme.dephase_levels:
                channels.append(LindbladChannel(
                    op_from_elements(space, [(f"R{k}", f"R{k}", amp)]), f"dephase_r{k}"))
            if "s" in scheme.dephase_levels:
                channels.append(LindbladChannel(
                    op_from_elements(space, [(f"S{k}", f"S{k}", amp)]), f"dephase_s{k}"))
    if scheme.gamma_d > 0 and scheme.dephase_scope == "collective":
        amp = math.sqrt(2.0 * scheme.gamma_d)
        entries = []
        for k in range(1, n + 1):
            if "r" in scheme.dephase_levels:
                entries.append((f"R{k}", f"R{k}", amp))
            if "s" in scheme.dephase_levels:
                entries.append((f"S{k}", f"S{k}", amp))
        if entries:
            channels.append(LindbladChannel(op_from_elements(space, entries), "dephase_collective"))
    return channels


def _full_channels(scheme: AtomScheme, space: HilbertSpace,
                   gamma_r_atoms: Sequence[float] | None) -> list:
    levels = 3 if space.kind == "full-3" else 4
    n = space.n_atoms
    channels = []
    base = scheme.gamma_r if scheme.gamma_r is not None else 0.0
    rates = list(gamma_r_atoms) if gamma_r_atoms is not None else [base] * n
    if len(rates) != n:
        raise ConfigError(f"gamma_r_atoms: expected {n} rates, got {len(rates)}")

    def channel(single: np.ndarray, k: int, name: str) -> LindbladChannel:
        return LindbladChannel(QOperator(space, site_operator(space, k, single)), name)

    for k in range(n):
        if space.kind == "full-4":
            channels.append(channel(
                math.sqrt(scheme.kappa) * _level_matrix(levels, "g", "e"), k, f"decay_e{k + 1}"))
        elif rates[k] > 0:
            channels.append(channel(
                math.sqrt(rates[k]) * _level_matrix(levels, "g", "r"), k, f"decay_r{k + 1}"))
        if scheme.gamma_r_intrinsic > 0:
            channels.append(channel(
                math.sqrt(scheme.gamma_r_intrinsic) * _level_matrix(levels, "g", "r"),
                k, f"decay_r_intr{k + 1}"))
        if scheme.gamma_s > 0:
            channels.append(channel(
                math.sqrt(scheme.gamma_s) * _level_matrix(levels, "g", "s"), k, f"decay_s{k + 1}"))
        if scheme.gamma_d > 0 and scheme.dephase_scope == "atom":
            amp = math.sqrt(2.0 * scheme.gamma_d)
            if "r" in scheme.dephase_levels:
                channels.append(channel(amp * _level_matrix(levels, "r", "r"), k, f"dephase_r{k + 1}"))
            if "s" in scheme.dephase_levels:
                channels.append(channel(amp * _level_matrix(levels, "s", "s"), k, f"dephase_s{k + 1}"))
    if scheme.gamma_d > 0 and scheme.dephase_scope == "collective":
        amp = math.sqrt(2.0 * scheme.gamma_d)
        single = np.zeros((levels, levels), dtype=complex)
        if "r" in scheme.dephase_levels:
            single += _level_matrix(levels, "r", "r")
        if "s" in scheme.dephase_levels:
            single += _level_matrix(levels, "s", "s")
        total = None
        for k in range(n):
            placed = site_operator(space, k, amp * single)
            total = placed if total is None else total + placed
        channels.append(LindbladChannel(QOperator(space, total), "dephase_collective"))
    return channels


def collapse_operators(scheme: AtomScheme, space: HilbertSpace,
                       gamma_r_atoms: Sequence[float] | None = None) -> list:
    """Per-atom Lindblad channels for the given space (rates folded in).

    Restricted spaces decay through sqrt(gamma) |G><R_k| (engineered decay
    must already be reduced to an effective gamma_r there); full 4-level
    spaces decay through sqrt(kappa) |g><e|_k while the omega_E coupling
    lives in the Hamiltonian.  Intrinsic decays go to ground and dephasing
    uses sqrt(2 gamma_d) projectors.  gamma_r_atoms overrides the r-decay
    rate per atom (left ensemble first on composite spaces).
    """
    if scheme.engineered and space.kind != "full-4":
        raise ConfigError(
            "collapse_operators: engineered block present but the space is 3-level; "
            "reduce it to an effective gamma_r first"
        )
    if space.kind == "restricted":
        return _restricted_channels(scheme, space, gamma_r_atoms)
    if space.kind in ("full-3", "full-4"):
        return _full_channels(scheme, space, gamma_r_atoms)
    if space.kind == "composite":
        left, right = space.factors
        if gamma_r_atoms is not None:
            left_rates = list(gamma_r_atoms[: left.n_atoms])
            right_rates = list(gamma_r_atoms[left.n_atoms:])
        else:
            left_rates = right_rates = None
        channels = []
        eye_l = np.eye(left.dim, dtype=complex)
        eye_r = np.eye(right.dim, dtype=complex)
        for ch in _restricted_channels(scheme, left, left_rates):
            lifted = np.kron(ch.op.dense(), eye_r)
            channels.append(LindbladChannel(QOperator(space, _shrink(lifted, space)), ch.name + "_L"))
        for ch in _restricted_channels(scheme, right, right_rates):
            lifted = np.kron(eye_l, ch.op.dense())
            channels.append(LindbladChannel(QOperator(space, _shrink(lifted, space)), ch.name + "_R"))
        return channels
    raise ConfigError(f"collapse_operators: unsupported space kind {space.kind}")


def _shrink(matrix: np.ndarray, space: HilbertSpace):
    return sp.csr_matrix(matrix) if space.dim >= DENSE_LIMIT else matrix


def project_operator(op: QOperator, sub_space: HilbertSpace, keep: np.ndarray) -> QOperator:
    """Restrict an operator to a subset basis (rows/columns `keep` of the parent)."""
    dense = op.dense()
    sub = dense[np.ix_(keep, keep)]
    return QOperator(sub_space, _shrink(sub, sub_space), hermitian=False)


# --- Liouvillian ------------------------------------------------------------------

def liouvillian(hamiltonian: QOperator | None, channels: Sequence[LindbladChannel]) -> Liouvillian:
    """GKSL generator as a column-stacking superoperator matrix.

    L = -i (I kron H - H^T kron I)
        + sum_k [ conj(C_k) kron C_k
                  - 1/2 I kron (C_k^dag C_k) - 1/2 (C_k^dag C_k)^T kron I ]

    vec(identity) is a left null vector of L (trace preservation), and L has
    at least one zero eigenvalue.
    """
    if hamiltonian is None and not channels:
        raise ConfigError("liouvillian: need a Hamiltonian or at least one channel")
    space = hamiltonian.space if hamiltonian is not None else channels[0].op.space
    d = space.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    l_matrix = sp.csr_matrix((d * d, d * d), dtype=complex)
    if hamiltonian is not None:
        h = to_sparse(hamiltonian.matrix)
        l_matrix = l_matrix + (-1j) * (sp.kron(eye, h, format="csr")
                                       - sp.kron(h.T, eye, format="csr"))
    for ch in channels:
        if ch.op.space is not space and ch.op.space.dim != d:
            raise ConfigError(f"liouvillian: channel {ch.name!r} lives on a different space")
        c = to_sparse(ch.op.matrix)
        cdc = (c.conj().T @ c).tocsr()
        l_matrix = l_matrix + sp.kron(c.conj(), c, format="csr") \
            - 0.5 * sp.kron(eye, cdc, format="csr") \
            - 0.5 * sp.kron(cdc.T, eye, format="csr")
    return Liouvillian(space, l_matrix.tocsr())


def dump_operator(op: QOperator, path) -> None:
    """Write an operator as text: one "row col real imag" line per nonzero
    entry, row-major, 17 significant digits, preceded by "# dim <d>"."""
    coo = to_sparse(op.matrix).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# dim {op.dim}\n")
        for i in order:
            value = coo.data[i]
            if value == 0.0:
                continue
            fh.write(f"{coo.row[i]} {coo.col[i]} {value.real:.17g} {value.imag:.17g}\n")
