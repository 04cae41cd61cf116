"""System description: atomic level scheme, drives, dissipation, and geometry.

Internal unit convention: every frequency and rate is angular, in rad/us,
and times are in us.  User-facing values (config files, CLI, result
metadata) are nu-convention (MHz or kHz, i.e. omega/2pi); they are
multiplied by 2*pi on the way in and divided back out on the way out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

import numpy as np

TWO_PI = 2.0 * math.pi

MODEL_KINDS = ("restricted", "full-3", "full-4", "composite", "hybrid")

#: coupling channels that may be declared perfectly blockaded
BLOCKADE_CHANNELS = ("rr", "ss", "rs")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; the message names the field."""


class ResourceLimitError(RuntimeError):
    """A requested object exceeds the configured dimension cap."""


def mhz(value: float) -> float:
    """nu in MHz -> angular frequency in rad/us."""
    return TWO_PI * value


def khz(value: float) -> float:
    """nu in kHz -> angular frequency in rad/us."""
    return TWO_PI * value * 1e-3


@dataclass(frozen=True)
class AtomScheme:
    """Per-atom level structure (g, r, s, optional e) with drives and rates.

    omega_R, omega_M are the laser (g<->r) and microwave (r<->s) Rabi
    couplings.  Decay of |r> is modeled either through the engineered block
    (coupling omega_E to a short-lived |e> that decays to |g> at kappa,
    4-level model) or through a direct effective rate gamma_r (3-level
    model); setting both is rejected.  gamma_s and gamma_r_intrinsic are
    intrinsic decays to |g>, gamma_d dephases the Rydberg coherences at rate
    gamma_d relative to ground.  dephase_levels selects which Rydberg levels
    the dephasing projectors act on ("rs", "r" or "s"); dephase_scope "atom"
    uses independent per-atom projectors while "collective" uses one
    common-mode projector sum per ensemble (magnetic-field-like noise, under
    which the symmetric W-state is protected).
    """

    omega_R: float
    omega_M: float
    omega_E: float | None = None
    kappa: float | None = None
    gamma_r: float | None = None
    gamma_s: float = 0.0
    gamma_r_intrinsic: float = 0.0
    gamma_d: float = 0.0
    dephase_levels: str = "rs"
    dephase_scope: str = "atom"

    def __post_init__(self) -> None:
        for name in ("omega_R", "omega_M", "gamma_s", "gamma_r_intrinsic", "gamma_d"):
            _require_rate(name, getattr(self, name))
        if (self.omega_E is None) != (self.kappa is None):
            raise ConfigError(
                "omega_E/kappa: the engineered decay block needs both the "
                "r<->e coupling and the e->g rate"
            )
        for name in ("omega_E", "kappa", "gamma_r"):
            value = getattr(self, name)
            if value is not None:
                _require_rate(name, value)
        if self.engineered and self.gamma_r is not None:
            raise ConfigError(
                "gamma_r: engineered block and direct gamma_r are mutually exclusive"
            )
        if self.dephase_levels not in ("rs", "r", "s"):
            raise ConfigError(
                f"dephase_levels: expected 'rs', 'r' or 's', got {self.dephase_levels!r}"
            )
        if self.dephase_scope not in ("atom", "collective"):
            raise ConfigError(
                f"dephase_scope: expected 'atom' or 'collective', got {self.dephase_scope!r}"
            )

    @property
    def engineered(self) -> bool:
        return self.omega_E is not None


def _require_rate(name: str, value: Any) -> None:
    if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
        raise ConfigError(f"{name}: must be a finite non-negative number, got {value!r}")


@dataclass(frozen=True, eq=False)
class EnsembleGeometry:
    """Atom positions plus interaction coefficients or explicit couplings.

    Couplings come either from power-law coefficients applied to the
    positions, V_xy(i,j) = C / |ri-rj|^n with n = 6 for rr/ss and n = 3 for
    rs (coefficients are angular, rad/us * um^n), or from explicit symmetric
    zero-diagonal matrices in rad/us.  Channels listed in perfect_channels
    are treated as infinitely blockaded: the corresponding doubly excited
    pair states are excluded from the accessible basis instead of receiving
    a numeric strength.
    """

    n_atoms: int
    positions: tuple[tuple[float, float, float], ...] | None = None
    c6_rr: float | None = None
    c6_ss: float | None = None
    c3_rs: float | None = None
    v_rr: np.ndarray | None = None
    v_ss: np.ndarray | None = None
    v_rs: np.ndarray | None = None
    perfect_channels: frozenset = frozenset()
    # composite (two-ensemble) runs: uniform inter-ensemble couplings.
    # separation_um sets V_ss_cross through the 1/r^6 law anchored at
    # V_ss(3 um) = omega_R (the blockade-radius condition); V_rs_cross is
    # applied directly (the swept axis).
    separation_um: float | None = None
    v_rs_cross: float | None = None
    v_ss_cross: float | None = None

    def __post_init__(self) -> None:
        if self.n_atoms < 1:
            raise ConfigError(f"n_atoms: must be >= 1, got {self.n_atoms}")
        for name in ("separation_um", "v_rs_cross", "v_ss_cross"):
            value = getattr(self, name)
            if value is not None:
                _require_rate(name, value)
        bad = set(self.perfect_channels) - set(BLOCKADE_CHANNELS)
        if bad:
            raise ConfigError(f"perfect_channels: unknown channel(s) {sorted(bad)}")
        if self.positions is not None:
            if len(self.positions) != self.n_atoms:
                raise ConfigError(
                    f"positions: expected {self.n_atoms} entries, got {len(self.positions)}"
                )
            pos = np.asarray(self.positions, dtype=float)
            if pos.shape != (self.n_atoms, 3) or not np.all(np.isfinite(pos)):
                raise ConfigError("positions: each entry must be a finite 3D point (um)")
        for name in ("c6_rr", "c6_ss", "c3_rs"):
            value = getattr(self, name)
            if value is not None:
                _require_rate(name, value)
        for name in ("v_rr", "v_ss", "v_rs"):
            matrix = getattr(self, name)
            if matrix is None:
                continue
            matrix = np.asarray(matrix, dtype=float)
            object.__setattr__(self, name, matrix)
            if matrix.shape != (self.n_atoms, self.n_atoms):
                raise ConfigError(f"{name}: expected shape ({self.n_atoms}, {self.n_atoms})")
            if not np.all(np.isfinite(matrix)):
                raise ConfigError(f"{name}: entries must be finite")
            if not np.allclose(matrix, matrix.T, atol=0.0, rtol=0.0):
                raise ConfigError(f"{name}: matrix must be symmetric")
            if np.any(np.diag(matrix) != 0.0):
                raise ConfigError(f"{name}: diagonal must be zero")

    def has_explicit(self) -> bool:
        return any(m is not None for m in (self.v_rr, self.v_ss, self.v_rs))


@dataclass(frozen=True, eq=False)
class PairCouplings:
    """Symmetric pairwise interaction matrices in rad/us (zero diagonal)."""

    v_rr: np.ndarray
    v_ss: np.ndarray
    v_rs: np.ndarray
    perfect_channels: frozenset = frozenset()


@dataclass(frozen=True, eq=False)
class CrossCouplings:
    """Inter-ensemble couplings for composite models.

    v_ss[i, j] shifts the pair state S_i (left) x S_j (right); v_rs[i, j]
    exchanges R_i x S_j <-> S_i x R_j; v_rr (optional) shifts R_i x R_j.
    """

    v_ss: np.ndarray
    v_rs: np.ndarray
    v_rr: np.ndarray | None = None


def pairwise_couplings(geometry: EnsembleGeometry) -> PairCouplings:
    """Evaluate the pairwise interaction matrices for a geometry.

    Explicit matrices are passed through (missing ones default to zero).
    Coefficient-based couplings use V = C / r^n; perfectly blockaded
    channels are carried as flags and their matrices stay zero.
    """
    n = geometry.n_atoms
    zeros = np.zeros((n, n))
    if geometry.has_explicit():
        return PairCouplings(
            v_rr=zeros.copy() if geometry.v_rr is None else geometry.v_rr.copy(),
            v_ss=zeros.copy() if geometry.v_ss is None else geometry.v_ss.copy(),
            v_rs=zeros.copy() if geometry.v_rs is None else geometry.v_rs.copy(),
            perfect_channels=geometry.perfect_channels,
        )

    matrices = {"rr": zeros.copy(), "ss": zeros.copy(), "rs": zeros.copy()}
    coeffs = {"rr": (geometry.c6_rr, 6), "ss": (geometry.c6_ss, 6), "rs": (geometry.c3_rs, 3)}
    needed = [ch for ch, (c, _) in coeffs.items()
              if c is not None and ch not in geometry.perfect_channels]
    if needed:
        if geometry.positions is None:
            raise ConfigError("positions: required to evaluate coefficient-based couplings")
        pos = np.asarray(geometry.positions, dtype=float)
        for i in range(n):
            for j in range(i + 1, n):
                r = float(np.linalg.norm(pos[i] - pos[j]))
                if r == 0.0:
                    raise ConfigError(
                        f"positions: atoms {i} and {j} coincide (singular coupling)"
                    )
                for ch in needed:
                    c, power = coeffs[ch]
                    matrices[ch][i, j] = matrices[ch][j, i] = c / r**power
    return PairCouplings(
        v_rr=matrices["rr"], v_ss=matrices["ss"], v_rs=matrices["rs"],
        perfect_channels=geometry.perfect_channels,
    )


def blockade_radius(c6_ss: float, omega_R: float) -> float:
    """Distance at which the ss van der Waals shift equals the laser drive,
    (C6_ss / omega_R)^(1/6).  Both arguments must be positive and in
    consistent units (the result is in um when C6 is rad/us*um^6 and
    omega_R is rad/us)."""
    if not (c6_ss > 0 and math.isfinite(c6_ss)):
        raise ConfigError(f"c6_ss: must be > 0, got {c6_ss!r}")
    if not (omega_R > 0 and math.isfinite(omega_R)):
        raise ConfigError(f"omega_R: must be > 0, got {omega_R!r}")
    return (c6_ss / omega_R) ** (1.0 / 6.0)


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Validated, unit-normalized description of a single run (or sweep)."""

    scheme: AtomScheme
    model: str
    n_atoms: int
    geometry: EnsembleGeometry | None = None
    initial: str = "G"
    t_end: float = 10.0
    dt_out: float = 0.1
    observables: tuple = ("P_D",)
    method: str = "adaptive"
    rtol: float = 1e-8
    atol: float = 1e-10
    sweep: tuple = ()

    def __post_init__(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model: expected one of {MODEL_KINDS}, got {self.model!r}")
        if self.model == "full-4" and not self.scheme.engineered:
            raise ConfigError("model: full-4 requires the engineered omega_E/kappa block")
        if self.model != "full-4" and self.scheme.engineered:
            raise ConfigError(
                "model: the engineered r<->e block requires model = full-4; "
                "use gamma_r_MHz for an effective 3-level decay"
            )
        if self.n_atoms < 1:
            raise ConfigError(f"N: must be >= 1, got {self.n_atoms}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end_us: must be > 0, got {self.t_end!r}")
        if not (0 < self.dt_out <= self.t_end):
            raise ConfigError(f"dt_out_us: must be in (0, t_end], got {self.dt_out!r}")
        if self.method not in ("adaptive", "fixed", "expm"):
            raise ConfigError(f"method: expected adaptive|fixed|expm, got {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigError("rtol/atol: tolerances must be > 0")
        for axis, values in self.sweep:
            if not isinstance(axis, str) or not axis:
                raise ConfigError("sweep axis: must be a non-empty key name")
            if len(values) == 0:
                raise ConfigError(f"sweep values for {axis!r}: must be non-empty")


# --- user-facing (nu-convention) configuration -------------------------------

_ATOM_KEYS = {
    "omega_R_MHz", "omega_M_MHz", "omega_E_MHz", "kappa_MHz", "gamma_r_MHz",
    "gamma_s_kHz", "gamma_r_intr_kHz", "gamma_d_kHz", "dephase_levels",
    "dephase_scope",
}
_GEOMETRY_KEYS = {
    "N", "blockade", "positions_um",
    "C6_rr_MHz_um6", "C6_ss_MHz_um6", "C3_rs_MHz_um3",
    "V_rr_MHz", "V_ss_MHz", "V_rs_MHz",
    "separation_um", "V_rs_cross_MHz", "V_ss_cross_MHz",
}
_RUN_KEYS = {
    "model", "t_end_us", "dt_out_us", "observables", "initial",
    "method", "rtol", "atol",
}
_SWEEP_KEYS = {"axis", "values", "axis2", "values2"}

#: sweepable keys -> (section, key) they override
SWEEPABLE_KEYS = {
    "omega_R_MHz": ("atom", "omega_R_MHz"),
    "omega_M_MHz": ("atom", "omega_M_MHz"),
    "gamma_r_MHz": ("atom", "gamma_r_MHz"),
    "V_rr_MHz": ("geometry", "V_rr_MHz"),
    "V_ss_MHz": ("geometry", "V_ss_MHz"),
    "V_rs_MHz": ("geometry", "V_rs_MHz"),
    "V_rs_cross_MHz": ("geometry", "V_rs_cross_MHz"),
    "V_ss_cross_MHz": ("geometry", "V_ss_cross_MHz"),
    "separation_um": ("geometry", "separation_um"),
    "t_end_us": ("run", "t_end_us"),
}


def _as_float(section: str, key: str, value: Any) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"[{section}] {key}: must be finite, got {value!r}")
    return out


def _as_nonneg(section: str, key: str, value: Any) -> float:
    out = _as_float(section, key, value)
    if out < 0:
        raise ConfigError(f"[{section}] {key}: must be >= 0, got {out}")
    return out


def _as_float_list(section: str, key: str, value: Any) -> tuple:
    if isinstance(value, str):
        parts = [p for p in value.replace(",", " ").split() if p]
        return tuple(_as_float(section, key, p) for p in parts)
    if isinstance(value, (int, float)):
        return (float(value),)
    try:
        return tuple(_as_float(section, key, v) for v in value)
    except TypeError:
        raise ConfigError(f"[{section}] {key}: expected a list of numbers, got {value!r}") from None


def _as_matrix(section: str, key: str, value: Any, n: int) -> np.ndarray:
    """Accept a scalar (uniform all-pairs coupling) or an n x n matrix.

    String form uses ';' between rows: "0 1; 1 0".
    """
    if isinstance(value, str) and ";" in value:
        rows = [_as_float_list(section, key, row) for row in value.split(";")]
        matrix = np.asarray(rows, dtype=float)
    else:
        arr = np.asarray(value, dtype=object)
        if arr.ndim >= 2:
            matrix = np.asarray(value, dtype=float)
        else:
            scalar = _as_float(section, key, value if not isinstance(value, str) else value.strip())
            matrix = np.full((n, n), scalar, dtype=float)
            np.fill_diagonal(matrix, 0.0)
    if matrix.shape != (n, n):
        raise ConfigError(f"[{section}] {key}: expected an {n} x {n} matrix")
    return matrix


def _as_positions(section: str, key: str, value: Any) -> tuple:
    if isinstance(value, str):
        rows = [r for r in value.split(";") if r.strip()]
        points = [_as_float_list(section, key, r) for r in rows]
    else:
        points = [tuple(float(x) for x in p) for p in value]
    for p in points:
        if len(p) != 3:
            raise ConfigError(f"[{section}] {key}: each position needs 3 coordinates (um)")
    return tuple(tuple(p) for p in points)


def _check_keys(section: str, raw: Mapping, allowed: set) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(sorted(unknown))}")


def atom_scheme_from_raw(raw: Mapping[str, Any]) -> AtomScheme:
    _check_keys("atom", raw, _ATOM_KEYS)
    if "omega_R_MHz" not in raw or "omega_M_MHz" not in raw:
        raise ConfigError("[atom] omega_R_MHz and omega_M_MHz are required")
    get = lambda key: raw.get(key)
    return AtomScheme(
        omega_R=mhz(_as_nonneg("atom", "omega_R_MHz", raw["omega_R_MHz"])),
        omega_M=mhz(_as_nonneg("atom", "omega_M_MHz", raw["omega_M_MHz"])),
        omega_E=None if get("omega_E_MHz") is None
        else mhz(_as_nonneg("atom", "omega_E_MHz", raw["omega_E_MHz"])),
        kappa=None if get("kappa_MHz") is None
        else mhz(_as_nonneg("atom", "kappa_MHz", raw["kappa_MHz"])),
        gamma_r=None if get("gamma_r_MHz") is None
        else mhz(_as_nonneg("atom", "gamma_r_MHz", raw["gamma_r_MHz"])),
        gamma_s=khz(_as_nonneg("atom", "gamma_s_kHz", raw.get("gamma_s_kHz", 0.0))),
        gamma_r_intrinsic=khz(_as_nonneg("atom", "gamma_r_intr_kHz", raw.get("gamma_r_intr_kHz", 0.0))),
        gamma_d=khz(_as_nonneg("atom", "gamma_d_kHz", raw.get("gamma_d_kHz", 0.0))),
        dephase_levels=str(raw.get("dephase_levels", "rs")),
        dephase_scope=str(raw.get("dephase_scope", "atom")),
    )


def geometry_from_raw(raw: Mapping[str, Any]) -> EnsembleGeometry:
    _check_keys("geometry", raw, _GEOMETRY_KEYS)
    if "N" not in raw:
        raise ConfigError("[geometry] N is required")
    n = int(_as_float("geometry", "N", raw["N"]))
    blockade = raw.get("blockade", "")
    if isinstance(blockade, str):
        if blockade.strip().lower() in ("perfect", "all"):
            channels = frozenset(BLOCKADE_CHANNELS)
        else:
            channels = frozenset(
                ch.strip() for ch in blockade.replace(",", " ").split() if ch.strip()
            )
    else:
        channels = frozenset(blockade)
    positions = None
    if raw.get("positions_um") is not None:
        positions = _as_positions("geometry", "positions_um", raw["positions_um"])
    coeff = {
        "c6_rr": None if raw.get("C6_rr_MHz_um6") is None
        else mhz(_as_nonneg("geometry", "C6_rr_MHz_um6", raw["C6_rr_MHz_um6"])),
        "c6_ss": None if raw.get("C6_ss_MHz_um6") is None
        else mhz(_as_nonneg("geometry", "C6_ss_MHz_um6", raw["C6_ss_MHz_um6"])),
        "c3_rs": None if raw.get("C3_rs_MHz_um3") is None
        else mhz(_as_nonneg("geometry", "C3_rs_MHz_um3", raw["C3_rs_MHz_um3"])),
    }
    explicit = {}
    for key, attr in (("V_rr_MHz", "v_rr"), ("V_ss_MHz", "v_ss"), ("V_rs_MHz", "v_rs")):
        if raw.get(key) is not None:
            explicit[attr] = TWO_PI * _as_matrix("geometry", key, raw[key], n)
    cross = {}
    if raw.get("separation_um") is not None:
        cross["separation_um"] = _as_nonneg("geometry", "separation_um", raw["separation_um"])
    if raw.get("V_rs_cross_MHz") is not None:
        cross["v_rs_cross"] = mhz(_as_nonneg("geometry", "V_rs_cross_MHz", raw["V_rs_cross_MHz"]))
    if raw.get("V_ss_cross_MHz") is not None:
        cross["v_ss_cross"] = mhz(_as_nonneg("geometry", "V_ss_cross_MHz", raw["V_ss_cross_MHz"]))
    return EnsembleGeometry(
        n_atoms=n, positions=positions, perfect_channels=channels, **coeff, **explicit, **cross
    )


def normalize_units(raw_config: Mapping[str, Mapping[str, Any]]) -> ScenarioConfig:
    """Validate a user-facing (MHz/kHz) config and convert to rad/us.

    raw_config holds up to four sections: atom, geometry, run, sweep.
    Raises ConfigError naming the offending section/key on any problem.
    """
    _check_keys("config", raw_config, {"atom", "geometry", "run", "sweep"})
    if "atom" not in raw_config:
        raise ConfigError("[atom] section is required")
    scheme = atom_scheme_from_raw(raw_config["atom"])
    geometry = None
    n_atoms = 1
    if "geometry" in raw_config:
        geometry = geometry_from_raw(raw_config["geometry"])
        n_atoms = geometry.n_atoms

    run = dict(raw_config.get("run", {}))
    _check_keys("run", run, _RUN_KEYS)
    observables = run.get("observables", ("P_D",))
    if isinstance(observables, str):
        observables = tuple(o.strip() for o in observables.split(",") if o.strip())
    else:
        observables = tuple(observables)

    sweep_raw = dict(raw_config.get("sweep", {}))
    _check_keys("sweep", sweep_raw, _SWEEP_KEYS)
    sweep = []
    for axis_key, values_key in (("axis", "values"), ("axis2", "values2")):
        if axis_key in sweep_raw:
            axis = str(sweep_raw[axis_key]).strip()
            if axis not in SWEEPABLE_KEYS:
                raise ConfigError(
                    f"[sweep] {axis_key}: {axis!r} is not sweepable "
                    f"(known: {', '.join(sorted(SWEEPABLE_KEYS))})"
                )
            values = _as_float_list("sweep", values_key, sweep_raw.get(values_key, ()))
            if not values:
                raise ConfigError(f"[sweep] {values_key}: a sweep axis needs at least one value")
            sweep.append((axis, values))
        elif values_key in sweep_raw:
            raise ConfigError(f"[sweep] {values_key} given without {axis_key}")

    return ScenarioConfig(
        scheme=scheme,
        model=str(run.get("model", "restricted")),
        n_atoms=n_atoms,
        geometry=geometry,
        initial=str(run.get("initial", "G")),
        t_end=_as_float("run", "t_end_us", run.get("t_end_us", 10.0)),
        dt_out=_as_float("run", "dt_out_us", run.get("dt_out_us", 0.1)),
        observables=observables,
        method=str(run.get("method", "adaptive")),
        rtol=_as_float("run", "rtol", run.get("rtol", 1e-8)),
        atol=_as_float("run", "atol", run.get("atol", 1e-10)),
        sweep=tuple(sweep),
    )


def denormalize_units(config: ScenarioConfig) -> dict:
    """Inverse of normalize_units: back to nu-convention (MHz/kHz) values.

    normalize_units(denormalize_units(c)) reproduces c to 1e-12 relative.
    """
    scheme = config.scheme
    atom: dict[str, Any] = {
        "omega_R_MHz": scheme.omega_R / TWO_PI,
        "omega_M_MHz": scheme.omega_M / TWO_PI,
        "gamma_s_kHz": scheme.gamma_s / TWO_PI * 1e3,
        "gamma_r_intr_kHz": scheme.gamma_r_intrinsic / TWO_PI * 1e3,
        "gamma_d_kHz": scheme.gamma_d / TWO_PI * 1e3,
        "dephase_levels": scheme.dephase_levels,
        "dephase_scope": scheme.dephase_scope,
    }
    if scheme.engineered:
        atom["omega_E_MHz"] = scheme.omega_E / TWO_PI
        atom["kappa_MHz"] = scheme.kappa / TWO_PI
    if scheme.gamma_r is not None:
        atom["gamma_r_MHz"] = scheme.gamma_r / TWO_PI

    out: dict[str, Any] = {"atom": atom}
    geometry = config.geometry
    if geometry is not None:
        geo: dict[str, Any] = {"N": geometry.n_atoms}
        if geometry.perfect_channels:
            geo["blockade"] = ",".join(sorted(geometry.perfect_channels))
        if geometry.positions is not None:
            geo["positions_um"] = "; ".join(
                " ".join(repr(x) for x in p) for p in geometry.positions
            )
        for attr, key in (("c6_rr", "C6_rr_MHz_um6"), ("c6_ss", "C6_ss_MHz_um6"),
                          ("c3_rs", "C3_rs_MHz_um3")):
            value = getattr(geometry, attr)
            if value is not None:
                geo[key] = value / TWO_PI
        for attr, key in (("v_rr", "V_rr_MHz"), ("v_ss", "V_ss_MHz"), ("v_rs", "V_rs_MHz")):
            matrix = getattr(geometry, attr)
            if matrix is not None:
                geo[key] = "; ".join(
                    " ".join(repr(x) for x in row) for row in (matrix / TWO_PI).tolist()
                )
        if geometry.separation_um is not None:
            geo["separation_um"] = geometry.separation_um
        if geometry.v_rs_cross is not None:
            geo["V_rs_cross_MHz"] = geometry.v_rs_cross / TWO_PI
        if geometry.v_ss_cross is not None:
            geo["V_ss_cross_MHz"] = geometry.v_ss_cross / TWO_PI
        out["geometry"] = geo

    out["run"] = {
        "model": config.model,
        "initial": config.initial,
        "t_end_us": config.t_end,
        "dt_out_us": config.dt_out,
        "observables": ",".join(config.observables),
        "method": config.method,
        "rtol": config.rtol,
        "atol": config.atol,
    }
    if config.sweep:
        sweep: dict[str, Any] = {}
        for i, (axis, values) in enumerate(config.sweep):
            suffix = "" if i == 0 else "2"
            sweep["axis" + suffix] = axis
            sweep["values" + suffix] = ",".join(repr(v) for v in values)
        out["sweep"] = sweep
    return out


def with_override(config: ScenarioConfig, key: str, value: float) -> ScenarioConfig:
    """Return a copy of config with one sweepable user-units key replaced."""
    if key not in SWEEPABLE_KEYS:
        raise ConfigError(f"sweep axis {key!r} is not sweepable")
    raw = denormalize_units(config)
    section, raw_key = SWEEPABLE_KEYS[key]
    raw.setdefault(section, {})[raw_key] = value
    raw.pop("sweep", None)
    out = normalize_units(raw)
    return replace(out, sweep=())
