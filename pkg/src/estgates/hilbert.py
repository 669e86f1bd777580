"""Truncated Fock-space operators and Hamiltonians of the cavity-transmon system.

Units
-----
Frequencies enter as linear MHz (value / 2pi) and times as ns or us.  The
single conversion point is :func:`mhz_to_rad_per_ns`; every Hamiltonian
returned from this module is in rad/ns so that propagation uses
``expm(-1j * H * dt_ns)`` directly.

The joint space is ordered cavity (x) qubit, i.e. basis index
``n * qubit_dim + q``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * np.pi

_DEFAULTS_FILE = Path(__file__).with_name("data") / "table_a1_params.json"


def mhz_to_rad_per_ns(f_mhz):
    """Convert a linear frequency in MHz to an angular frequency in rad/ns."""
    return TWO_PI * 1e-3 * np.asarray(f_mhz)


@dataclass(frozen=True)
class HilbertConfig:
    """Truncation of the joint cavity (x) transmon space."""

    cavity_dim: int = 12
    qubit_dim: int = 2

    def __post_init__(self):
        if int(self.cavity_dim) != self.cavity_dim or self.cavity_dim < 6:
            raise ValueError(f"cavity_dim must be an integer >= 6, got {self.cavity_dim}")
        if self.qubit_dim not in (2, 3):
            raise ValueError(f"qubit_dim must be 2 or 3, got {self.qubit_dim}")

    @property
    def dim(self) -> int:
        return self.cavity_dim * self.qubit_dim


@dataclass(frozen=True)
class SystemParams:
    """Device parameters.  Defaults are the measured device values.

    Frequencies are linear (MHz), coherence times are in microseconds.
    ``kerr_q`` is the transmon anharmonicity.
    """

    chi: float = -3.66
    chi_prime: float = 0.039
    kerr_a: float = -0.022
    kerr_a_prime: float = 0.00059
    kerr_q: float = -180.0
    t1_cavity: float = 180.0
    t2_cavity: float = 290.0
    t1_qubit: float = 70.0
    t2_qubit: float = 30.0

    def __post_init__(self):
        for name in ("t1_cavity", "t2_cavity", "t1_qubit", "t2_qubit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for t1, t2 in ((self.t1_cavity, self.t2_cavity), (self.t1_qubit, self.t2_qubit)):
            if t2 != float("inf") and t2 > 2 * t1 * (1 + 1e-12):
                raise ValueError(f"T2={t2} exceeds 2*T1={2 * t1}")

    def lossless(self) -> "SystemParams":
        """Same Hamiltonian with infinite coherence times (no collapse operators)."""
        inf = float("inf")
        return SystemParams(self.chi, self.chi_prime, self.kerr_a, self.kerr_a_prime,
                            self.kerr_q, inf, inf, inf, inf)


# JSON key <-> dataclass field
_PARAM_KEYS = {
    "chi_MHz": "chi",
    "chi_prime_MHz": "chi_prime",
    "kerr_MHz": "kerr_a",
    "kerr_prime_MHz": "kerr_a_prime",
    "anharm_MHz": "kerr_q",
    "t1_cav_us": "t1_cavity",
    "t2_cav_us": "t2_cavity",
    "t1_qb_us": "t1_qubit",
    "t2_qb_us": "t2_qubit",
}


def params_from_dict(d: dict) -> tuple[SystemParams, HilbertConfig]:
    """Build params and truncation from the JSON schema used in config files.

    Missing keys fall back to defaults; unknown keys raise ``KeyError``.
    """
    known = set(_PARAM_KEYS) | {"cavity_dim", "qubit_dim"}
    unknown = set(d) - known
    if unknown:
        raise KeyError(f"unknown system-params key(s): {sorted(unknown)}")
    kwargs = {}
    for key, fld in _PARAM_KEYS.items():
        if key in d:
            try:
                kwargs[fld] = float(d[key])
            except (TypeError, ValueError):
                raise ValueError(f"system-params key {key!r} is not a number") from None
    cfg = HilbertConfig(int(d.get("cavity_dim", 12)), int(d.get("qubit_dim", 2)))
    return SystemParams(**kwargs), cfg


def params_to_dict(params: SystemParams, cfg: HilbertConfig | None = None) -> dict:
    raw = asdict(params)
    d = {key: raw[fld] for key, fld in _PARAM_KEYS.items()}
    if cfg is not None:
        d["cavity_dim"] = cfg.cavity_dim
        d["qubit_dim"] = cfg.qubit_dim
    return d


def load_params(path=None) -> tuple[SystemParams, HilbertConfig]:
    """Read a system-params JSON file; ``None`` loads the shipped defaults."""
    path = _DEFAULTS_FILE if path is None else Path(path)
    with open(path) as fh:
        return params_from_dict(json.load(fh))


class OperatorSet(NamedTuple):
    a: np.ndarray
    a_dag: np.ndarray
    n_cav: np.ndarray
    q: np.ndarray
    q_dag: np.ndarray
    n_qb: np.ndarray
    parity_cav: np.ndarray
    identity: np.ndarray


def destroy(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def fock_operators(cfg: HilbertConfig) -> OperatorSet:
    """Ladder, number and parity operators embedded on the joint space."""
    nc, nq = cfg.cavity_dim, cfg.qubit_dim
    ic, iq = np.eye(nc), np.eye(nq)
    a_c = destroy(nc)
    q_q = destroy(nq)
    a = np.kron(a_c, iq)
    q = np.kron(ic, q_q)
    n_cav = np.kron(np.diag(np.arange(nc, dtype=float)), iq).astype(complex)
    n_qb = np.kron(ic, np.diag(np.arange(nq, dtype=float))).astype(complex)
    parity = np.kron(np.diag((-1.0) ** np.arange(nc)), iq).astype(complex)
    return OperatorSet(a, a.conj().T, n_cav, q, q.conj().T, n_qb, parity,
                       np.eye(cfg.dim, dtype=complex))


def basis_state(cfg: HilbertConfig, n: int, q: int = 0) -> np.ndarray:
    """Product state |n> (x) |q>."""
    psi = np.zeros(cfg.dim, dtype=complex)
    psi[n * cfg.qubit_dim + q] = 1.0
    return psi


def embed_cavity(cfg: HilbertConfig, psi_cav, q: int = 0) -> np.ndarray:
    """Tensor a cavity vector with qubit level ``q``."""
    psi_cav = np.asarray(psi_cav, dtype=complex)
    e = np.zeros(cfg.qubit_dim)
    e[q] = 1.0
    return np.kron(psi_cav, e)


def cavity_populations(cfg: HilbertConfig, psi) -> np.ndarray:
    """Fock-level populations of a pure joint state (qubit traced out)."""
    p = np.abs(np.asarray(psi).reshape(cfg.cavity_dim, cfg.qubit_dim)) ** 2
    return p.sum(axis=1)


def reduce_to_cavity(cfg: HilbertConfig, rho) -> np.ndarray:
    """Partial trace over the qubit of a joint density matrix or pure state."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    nc, nq = cfg.cavity_dim, cfg.qubit_dim
    return np.einsum("aibi->ab", rho.reshape(nc, nq, nc, nq))


def build_static_hamiltonian(params: SystemParams, cfg: HilbertConfig) -> np.ndarray:
    """Undriven Hamiltonian in the frame rotating at the cavity and qubit frequencies.

    Diagonal in the Fock (x) transmon basis; returned in rad/ns.
    """
    n = np.arange(cfg.cavity_dim, dtype=float)
    m = np.arange(cfg.qubit_dim, dtype=float)
    nn, mm = np.meshgrid(n, m, indexing="ij")
    ad2a2 = nn * (nn - 1)
    ad3a3 = nn * (nn - 1) * (nn - 2)
    qd2q2 = mm * (mm - 1)
    diag_mhz = (params.kerr_a / 2 * ad2a2
                + params.kerr_a_prime / 6 * ad3a3
                + params.kerr_q / 2 * qd2q2
                + params.chi * nn * mm
                + params.chi_prime / 2 * mm * ad2a2)
    return np.diag(mhz_to_rad_per_ns(diag_mhz.ravel())).astype(complex)


def build_drive_generators(cfg: HilbertConfig) -> tuple[np.ndarray, np.ndarray]:
    """Lowering operators (a, q) that the complex drive amplitudes multiply.

    See :func:`drive_hamiltonian` for the Hermitian assembly.
    """
    ops = fock_operators(cfg)
    return ops.a, ops.q


def drive_hamiltonian(generators, eps_mhz, omega_mhz) -> np.ndarray:
    """``2pi (eps a + omega q + h.c.)`` in rad/ns for scalar amplitudes in MHz."""
    g_cav, g_qb = generators
    h = mhz_to_rad_per_ns(eps_mhz) * g_cav + mhz_to_rad_per_ns(omega_mhz) * g_qb
    return h + h.conj().T


def commutator(A, B) -> np.ndarray:
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"commutator needs equal square operators, got {A.shape} and {B.shape}")
    return A @ B - B @ A


@dataclass(frozen=True)
class CollapseOperator:
    label: str
    rate_per_us: float
    operator: np.ndarray = field(repr=False)


def collapse_operators(params: SystemParams, cfg: HilbertConfig,
                       tol: float = 1e-9) -> list[CollapseOperator]:
    """Lindblad jump operators, scaled so that ``operator`` already carries sqrt(rate).

    The operator is normalised to 1/ns; ``rate_per_us`` is the squared
    prefactor in 1/us, kept for reporting.
    Pure dephasing uses gamma_phi = 1/T2 - 1/(2 T1) and an operator
    sqrt(2 gamma_phi) n.
    """
    ops = fock_operators(cfg)
    out = []
    specs = [("cavity_loss", 1.0 / params.t1_cavity, ops.a)]
    specs.append(("qubit_decay", 1.0 / params.t1_qubit, ops.q))
    for label, t1, t2, num in (("cavity_dephasing", params.t1_cavity, params.t2_cavity, ops.n_cav),
                               ("qubit_dephasing", params.t1_qubit, params.t2_qubit, ops.n_qb)):
        gamma_phi = 1.0 / t2 - 1.0 / (2.0 * t1)
        if gamma_phi < -tol:
            raise ValueError(f"{label}: T2 > 2 T1 gives negative pure dephasing {gamma_phi}")
        specs.append((label, 2.0 * gamma_phi, num))
    for label, rate, op in specs:
        if rate > 0:
            out.append(CollapseOperator(label, rate, np.sqrt(rate * 1e-3) * op))
    return out
