"""Piecewise-constant propagation: Schroedinger, Lindblad and single-jump trajectories.

Drive samples are complex amplitudes in MHz held constant over ``dt`` ns.
The Hamiltonian of step k is ``H0 + 2pi (eps_k a + omega_k q + h.c.)`` in
rad/ns (see :mod:`estgates.hilbert`).
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .hilbert import HilbertConfig, mhz_to_rad_per_ns


@dataclass(frozen=True)
class PulseEnvelope:
    """Cavity (``eps``) and qubit (``omega``) drive samples, MHz, step ``dt`` ns."""

    eps: np.ndarray
    omega: np.ndarray
    dt: float = 1.0
    ramp_ns: float = 48.0
    bandwidth_MHz: float = 50.0
    max_amp_MHz: float = 4.0

    def __post_init__(self):
        eps = np.atleast_1d(np.asarray(self.eps, dtype=complex))
        omega = np.atleast_1d(np.asarray(self.omega, dtype=complex))
        if eps.shape != omega.shape or eps.ndim != 1:
            raise ValueError(f"eps and omega must be 1-d and equal length, got {eps.shape}, {omega.shape}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def zeros(cls, n_steps: int, dt: float = 1.0, **kw) -> "PulseEnvelope":
        z = np.zeros(n_steps, dtype=complex)
        return cls(z, z.copy(), dt, **kw)

    @property
    def n_steps(self) -> int:
        return self.eps.shape[0]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        """Step boundaries 0, dt, ..., duration."""
        return np.arange(self.n_steps + 1) * self.dt

    def with_samples(self, eps, omega) -> "PulseEnvelope":
        return replace(self, eps=eps, omega=omega)

    def slice(self, start: int, stop: int) -> "PulseEnvelope":
        return replace(self, eps=self.eps[start:stop], omega=self.omega[start:stop])

    def concatenate(self, other: "PulseEnvelope") -> "PulseEnvelope":
        if other.dt != self.dt:
            raise ValueError("cannot concatenate pulses with different dt")
        return replace(self, eps=np.concatenate([self.eps, other.eps]),
                       omega=np.concatenate([self.omega, other.omega]))

    def controls(self) -> np.ndarray:
        """Real control vector per step: (Re eps, Im eps, Re omega, Im omega), shape (N, 4)."""
        return np.stack([self.eps.real, self.eps.imag, self.omega.real, self.omega.imag], axis=1)


@dataclass
class Trajectory:
    """States (vectors or density matrices) at every step boundary."""

    times: np.ndarray
    states: np.ndarray
    step_unitaries: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# ---------------------------------------------------------------------------
# step propagators

def control_generators(generators) -> np.ndarray:
    """Hermitian derivative dH/du for the four real controls per MHz, shape (4, d, d)."""
    g_cav, g_qb = (np.asarray(g) for g in generators)
    s = mhz_to_rad_per_ns(1.0)
    return s * np.stack([g_cav + g_cav.conj().T,
                         1j * (g_cav - g_cav.conj().T),
                         g_qb + g_qb.conj().T,
                         1j * (g_qb - g_qb.conj().T)])


def step_hamiltonians(H0, generators, pulse: PulseEnvelope) -> np.ndarray:
    """Stacked Hamiltonians of each step, shape (N, d, d), rad/ns."""
    g_cav, g_qb = generators
    s = mhz_to_rad_per_ns(1.0)
    drive = (s * pulse.eps)[:, None, None] * g_cav + (s * pulse.omega)[:, None, None] * g_qb
    return np.asarray(H0)[None] + drive + drive.conj().transpose(0, 2, 1)


@dataclass(frozen=True)
class StepEigensystem:
    """Eigendecomposition of every step Hamiltonian (the workhorse for propagators and gradients)."""

    evals: np.ndarray      # (N, d)
    evecs: np.ndarray      # (N, d, d)
    dt: float

    def phases(self, t=None) -> np.ndarray:
        t = self.dt if t is None else t
        return np.exp(-1j * self.evals * t)

    def unitaries(self) -> np.ndarray:
        V = self.evecs
        return (V * self.phases()[:, None, :]) @ V.conj().transpose(0, 2, 1)

    def partial_unitary(self, k: int, t: float) -> np.ndarray:
        V = self.evecs[k]
        return (V * np.exp(-1j * self.evals[k] * t)) @ V.conj().T


def step_eigensystem(H0, generators, pulse: PulseEnvelope) -> StepEigensystem:
    w, V = np.linalg.eigh(step_hamiltonians(H0, generators, pulse))
    return StepEigensystem(w, V, pulse.dt)


class StepCache:
    """Per-worker LRU cache of step eigensystems keyed by the pulse samples.

    Purely an optimisation; not shared between threads.
    """

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._data: OrderedDict[bytes, StepEigensystem] = OrderedDict()

    @staticmethod
    def key(H0, generators, pulse: PulseEnvelope) -> bytes:
        h = hashlib.blake2b(digest_size=20)
        for arr in (H0, generators[0], generators[1], pulse.eps, pulse.omega):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.float64(pulse.dt).tobytes())
        return h.digest()

    def get(self, H0, generators, pulse: PulseEnvelope) -> StepEigensystem:
        k = self.key(H0, generators, pulse)
        if k in self._data:
            self._data.move_to_end(k)
            return self._data[k]
        es = step_eigensystem(H0, generators, pulse)
        self._data[k] = es
        if len(self._data) > self.maxsize:
            self._data.popitem(last=False)
        return es


def step_unitaries(H0, generators, pulse: PulseEnvelope, cache: StepCache | None = None) -> np.ndarray:
    """U_k = exp(-i H_k dt) for every step, shape (N, d, d)."""
    es = cache.get(H0, generators, pulse) if cache is not None else step_eigensystem(H0, generators, pulse)
    return es.unitaries()


def total_propagator(unitaries: np.ndarray) -> np.ndarray:
    U = np.eye(unitaries.shape[-1], dtype=complex)
    for Uk in unitaries:
        U = Uk @ U
    return U


# ---------------------------------------------------------------------------
# closed system

def _check_dims(H0, psi):
    d = np.asarray(H0).shape[0]
    if np.asarray(psi).shape[-1] != d:
        raise ValueError(f"state dimension {np.asarray(psi).shape[-1]} does not match Hamiltonian dimension {d}")


def propagate_with(unitaries: np.ndarray, psi0) -> np.ndarray:
    """All states psi_0..psi_N for initial state(s) ``psi0`` of shape (d,) or (B, d)."""
    psi0 = np.asarray(psi0, dtype=complex)
    N = unitaries.shape[0]
    out = np.empty((N + 1,) + psi0.shape, dtype=complex)
    out[0] = psi0
    cur = psi0.T  # (d,) or (d, B)
    for k in range(N):
        cur = unitaries[k] @ cur
        out[k + 1] = cur.T
    return out


def propagate(H0, generators, pulse: PulseEnvelope, psi0, cache: StepCache | None = None,
              keep_unitaries: bool = False) -> Trajectory:
    """Schroedinger evolution sampled at every step boundary."""
    _check_dims(H0, psi0)
    norms = np.linalg.norm(np.atleast_2d(psi0), axis=-1)
    if np.any(np.abs(norms - 1) > 1e-8):
        raise ValueError("initial state must have unit norm")
    U = step_unitaries(H0, generators, pulse, cache)
    states = propagate_with(U, psi0)
    return Trajectory(pulse.times, states, U if keep_unitaries else None)


def jump_conditioned_propagate(H0, generators, pulse: PulseEnvelope, psi0, t_jump: float, E,
                               tol: float = 1e-12) -> np.ndarray:
    """Evolve to ``t_jump``, apply ``E`` and renormalise, then finish the pulse.

    ``psi0`` may be a batch (B, d); every member receives the jump at the same time.
    """
    _check_dims(H0, psi0)
    T = pulse.duration
    if not -1e-12 <= t_jump <= T + 1e-12:
        raise ValueError(f"t_jump={t_jump} outside [0, {T}]")
    es = step_eigensystem(H0, generators, pulse)
    U = es.unitaries()
    k = min(int(math.floor(t_jump / pulse.dt + 1e-9)), pulse.n_steps)
    frac = t_jump - k * pulse.dt
    psi = np.asarray(psi0, dtype=complex).T
    for j in range(k):
        psi = U[j] @ psi
    if k < pulse.n_steps and frac > 1e-12:
        psi = es.partial_unitary(k, frac) @ psi
    psi = np.asarray(E) @ psi
    nrm = np.linalg.norm(psi, axis=0)
    if np.any(nrm < tol):
        raise ValueError("jump operator annihilates the state at the jump time")
    psi = psi / nrm
    if k < pulse.n_steps:
        if frac > 1e-12:
            psi = es.partial_unitary(k, pulse.dt - frac) @ psi
        else:
            psi = U[k] @ psi
        for j in range(k + 1, pulse.n_steps):
            psi = U[j] @ psi
    return psi.T


def fock_occupation(traj: Trajectory, cfg: HilbertConfig) -> np.ndarray:
    """Cavity Fock populations per step, shape (N+1, cavity_dim)."""
    st = np.asarray(traj.states)
    if st.ndim != 2:
        raise ValueError("fock_occupation expects a single pure-state trajectory")
    p = np.abs(st.reshape(st.shape[0], cfg.cavity_dim, cfg.qubit_dim)) ** 2
    return p.sum(axis=2)


def max_active_level(traj: Trajectory, cfg: HilbertConfig, threshold: float = 0.01) -> Optional[int]:
    """Largest Fock level whose population exceeds ``threshold`` at any step; ``None`` if none does."""
    pops = fock_occupation(traj, cfg)
    active = np.flatnonzero(pops.max(axis=0) > threshold)
    return int(active[-1]) if active.size else None


# ---------------------------------------------------------------------------
# open system

def _check_density(rho, tol=1e-9):
    rho = np.asarray(rho)
    mats = rho.reshape((-1,) + rho.shape[-2:])
    for r in mats:
        if np.max(np.abs(r - r.conj().T)) > tol:
            raise ValueError("rho0 is not Hermitian")
        if abs(np.trace(r) - 1) > tol:
            raise ValueError("rho0 does not have unit trace")
        if np.linalg.eigvalsh(r).min() < -tol:
            raise ValueError("rho0 is not positive semidefinite")


def default_substeps(es: StepEigensystem, target: float = 1.0) -> int:
    """Substeps per sample so that max |w_j - w_k| * h stays below ``target``."""
    spread = float(np.max(es.evals.max(axis=1) - es.evals.min(axis=1)))
    return max(1, int(math.ceil(spread * es.dt / target)))


def lindblad_propagate(H0, generators, pulse: PulseEnvelope, collapse_ops: Sequence, rho0,
                       substeps: int | None = None, store: bool = True) -> Trajectory:
    """Integrate the Lindblad master equation over the piecewise-constant pulse.

    Each sample is integrated in the interaction picture of its own
    Hamiltonian: the coherent part is exact (eigen-phases) and the dissipator
    is advanced with classical RK4 on ``substeps`` equal substeps.

    ``collapse_ops`` are matrices (or objects with an ``operator`` attribute)
    already scaled by sqrt(rate in 1/ns).  ``rho0`` may be a batch (B, d, d).
    With ``store=False`` only the initial and final states are kept.
    """
    rho = np.array(rho0, dtype=complex)
    _check_density(rho)
    Ls = [np.asarray(getattr(c, "operator", c)) for c in collapse_ops]
    es = step_eigensystem(H0, generators, pulse)
    m = substeps if substeps is not None else default_substeps(es)
    h = pulse.dt / m
    V_all = es.evecs
    N = pulse.n_steps
    saved = [rho.copy()]
    for k in range(N):
        V = V_all[k]
        Vh = V.conj().T
        w = es.evals[k]
        dw = w[:, None] - w[None, :]
        ph_half = np.exp(-1j * dw * h / 2)
        ph_full = ph_half * ph_half
        Lh = [Vh @ L @ V for L in Ls]
        Lhd = [L.conj().T for L in Lh]
        LdL = sum((Ld @ L for L, Ld in zip(Lh, Lhd)), np.zeros_like(V))

        def diss(r):
            out = -0.5 * (LdL @ r + r @ LdL)
            for L, Ld in zip(Lh, Lhd):
                out = out + L @ r @ Ld
            return out

        r = Vh @ rho @ V
        if Ls:
            for _ in range(m):
                k1 = diss(r)
                k2 = ph_half.conj() * diss(ph_half * (r + 0.5 * h * k1))
                k3 = ph_half.conj() * diss(ph_half * (r + 0.5 * h * k2))
                k4 = ph_full.conj() * diss(ph_full * (r + h * k3))
                r = ph_full * (r + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        else:
            r = np.exp(-1j * dw * pulse.dt) * r
        rho = V @ r @ Vh
        rho = 0.5 * (rho + rho.conj().swapaxes(-1, -2))
        if store:
            saved.append(rho.copy())
    if not store:
        saved.append(rho.copy())
        times = np.array([0.0, pulse.duration])
    else:
        times = pulse.times
    return Trajectory(times, np.array(saved))


def pure_to_density(psi) -> np.ndarray:
    psi = np.asarray(psi)
    return psi[..., :, None] * psi[..., None, :].conj()
