"""Repeated-gate sequences with optional error correction, read out by logical process tomography."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import codespace as cs
from .dynamics import PulseEnvelope, lindblad_propagate, step_eigensystem
from .hilbert import collapse_operators, reduce_to_cavity
from .metrics import TOMOGRAPHY_INPUTS, chi_from_outputs, chi_from_unitary


@dataclass
class SequenceResult:
    N: np.ndarray
    fidelity: np.ndarray
    chi: list
    leaked: np.ndarray          # mean missing logical weight per N


def _cavity_words(system):
    q = system.cfg.qubit_dim
    w0 = system.code.word0.reshape(-1, q)[:, 0]
    w1 = system.code.word1.reshape(-1, q)[:, 0]
    e0 = system.error_code.word0.reshape(-1, q)[:, 0]
    e1 = system.error_code.word1.reshape(-1, q)[:, 0]
    return np.stack([w0, w1], 1), np.stack([e0, e1], 1)


def ideal_recovery_kraus(system) -> list[np.ndarray]:
    """Code projector plus the map sending error words back to codewords, both on the cavity only."""
    Vc, Ve = _cavity_words(system)
    Iq = np.eye(system.cfg.qubit_dim)
    return [np.kron(Vc @ Vc.conj().T, Iq), np.kron(Vc @ Ve.conj().T, Iq)]


def apply_kraus(rhos, kraus) -> np.ndarray:
    return sum(K @ rhos @ K.conj().T for K in kraus)


def reset_qubit(rhos, cfg) -> np.ndarray:
    """Conditional reset: move all qubit population to |g>, tracing out its state."""
    nc, nq = cfg.cavity_dim, cfg.qubit_dim
    r = rhos.reshape(-1, nc, nq, nc, nq)
    rc = np.einsum("bajcj->bac", r)
    out = np.zeros_like(r)
    out[:, :, 0, :, 0] = rc
    return out.reshape(rhos.shape)


class SequenceRunner:
    """Evolves the four tomography inputs through N repetitions of a gate block.

    ``gate_pulses`` form one block (applied in order).  ``recovery`` is
    ``None``, ``"ideal"`` (instantaneous Kraus map) or an AQEC
    :class:`PulseEnvelope` followed by an idle of ``reset_ns`` and a qubit
    reset.  ``lossless`` drops every collapse operator.
    """

    def __init__(self, system, gate_pulses: Sequence[PulseEnvelope], logical_gate,
                 recovery=None, reset_ns: float = 1200.0, lossless: bool = False,
                 substeps: Optional[int] = None):
        self.system = system
        self.pulses = [p for p in gate_pulses if p.n_steps > 0]
        self.logical = np.asarray(logical_gate)
        self.recovery = recovery
        self.reset_ns = reset_ns
        self.cops = [] if lossless else collapse_operators(system.params, system.cfg)
        self.cav_cops = [c for c in self.cops if c.label.startswith("cavity")]
        self.substeps = substeps
        self._unitaries = {}

    def _evolve(self, pulse, rhos, cops):
        if pulse.n_steps == 0:
            return rhos
        if not cops:
            key = id(pulse)
            if key not in self._unitaries:
                U = np.eye(self.system.cfg.dim, dtype=complex)
                for Uk in step_eigensystem(self.system.H0, self.system.generators, pulse).unitaries():
                    U = Uk @ U
                self._unitaries[key] = U
            U = self._unitaries[key]
            return U @ rhos @ U.conj().T
        return lindblad_propagate(self.system.H0, self.system.generators, pulse, cops, rhos,
                                  self.substeps, store=False).final

    def _recover(self, rhos):
        if self.recovery is None:
            return rhos
        if isinstance(self.recovery, str):
            if self.recovery != "ideal":
                raise ValueError(f"unknown recovery {self.recovery!r}")
            return apply_kraus(rhos, ideal_recovery_kraus(self.system))
        rhos = self._evolve(self.recovery, rhos, self.cops)
        n_idle = int(round(self.reset_ns / self.recovery.dt))
        if n_idle:
            idle = PulseEnvelope.zeros(n_idle, self.recovery.dt)
            rhos = self._evolve(idle, rhos, self.cav_cops)
        return reset_qubit(rhos, self.system.cfg)

    def _logical(self, rhos):
        Vc, _ = _cavity_words(self.system)
        return np.array([Vc.conj().T @ reduce_to_cavity(self.system.cfg, r) @ Vc for r in rhos])

    def run(self, N_values: Sequence[int]) -> SequenceResult:
        N_values = np.asarray(sorted(set(int(n) for n in N_values)))
        if N_values.size == 0 or N_values[0] < 1:
            raise ValueError("N values must be integers >= 1")
        V = self.system.code.basis
        rhos = np.array([V @ np.outer(p, p.conj()) @ V.conj().T for p in TOMOGRAPHY_INPUTS])
        fids, chis, leaks = [], [], []
        n_done = 0
        for N in N_values:
            while n_done < N:
                for p in self.pulses:
                    rhos = self._evolve(p, rhos, self.cops)
                n_done += 1
            outs = self._logical(self._recover(rhos.copy()))
            tr = np.real(np.trace(outs, axis1=1, axis2=2))
            if np.any(tr < 1e-6):
                raise ValueError(f"logical weight vanished at N={N}")
            chi = chi_from_outputs(outs / tr[:, None, None])
            target = np.linalg.matrix_power(self.logical, int(N))
            fids.append(float(np.real(np.trace(chi @ chi_from_unitary(target)))))
            chis.append(chi)
            leaks.append(float(np.mean(1 - tr)))
        return SequenceResult(N_values, np.array(fids), chis, np.array(leaks))


def logical_identity_check(system) -> float:
    """Process fidelity of the empty sequence (sanity anchor, 1 by construction)."""
    return SequenceRunner(system, [], cs.PAULI_I, lossless=True).run([1]).fidelity[0]
