"""Binomial kitten code, logical states and (instantaneous) code/error subspaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import HilbertConfig, embed_cavity

# (theta, phi) of the six cardinal points, ordered +Z, -Z, +X, -X, +Y, -Y
CARDINAL_ANGLES = (
    (0.0, 0.0),
    (np.pi, 0.0),
    (np.pi / 2, 0.0),
    (np.pi / 2, np.pi),
    (np.pi / 2, np.pi / 2),
    (np.pi / 2, -np.pi / 2),
)
CARDINAL_LABELS = ("+Z", "-Z", "+X", "-X", "+Y", "-Y")

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class CodeSubspace:
    """A two-dimensional subspace with an ordered orthonormal basis.

    The projector and logical Paulis are derived from the two words, so the
    basis phases define the logical frame.
    """

    word0: np.ndarray
    word1: np.ndarray

    @property
    def basis(self) -> np.ndarray:
        """Isometry with the two words as columns, shape (dim, 2)."""
        return np.stack([self.word0, self.word1], axis=1)

    @property
    def projector(self) -> np.ndarray:
        V = self.basis
        return V @ V.conj().T

    def lift(self, m2: np.ndarray) -> np.ndarray:
        """Embed a 2x2 logical matrix into the full space."""
        V = self.basis
        return V @ m2 @ V.conj().T

    @property
    def paulis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lift(PAULI_X), self.lift(PAULI_Y), self.lift(PAULI_Z)

    def coordinates(self, psi) -> np.ndarray:
        """Amplitudes <word_i|psi>."""
        return self.basis.conj().T @ np.asarray(psi)

    def bloch_vector(self, psi) -> np.ndarray:
        """Bloch vector of the normalised projection of a pure state onto the span."""
        c = self.coordinates(psi)
        c = c / np.linalg.norm(c)
        return np.real([c.conj() @ P @ c for P in (PAULI_X, PAULI_Y, PAULI_Z)])

    @property
    def dim(self) -> int:
        return self.word0.shape[0]


def kitten_code(cfg: HilbertConfig) -> CodeSubspace:
    """|0_L> = (|0> + |4>)/sqrt2, |1_L> = |2>, qubit in |g>."""
    if cfg.cavity_dim < 6:
        raise ValueError("kitten code needs cavity_dim >= 6")
    w0 = np.zeros(cfg.cavity_dim, dtype=complex)
    w0[[0, 4]] = 1 / np.sqrt(2)
    w1 = np.zeros(cfg.cavity_dim, dtype=complex)
    w1[2] = 1.0
    return CodeSubspace(embed_cavity(cfg, w0), embed_cavity(cfg, w1))


def logical_coefficients(theta: float, phi: float) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def logical_state(code: CodeSubspace, theta: float, phi: float) -> np.ndarray:
    """cos(theta/2)|0> + exp(i phi) sin(theta/2)|1> on the code words."""
    c = logical_coefficients(theta, phi)
    psi = c[0] * code.word0 + c[1] * code.word1
    return psi / np.linalg.norm(psi)


def cardinal_coefficients() -> np.ndarray:
    """Logical amplitudes of the six cardinal points, shape (6, 2)."""
    return np.array([logical_coefficients(t, p) for t, p in CARDINAL_ANGLES])


def cardinal_states(code: CodeSubspace) -> np.ndarray:
    """The six cardinal states as rows, ordered +Z, -Z, +X, -X, +Y, -Y."""
    return cardinal_coefficients() @ code.basis.T


def _check_unitary(U, tol):
    err = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if err > tol:
        raise ValueError(f"operator is not unitary (residual {err:.2e})")


def instantaneous_subspace(code: CodeSubspace, U, tol: float = 1e-8) -> CodeSubspace:
    """Image of ``code`` under ``U``; Paulis transform as U sigma U^dagger."""
    U = np.asarray(U)
    _check_unitary(U, tol)
    return CodeSubspace(U @ code.word0, U @ code.word1)


def error_subspace(code: CodeSubspace, E, tol: float = 1e-10) -> CodeSubspace:
    """Span of E|word0>, E|word1>, Gram-Schmidt orthonormalised from word0.

    Raises ``ValueError`` if the error operator annihilates a word or maps
    both words onto the same ray.
    """
    E = np.asarray(E)
    v0 = E @ code.word0
    v1 = E @ code.word1
    n0 = np.linalg.norm(v0)
    n1 = np.linalg.norm(v1)
    if n0 < tol or n1 < tol:
        raise ValueError("error operator annihilates a codeword; error space is rank deficient")
    e0 = v0 / n0
    r = v1 - (e0.conj() @ v1) * e0
    nr = np.linalg.norm(r)
    if nr < tol * n1:
        raise ValueError("error images of the codewords are parallel; error space is rank deficient")
    return CodeSubspace(e0, r / nr)


def error_words(code: CodeSubspace, E) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised images E|word_i> (used where relative norms matter)."""
    E = np.asarray(E)
    return E @ code.word0, E @ code.word1


def canonical_phase(psi, tol: float = 1e-12) -> np.ndarray:
    """Rotate the global phase so the first non-negligible amplitude is real positive."""
    psi = np.asarray(psi, dtype=complex)
    idx = np.flatnonzero(np.abs(psi) > tol)
    if idx.size == 0:
        return psi.copy()
    a = psi[idx[0]]
    return psi * (abs(a) / a)
