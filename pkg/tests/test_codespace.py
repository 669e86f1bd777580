import numpy as np
import pytest
from hypothesis import given, strategies as st

from estgates import codespace as cs
from estgates.hilbert import HilbertConfig, basis_state, fock_operators

from conftest import random_unitary

CFG = HilbertConfig()
OPS = fock_operators(CFG)
CODE = cs.kitten_code(CFG)
angles = st.tuples(st.floats(0, np.pi), st.floats(-np.pi, np.pi))


def test_codewords():
    w0 = (basis_state(CFG, 0) + basis_state(CFG, 4)) / np.sqrt(2)
    assert np.allclose(CODE.word0, w0)
    assert np.allclose(CODE.word1, basis_state(CFG, 2))
    assert abs(np.vdot(CODE.word0, CODE.word1)) < 1e-15


def test_mean_photon_number_of_codewords():
    for w in (CODE.word0, CODE.word1):
        assert np.real(np.vdot(w, OPS.n_cav @ w)) == pytest.approx(2.0, abs=1e-14)


def test_parity_and_qec_conditions():
    P = CODE.projector
    assert np.allclose(OPS.parity_cav @ P, P)
    # P a^dag a P is proportional to P (mean photon number 2)
    PaP = P @ OPS.a_dag @ OPS.a @ P
    assert np.allclose(PaP, 2 * P)
    # no first-order logical leakage under a: P a P = 0
    assert np.allclose(P @ OPS.a @ P, 0)


def test_cardinal_states():
    st6 = cs.cardinal_states(CODE)
    assert st6.shape == (6, CFG.dim)
    assert np.allclose(np.linalg.norm(st6, axis=1), 1)
    for i in range(0, 6, 2):
        assert abs(np.vdot(st6[i], st6[i + 1])) < 1e-14
    expected = [(0, 0, 1), (0, 0, -1), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]
    for s, b in zip(st6, expected):
        assert np.allclose(CODE.bloch_vector(s), b, atol=1e-14)


def test_paulis_algebra():
    X, Y, Z = CODE.paulis
    P = CODE.projector
    assert np.allclose(X @ X, P) and np.allclose(Y @ Y, P)
    assert np.allclose(X @ Y, 1j * Z)


@given(angles)
def test_logical_state_bloch(tp):
    th, ph = tp
    psi = cs.logical_state(CODE, th, ph)
    b = CODE.bloch_vector(psi)
    ref = [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]
    assert np.allclose(b, ref, atol=1e-10)


@given(st.integers(0, 2**31 - 1))
def test_instantaneous_subspace_unitary_covariance(seed):
    rng = np.random.default_rng(seed)
    U = random_unitary(CFG.dim, rng)
    code_t = cs.instantaneous_subspace(CODE, U)
    assert np.allclose(code_t.projector, U @ CODE.projector @ U.conj().T, atol=1e-12)
    Xt = code_t.paulis[0]
    assert np.allclose(Xt, U @ CODE.paulis[0] @ U.conj().T, atol=1e-12)
    assert np.allclose(code_t.projector @ code_t.projector, code_t.projector, atol=1e-12)


def test_instantaneous_subspace_rejects_nonunitary():
    with pytest.raises(ValueError, match="unitary"):
        cs.instantaneous_subspace(CODE, 2 * np.eye(CFG.dim))


def test_error_subspace_for_photon_loss():
    es = cs.error_subspace(CODE, OPS.a)
    assert np.allclose(es.word0, basis_state(CFG, 3), atol=1e-14)
    assert np.allclose(es.word1, basis_state(CFG, 1), atol=1e-14)
    assert np.allclose(OPS.parity_cav @ es.projector, -es.projector)
    assert np.allclose(es.projector @ CODE.projector, 0)


@given(st.integers(0, 2**31 - 1))
def test_error_subspace_orthonormal(seed):
    rng = np.random.default_rng(seed)
    E = rng.normal(size=(CFG.dim, CFG.dim)) + 1j * rng.normal(size=(CFG.dim, CFG.dim))
    es = cs.error_subspace(CODE, E)
    G = es.basis.conj().T @ es.basis
    assert np.allclose(G, np.eye(2), atol=1e-12)
    # span contains both images
    for v in cs.error_words(CODE, E):
        assert np.linalg.norm(v - es.projector @ v) < 1e-10 * np.linalg.norm(v)


def test_error_subspace_rank_deficient():
    # a^3 kills |2>
    a3 = OPS.a @ OPS.a @ OPS.a
    with pytest.raises(ValueError, match="rank deficient"):
        cs.error_subspace(CODE, a3)
    # projector onto one word maps both words onto parallel rays (one of them to zero)
    with pytest.raises(ValueError):
        cs.error_subspace(CODE, np.outer(CODE.word0, CODE.word0.conj() + CODE.word1.conj()))


def test_canonical_phase():
    psi = np.exp(0.7j) * np.array([0, 0.6, 0.8j])
    out = cs.canonical_phase(psi)
    assert out[1] == pytest.approx(0.6)
    assert np.allclose(np.abs(out), np.abs(psi))
    assert not np.any(cs.canonical_phase(np.zeros(3)))


def test_small_cavity_rejected():
    with pytest.raises(ValueError):
        cs.kitten_code(HilbertConfig(5, 2))
