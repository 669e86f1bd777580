import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from estgates.dynamics import (PulseEnvelope, StepCache, control_generators, fock_occupation,
                               jump_conditioned_propagate, lindblad_propagate, max_active_level,
                               propagate, pure_to_density, step_eigensystem, step_hamiltonians,
                               step_unitaries, total_propagator)
from estgates.hilbert import (HilbertConfig, SystemParams, basis_state, build_drive_generators,
                              build_static_hamiltonian, collapse_operators, fock_operators)

from conftest import random_state

CFG = HilbertConfig()
OPS = fock_operators(CFG)
GEN = build_drive_generators(CFG)
H0 = build_static_hamiltonian(SystemParams(), CFG)
ZERO = np.zeros_like(H0)


def rand_pulse(rng, n, amp=2.0, dt=1.0):
    e = amp * (rng.normal(size=n) + 1j * rng.normal(size=n))
    o = amp * (rng.normal(size=n) + 1j * rng.normal(size=n))
    return PulseEnvelope(e, o, dt)


def test_pulse_validation_and_helpers():
    with pytest.raises(ValueError):
        PulseEnvelope(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        PulseEnvelope(np.zeros(3), np.zeros(3), dt=0)
    p = PulseEnvelope.zeros(10, 2.0)
    assert p.duration == 20 and p.times[-1] == 20
    q = p.slice(0, 4).concatenate(p.slice(4, 10))
    assert q.n_steps == 10
    with pytest.raises(ValueError):
        p.concatenate(PulseEnvelope.zeros(1, 1.0))
    assert PulseEnvelope([1 + 2j], [3 - 4j]).controls().tolist() == [[1, 2, 3, -4]]


def test_zero_pulse_only_phases_fock_states():
    p = PulseEnvelope.zeros(100)
    for n in range(CFG.cavity_dim):
        psi0 = basis_state(CFG, n, 1)
        psi = propagate(H0, GEN, p, psi0).final
        assert abs(abs(np.vdot(psi0, psi)) - 1) < 1e-12
        # phase is exp(-i E_n T)
        assert np.vdot(psi0, psi) == pytest.approx(np.exp(-1j * H0[2 * n + 1, 2 * n + 1] * 100), abs=1e-10)


def test_step_hamiltonian_matches_generators():
    rng = np.random.default_rng(1)
    p = rand_pulse(rng, 3)
    H = step_hamiltonians(H0, GEN, p)
    G = control_generators(GEN)
    u = p.controls()
    for k in range(3):
        assert np.allclose(H[k], H0 + np.tensordot(u[k], G, 1), atol=1e-12)
        assert np.allclose(H[k], H[k].conj().T)


@given(st.integers(0, 2**31 - 1))
def test_unitarity_and_norm(seed):
    rng = np.random.default_rng(seed)
    p = rand_pulse(rng, 20)
    U = step_unitaries(H0, GEN, p)
    err = np.abs(np.einsum("kij,kil->kjl", U.conj(), U) - np.eye(CFG.dim)).max()
    assert err < 1e-12
    traj = propagate(H0, GEN, p, random_state(CFG.dim, rng))
    assert np.allclose(np.linalg.norm(traj.states, axis=1), 1, atol=1e-12)


def test_step_unitary_matches_expm():
    rng = np.random.default_rng(3)
    p = rand_pulse(rng, 4, dt=2.0)
    U = step_unitaries(H0, GEN, p)
    H = step_hamiltonians(H0, GEN, p)
    for k in range(4):
        assert np.allclose(U[k], expm(-1j * H[k] * 2.0), atol=1e-12)


def test_rabi_oscillation_closed_form():
    # cavity empty, constant real qubit drive, no static terms:
    # |g> -> cos(2 pi Omega t)|g> - i sin(2 pi Omega t)|e>, Omega in rad per ns / 2pi
    Om = 2.0
    p = PulseEnvelope(np.zeros(50), np.full(50, Om))
    traj = propagate(ZERO, GEN, p, basis_state(CFG, 0, 0))
    th = 2 * np.pi * Om * 1e-3 * p.times
    assert np.allclose(traj.states[:, 0], np.cos(th), atol=1e-12)
    assert np.allclose(traj.states[:, 1], -1j * np.sin(th), atol=1e-12)


def test_displacement_closed_form():
    # constant cavity drive without static terms produces a coherent state,
    # alpha(t) = -i 2pi * conj(eps) t (in units of rad/ns)
    eps = 0.8 - 0.3j
    cfg = HilbertConfig(30, 2)
    gen = build_drive_generators(cfg)
    p = PulseEnvelope(np.full(100, eps), np.zeros(100))
    psi = propagate(np.zeros((cfg.dim, cfg.dim)), gen, p, basis_state(cfg, 0)).final
    alpha = -1j * 2 * np.pi * 1e-3 * np.conj(eps) * 100
    n = np.arange(30)
    from scipy.special import factorial
    coh = np.exp(-abs(alpha) ** 2 / 2) * alpha ** n / np.sqrt(factorial(n))
    assert np.allclose(psi.reshape(30, 2)[:, 0], coh, atol=1e-10)


def test_total_propagator_composition():
    rng = np.random.default_rng(4)
    p = rand_pulse(rng, 30)
    U = step_unitaries(H0, GEN, p)
    psi0 = random_state(CFG.dim, rng)
    assert np.allclose(total_propagator(U) @ psi0, propagate(H0, GEN, p, psi0).final, atol=1e-12)


def test_cache_reuse():
    rng = np.random.default_rng(5)
    p = rand_pulse(rng, 5)
    c = StepCache(maxsize=2)
    a = c.get(H0, GEN, p)
    assert c.get(H0, GEN, p) is a
    b = c.get(H0, GEN, p.with_samples(p.eps * 0, p.omega))
    assert b is not a


def test_propagate_validation():
    p = PulseEnvelope.zeros(2)
    with pytest.raises(ValueError, match="dimension"):
        propagate(H0, GEN, p, np.ones(3) / np.sqrt(3))
    with pytest.raises(ValueError, match="unit norm"):
        propagate(H0, GEN, p, 2 * basis_state(CFG, 0))


def test_batch_propagation():
    rng = np.random.default_rng(6)
    p = rand_pulse(rng, 10)
    B = np.stack([random_state(CFG.dim, rng) for _ in range(3)])
    traj = propagate(H0, GEN, p, B)
    assert traj.states.shape == (11, 3, CFG.dim)
    for i in range(3):
        assert np.allclose(traj.states[:, i], propagate(H0, GEN, p, B[i]).states)


def test_jump_at_zero_and_end():
    rng = np.random.default_rng(7)
    p = rand_pulse(rng, 12)
    psi0 = basis_state(CFG, 2)
    U = total_propagator(step_unitaries(H0, GEN, p))
    a = OPS.a
    j0 = jump_conditioned_propagate(H0, GEN, p, psi0, 0.0, a)
    ref = U @ (a @ psi0) / np.linalg.norm(a @ psi0)
    assert np.allclose(j0, ref, atol=1e-12)
    jT = jump_conditioned_propagate(H0, GEN, p, psi0, p.duration, a)
    v = a @ (U @ psi0)
    assert np.allclose(jT, v / np.linalg.norm(v), atol=1e-12)


def test_jump_mid_step_splits_propagator():
    rng = np.random.default_rng(8)
    p = rand_pulse(rng, 6)
    psi0 = basis_state(CFG, 2)
    H = step_hamiltonians(H0, GEN, p)
    t = 2.3
    psi = psi0.copy()
    for k in range(2):
        psi = expm(-1j * H[k]) @ psi
    psi = expm(-1j * H[2] * 0.3) @ psi
    psi = OPS.a @ psi
    psi /= np.linalg.norm(psi)
    psi = expm(-1j * H[2] * 0.7) @ psi
    for k in range(3, 6):
        psi = expm(-1j * H[k]) @ psi
    assert np.allclose(jump_conditioned_propagate(H0, GEN, p, psi0, t, OPS.a), psi, atol=1e-11)


def test_jump_errors():
    p = PulseEnvelope.zeros(4)
    with pytest.raises(ValueError):
        jump_conditioned_propagate(H0, GEN, p, basis_state(CFG, 0), 5.0, OPS.a)
    with pytest.raises(ValueError, match="annihilates"):
        jump_conditioned_propagate(H0, GEN, p, basis_state(CFG, 0), 1.0, OPS.a)


def test_fock_occupation_and_active_level():
    p = PulseEnvelope.zeros(3)
    psi0 = (basis_state(CFG, 0) + basis_state(CFG, 4)) / np.sqrt(2)
    traj = propagate(H0, GEN, p, psi0)
    occ = fock_occupation(traj, CFG)
    assert np.allclose(occ[:, [0, 4]], 0.5) and np.allclose(occ.sum(1), 1)
    assert max_active_level(traj, CFG) == 4
    assert max_active_level(traj, CFG, threshold=0.6) is None


def test_lindblad_lossless_matches_unitary():
    rng = np.random.default_rng(9)
    p = rand_pulse(rng, 20)
    psi0 = random_state(CFG.dim, rng)
    rho = lindblad_propagate(H0, GEN, p, [], pure_to_density(psi0)).states
    psi = propagate(H0, GEN, p, psi0).states
    assert np.allclose(rho, pure_to_density(psi), atol=1e-12)


def test_amplitude_damping_one_over_e():
    # |1> under cavity loss only decays to population exp(-1) after T1
    T1_us = 2.0
    p = SystemParams(0, 0, 0, 0, 0, T1_us, 2 * T1_us, float("inf"), float("inf"))
    cops = collapse_operators(p, CFG)
    pulse = PulseEnvelope.zeros(200, dt=10.0)
    rho0 = pure_to_density(basis_state(CFG, 1))
    tr = lindblad_propagate(np.zeros_like(H0), GEN, pulse, cops, rho0, substeps=4)
    pop1 = np.real(tr.final[2, 2])
    assert pop1 == pytest.approx(np.exp(-1), abs=1e-8)


def test_qubit_dephasing_rate():
    p = SystemParams(0, 0, 0, 0, 0, float("inf"), float("inf"), float("inf"), 10.0)
    cops = collapse_operators(p, CFG)
    plus = (basis_state(CFG, 0, 0) + basis_state(CFG, 0, 1)) / np.sqrt(2)
    pulse = PulseEnvelope.zeros(100, dt=100.0)
    tr = lindblad_propagate(np.zeros_like(H0), GEN, pulse, cops, pure_to_density(plus), substeps=4)
    assert abs(tr.final[0, 1]) == pytest.approx(0.5 * np.exp(-1), abs=1e-8)


@given(st.integers(0, 2**31 - 1))
def test_lindblad_preserves_density(seed):
    rng = np.random.default_rng(seed)
    p = rand_pulse(rng, 5)
    cops = collapse_operators(SystemParams(t1_cavity=0.5, t2_cavity=0.8, t1_qubit=0.3,
                                           t2_qubit=0.4), CFG)
    psi0 = random_state(CFG.dim, rng)
    tr = lindblad_propagate(H0, GEN, p, cops, pure_to_density(psi0))
    for r in tr.states:
        assert abs(np.trace(r) - 1) < 1e-10
        assert np.max(np.abs(r - r.conj().T)) < 1e-12
        assert np.linalg.eigvalsh(r).min() > -1e-10


def test_lindblad_batch_and_store():
    rng = np.random.default_rng(10)
    p = rand_pulse(rng, 6)
    cops = collapse_operators(SystemParams(), CFG)
    r = np.stack([pure_to_density(random_state(CFG.dim, rng)) for _ in range(2)])
    full = lindblad_propagate(H0, GEN, p, cops, r)
    last = lindblad_propagate(H0, GEN, p, cops, r, store=False)
    assert last.states.shape[0] == 2 and np.allclose(full.final, last.final)
    single = lindblad_propagate(H0, GEN, p, cops, r[1])
    assert np.allclose(single.final, full.final[1])


def test_lindblad_rejects_bad_rho():
    p = PulseEnvelope.zeros(1)
    with pytest.raises(ValueError, match="trace"):
        lindblad_propagate(H0, GEN, p, [], 2 * pure_to_density(basis_state(CFG, 0)))
    bad = np.zeros((CFG.dim, CFG.dim))
    bad[0, 0], bad[1, 1] = 1.5, -0.5
    with pytest.raises(ValueError, match="positive"):
        lindblad_propagate(H0, GEN, p, [], bad)


def test_single_jump_sector_matches_lindblad():
    # For a state with at most one photon the one-jump sector of the master equation
    # equals the time-integrated jump-conditioned trajectories (no-jump weight exp(-kappa t)).
    cfg = HilbertConfig(6, 2)
    gen = build_drive_generators(cfg)

    T1 = 1.0
    params = SystemParams(0, 0, 0, 0, 0, T1, 2 * T1, float("inf"), float("inf"))
    cops = collapse_operators(params, cfg)
    H = np.zeros((cfg.dim, cfg.dim))
    pulse = PulseEnvelope(np.zeros(50), np.full(50, 1.0), dt=10.0)
    psi1 = basis_state(cfg, 1, 0)
    rho = lindblad_propagate(H, gen, pulse, cops, pure_to_density(psi1), substeps=8).final
    # jump sector is the vacuum block; qubit evolves under the drive regardless of the jump
    U = total_propagator(step_unitaries(H, gen, pulse))
    psi_vac = U @ basis_state(cfg, 0, 0)
    kappa = 1e-3 / T1
    p_jump = 1 - np.exp(-kappa * pulse.duration)
    vac = rho[:2, :2]
    assert np.allclose(vac, p_jump * np.outer(psi_vac[:2], psi_vac[:2].conj()), atol=1e-8)
    assert np.real(np.trace(rho[2:4, 2:4])) == pytest.approx(1 - p_jump, abs=1e-8)
