"""Error-transparency diagnostics, gate fidelities, logical process tomography and Wigner functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from . import codespace as cs
from .dynamics import (PulseEnvelope, lindblad_propagate, propagate_with, pure_to_density,
                       step_eigensystem)
from .hilbert import HilbertConfig, collapse_operators, fock_operators


@dataclass
class MetricSeries:
    """Delta_QEC, leakage and trajectory mismatch sampled at step boundaries.

    ``traj_mismatch`` holds NaN where the error state has fully left the
    instantaneous error space (undefined, not zero).
    """

    times: np.ndarray
    delta_qec: np.ndarray
    leakage: np.ndarray
    traj_mismatch: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.delta_qec) == len(self.leakage) == len(self.traj_mismatch) == n):
            raise ValueError("metric series lengths must match times")

    def time_averages(self) -> dict:
        return {
            "delta_qec": float(np.mean(self.delta_qec)),
            "leakage": float(np.mean(self.leakage)),
            "traj_mismatch": float(np.nanmean(self.traj_mismatch)),
            "mismatch_gaps": int(np.isnan(self.traj_mismatch).sum()),
        }


# ---------------------------------------------------------------------------
# Knill-Laflamme violation

def _traceless_weight(m2: np.ndarray, squared: bool) -> np.ndarray:
    """Tr(A^dag A) (or its square root) of A = M - Tr(M)/2 I, batched over leading axes."""
    tr = np.trace(m2, axis1=-2, axis2=-1)
    A = m2 - 0.5 * tr[..., None, None] * np.eye(2)
    w = np.sum(np.abs(A) ** 2, axis=(-2, -1))
    return w if squared else np.sqrt(w)


def qec_violation(code_t: cs.CodeSubspace, error_ops: Sequence[np.ndarray] | None = None,
                  squared: bool = True, pairwise: bool = False) -> float:
    """Sum over error operators of the traceless weight of the projected QEC matrix.

    For each operator O the logical block ``M_O = <mu|O|nu>`` is formed and
    the weight of ``M_O - Tr(M_O)/2 I`` is measured as Tr(A^dag A)
    (= 2(|x|^2 + |y|^2 + |z|^2) in the Pauli expansion).  ``squared=False``
    uses the ordinary Frobenius norm instead.  With ``pairwise=True`` the
    blocks are built from every product ``E_i^dag E_k`` of the error set.

    ``error_ops`` defaults to {a, n} for the two-level-qubit space matching
    the code dimension.
    """
    if error_ops is None:
        error_ops = _default_errors(code_t.dim)
    V = code_t.basis
    if pairwise:
        mats = [Ei.conj().T @ Ek for Ei in error_ops for Ek in error_ops]
    else:
        mats = list(error_ops)
    total = 0.0
    for O in mats:
        if O.shape != (V.shape[0],) * 2:
            raise ValueError("error operator dimension does not match the code space")
        total += float(_traceless_weight(V.conj().T @ O @ V, squared))
    return total


def _default_errors(dim: int, qubit_dim: int = 2):
    if dim % qubit_dim:
        raise ValueError("cannot infer the default error set for this dimension; pass error_ops")
    ops = fock_operators(HilbertConfig(dim // qubit_dim, qubit_dim))
    return [ops.a, ops.n_cav]


# ---------------------------------------------------------------------------
# instantaneous subspaces along a pulse

def _error_basis_batch(c0, c1, E, tol=1e-10):
    """Gram-Schmidt error words from E c0, E c1 for stacks of code words (T, d)."""
    v0 = c0 @ E.T
    v1 = c1 @ E.T
    n0 = np.linalg.norm(v0, axis=1)
    n1 = np.linalg.norm(v1, axis=1)
    if np.any(n0 < tol) or np.any(n1 < tol):
        raise ValueError("error operator annihilates an instantaneous codeword")
    e0 = v0 / n0[:, None]
    r = v1 - np.einsum("td,td->t", e0.conj(), v1)[:, None] * e0
    nr = np.linalg.norm(r, axis=1)
    if np.any(nr < tol * n1):
        raise ValueError("instantaneous error space is rank deficient")
    return e0, r / nr[:, None]


def _bloch(c):
    """Bloch vectors of normalised 2-component amplitude rows (T, 2)."""
    x = 2 * np.real(c[:, 0].conj() * c[:, 1])
    y = 2 * np.imag(c[:, 0].conj() * c[:, 1])
    z = np.abs(c[:, 0]) ** 2 - np.abs(c[:, 1]) ** 2
    return np.stack([x, y, z], axis=1)


def metric_series(H0, generators, pulse: PulseEnvelope, code: cs.CodeSubspace, E,
                  error_ops: Sequence[np.ndarray] | None = None, start: tuple[float, float] = (0.0, 0.0),
                  squared: bool = True, gap_tol: float = 1e-6) -> MetricSeries:
    """Delta_QEC, leakage of the error space and trajectory mismatch along ``pulse``.

    ``start`` gives the Bloch angles (theta, phi) of the logical state used
    for the mismatch (|0_L> by default).
    """
    E = np.asarray(E)
    if error_ops is None:
        error_ops = _default_errors(code.dim)
    err0 = cs.error_subspace(code, E)
    psi0 = cs.logical_state(code, *start)
    psiE0 = E @ psi0
    nE = np.linalg.norm(psiE0)
    if nE < 1e-12:
        raise ValueError("error operator annihilates the mismatch start state")
    init = np.stack([code.word0, code.word1, err0.word0, err0.word1, psi0, psiE0 / nE])
    U = step_eigensystem(H0, generators, pulse).unitaries()
    st = propagate_with(U, init)                   # (T, 6, d)
    c0, c1 = st[:, 0], st[:, 1]
    V = np.stack([c0, c1], axis=2)                 # (T, d, 2)
    Vh = V.conj().transpose(0, 2, 1)

    dq = np.zeros(len(st))
    for O in error_ops:
        dq += _traceless_weight(Vh @ O @ V, squared)

    e0, e1 = _error_basis_batch(c0, c1, E)
    W = np.stack([e0, e1], axis=2)
    Wh = W.conj().transpose(0, 2, 1)
    # rho(t) = U P_E(0) U^dag / 2
    kept = (np.abs(Wh @ st[:, 2][..., None]) ** 2).sum(axis=(1, 2)) \
        + (np.abs(Wh @ st[:, 3][..., None]) ** 2).sum(axis=(1, 2))
    leak = np.clip(1 - 0.5 * kept, 0.0, 1.0)

    cc = (Vh @ st[:, 4][..., None])[..., 0]
    cc /= np.linalg.norm(cc, axis=1, keepdims=True)
    ce = (Wh @ st[:, 5][..., None])[..., 0]
    ne = np.linalg.norm(ce, axis=1)
    gap = ne < gap_tol
    ce = ce / np.where(gap, 1.0, ne)[:, None]
    mm = np.linalg.norm(_bloch(cc) - _bloch(ce), axis=1)
    mm[gap] = np.nan
    return MetricSeries(pulse.times, dq, leak, mm)


def instantaneous_leakage(H0, generators, pulse, code, E) -> np.ndarray:
    return metric_series(H0, generators, pulse, code, E).leakage


def trajectory_mismatch(H0, generators, pulse, code, E, start=(0.0, 0.0)) -> np.ndarray:
    return metric_series(H0, generators, pulse, code, E, start=start).traj_mismatch


# ---------------------------------------------------------------------------
# ET fidelity and photon-number balance

def et_fidelity_terms(code_traj, err_traj, a, n_op, stride: int = 1, guard: float = 1e-6,
                      gradient: bool = False):
    """Per-step ET fidelity |<psi_E|a|psi_C>|^2 / <psi_C|n|psi_C> for paired trajectories.

    Trajectories have shape (N+1, B, d) (or (N+1, d) for one pair); steps
    0, stride, ... < N are used and everything is averaged.  Returns
    ``(F, n_singular, dF/dpsi_C*, dF/dpsi_E*, step_indices)``; steps with
    <n> below ``guard`` contribute zero and are counted in ``n_singular``.
    """
    code_traj = np.asarray(code_traj)
    err_traj = np.asarray(err_traj)
    if code_traj.shape != err_traj.shape:
        raise ValueError("code and error trajectories must have equal shapes")
    if code_traj.ndim == 2:
        code_traj, err_traj = code_traj[:, None], err_traj[:, None]
    N = code_traj.shape[0] - 1
    idx = np.arange(0, max(N, 1), stride)
    C = code_traj[idx]
    Ev = err_traj[idx]
    aC = C @ a.T
    z = np.einsum("sbd,sbd->sb", Ev.conj(), aC)
    nC = C @ n_op.T
    m = np.real(np.einsum("sbd,sbd->sb", C.conj(), nC))
    ok = m >= guard
    safe_m = np.where(ok, m, 1.0)
    f = np.where(ok, np.abs(z) ** 2 / safe_m, 0.0)
    scale = 1.0 / f.size
    F = float(f.sum() * scale)
    g_c = g_e = None
    if gradient:
        coef = np.where(ok, scale, 0.0)[..., None]
        adE = Ev @ a.conj()
        g_c = coef * (z[..., None] * adE / safe_m[..., None]
                      - (np.abs(z) ** 2 / safe_m ** 2)[..., None] * nC)
        g_e = coef * (z.conj()[..., None] * aC / safe_m[..., None])
    return F, int((~ok).sum()), g_c, g_e, idx


def et_fidelity(traj_c, traj_e, a, n_op, stride: int = 1) -> float:
    """Time-averaged ET fidelity of one code/error trajectory pair (or a batch)."""
    return et_fidelity_terms(traj_c, traj_e, a, n_op, stride)[0]


def et_fidelity_avg(H0, generators, pulse, code, error_code, a, n_op, stride: int = 1) -> float:
    """ET fidelity averaged over the six paired cardinal starts."""
    U = step_eigensystem(H0, generators, pulse).unitaries()
    st = propagate_with(U, np.concatenate([cs.cardinal_states(code), cs.cardinal_states(error_code)]))
    return et_fidelity(st[:, :6], st[:, 6:], a, n_op, stride)


def mean_photon_imbalance(traj0, traj1, n_op) -> np.ndarray:
    """<n>(t) of the first trajectory minus that of the second."""
    t0 = np.asarray(traj0)
    t1 = np.asarray(traj1)
    m0 = np.real(np.einsum("nd,nd->n", t0.conj(), t0 @ n_op.T))
    m1 = np.real(np.einsum("nd,nd->n", t1.conj(), t1 @ n_op.T))
    return m0 - m1


# ---------------------------------------------------------------------------
# fidelities

def average_gate_fidelity(outputs, targets) -> float:
    """Mean of |<target|out>|^2 (pure outputs) or <target|rho|target> (density matrices)."""
    outputs = np.asarray(outputs)
    targets = np.asarray(targets)
    if outputs.ndim == 3:
        vals = np.real(np.einsum("bi,bij,bj->b", targets.conj(), outputs, targets))
    else:
        vals = np.abs(np.einsum("bd,bd->b", targets.conj(), outputs)) ** 2
    return float(np.mean(vals))


@dataclass
class JumpSweep:
    times: np.ndarray
    infidelity: np.ndarray           # averaged over the starts
    per_state: np.ndarray            # (n_times, n_starts)

    @property
    def mean(self) -> float:
        return float(np.mean(self.infidelity))


def jump_sweep(H0, generators, pulse: PulseEnvelope, inputs, error_targets, E, n_times: int = 101) -> JumpSweep:
    """Error-space infidelity at the end of the pulse for a single jump ``E`` at each time.

    Jump times are a uniform grid over [0, T].  For each time and input the
    state is evolved, hit by ``E``, renormalised, evolved to the end and
    compared with the matching row of ``error_targets``.
    """
    if n_times < 2:
        raise ValueError("n_times must be at least 2")
    E = np.asarray(E)
    es = step_eigensystem(H0, generators, pulse)
    U = es.unitaries()
    N, dt = pulse.n_steps, pulse.dt
    fwd = propagate_with(U, inputs)                       # (N+1, B, d)
    # bwd[k] = U(T, t_k)^dag target
    bwd = np.empty_like(fwd)
    cur = np.asarray(error_targets, dtype=complex).T
    bwd[N] = cur.T
    for k in range(N - 1, -1, -1):
        cur = U[k].conj().T @ cur
        bwd[k] = cur.T
    times = np.linspace(0, pulse.duration, n_times)
    per = np.empty((n_times, fwd.shape[1]))
    for i, t in enumerate(times):
        k = min(int(np.floor(t / dt + 1e-9)), N)
        frac = t - k * dt
        if k < N and frac > 1e-12:
            psi = es.partial_unitary(k, frac) @ fwd[k].T
            psi = E @ psi
            psi = es.partial_unitary(k, dt - frac) @ (psi / np.linalg.norm(psi, axis=0))
            ref = bwd[k + 1].T
        else:
            psi = E @ fwd[k].T
            psi = psi / np.linalg.norm(psi, axis=0)
            ref = bwd[k].T
        per[i] = 1 - np.abs(np.sum(ref.conj() * psi, axis=0)) ** 2
    return JumpSweep(times, per.mean(axis=1), per)


def parity_projectors(cfg: HilbertConfig) -> tuple[np.ndarray, np.ndarray]:
    """Even and odd cavity-parity projectors on the joint space."""
    P = fock_operators(cfg).parity_cav
    I = np.eye(cfg.dim)
    return (I + P) / 2, (I - P) / 2


def _postselected_fidelity(rhos, targets, proj):
    rp = proj[None] @ rhos @ proj[None]
    tr = np.real(np.trace(rp, axis1=1, axis2=2))
    if np.any(tr < 1e-12):
        raise ValueError("post-selected branch has no weight")
    return average_gate_fidelity(rp / tr[:, None, None], targets)


def lossy_gate_fidelities(system, pulse: PulseEnvelope, target, substeps: int | None = None) -> dict:
    """Gate fidelities from the master equation with the system's coherence times.

    * ``net`` - six code cardinal inputs, unconditioned output states.
    * ``code_space`` - outputs post-selected on even cavity parity.
    * ``error_space`` - six error cardinal inputs, post-selected on odd parity,
      compared with the error-space targets (needs an error map).
    """
    cfg = system.cfg
    cops = collapse_operators(system.params, cfg)
    even, odd = parity_projectors(cfg)
    if not target.cavity_drive:
        pulse = pulse.with_samples(np.zeros_like(pulse.eps), pulse.omega)
    out = {}
    rho0 = pure_to_density(target.inputs)
    rf = lindblad_propagate(system.H0, system.generators, pulse, cops, rho0, substeps, store=False).final
    out["net"] = average_gate_fidelity(rf, target.targets)
    out["code_space"] = _postselected_fidelity(rf, target.targets, even)
    if target.error_inputs is not None:
        rho0e = pure_to_density(target.error_inputs)
        rfe = lindblad_propagate(system.H0, system.generators, pulse, cops, rho0e, substeps, store=False).final
        out["error_space"] = _postselected_fidelity(rfe, target.error_targets, odd)
    return out


# ---------------------------------------------------------------------------
# logical process tomography

PAULI_BASIS = (cs.PAULI_I, cs.PAULI_X, cs.PAULI_Y, cs.PAULI_Z)

# |0>, |1>, |+>, |+i>
TOMOGRAPHY_INPUTS = np.array([[1, 0], [0, 1], [1, 1], [1, 1j]], dtype=complex) / \
    np.array([1, 1, np.sqrt(2), np.sqrt(2)])[:, None]


def _vec(m):
    return np.asarray(m).reshape(-1, order="F")


# column (m, n): the superoperator conj(P_n) (x) P_m of rho -> P_m rho P_n^dag, flattened
_CHI_BASIS = np.stack([_vec(np.kron(Pn.conj(), Pm)) for Pm in PAULI_BASIS for Pn in PAULI_BASIS],
                      axis=1)


@dataclass
class TomographyResult:
    chi: np.ndarray
    fidelity: float
    leaked_weight: np.ndarray        # per input, 1 - logical trace


def chi_from_unitary(U2) -> np.ndarray:
    u = np.array([np.trace(P @ U2) / 2 for P in PAULI_BASIS])
    return np.outer(u, u.conj())


def _superoperator(outputs) -> np.ndarray:
    """Column-stacked 4x4 superoperator from the images of the four tomography inputs."""
    r0, r1, rp, ri = outputs
    e00, e11 = r0, r1
    e01 = rp + 1j * ri - (1 + 1j) / 2 * (r0 + r1)
    e10 = rp - 1j * ri - (1 - 1j) / 2 * (r0 + r1)
    S = np.zeros((4, 4), dtype=complex)
    for (i, j), img in (((0, 0), e00), ((1, 0), e10), ((0, 1), e01), ((1, 1), e11)):
        S[:, i + 2 * j] = _vec(img)
    return S


def chi_from_outputs(outputs) -> np.ndarray:
    """Process matrix (Pauli basis I, X, Y, Z) by linear inversion, normalised to unit trace."""
    S = _superoperator(outputs)
    chi = np.linalg.solve(_CHI_BASIS, S.reshape(-1, order="F")).reshape(4, 4)
    tr = np.trace(chi)
    if abs(tr) < 1e-12:
        raise ValueError("process matrix has zero trace")
    chi = chi / tr
    return 0.5 * (chi + chi.conj().T)


def process_tomography(channel: Callable[[np.ndarray], np.ndarray], target_unitary,
                       min_weight: float = 1e-6) -> TomographyResult:
    """Simulated logical process tomography.

    ``channel`` maps a 2x2 logical density matrix to a 2x2 (possibly
    sub-normalised) logical density matrix.  Outputs are renormalised and
    their missing weight recorded; inputs with less than ``min_weight``
    logical weight raise ``ValueError``.
    """
    outs = []
    leaked = []
    for psi in TOMOGRAPHY_INPUTS:
        r = np.asarray(channel(np.outer(psi, psi.conj())))
        tr = float(np.real(np.trace(r)))
        if tr < min_weight:
            raise ValueError("channel output has (almost) no logical weight")
        outs.append(r / tr)
        leaked.append(1 - tr)
    chi = chi_from_outputs(outs)
    chi_t = chi_from_unitary(np.asarray(target_unitary))
    return TomographyResult(chi, float(np.real(np.trace(chi @ chi_t))), np.array(leaked))


# ---------------------------------------------------------------------------
# Wigner function

def wigner(rho_cav, alphas) -> np.ndarray:
    """W(alpha) = (2/pi) Tr[D(alpha) P D(alpha)^dag rho] from the closed-form displaced-Fock elements.

    ``rho_cav`` is a cavity density matrix (or a pure cavity state); ``alphas``
    any array of complex points.
    """
    rho = np.asarray(rho_cav, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    alphas = np.asarray(alphas, dtype=complex)
    beta = 2 * alphas
    x = np.abs(beta) ** 2
    d = rho.shape[0]
    W = np.zeros(alphas.shape, dtype=complex)
    # Tr[D(2a) P rho] = sum_{m,n} <m|D(2a)|n> (-1)^n rho_{nm}
    for m in range(d):
        for n in range(d):
            if rho[n, m] == 0:
                continue
            if m >= n:
                lg = 0.5 * (gammaln(n + 1) - gammaln(m + 1))
                el = np.exp(lg - x / 2) * beta ** (m - n) * eval_genlaguerre(n, m - n, x)
            else:
                lg = 0.5 * (gammaln(m + 1) - gammaln(n + 1))
                el = np.exp(lg - x / 2) * (-beta.conj()) ** (n - m) * eval_genlaguerre(m, n - m, x)
            W += el * (-1) ** n * rho[n, m]
    return 2 / np.pi * np.real(W)


def wigner_grid(radius: float, step: float) -> np.ndarray:
    if not radius > 0 or not step > 0:
        raise ValueError("grid radius and step must be positive")
    ax = np.arange(-radius, radius + step / 2, step)
    re, im = np.meshgrid(ax, ax, indexing="ij")
    return re + 1j * im
