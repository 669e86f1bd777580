"""GRAPE pulse synthesis for error-semitransparent gates on the kitten code.

The optimiser minimises ``C_tot = w_fid C1 + w_et C2 + w_vel C3 (+ w_nbar C_nbar + w_edge C_edge)``
over piecewise-constant complex drives on the cavity and the qubit:

* ``C1`` - state-transfer infidelity over the input/target pairs.  In LE and
  EST modes the error-space pairs are averaged in with equal weight.
* ``C2`` - one minus the per-step ET fidelity, averaged over paired code and
  error cardinal trajectories (EST mode only).
* ``C3`` - variance of the Fubini-Study speed along the code trajectories.
* ``C_nbar`` - optional mean squared photon-number imbalance of |0_L>, |1_L>.
* ``C_edge`` - truncation guard: mean population in the top ``edge_levels``
  Fock levels over all propagated trajectories and time steps.  Keeps the
  optimiser from exploiting the artificial boundary of the truncated cavity.

Gradients are exact: states are propagated forward, a costate is swept
backwards, and each step's exponential derivative is taken in the step
Hamiltonian's eigenbasis.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import codespace as cs
from .dynamics import (PulseEnvelope, control_generators, propagate_with,
                       step_eigensystem, max_active_level, Trajectory)
from .metrics import et_fidelity_terms
from .hilbert import (HilbertConfig, SystemParams, build_drive_generators,
                      build_static_hamiltonian, embed_cavity, fock_operators)

log = logging.getLogger(__name__)


class Mode(str, Enum):
    ORD = "ORD"
    LE = "LE"
    EST = "EST"


@dataclass(frozen=True)
class CostWeights:
    w_fid: float = 1.0
    w_et: float = 0.0
    w_vel: float = 0.0
    w_nbar: float = 0.0
    w_edge: float = 0.0

    def __post_init__(self):
        ws = (self.w_fid, self.w_et, self.w_vel, self.w_nbar, self.w_edge)
        if any(w < 0 for w in ws):
            raise ValueError("cost weights must be nonnegative")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one cost weight must be positive")

    def as_tuple(self):
        return (self.w_fid, self.w_et, self.w_vel, self.w_nbar, self.w_edge)


@dataclass(frozen=True)
class GateTarget:
    """Input/target state pairs defining an operation.

    ``inputs``/``targets`` hold the primary (code-space) pairs as rows.  LE and
    EST modes also need ``error_inputs``/``error_targets``; row i of the error
    inputs is the error partner of row i of the code inputs.
    """

    name: str
    inputs: np.ndarray
    targets: np.ndarray
    error_inputs: Optional[np.ndarray] = None
    error_targets: Optional[np.ndarray] = None
    mode: Mode = Mode.ORD
    logical: Optional[np.ndarray] = None
    cavity_drive: bool = True
    duration_ns: float = 1000.0
    nbar_pair: Optional[tuple[int, int]] = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        for arr in (self.inputs, self.targets):
            if not np.allclose(np.linalg.norm(arr, axis=1), 1, atol=1e-10):
                raise ValueError("target states must have unit norm")
        if self.inputs.shape != self.targets.shape:
            raise ValueError("inputs and targets must pair up")
        if self.mode in (Mode.LE, Mode.EST) and self.error_inputs is None:
            raise ValueError(f"{self.mode.value} mode requires an error-space map")
        if self.error_inputs is not None and self.error_inputs.shape != self.error_targets.shape:
            raise ValueError("error inputs and targets must pair up")

    def with_mode(self, mode) -> "GateTarget":
        return replace(self, mode=Mode(mode))

    @property
    def uses_error_map(self) -> bool:
        return self.mode in (Mode.LE, Mode.EST)


@dataclass
class ControlSystem:
    """Everything the cost functions need about the physical system."""

    params: SystemParams = field(default_factory=SystemParams)
    cfg: HilbertConfig = field(default_factory=HilbertConfig)

    def __post_init__(self):
        self.H0 = build_static_hamiltonian(self.params, self.cfg)
        self.generators = build_drive_generators(self.cfg)
        self.ops = fock_operators(self.cfg)
        self.code = cs.kitten_code(self.cfg)
        self.error_code = cs.error_subspace(self.code, self.ops.a)
        self.control_ops = control_generators(self.generators)


# ---------------------------------------------------------------------------
# targets

LOGICAL_GATES = {
    "X": cs.PAULI_X,
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "T": np.diag([1, np.exp(1j * np.pi / 4)]),
    "I": cs.PAULI_I,
}


def _apply_logical(space: cs.CodeSubspace, m2) -> np.ndarray:
    """Rows: m2 applied to each cardinal point, expressed in ``space``."""
    coeffs = cs.cardinal_coefficients() @ np.asarray(m2).T
    return coeffs @ space.basis.T


def gate_target(system: ControlSystem, name: str, mode=Mode.ORD) -> GateTarget:
    """Logical X, H, T (or I) on the kitten code with the induced error-space map.

    The T gate drives the qubit only and lasts 600 ns; X and H last 1 us.
    """
    name = name.upper()
    if name not in LOGICAL_GATES:
        raise KeyError(f"unknown gate {name!r}; choose from {sorted(LOGICAL_GATES)}")
    m2 = LOGICAL_GATES[name]
    code, err = system.code, system.error_code
    is_t = name == "T"
    return GateTarget(
        name=name,
        inputs=cs.cardinal_states(code),
        targets=_apply_logical(code, m2),
        error_inputs=cs.cardinal_states(err),
        error_targets=_apply_logical(err, m2),
        mode=Mode(mode),
        logical=m2,
        cavity_drive=not is_t,
        duration_ns=600.0 if is_t else 1000.0,
    )


def gate_targets(system: ControlSystem, mode=Mode.ORD) -> dict[str, GateTarget]:
    return {n: gate_target(system, n, mode) for n in ("X", "H", "T")}


def aqec_target(system: ControlSystem, frame_phase: float = 0.0) -> GateTarget:
    """Recovery unitary: |psi_E>|g> -> |psi_L>|e>, |psi_L>|g> -> |psi_L>|g>.

    ``frame_phase`` adds a logical Z rotation exp(-i phase Z/2) to the
    recovered branch, for compensating deterministic evolution during
    readout and reset.  Zero by default.
    """
    cfg = system.cfg
    if cfg.qubit_dim < 2:
        raise ValueError("AQEC needs an ancilla")
    code, err = system.code, system.error_code
    rz = np.diag([np.exp(-0.5j * frame_phase), np.exp(0.5j * frame_phase)])
    code_e = cs.CodeSubspace(_flip_qubit(cfg, code.word0), _flip_qubit(cfg, code.word1))
    inputs = np.concatenate([cs.cardinal_states(code), cs.cardinal_states(err)])
    targets = np.concatenate([cs.cardinal_states(code), _apply_logical(code_e, rz)])
    return GateTarget("AQEC", inputs, targets, mode=Mode.ORD, nbar_pair=None)


def _flip_qubit(cfg: HilbertConfig, psi) -> np.ndarray:
    """Move the qubit factor from |g> to |e> (psi must have the qubit in |g>)."""
    m = np.asarray(psi).reshape(cfg.cavity_dim, cfg.qubit_dim)
    out = np.zeros_like(m)
    out[:, 1] = m[:, 0]
    return out.ravel()


def qubit_cardinal_states(cfg: HilbertConfig) -> np.ndarray:
    """Cavity vacuum with the qubit at its six cardinal points."""
    vac = np.zeros(cfg.cavity_dim, dtype=complex)
    vac[0] = 1.0
    q = cs.CodeSubspace(embed_cavity(cfg, vac, 0), embed_cavity(cfg, vac, 1))
    return cs.cardinal_states(q)


def encode_decode_targets(system: ControlSystem, duration_ns: float = 600.0) -> dict[str, GateTarget]:
    """Encode (qubit -> code), decode (code -> qubit) and error-space decode maps.

    Encode takes |0>(x)(c0|g> + c1|e>) to (c0|0_L> + c1|1_L>)(x)|g>.
    """
    qb = qubit_cardinal_states(system.cfg)
    code_card = cs.cardinal_states(system.code)
    err_card = cs.cardinal_states(system.error_code)
    kw = dict(mode=Mode.ORD, duration_ns=duration_ns, nbar_pair=None)
    return {
        "encode": GateTarget("encode", qb, code_card, **kw),
        "decode": GateTarget("decode", code_card, qb, **kw),
        "decode_error": GateTarget("decode_error", err_card, qb, **kw),
    }


# ---------------------------------------------------------------------------
# constraints

def gaussian_edge_window(n_steps: int, dt: float, ramp_ns: float, floor: float = 1e-4) -> np.ndarray:
    """1 in the bulk, Gaussian rise/fall over ``ramp_ns`` reaching ``floor`` at the ends."""
    t = (np.arange(n_steps) + 0.5) * dt
    sigma = ramp_ns / np.sqrt(2 * np.log(1 / floor))
    w = np.ones(n_steps)
    rise = t < ramp_ns
    w[rise] = np.exp(-((t[rise] - ramp_ns) ** 2) / (2 * sigma ** 2))
    fall = t > n_steps * dt - ramp_ns
    w[fall] = np.exp(-((t[fall] - (n_steps * dt - ramp_ns)) ** 2) / (2 * sigma ** 2))
    return w


def bandlimit(samples, dt: float, bandwidth_MHz: float) -> np.ndarray:
    """Zero every DFT bin with |f| > bandwidth.  Acts on both quadratures."""
    s = np.asarray(samples, dtype=complex)
    f_mhz = np.fft.fftfreq(s.shape[0], d=dt) * 1e3
    spec = np.fft.fft(s)
    spec[np.abs(f_mhz) > bandwidth_MHz + 1e-9] = 0
    return np.fft.ifft(spec)


def clip_amplitude(samples, max_amp: float) -> np.ndarray:
    """Clamp |s| to ``max_amp`` keeping the phase."""
    s = np.asarray(samples, dtype=complex)
    mag = np.abs(s)
    scale = np.where(mag > max_amp, max_amp / np.maximum(mag, 1e-300), 1.0)
    return s * scale


def apply_constraints(pulse: PulseEnvelope) -> PulseEnvelope:
    """Band-limit, clip, then apply the Gaussian edge window (in that order)."""
    if pulse.duration < 2 * pulse.ramp_ns:
        raise ValueError(f"pulse of {pulse.duration} ns is shorter than two {pulse.ramp_ns} ns ramps")
    w = gaussian_edge_window(pulse.n_steps, pulse.dt, pulse.ramp_ns)

    def one(s):
        return w * clip_amplitude(bandlimit(s, pulse.dt, pulse.bandwidth_MHz), pulse.max_amp_MHz)

    return pulse.with_samples(one(pulse.eps), one(pulse.omega))


# ---------------------------------------------------------------------------
# cost evaluation

@dataclass
class CostBreakdown:
    c1: float
    c2: float
    c3: float
    c_nbar: float
    total: float
    code_fidelity: float
    error_fidelity: Optional[float]
    et_fidelity: Optional[float]
    et_singular_steps: int = 0
    grad: Optional[np.ndarray] = field(default=None, repr=False)   # (N, 4) real
    states: Optional[np.ndarray] = field(default=None, repr=False)
    c_edge: float = 0.0


def _phi_matrix(evals, dt):
    """Divided differences of exp(-i w dt): stable sinc form, shape (N, d, d)."""
    wj = evals[:, :, None]
    wk = evals[:, None, :]
    return -1j * dt * np.exp(-0.5j * (wj + wk) * dt) * np.sinc((wj - wk) * dt / (2 * np.pi))


class CostFunction:
    """Evaluates C_tot and its exact gradient for one target on one system.

    ``et_stride`` evaluates the ET fidelity every k-th step; ``edge_levels``
    sets how many of the highest Fock levels the truncation guard covers.
    """

    def __init__(self, system: ControlSystem, target: GateTarget, weights: CostWeights,
                 et_stride: int = 1, nbar_guard: float = 1e-6, edge_levels: int = 3):
        if target.mode == Mode.ORD and weights.w_et:
            weights = replace(weights, w_et=0.0)
        if target.mode == Mode.LE:
            weights = replace(weights, w_et=0.0)
        self.system = system
        self.target = target
        self.weights = weights
        self.et_stride = int(et_stride)
        self.nbar_guard = nbar_guard
        cfg = system.cfg
        if not 1 <= edge_levels < cfg.cavity_dim:
            raise ValueError("edge_levels must lie in [1, cavity_dim)")
        fock = np.repeat(np.arange(cfg.cavity_dim), cfg.qubit_dim)
        self.edge_mask = (fock >= cfg.cavity_dim - edge_levels).astype(float)
        self.n_code = target.inputs.shape[0]
        if target.uses_error_map:
            self.init = np.concatenate([target.inputs, target.error_inputs])
        else:
            self.init = target.inputs
        if target.error_inputs is not None and target.error_inputs.shape[0] != self.n_code:
            raise ValueError("ET pairing needs equal numbers of code and error inputs")

    def evaluate(self, pulse: PulseEnvelope, gradient: bool = True, keep_states: bool = False) -> CostBreakdown:
        sysm, tgt, w = self.system, self.target, self.weights
        if not tgt.cavity_drive:
            pulse = pulse.with_samples(np.zeros_like(pulse.eps), pulse.omega)
        es = step_eigensystem(sysm.H0, sysm.generators, pulse)
        U = es.unitaries()
        psi = propagate_with(U, self.init)          # (N+1, B, d)
        N = pulse.n_steps
        nc = self.n_code
        g = np.zeros_like(psi) if gradient else None

        # C1
        final = psi[-1]
        ov_code = np.einsum("bd,bd->b", tgt.targets.conj(), final[:nc])
        f_code = float(np.mean(np.abs(ov_code) ** 2))
        f_err = None
        if tgt.uses_error_map:
            ov_err = np.einsum("bd,bd->b", tgt.error_targets.conj(), final[nc:])
            f_err = float(np.mean(np.abs(ov_err) ** 2))
            c1 = 1 - 0.5 * (f_code + f_err)
            if gradient:
                g[-1, :nc] += -w.w_fid * 0.5 / nc * tgt.targets * ov_code[:, None]
                g[-1, nc:] += -w.w_fid * 0.5 / nc * tgt.error_targets * ov_err[:, None]
        else:
            c1 = 1 - f_code
            if gradient:
                g[-1, :nc] += -w.w_fid / nc * tgt.targets * ov_code[:, None]

        # C2 (ET fidelity), reported whenever an error map exists
        c2 = 0.0
        f_et = None
        n_sing = 0
        if tgt.error_inputs is not None and (tgt.uses_error_map or w.w_et):
            if tgt.uses_error_map:
                err_traj = psi[:, nc:]
            else:
                err_traj = None
            if err_traj is not None:
                f_et, n_sing, g_c, g_e, idx = et_fidelity_terms(
                    psi[:, :nc], err_traj, sysm.ops.a, sysm.ops.n_cav, self.et_stride,
                    self.nbar_guard, gradient and w.w_et > 0)
                if tgt.mode == Mode.EST:
                    c2 = 1 - f_et
                    if gradient and w.w_et > 0:
                        g[idx, :nc] += -w.w_et * g_c
                        g[idx, nc:] += -w.w_et * g_e

        # C3 (velocity variance over the code trajectories)
        c3, g3 = velocity_variance_terms(psi[:, :nc], pulse.dt, gradient and w.w_vel > 0)
        if gradient and w.w_vel > 0:
            g[:, :nc] += w.w_vel * g3

        # optional photon-number imbalance
        c_nbar = 0.0
        if tgt.nbar_pair is not None and (w.w_nbar > 0):
            i0, i1 = tgt.nbar_pair
            c_nbar, g0, g1 = nbar_imbalance_terms(psi[:, i0], psi[:, i1], sysm.ops.n_cav, gradient)
            if gradient:
                g[:, i0] += w.w_nbar * g0
                g[:, i1] += w.w_nbar * g1

        # optional truncation guard over every propagated trajectory
        c_edge = 0.0
        if w.w_edge > 0:
            scale = 1.0 / (psi.shape[0] * psi.shape[1])
            c_edge = float(np.sum(np.abs(psi) ** 2 * self.edge_mask) * scale)
            if gradient:
                g += w.w_edge * scale * self.edge_mask * psi

        total = w.w_fid * c1 + w.w_et * c2 + w.w_vel * c3 + w.w_nbar * c_nbar + w.w_edge * c_edge
        grad = self._backprop(es, U, psi, g, pulse) if gradient else None
        if grad is not None and not tgt.cavity_drive:
            grad[:, :2] = 0
        return CostBreakdown(c1, c2, c3, c_nbar, total, f_code, f_err, f_et, n_sing, grad,
                             psi if keep_states else None, c_edge)

    def _backprop(self, es, U, psi, g, pulse) -> np.ndarray:
        N = pulse.n_steps
        lam = np.empty((N,) + psi.shape[1:], dtype=complex)   # lam[k-1] = costate at step k
        cur = g[N].copy()
        lam[N - 1] = cur
        for k in range(N - 1, 0, -1):
            cur = g[k] + (U[k].conj().T @ cur.T).T
            lam[k - 1] = cur
        V = es.evecs
        Vh = V.conj().transpose(0, 2, 1)
        a_t = Vh @ lam.transpose(0, 2, 1)                      # (N, d, B)
        b_t = Vh @ psi[:-1].transpose(0, 2, 1)                 # (N, d, B)
        O = a_t.conj() @ b_t.transpose(0, 2, 1)                # (N, d, d)
        X = O * _phi_matrix(es.evals, es.dt)
        Y = V.conj() @ X @ V.transpose(0, 2, 1)
        return 2 * np.real(np.einsum("cpq,npq->nc", self.system.control_ops, Y))


def velocity_variance_terms(traj, dt, gradient=False, tiny=1e-9):
    """Mean over trajectories of the variance of v_i = (2/dt) arccos|<psi_i|psi_{i+1}>|."""
    s = np.einsum("nbd,nbd->nb", traj[:-1].conj(), traj[1:])       # (N, B)
    mag = np.abs(s)
    sin_t = np.sqrt(np.clip(1 - mag ** 2, 0, None))
    theta = np.arctan2(sin_t, mag)
    v = 2 / dt * theta
    N, B = v.shape
    vbar = v.mean(axis=0)
    var = ((v - vbar) ** 2).mean(axis=0)
    c3 = float(var.mean())
    if not gradient:
        return c3, None
    dC_dv = 2 * (v - vbar) / N / B
    good = sin_t > tiny
    dtheta_dmag = np.where(good, -1.0 / np.where(good, sin_t, 1.0), 0.0)
    safe_mag = np.maximum(mag, 1e-300)
    coef = dC_dv * (2 / dt) * dtheta_dmag / (2 * safe_mag)      # multiplies d|s|^2-type terms
    g = np.zeros_like(traj)
    # d|s|/dpsi_{i+1}* = s psi_i / (2|s|);  d|s|/dpsi_i* = s* psi_{i+1} / (2|s|)
    g[1:] += (coef * s)[..., None] * traj[:-1]
    g[:-1] += (coef * s.conj())[..., None] * traj[1:]
    return c3, g


def nbar_imbalance_terms(traj0, traj1, n_op, gradient=False):
    """Mean over steps of (<n>_0 - <n>_1)^2 for the |0_L>, |1_L> trajectories."""
    n0 = traj0 @ n_op.T
    n1 = traj1 @ n_op.T
    m0 = np.real(np.einsum("nd,nd->n", traj0.conj(), n0))
    m1 = np.real(np.einsum("nd,nd->n", traj1.conj(), n1))
    diff = m0 - m1
    c = float(np.mean(diff ** 2))
    if not gradient:
        return c, None, None
    k = 2 * diff / diff.size
    return c, k[:, None] * n0, -k[:, None] * n1


def cost_fidelity(system, pulse, target) -> float:
    return CostFunction(system, target, CostWeights(1, 0, 0)).evaluate(pulse, gradient=False).c1


def cost_et(system, pulse, target, et_stride: int = 1) -> float:
    if target.mode != Mode.EST:
        raise ValueError("the ET cost is defined for EST-mode targets")
    return CostFunction(system, target, CostWeights(1, 1, 0), et_stride).evaluate(pulse, gradient=False).c2


def cost_velocity_variance(system, pulse, target) -> float:
    return CostFunction(system, target, CostWeights(0, 0, 1)).evaluate(pulse, gradient=False).c3


def total_cost(system, pulse, target, weights: CostWeights, et_stride: int = 1) -> float:
    return CostFunction(system, target, weights, et_stride).evaluate(pulse, gradient=False).total


def gradient(system, pulse, target, weights: CostWeights, et_stride: int = 1):
    """dC_tot/d(sample) as complex arrays: d/dRe + i d/dIm for eps and omega."""
    g = CostFunction(system, target, weights, et_stride).evaluate(pulse).grad
    return g[:, 0] + 1j * g[:, 1], g[:, 2] + 1j * g[:, 3]


# ---------------------------------------------------------------------------
# optimiser

@dataclass(frozen=True)
class Schedule:
    stage1_iters: int = 2000
    stage2_iters: int = 1000
    stage1_weights: CostWeights = CostWeights(1.0, 0.7, 7.0, w_edge=10.0)
    stage2_weights: CostWeights = CostWeights(1.0, 0.1, 0.0, w_edge=10.0)
    learning_rate: float = 0.1
    stage2_learning_rate: Optional[float] = None      # None: same as stage 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    init_amp: float = 0.2
    et_stride: int = 1
    edge_levels: int = 3                               # Fock levels covered by the truncation guard
    patience: int = 200
    ftol: float = 1e-7
    log_every: int = 100


@dataclass
class OptimizationReport:
    target: str
    mode: str
    c1: float
    c2: Optional[float]
    c3: float
    c_tot: float
    trace: np.ndarray                 # (iterations, 5): stage, C1, C2, C3, C_tot
    code_fidelity: float
    error_fidelity: Optional[float]
    et_fidelity_avg: Optional[float]
    max_active_level: Optional[int]
    wall_time: float
    iterations: tuple[int, int]
    converged: bool
    et_stride: int = 1
    et_singular_steps: int = 0
    c_edge: float = 0.0

    def summary(self) -> dict:
        d = {
            "target": self.target, "mode": self.mode,
            "C1": self.c1, "C3": self.c3, "C_edge": self.c_edge, "C_tot": self.c_tot,
            "code_fidelity": self.code_fidelity,
            "error_fidelity": self.error_fidelity,
            "et_fidelity_avg": self.et_fidelity_avg,
            "max_active_level": self.max_active_level,
            "wall_time_s": self.wall_time,
            "iterations_stage1": self.iterations[0],
            "iterations_stage2": self.iterations[1],
            "converged": self.converged,
            "et_stride_ns": self.et_stride,
            "et_singular_steps": self.et_singular_steps,
        }
        if self.c2 is not None:
            d["C2"] = self.c2
        return d


class OptimizationError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


def initial_pulse(n_steps: int, seed: int, init_amp: float = 0.2, dt: float = 1.0, **kw) -> PulseEnvelope:
    """Seeded random complex samples, magnitude uniform in [0, init_amp] MHz."""
    rng = np.random.default_rng(seed)
    mag = rng.uniform(0, init_amp, size=(2, n_steps))
    ph = rng.uniform(0, 2 * np.pi, size=(2, n_steps))
    s = mag * np.exp(1j * ph)
    return PulseEnvelope(s[0], s[1], dt, **kw)


def _project_raw(x: np.ndarray, pulse: PulseEnvelope, cavity_drive: bool) -> np.ndarray:
    eps = clip_amplitude(bandlimit(x[:, 0] + 1j * x[:, 1], pulse.dt, pulse.bandwidth_MHz), pulse.max_amp_MHz)
    om = clip_amplitude(bandlimit(x[:, 2] + 1j * x[:, 3], pulse.dt, pulse.bandwidth_MHz), pulse.max_amp_MHz)
    if not cavity_drive:
        eps = np.zeros_like(eps)
    return np.stack([eps.real, eps.imag, om.real, om.imag], axis=1)


def _raw_to_pulse(x, template: PulseEnvelope, window) -> PulseEnvelope:
    return template.with_samples(window * (x[:, 0] + 1j * x[:, 1]), window * (x[:, 2] + 1j * x[:, 3]))


def optimize(target: GateTarget, system: ControlSystem, schedule: Schedule = Schedule(),
             duration_ns: float | None = None, dt: float = 1.0, ramp_ns: float = 48.0,
             bandwidth_MHz: float = 50.0, max_amp_MHz: float = 4.0,
             initial: PulseEnvelope | None = None, callback=None):
    """Two-stage projected Adam descent on the raw drive samples.

    The raw samples are kept band-limited and amplitude-clipped after every
    update; the evaluated pulse is the raw pulse times the Gaussian edge
    window, so the returned pulse always satisfies the constraints.
    Returns ``(pulse, report)``.
    """
    t_start = time.perf_counter()
    duration_ns = target.duration_ns if duration_ns is None else duration_ns
    n = int(round(duration_ns / dt))
    template = PulseEnvelope.zeros(n, dt, ramp_ns=ramp_ns, bandwidth_MHz=bandwidth_MHz,
                                   max_amp_MHz=max_amp_MHz)
    if template.duration < 2 * ramp_ns:
        raise ValueError("pulse shorter than two ramps")
    window = gaussian_edge_window(n, dt, ramp_ns)
    start = initial if initial is not None else initial_pulse(n, schedule.seed, schedule.init_amp, dt)
    if start.n_steps != n:
        raise ValueError(f"initial pulse has {start.n_steps} samples, expected {n}")
    if not np.all(np.isfinite(start.controls())):
        raise OptimizationError("initial pulse contains non-finite samples", np.empty((0, 5)))
    x = _project_raw(start.controls(), template, target.cavity_drive)

    trace = []
    lr2 = schedule.learning_rate if schedule.stage2_learning_rate is None else schedule.stage2_learning_rate
    stages = [(1, schedule.stage1_iters, schedule.stage1_weights, schedule.learning_rate),
              (2, schedule.stage2_iters, schedule.stage2_weights, lr2)]
    done_iters = []
    converged = False
    for stage, iters, weights, lr in stages:
        cost = CostFunction(system, target, weights, schedule.et_stride, edge_levels=schedule.edge_levels)
        m = np.zeros_like(x)
        v = np.zeros_like(x)
        best = np.inf
        best_it = 0
        it = 0
        stage_converged = False
        for it in range(1, iters + 1):
            pulse = _raw_to_pulse(x, template, window)
            cb = cost.evaluate(pulse)
            if not np.isfinite(cb.total) or not np.all(np.isfinite(cb.grad)):
                raise OptimizationError(f"non-finite cost at stage {stage} iteration {it}", np.array(trace))
            trace.append((stage, cb.c1, cb.c2, cb.c3, cb.total))
            if callback is not None:
                callback(stage, it, cb)
            if schedule.log_every and it % schedule.log_every == 0:
                log.info("stage %d it %d: C1=%.5f C2=%.5f C3=%.3g Ctot=%.5f",
                         stage, it, cb.c1, cb.c2, cb.c3, cb.total)
            if cb.total < best - schedule.ftol:
                best, best_it = cb.total, it
            elif it - best_it >= schedule.patience:
                stage_converged = True
                break
            # chain rule through the (linear) window and band-limit
            gx = cb.grad * window[:, None]
            ge = bandlimit(gx[:, 0] + 1j * gx[:, 1], dt, bandwidth_MHz)
            go = bandlimit(gx[:, 2] + 1j * gx[:, 3], dt, bandwidth_MHz)
            gx = np.stack([ge.real, ge.imag, go.real, go.imag], axis=1)
            m = schedule.beta1 * m + (1 - schedule.beta1) * gx
            v = schedule.beta2 * v + (1 - schedule.beta2) * gx ** 2
            mhat = m / (1 - schedule.beta1 ** it)
            vhat = v / (1 - schedule.beta2 ** it)
            x = x - lr * mhat / (np.sqrt(vhat) + schedule.adam_eps)
            x = _project_raw(x, template, target.cavity_drive)
        done_iters.append(it if iters else 0)
        if iters:
            converged = stage_converged

    pulse = _raw_to_pulse(x, template, window)
    final_cost = CostFunction(system, target, schedule.stage2_weights if schedule.stage2_iters
                              else schedule.stage1_weights, schedule.et_stride,
                              edge_levels=schedule.edge_levels)
    cb = final_cost.evaluate(pulse, gradient=False, keep_states=True)
    levels = [max_active_level(Trajectory(pulse.times, cb.states[:, i]), system.cfg)
              for i in range(target.inputs.shape[0])]
    levels = [lv for lv in levels if lv is not None]
    report = OptimizationReport(
        target=target.name, mode=target.mode.value, c1=cb.c1,
        c2=cb.c2 if target.mode == Mode.EST else None, c3=cb.c3, c_tot=cb.total,
        trace=np.array(trace, dtype=float).reshape(-1, 5),
        code_fidelity=cb.code_fidelity, error_fidelity=cb.error_fidelity,
        et_fidelity_avg=cb.et_fidelity, max_active_level=max(levels) if levels else None,
        wall_time=time.perf_counter() - t_start, iterations=tuple(done_iters),
        converged=converged, et_stride=schedule.et_stride, et_singular_steps=cb.et_singular_steps,
        c_edge=cb.c_edge)
    return pulse, report
