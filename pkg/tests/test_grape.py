import numpy as np
import pytest
from hypothesis import given, strategies as st

from estgates import codespace as cs
from estgates import grape as G
from estgates.dynamics import PulseEnvelope, propagate
from estgates.hilbert import HilbertConfig, SystemParams

SMALL = G.ControlSystem(cfg=HilbertConfig(8, 2))


def rand_pulse(rng, n, amp=1.0, dt=1.0):
    c = lambda: amp * (rng.normal(size=n) + 1j * rng.normal(size=n))
    return PulseEnvelope(c(), c(), dt)


def gram(rows):
    return rows.conj() @ rows.T


# --- weights and targets ---------------------------------------------------------

def test_cost_weights_validation():
    with pytest.raises(ValueError):
        G.CostWeights(1, -0.1, 0)
    with pytest.raises(ValueError):
        G.CostWeights(0, 0, 0)
    assert G.CostWeights(0, 0, 1).as_tuple() == (0, 0, 1, 0, 0)


def test_target_requires_error_map_for_le_est(system):
    t = G.gate_target(system, "X")
    bare = G.GateTarget("X", t.inputs, t.targets)
    with pytest.raises(ValueError, match="error-space map"):
        bare.with_mode("EST")
    with pytest.raises(ValueError):
        G.GateTarget("bad", 2 * t.inputs, t.targets)
    with pytest.raises(KeyError):
        G.gate_target(system, "S")


def test_x_target_maps_cardinals(system):
    t = G.gate_target(system, "X", "EST")
    assert np.allclose(t.targets[0], system.code.word1)
    assert np.allclose(t.targets[1], system.code.word0)
    assert np.allclose(t.targets[2], t.inputs[2])           # +X is an eigenstate
    assert np.allclose(t.error_targets[0], system.error_code.word1)
    assert t.duration_ns == 1000 and t.cavity_drive


def test_t_gate_target(system):
    t = G.gate_target(system, "T")
    assert not t.cavity_drive and t.duration_ns == 600
    assert np.allclose(t.targets[4], system.code.basis @ np.array([1, np.exp(1j * 3 * np.pi / 4)]) / np.sqrt(2))


@pytest.mark.parametrize("name", ["X", "H", "T"])
def test_gate_targets_are_unitary_maps(system, name):
    t = G.gate_target(system, name, "LE")
    assert np.allclose(gram(t.inputs), gram(t.targets))
    assert np.allclose(gram(t.error_inputs), gram(t.error_targets))


def test_aqec_target_is_consistent(system):
    t = G.aqec_target(system)
    assert t.inputs.shape == (12, system.cfg.dim)
    assert np.allclose(gram(t.inputs), gram(t.targets))
    # recovered branch sits on the excited qubit
    m = t.targets[6].reshape(system.cfg.cavity_dim, 2)
    assert np.allclose(m[:, 0], 0) and np.allclose(m[:, 1], system.code.word0.reshape(-1, 2)[:, 0])
    t2 = G.aqec_target(system, frame_phase=0.3)
    assert np.allclose(gram(t2.inputs), gram(t2.targets))


def test_encode_decode_targets(system):
    d = G.encode_decode_targets(system)
    for t in d.values():
        assert np.allclose(gram(t.inputs), gram(t.targets))
        assert t.duration_ns == 600
    assert np.allclose(d["encode"].targets, d["decode"].inputs)
    q = G.qubit_cardinal_states(system.cfg)
    assert np.allclose(np.abs(q[:, 0]) ** 2 + np.abs(q[:, 1]) ** 2, 1)


# --- constraints -------------------------------------------------------------------------

def test_edge_window_shape():
    w = G.gaussian_edge_window(1000, 1.0, 48.0)
    assert np.all(w[48:952] == 1)
    # first sample centre sits half a step inside the 1e-4 edge
    sigma = 48 / np.sqrt(2 * np.log(1e4))
    assert w[0] == pytest.approx(np.exp(-47.5 ** 2 / (2 * sigma ** 2)), rel=1e-12)
    assert 1e-4 < w[0] < 1.3e-4
    assert np.allclose(w, w[::-1])
    assert np.all(np.diff(w[:48]) > 0)


@given(st.integers(0, 2**31 - 1), st.floats(5, 200))
def test_bandlimit_properties(seed, bw):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=256) + 1j * rng.normal(size=256)
    b = G.bandlimit(s, 1.0, bw)
    assert np.allclose(G.bandlimit(b, 1.0, bw), b, atol=1e-12)
    f = np.fft.fftfreq(256, 1.0) * 1e3
    assert np.all(np.abs(np.fft.fft(b)[np.abs(f) > bw + 1e-9]) < 1e-9)
    assert np.linalg.norm(b) <= np.linalg.norm(s) + 1e-12


def test_bandlimit_tones():
    t = np.arange(1000)
    low = np.exp(2j * np.pi * 0.02 * t)      # 20 MHz
    high = np.exp(2j * np.pi * 0.2 * t)      # 200 MHz
    assert np.allclose(G.bandlimit(low + high, 1.0, 50), low, atol=1e-10)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5))
def test_clip_properties(seed, amax):
    rng = np.random.default_rng(seed)
    s = 3 * (rng.normal(size=64) + 1j * rng.normal(size=64))
    c = G.clip_amplitude(s, amax)
    assert np.all(np.abs(c) <= amax * (1 + 1e-12))
    big = np.abs(s) > amax
    assert np.allclose(np.angle(c[big]), np.angle(s[big]))
    assert np.array_equal(c[~big], s[~big])
    assert np.allclose(G.clip_amplitude(c, amax), c)


def test_apply_constraints():
    rng = np.random.default_rng(0)
    p = rand_pulse(rng, 400, amp=10)
    q = G.apply_constraints(p)
    assert np.max(np.abs(q.eps)) <= 4 + 1e-12 and np.max(np.abs(q.omega)) <= 4 + 1e-12
    assert abs(q.eps[0]) < 4 * 1.3e-4
    with pytest.raises(ValueError, match="ramps"):
        G.apply_constraints(PulseEnvelope.zeros(90))


# --- costs --------------------------------------------------------------------------------

def test_costs_vanish_for_identity_without_hamiltonian(free_system):
    t = G.gate_target(free_system, "I", "EST")
    p = PulseEnvelope.zeros(100)
    cb = G.CostFunction(free_system, t, G.CostWeights(1, 1, 1)).evaluate(p)
    assert cb.c1 == pytest.approx(0, abs=1e-14)
    assert cb.c2 == pytest.approx(0, abs=1e-14)
    assert cb.c3 == pytest.approx(0, abs=1e-30)
    assert np.allclose(cb.grad, 0, atol=1e-12)


def test_static_pair_et_cost_is_zero_for_one_l(free_system):
    # |1_L> = |2> and its partner |1> stay exact a-partners under no evolution
    s = free_system
    t = G.GateTarget("pair", s.code.word1[None], s.code.word1[None], s.error_code.word1[None],
                     s.error_code.word1[None], mode="EST")
    assert G.cost_et(s, PulseEnvelope.zeros(10), t) == pytest.approx(0, abs=1e-14)


def test_total_cost_is_weighted_sum():
    rng = np.random.default_rng(1)
    t = G.gate_target(SMALL, "X", "EST")
    p = rand_pulse(rng, 60)
    c1 = G.cost_fidelity(SMALL, p, t)
    c2 = G.cost_et(SMALL, p, t)
    c3 = G.cost_velocity_variance(SMALL, p, t)
    tot = G.total_cost(SMALL, p, t, G.CostWeights(1, 0.7, 7))
    assert tot == pytest.approx(c1 + 0.7 * c2 + 7 * c3, rel=1e-12)
    assert G.total_cost(SMALL, p, t, G.CostWeights(1, 0, 0)) == pytest.approx(c1)
    assert 0 <= c1 <= 1 and 0 <= c2 <= 1 and c3 >= 0


def test_ord_and_le_ignore_et_weight():
    rng = np.random.default_rng(2)
    p = rand_pulse(rng, 40)
    for mode in ("ORD", "LE"):
        t = G.gate_target(SMALL, "X", mode)
        a = G.CostFunction(SMALL, t, G.CostWeights(1, 0, 0)).evaluate(p)
        b = G.CostFunction(SMALL, t, G.CostWeights(1, 5, 0)).evaluate(p)
        assert a.total == b.total and np.array_equal(a.grad, b.grad)
    with pytest.raises(ValueError):
        G.cost_et(SMALL, p, G.gate_target(SMALL, "X", "ORD"))


def test_le_folds_error_fidelity():
    rng = np.random.default_rng(3)
    p = rand_pulse(rng, 40)
    cb = G.CostFunction(SMALL, G.gate_target(SMALL, "X", "LE"), G.CostWeights()).evaluate(p, gradient=False)
    assert cb.c1 == pytest.approx(1 - 0.5 * (cb.code_fidelity + cb.error_fidelity))


def test_code_fidelity_matches_propagation(system):
    rng = np.random.default_rng(4)
    p = rand_pulse(rng, 50)
    t = G.gate_target(system, "H")
    psi = propagate(system.H0, system.generators, p, t.inputs).final
    f = np.mean(np.abs(np.sum(t.targets.conj() * psi, axis=1)) ** 2)
    assert G.cost_fidelity(system, p, t) == pytest.approx(1 - f, abs=1e-14)


@pytest.mark.parametrize("mode,weights", [
    ("ORD", (1, 0, 0, 0)), ("LE", (1, 0, 0, 0)), ("EST", (1, 0.7, 7, 0)),
    ("EST", (0, 1, 0, 0)), ("EST", (0, 0, 1, 0)), ("ORD", (0, 0, 0, 1)),
    ("LE", (0, 0, 0, 0, 1)), ("EST", (1, 0.7, 7, 0, 10)),
])
def test_gradient_matches_finite_difference(mode, weights):
    rng = np.random.default_rng(5)
    t = G.gate_target(SMALL, "X", mode)
    w = G.CostWeights(*weights)
    p = rand_pulse(rng, 25, amp=2.0)
    cf = G.CostFunction(SMALL, t, w)
    grad = cf.evaluate(p).grad
    u = p.controls()
    h = 1e-5
    for k, c in [(0, 0), (7, 1), (12, 2), (24, 3), (18, 0)]:
        up, dn = u.copy(), u.copy()
        up[k, c] += h
        dn[k, c] -= h
        mk = lambda v: PulseEnvelope(v[:, 0] + 1j * v[:, 1], v[:, 2] + 1j * v[:, 3])
        fd = (cf.evaluate(mk(up), gradient=False).total - cf.evaluate(mk(dn), gradient=False).total) / (2 * h)
        assert grad[k, c] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_edge_guard_oracle():
    # static code never reaches the top levels; a Fock state sitting there pays exactly its population
    t = G.gate_target(SMALL, "I", "LE")
    zero = PulseEnvelope.zeros(30)
    cf = G.CostFunction(SMALL, t, G.CostWeights(0, 0, 0, 0, 1))
    assert cf.evaluate(zero, gradient=False).c_edge == 0
    top = np.zeros(SMALL.cfg.dim, complex)
    top[(SMALL.cfg.cavity_dim - 1) * SMALL.cfg.qubit_dim] = 1
    lone = G.GateTarget("top", top[None], top[None])
    ce = G.CostFunction(SMALL, lone, G.CostWeights(0, 0, 0, 0, 1), edge_levels=1).evaluate(zero, gradient=False)
    assert ce.c_edge == pytest.approx(1.0) and ce.total == pytest.approx(1.0)
    with pytest.raises(ValueError):
        G.CostFunction(SMALL, t, G.CostWeights(), edge_levels=SMALL.cfg.cavity_dim)


def test_complex_gradient_packing():
    rng = np.random.default_rng(6)
    t = G.gate_target(SMALL, "X")
    p = rand_pulse(rng, 20)
    ge, go = G.gradient(SMALL, p, t, G.CostWeights())
    g = G.CostFunction(SMALL, t, G.CostWeights()).evaluate(p).grad
    assert np.allclose(ge, g[:, 0] + 1j * g[:, 1]) and np.allclose(go, g[:, 2] + 1j * g[:, 3])


def test_t_gate_ignores_cavity_drive():
    rng = np.random.default_rng(7)
    t = G.gate_target(SMALL, "T")
    p = rand_pulse(rng, 20)
    cb = G.CostFunction(SMALL, t, G.CostWeights()).evaluate(p)
    assert np.all(cb.grad[:, :2] == 0)
    q = p.with_samples(np.zeros(20), p.omega)
    assert G.cost_fidelity(SMALL, q, t) == cb.c1


# --- optimiser ------------------------------------------------------------------------------

def test_initial_pulse_is_seeded_and_small():
    a = G.initial_pulse(500, seed=3)
    b = G.initial_pulse(500, seed=3)
    assert np.array_equal(a.eps, b.eps)
    assert np.max(np.abs(a.controls()[:, :2] @ [1, 1j])) <= 0.2
    assert not np.array_equal(a.eps, G.initial_pulse(500, seed=4).eps)


QUICK = G.Schedule(stage1_iters=15, stage2_iters=10, log_every=0)


def test_optimize_is_deterministic_and_constrained():
    t = G.gate_target(SMALL, "X", "EST")
    p1, r1 = G.optimize(t, SMALL, QUICK, duration_ns=150)
    p2, r2 = G.optimize(t, SMALL, QUICK, duration_ns=150)
    assert np.array_equal(p1.eps, p2.eps) and np.array_equal(r1.trace, r2.trace)
    assert np.max(np.abs(p1.eps)) <= 4 + 1e-12
    assert abs(p1.eps[0]) < 1e-3 and abs(p1.omega[-1]) < 1e-3
    assert r1.trace.shape == (25, 5)
    assert np.all(np.isfinite(r1.trace))
    s = r1.summary()
    assert "C2" in s and s["iterations_stage1"] == 15
    assert r1.max_active_level is not None


def test_optimize_reduces_cost():
    t = G.gate_target(SMALL, "I", "LE")
    init = G.initial_pulse(120, seed=1, init_amp=3.0)
    _, r = G.optimize(t, SMALL, G.Schedule(stage1_iters=40, stage2_iters=0, log_every=0),
                      duration_ns=120, initial=init)
    assert r.trace[-1, 1] < 0.5 * r.trace[0, 1]


def test_optimize_summary_without_et():
    t = G.gate_target(SMALL, "X", "ORD")
    _, r = G.optimize(t, SMALL, G.Schedule(stage1_iters=3, stage2_iters=0, log_every=0), duration_ns=120)
    assert "C2" not in r.summary() and r.iterations == (3, 0)


def test_optimize_rejects_nonfinite_initial():
    t = G.gate_target(SMALL, "X")
    bad = PulseEnvelope(np.full(120, np.nan), np.zeros(120))
    with pytest.raises(G.OptimizationError):
        G.optimize(t, SMALL, QUICK, duration_ns=120, initial=bad)
    with pytest.raises(ValueError):
        G.optimize(t, SMALL, QUICK, duration_ns=120, initial=PulseEnvelope.zeros(10))


def test_optimize_t_gate_leaves_cavity_idle():
    t = G.gate_target(SMALL, "T")
    p, _ = G.optimize(t, SMALL, QUICK, duration_ns=120)
    assert not np.any(p.eps)


def test_patience_stops_early():
    t = G.gate_target(SMALL, "I")
    sched = G.Schedule(stage1_iters=500, stage2_iters=0, patience=5, ftol=1.0, log_every=0)
    _, r = G.optimize(t, SMALL, sched, duration_ns=120)
    assert r.converged and r.iterations[0] == 6
