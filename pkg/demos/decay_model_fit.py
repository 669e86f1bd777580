"""Fit synthetic repeated-gate fidelity curves with the parity-selection decay model."""

from dataclasses import replace

import numpy as np

from estgates import errormodel as em

truth = em.DecayModelParams(gamma_C=0.012, gamma_E=0.03, F_err_jump=0.8)
N = np.array([1, 2, 4, 8, 12, 16, 24, 32, 48, 64])
rng = np.random.default_rng(7)

podd = em.p_odd_vs_gates(N, per_gate_jump_prob=0.011, p_prep_odd=0.02)[0]
print("P(odd | measured odd):", np.round(em.parity_posterior(podd, truth.eps_parity)[0], 3))

code = em.model_curve(N, truth, "code", podd) + 0.005 * rng.normal(size=N.size)
curve = em.FidelityCurve(N, np.clip(code, 0, 1), np.full(N.size, 0.005))
fit = em.fit_decay_model(curve, "code", fixed=em.DecayModelParams(), odd_prob=podd)
print(f"gamma_C: true {truth.gamma_C}, fit {fit.params.gamma_C:.4f} +- {fit.stderr['gamma_C']:.4f}")

errc = em.error_fidelity_curve(N, truth) + 0.005 * rng.normal(size=N.size)
curve_e = em.FidelityCurve(N, np.clip(errc, 0, 1), np.full(N.size, 0.005))
start = replace(truth, gamma_E=0.01, F_err_jump=0.5)
fit_e = em.fit_decay_model(curve_e, "error", fixed=start)
print(f"gamma_E: true {truth.gamma_E}, fit {fit_e.params.gamma_E:.4f}; "
      f"F_jump: true {truth.F_err_jump}, fit {fit_e.params.F_err_jump:.3f}")

boot = em.bootstrap_fit(curve_e, "error", fixed=start, n_boot=50, seed=1)
print("bootstrap sd (gamma_E, F_jump):", np.round(boot.std(axis=0, ddof=1), 4))
