"""Kitten code basics: codewords, QEC-condition check, error space and Wigner functions.

Run with ``python3 demos/kitten_code_tour.py``.
"""

import numpy as np

from estgates import codespace as cs
from estgates import metrics as M
from estgates.dynamics import PulseEnvelope
from estgates.grape import ControlSystem
from estgates.hilbert import reduce_to_cavity

system = ControlSystem()
code, err = system.code, system.error_code
a, n = system.ops.a, system.ops.n_cav

print("mean photon number of |0_L>, |1_L>:",
      [float(np.real(np.vdot(w, n @ w))) for w in (code.word0, code.word1)])
print("Delta_QEC for {a, n}:", M.qec_violation(code))

# error words sit on odd parity
nz = lambda v: np.flatnonzero(np.abs(v) > 1e-12) // system.cfg.qubit_dim
print("error words occupy Fock levels", nz(err.word0), "and", nz(err.word1))

# under the bare Hamiltonian the code is static, so all diagnostics vanish
ms = M.metric_series(system.H0, system.generators, PulseEnvelope.zeros(500), code, a)
print("idle 500 ns:", ms.time_averages())

# Wigner function of |+X_L> on a coarse grid
grid = M.wigner_grid(3.0, 0.25)
plus = cs.logical_state(code, np.pi / 2, 0.0)
W = M.wigner(reduce_to_cavity(system.cfg, plus), grid)
print(f"W(0) = {W[grid.shape[0] // 2, grid.shape[1] // 2]:+.4f}, min W = {W.min():+.4f}")
