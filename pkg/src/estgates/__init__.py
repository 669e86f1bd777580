"""Pulse synthesis and diagnostics for error-semitransparent gates on a binomial bosonic qubit.

Submodules
----------
hilbert     truncated operators, Hamiltonians, collapse operators
codespace   kitten code, logical states, instantaneous subspaces
dynamics    Schroedinger, Lindblad and jump-conditioned propagation
metrics     Delta_QEC, leakage, mismatch, ET fidelity, tomography, Wigner
grape       cost functions, exact gradients, constraints, optimiser, targets
errormodel  parity-selection model and fidelity-decay fitting
sequence    repeated-gate process-fidelity experiments
fileio      text file formats
cli         the ``estctl`` command
"""

__version__ = "0.1.0"
