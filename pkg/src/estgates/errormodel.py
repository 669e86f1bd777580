"""Parity-selection error model and fidelity-decay curves for repeated gates.

Code-space fidelity decays as ``A exp(-gamma_C N) + B``.  Error-space
fidelity after N gates with a single photon jump in a uniformly random gate
is the branch average

    F_error(N) = (D F_jump / N) sum_k F_C^(k-1) F_E^(N-k) + G,

with ``F_C = exp(-gamma_C)`` and ``F_E = exp(-gamma_E)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class DecayModelParams:
    """Parameters of the decay model.

    ``A`` defaults to 0.66 so that ``A + B`` equals an encode-decode process
    fidelity of 0.91.
    """

    eps_parity: float = 0.05
    A: float = 0.66
    B: float = 0.25
    gamma_C: float = 0.01
    gamma_E: float = 0.01
    D: float = 0.6
    F_err_jump: float = 0.85
    G: float = 0.25
    F_alias: float = 0.25

    def __post_init__(self):
        for name in ("eps_parity", "F_err_jump", "F_alias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        for name in ("B", "G"):
            v = getattr(self, name)
            if not 0.25 <= v <= 1.0:
                raise ValueError(f"{name}={v} must lie in [0.25, 1]")
        for name in ("gamma_C", "gamma_E"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FidelityCurve:
    N: np.ndarray
    fidelity: np.ndarray
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        N = np.asarray(self.N)
        F = np.asarray(self.fidelity, dtype=float)
        if N.shape != F.shape or N.ndim != 1:
            raise ValueError("N and fidelity must be equal-length 1-d arrays")
        if np.any(N != np.round(N)) or np.any(N < 1):
            raise ValueError("gate counts must be integers >= 1")
        if np.any(np.diff(N) <= 0):
            raise ValueError("gate counts must be strictly increasing")
        if np.any((F < 0) | (F > 1)):
            raise ValueError("fidelities must lie in [0, 1]")
        object.__setattr__(self, "N", N.astype(int))
        object.__setattr__(self, "fidelity", F)
        if self.stderr is not None:
            s = np.asarray(self.stderr, dtype=float)
            if s.shape != F.shape or np.any(s <= 0):
                raise ValueError("stderr must be positive and match fidelity")
            object.__setattr__(self, "stderr", s)


# ---------------------------------------------------------------------------
# parity selection

def parity_posterior(p_odd, eps_parity):
    """P(odd | measured odd) and P(even | measured even) for a symmetric readout error.

    Raises ``ValueError`` where a measurement outcome has zero probability.
    """
    p = np.asarray(p_odd, dtype=float)
    e = np.asarray(eps_parity, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any((e < 0) | (e > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    den_o = (1 - e) * p + e * (1 - p)
    den_e = (1 - e) * (1 - p) + e * p
    if np.any(den_o == 0) or np.any(den_e == 0):
        raise ValueError("posterior undefined: a parity outcome has zero probability")
    post_o = (1 - e) * p / den_o
    post_e = (1 - e) * (1 - p) / den_e
    if post_o.ndim == 0:
        return float(post_o), float(post_e)
    return post_o, post_e


def measured_fidelity(posterior, F_true, F_alias=0.25):
    """Fidelity seen after parity post-selection: P F_true + (1 - P) F_alias."""
    for v in (posterior, F_true, F_alias):
        if np.any((np.asarray(v) < 0) | (np.asarray(v) > 1)):
            raise ValueError("inputs must lie in [0, 1]")
    return posterior * F_true + (1 - posterior) * F_alias


def p_odd_vs_gates(N, per_gate_jump_prob: float, p_prep_odd: float):
    """Odd-parity probability after N gates, and the normalised (gate, prep) branch weights.

    Preparation and the per-gate single jumps are independent Bernoulli
    events; double jumps are ignored.  Weights are NaN where p_odd is 0.
    """
    for v in (per_gate_jump_prob, p_prep_odd):
        if not 0 <= v <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
    N = np.asarray(N, dtype=float)
    if np.any(N < 0):
        raise ValueError("N must be nonnegative")
    p_gate = (1 - p_prep_odd) * (1 - (1 - per_gate_jump_prob) ** N)
    p_odd = p_prep_odd + p_gate
    with np.errstate(invalid="ignore", divide="ignore"):
        w_gate = np.where(p_odd > 0, p_gate / np.where(p_odd > 0, p_odd, 1), np.nan)
        w_prep = np.where(p_odd > 0, p_prep_odd / np.where(p_odd > 0, p_odd, 1), np.nan)
    return p_odd, w_gate, w_prep


# ---------------------------------------------------------------------------
# decay curves

def code_fidelity_curve(N, params: DecayModelParams):
    N = np.asarray(N, dtype=float)
    if np.any(N < 0):
        raise ValueError("N must be nonnegative")
    return params.A * np.exp(-params.gamma_C * N) + params.B


def _branch_mean(N, gamma_C, gamma_E):
    """(1/N) sum_{k=1}^N F_C^(k-1) F_E^(N-k), evaluated without cancellation.

    Uses the summed geometric series; when |F_C - F_E| < DEGENERATE_TOL the
    degenerate limit F^(N-1) is used with F the geometric mean of F_C and F_E.
    """
    N = np.asarray(N, dtype=float)
    d = gamma_E - gamma_C                       # log(F_C / F_E)
    FC, FE = np.exp(-gamma_C), np.exp(-gamma_E)
    if abs(FC - FE) < DEGENERATE_TOL:
        return np.exp(-0.5 * (gamma_C + gamma_E) * (N - 1))
    # (F_C^N - F_E^N) / (F_C - F_E) = F_E^(N-1) (r^N - 1)/(r - 1),  r = exp(d)
    if d > 0:
        # factor out the larger F_C to keep the exponentials bounded
        return np.exp(-gamma_C * (N - 1)) * (-np.expm1(-N * d)) / (-np.expm1(-d)) / N
    return np.exp(-gamma_E * (N - 1)) * np.expm1(N * d) / np.expm1(d) / N


def error_fidelity_curve(N, params: DecayModelParams):
    """Error-space fidelity after N >= 1 gates (geometric-series closed form)."""
    N = np.asarray(N, dtype=float)
    if np.any(N < 1):
        raise ValueError("error fidelity curve needs N >= 1")
    return params.D * params.F_err_jump * _branch_mean(N, params.gamma_C, params.gamma_E) + params.G


def error_fidelity_bruteforce(N: int, params: DecayModelParams) -> float:
    """Explicit N-term branch sum (reference implementation)."""
    FC, FE = np.exp(-params.gamma_C), np.exp(-params.gamma_E)
    k = np.arange(1, N + 1)
    s = np.sum(FC ** (k - 1) * FE ** (N - k)) / N
    return params.D * params.F_err_jump * s + params.G


# ---------------------------------------------------------------------------
# fitting

DEFAULT_FREE = {"code": ("gamma_C",), "error": ("gamma_E", "F_err_jump")}
_BOUNDS = {"A": (-1.0, 1.0), "gamma_C": (0.0, 10.0), "gamma_E": (0.0, 10.0),
           "F_err_jump": (0.0, 1.0), "B": (0.25, 1.0), "G": (0.25, 1.0), "D": (0.0, 1.0),
           "eps_parity": (0.0, 0.5), "F_alias": (0.0, 1.0)}


@dataclass
class FitResult:
    params: DecayModelParams
    free: tuple
    residual_norm: float
    model: np.ndarray
    converged: bool
    message: str = ""
    stderr: dict = field(default_factory=dict)


def model_curve(N, params: DecayModelParams, which: str, odd_prob=None):
    """Code or error curve; with ``odd_prob`` (p_odd per N) the parity aliasing is applied."""
    if which == "code":
        F = code_fidelity_curve(N, params)
    elif which == "error":
        F = error_fidelity_curve(N, params)
    else:
        raise ValueError("which must be 'code' or 'error'")
    if odd_prob is not None:
        post_o, post_e = parity_posterior(np.asarray(odd_prob, dtype=float), params.eps_parity)
        post = post_o if which == "error" else post_e
        F = post * F + (1 - post) * params.F_alias
    return F


def fit_decay_model(curve: FidelityCurve, which: str = "code", fixed: DecayModelParams | None = None,
                    free: Sequence[str] | None = None, odd_prob=None, max_nfev: int = 2000) -> FitResult:
    """Nonlinear least squares for the free parameters; others stay at ``fixed``.

    Residuals are weighted by ``curve.stderr`` when present.  The start point
    is ``fixed`` itself, so the fit is deterministic.
    """
    base = fixed if fixed is not None else DecayModelParams()
    free = tuple(free) if free is not None else DEFAULT_FREE[which]
    if len(curve.N) < 3:
        raise ValueError("need at least 3 data points")
    if len(free) > len(curve.N):
        raise ValueError("more free parameters than data points")
    for name in free:
        if name not in _BOUNDS:
            raise KeyError(f"cannot fit parameter {name!r}")
    lo = np.array([_BOUNDS[n][0] for n in free])
    hi = np.array([_BOUNDS[n][1] for n in free])
    x0 = np.clip([getattr(base, n) for n in free], lo, hi)
    w = 1.0 / curve.stderr if curve.stderr is not None else 1.0

    def make(x):
        return replace(base, **dict(zip(free, map(float, x))))

    def resid(x):
        return (model_curve(curve.N, make(x), which, odd_prob) - curve.fidelity) * w

    sol = least_squares(resid, x0, bounds=(lo, hi), x_scale="jac", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=max_nfev)
    best = make(sol.x)
    model = model_curve(curve.N, best, which, odd_prob)
    err = {}
    try:
        J = sol.jac
        dof = max(len(curve.N) - len(free), 1)
        s2 = 2 * sol.cost / dof if curve.stderr is None else 1.0
        cov = np.linalg.inv(J.T @ J) * s2
        err = {n: float(np.sqrt(max(cov[i, i], 0))) for i, n in enumerate(free)}
    except np.linalg.LinAlgError:
        pass
    return FitResult(best, free, float(np.linalg.norm(model - curve.fidelity)), model,
                     bool(sol.status > 0), sol.message, err)


def bootstrap_fit(curve: FidelityCurve, which: str = "code", fixed: DecayModelParams | None = None,
                  free: Sequence[str] | None = None, n_boot: int = 200, seed: int = 0,
                  odd_prob=None) -> np.ndarray:
    """Residual-bootstrap estimates of the free parameters, shape (n_boot, n_free)."""
    fit = fit_decay_model(curve, which, fixed, free, odd_prob)
    rng = np.random.default_rng(seed)
    res = curve.fidelity - fit.model
    out = np.empty((n_boot, len(fit.free)))
    for b in range(n_boot):
        F = np.clip(fit.model + rng.choice(res, size=res.size, replace=True), 0.0, 1.0)
        boot = FidelityCurve(curve.N, F, curve.stderr)
        fb = fit_decay_model(boot, which, fit.params, fit.free, odd_prob)
        out[b] = [getattr(fb.params, n) for n in fit.free]
    return out
