"""Plain-text file formats.

Every numeric file is UTF-8, comma separated, with ``#``-prefixed header
lines naming the columns and units.  Writes go to a temporary file in the
target directory followed by an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .dynamics import PulseEnvelope
from .errormodel import FidelityCurve

PULSE_HEADER = "t_ns, re_eps_MHz, im_eps_MHz, re_omega_MHz, im_omega_MHz"


def _fmt(x) -> str:
    return repr(float(x))


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _table(header: str, rows, meta: dict | None = None) -> str:
    lines = [f"# {header}"]
    if meta:
        lines.append("# meta: " + " ".join(f"{k}={v}" for k, v in meta.items()))
    lines += [", ".join(_fmt(v) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in r)
              for r in rows]
    return "\n".join(lines) + "\n"


def _read_table(path, ncols: int):
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# meta:"):
                    for tok in line[len("# meta:"):].split():
                        k, _, v = tok.partition("=")
                        meta[k] = v
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != ncols:
                raise ValueError(f"{path}:{lineno}: expected {ncols} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    return np.array(rows, dtype=float).reshape(-1, ncols), meta


# ---------------------------------------------------------------------------
# pulses and trajectories

def write_pulse(path, pulse: PulseEnvelope) -> Path:
    t = np.arange(pulse.n_steps) * pulse.dt
    rows = np.column_stack([t, pulse.eps.real, pulse.eps.imag, pulse.omega.real, pulse.omega.imag])
    meta = {"dt_ns": _fmt(pulse.dt), "ramp_ns": _fmt(pulse.ramp_ns),
            "bandwidth_MHz": _fmt(pulse.bandwidth_MHz), "max_amp_MHz": _fmt(pulse.max_amp_MHz)}
    return atomic_write_text(path, _table(PULSE_HEADER, rows, meta))


def read_pulse(path) -> PulseEnvelope:
    """Parse a pulse file; ``dt`` comes from the metadata line or the time column."""
    data, meta = _read_table(path, 5)
    kw = {k: float(meta[k]) for k in ("ramp_ns", "bandwidth_MHz", "max_amp_MHz") if k in meta}
    if "dt_ns" in meta:
        dt = float(meta["dt_ns"])
    elif len(data) >= 2:
        steps = np.diff(data[:, 0])
        if not np.allclose(steps, steps[0]):
            raise ValueError(f"{path}: time column is not uniformly spaced")
        dt = float(steps[0])
    else:
        dt = 1.0
    return PulseEnvelope(data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4], dt, **kw)


def write_trajectory(path, times, populations) -> Path:
    """Rows ``t_ns, fock_index, population`` for a (T, levels) population array."""
    pops = np.asarray(populations)
    rows = [(float(t), int(n), float(pops[i, n])) for i, t in enumerate(times) for n in range(pops.shape[1])]
    return atomic_write_text(path, _table("t_ns, fock_index, population", rows))


def write_metric_series(path, series) -> Path:
    rows = np.column_stack([series.times, series.delta_qec, series.leakage, series.traj_mismatch])
    return atomic_write_text(path, _table("t_ns, delta_qec, leakage, mismatch", rows))


def read_metric_series(path):
    from .metrics import MetricSeries
    data, _ = _read_table(path, 4)
    return MetricSeries(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def write_wigner(path, alphas, w) -> Path:
    a = np.asarray(alphas).ravel()
    rows = np.column_stack([a.real, a.imag, np.asarray(w).ravel()])
    return atomic_write_text(path, _table("re_alpha, im_alpha, w", rows))


def read_wigner(path):
    data, _ = _read_table(path, 3)
    return data[:, 0] + 1j * data[:, 1], data[:, 2]


def write_state(path, psi) -> Path:
    psi = np.asarray(psi, dtype=complex)
    rows = [(i, float(c.real), float(c.imag)) for i, c in enumerate(psi)]
    return atomic_write_text(path, _table("index, re, im", rows))


def read_state(path) -> np.ndarray:
    data, _ = _read_table(path, 3)
    idx = data[:, 0].astype(int)
    psi = np.zeros(idx.max() + 1 if len(idx) else 0, dtype=complex)
    psi[idx] = data[:, 1] + 1j * data[:, 2]
    return psi


# ---------------------------------------------------------------------------
# chi matrices

def format_chi(chi, label: str) -> str:
    """Labelled 4x4 block; each row holds re, im pairs for the I, X, Y, Z columns."""
    chi = np.asarray(chi)
    lines = [f"# chi {label} (Pauli basis I,X,Y,Z; row entries re,im per column)"]
    for r in chi:
        lines.append(", ".join(f"{_fmt(z.real)}, {_fmt(z.imag)}" for z in r))
    return "\n".join(lines) + "\n"


def write_chi_blocks(path, blocks: dict) -> Path:
    return atomic_write_text(path, "".join(format_chi(c, k) for k, c in blocks.items()))


def read_chi_blocks(path) -> dict:
    out = {}
    label = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# chi "):
                label = line[len("# chi "):].split(" (")[0]
                rows = []
                continue
            if not line:
                continue
            vals = [float(v) for v in line.split(",")]
            rows.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
            if len(rows) == 4:
                out[label] = np.array(rows)
    return out


# ---------------------------------------------------------------------------
# fidelity data

def read_fidelity_csv(path) -> FidelityCurve:
    """CSV with header ``N,fidelity[,stderr]``."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["N", "fidelity"] or len(header) > 3 or (len(header) == 3 and header[2] != "stderr"):
        raise ValueError(f"{path}: header must be 'N,fidelity' or 'N,fidelity,stderr', got {lines[0]!r}")
    rows = []
    for i, ln in enumerate(lines[1:], 2):
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != len(header):
            raise ValueError(f"{path}: row {i} has {len(parts)} fields, expected {len(header)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ValueError(f"{path}: row {i} is not numeric") from None
    data = np.array(rows).reshape(-1, len(header))
    stderr = data[:, 2] if len(header) == 3 else None
    return FidelityCurve(data[:, 0], data[:, 1], stderr)


def write_fidelity_csv(path, N, fidelity, stderr=None) -> Path:
    cols = ["N", "fidelity"] + (["stderr"] if stderr is not None else [])
    lines = ["# N: gate count, fidelity: dimensionless", ",".join(cols)]
    for i, n in enumerate(N):
        vals = [str(int(n)), _fmt(fidelity[i])] + ([_fmt(stderr[i])] if stderr is not None else [])
        lines.append(",".join(vals))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if np.isfinite(f) else str(f)
    if isinstance(o, complex):
        return [o.real, o.imag]
    return o
