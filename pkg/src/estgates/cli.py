"""``estctl``: command-line front end.

Usage::

    estctl <optimize|metrics|jump-sweep|experiment|fit|wigner> --config CONFIG
           [--out DIR] [--seed N] [--threads N]

Exit codes: 0 success, 1 input error, 2 optimisation budget exhausted.
Heavy imports are deferred until ``--threads`` has been applied to the
BLAS/OpenMP environment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

COMMANDS = ("optimize", "metrics", "jump-sweep", "experiment", "fit", "wigner")
EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "BLIS_NUM_THREADS", "NUMEXPR_NUM_THREADS")


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# config helpers

def _check_keys(cfg: dict, allowed: set, where: str = "config"):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where} must be a JSON object")
    bad = sorted(set(cfg) - allowed)
    if bad:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(bad)}")


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key '{key}'")
    return cfg[key]


def _num(cfg, key, default, kind=float, minimum=None):
    v = cfg.get(key, default)
    try:
        v = kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}' must be a {kind.__name__}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"key '{key}' must be >= {minimum}")
    return v


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_system(cfg: dict, base: Path):
    """System from ``system_params`` (path or inline object), $ESTCTL_DEFAULT_PARAMS or the shipped defaults."""
    from .grape import ControlSystem
    from .hilbert import load_params, params_from_dict
    src = cfg.get("system_params")
    try:
        if isinstance(src, dict):
            params, hcfg = params_from_dict(src)
        elif src is not None:
            params, hcfg = load_params(_resolve(base, src))
        elif os.environ.get("ESTCTL_DEFAULT_PARAMS"):
            params, hcfg = load_params(os.environ["ESTCTL_DEFAULT_PARAMS"])
        else:
            params, hcfg = load_params()
    except KeyError as e:
        raise ConfigError(f"system_params: {e.args[0]}") from None
    except (ValueError, json.JSONDecodeError) as e:
        raise ConfigError(f"system_params: {e}") from None
    if cfg.get("lossless"):
        params = params.lossless()
    if "cavity_dim" in cfg:
        from .hilbert import HilbertConfig
        try:
            hcfg = HilbertConfig(_num(cfg, "cavity_dim", 12, int), hcfg.qubit_dim)
        except ValueError as e:
            raise ConfigError(f"key 'cavity_dim': {e}") from None
    try:
        return ControlSystem(params, hcfg)
    except ValueError as e:
        raise ConfigError(f"key 'cavity_dim': {e}") from None


def _target(system, cfg: dict):
    from . import grape
    name = str(_require(cfg, "target"))
    mode = str(cfg.get("mode", "ORD")).upper()
    if mode not in ("ORD", "LE", "EST"):
        raise ConfigError(f"key 'mode' must be ORD, LE or EST, got {mode!r}")
    key = name.lower()
    if key == "aqec":
        t = grape.aqec_target(system, _num(cfg, "frame_phase", 0.0))
    elif key in ("encode", "decode", "decode_error"):
        t = grape.encode_decode_targets(system)[key]
    elif name.upper() in grape.LOGICAL_GATES:
        t = grape.gate_target(system, name, "ORD")
    else:
        raise ConfigError(f"key 'target': unknown target {name!r}")
    try:
        return t.with_mode(mode)
    except ValueError as e:
        raise ConfigError(f"key 'mode': {e}") from None


def _weights(spec, default, key):
    from .grape import CostWeights
    if spec is None:
        return default
    try:
        if isinstance(spec, dict):
            _check_keys(spec, {"w_fid", "w_et", "w_vel", "w_nbar", "w_edge"}, key)
            return CostWeights(**{k: float(v) for k, v in spec.items()})
        return CostWeights(*[float(v) for v in spec])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"key '{key}': {e}") from None


def _start_angles(spec):
    from .codespace import CARDINAL_ANGLES, CARDINAL_LABELS
    if spec is None:
        return CARDINAL_ANGLES[0]
    if isinstance(spec, str):
        if spec not in CARDINAL_LABELS:
            raise ConfigError(f"key 'start' must be one of {CARDINAL_LABELS} or [theta, phi]")
        return CARDINAL_ANGLES[CARDINAL_LABELS.index(spec)]
    try:
        th, ph = (float(v) for v in spec)
    except (TypeError, ValueError):
        raise ConfigError("key 'start' must be a label or [theta, phi]") from None
    return th, ph


def _read_pulse(base, path, key="pulse"):
    from .fileio import read_pulse
    try:
        return read_pulse(_resolve(base, path))
    except FileNotFoundError:
        raise ConfigError(f"key '{key}': file not found: {path}") from None
    except ValueError as e:
        raise ConfigError(f"key '{key}': {e}") from None


# ---------------------------------------------------------------------------
# commands

def cmd_optimize(cfg, base, out: Path, seed):
    from . import grape
    from .fileio import write_json, write_pulse
    _check_keys(cfg, {"target", "mode", "duration_ns", "dt_ns", "weights", "iterations", "seed",
                      "learning_rate", "stage2_learning_rate", "et_stride", "edge_levels", "constraints", "system_params", "lossless",
                      "cavity_dim", "frame_phase", "init_amp", "patience", "ftol"})
    system = load_system(cfg, base)
    target = _target(system, cfg)
    w = cfg.get("weights", {}) or {}
    _check_keys(w, {"stage1", "stage2"}, "weights")
    it = cfg.get("iterations", {}) or {}
    _check_keys(it, {"stage1", "stage2"}, "iterations")
    cons = cfg.get("constraints", {}) or {}
    _check_keys(cons, {"bandwidth_MHz", "max_amp_MHz", "ramp_ns"}, "constraints")
    d = grape.Schedule()
    sched = grape.Schedule(
        stage1_iters=_num(it, "stage1", d.stage1_iters, int, 0),
        stage2_iters=_num(it, "stage2", d.stage2_iters, int, 0),
        stage1_weights=_weights(w.get("stage1"), d.stage1_weights, "weights.stage1"),
        stage2_weights=_weights(w.get("stage2"), d.stage2_weights, "weights.stage2"),
        learning_rate=_num(cfg, "learning_rate", d.learning_rate),
        stage2_learning_rate=_num(cfg, "stage2_learning_rate", d.stage2_learning_rate)
        if cfg.get("stage2_learning_rate", d.stage2_learning_rate) is not None else None,
        seed=int(seed if seed is not None else _num(cfg, "seed", 0, int, 0)),
        init_amp=_num(cfg, "init_amp", d.init_amp),
        et_stride=_num(cfg, "et_stride", 1, int, 1),
        edge_levels=_num(cfg, "edge_levels", d.edge_levels, int, 1),
        patience=_num(cfg, "patience", d.patience, int, 1),
        ftol=_num(cfg, "ftol", d.ftol),
        log_every=0)
    if sched.stage1_iters + sched.stage2_iters == 0:
        raise ConfigError("key 'iterations': total budget is zero")
    try:
        pulse, report = grape.optimize(
            target, system, sched,
            duration_ns=_num(cfg, "duration_ns", target.duration_ns, float, 0),
            dt=_num(cfg, "dt_ns", 1.0, float, 0),
            ramp_ns=_num(cons, "ramp_ns", 48.0), bandwidth_MHz=_num(cons, "bandwidth_MHz", 50.0),
            max_amp_MHz=_num(cons, "max_amp_MHz", 4.0))
    except grape.OptimizationError as e:
        raise ConfigError(f"optimisation failed: {e}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    write_pulse(out / "pulse.txt", pulse)
    summary = report.summary()
    timing = summary.pop("wall_time_s")
    write_json(out / "report.json", summary)
    _write_trace(out / "trace.csv", report.trace)
    return (EXIT_OK if report.converged else EXIT_BUDGET), {"wall_time_s": timing}


def _write_trace(path, trace):
    from .fileio import _table, atomic_write_text
    rows = [(int(r[0]),) + tuple(r[1:]) for r in trace]
    atomic_write_text(path, _table("stage, C1, C2, C3, C_tot", rows))


def cmd_metrics(cfg, base, out, seed):
    from . import metrics as M
    from .dynamics import Trajectory, fock_occupation, max_active_level, propagate
    from .fileio import write_json, write_metric_series, write_trajectory
    from .codespace import logical_state
    _check_keys(cfg, {"pulse", "system_params", "start", "lossless", "cavity_dim", "squared"})
    system = load_system(cfg, base)
    pulse = _read_pulse(base, _require(cfg, "pulse"))
    start = _start_angles(cfg.get("start"))
    a = system.ops.a
    series = M.metric_series(system.H0, system.generators, pulse, system.code, a,
                             start=start, squared=bool(cfg.get("squared", True)))
    write_metric_series(out / "metrics.csv", series)
    traj = propagate(system.H0, system.generators, pulse, logical_state(system.code, *start))
    write_trajectory(out / "fock_occupation.csv", traj.times, fock_occupation(traj, system.cfg))
    summary = series.time_averages()
    summary["et_fidelity_avg"] = M.et_fidelity_avg(system.H0, system.generators, pulse, system.code,
                                                   system.error_code, a, system.ops.n_cav)
    summary["max_active_level"] = max_active_level(traj, system.cfg)
    summary["start_theta_phi"] = list(start)
    write_json(out / "summary.json", summary)
    return EXIT_OK, {}


def cmd_jump_sweep(cfg, base, out, seed):
    from . import metrics as M
    from .fileio import _table, atomic_write_text, write_json
    _check_keys(cfg, {"pulse", "system_params", "target", "n_times", "lossless", "cavity_dim"})
    system = load_system(cfg, base)
    pulse = _read_pulse(base, _require(cfg, "pulse"))
    n_times = _num(cfg, "n_times", 101, int)
    if n_times < 2:
        raise ConfigError("key 'n_times' must be >= 2")
    tcfg = dict(cfg)
    tcfg.setdefault("target", "X")
    tcfg["mode"] = "LE"
    target = _target(system, tcfg)
    if not target.cavity_drive:
        import numpy as np
        pulse = pulse.with_samples(np.zeros_like(pulse.eps), pulse.omega)
    js = M.jump_sweep(system.H0, system.generators, pulse, target.inputs, target.error_targets,
                      system.ops.a, n_times)
    atomic_write_text(out / "jump_sweep.csv",
                      _table("t_jump_ns, error_space_infidelity", zip(js.times, js.infidelity)))
    write_json(out / "summary.json", {"mean_infidelity": js.mean, "n_times": n_times})
    return EXIT_OK, {}


def cmd_experiment(cfg, base, out, seed):
    import numpy as np
    from .fileio import write_chi_blocks, write_fidelity_csv, write_json
    from .grape import LOGICAL_GATES
    from .sequence import SequenceRunner
    _check_keys(cfg, {"gates", "logical", "N", "recovery", "reset_ns", "lossless", "system_params",
                      "cavity_dim", "substeps"})
    system = load_system(cfg, base)
    gates = _require(cfg, "gates")
    if not isinstance(gates, list):
        raise ConfigError("key 'gates' must be a list of pulse files")
    pulses = [_read_pulse(base, g, "gates") for g in gates]
    logical = str(cfg.get("logical", "I")).upper()
    if logical not in LOGICAL_GATES:
        raise ConfigError(f"key 'logical': unknown gate {logical!r}")
    Ns = _require(cfg, "N")
    if not isinstance(Ns, list) or not Ns or not all(isinstance(n, int) and n >= 1 for n in Ns):
        raise ConfigError("key 'N' must be a non-empty list of integers >= 1")
    rec = cfg.get("recovery")
    if rec not in (None, "ideal"):
        rec = _read_pulse(base, rec, "recovery")
    runner = SequenceRunner(system, pulses, LOGICAL_GATES[logical], rec,
                            reset_ns=_num(cfg, "reset_ns", 1200.0, float, 0),
                            lossless=bool(cfg.get("lossless", False)),
                            substeps=cfg.get("substeps"))
    try:
        res = runner.run(Ns)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    write_fidelity_csv(out / "process_fidelity.csv", res.N, res.fidelity)
    write_chi_blocks(out / "chi.txt", {f"N={n}": c for n, c in zip(res.N, res.chi)})
    write_json(out / "summary.json", {"N": res.N, "fidelity": res.fidelity, "leaked": res.leaked})
    return EXIT_OK, {}


def cmd_fit(cfg, base, out, seed):
    import numpy as np
    from . import errormodel as em
    from .fileio import _table, atomic_write_text, read_fidelity_csv, write_json
    _check_keys(cfg, {"data", "which", "fixed", "free", "parity"})
    try:
        curve = read_fidelity_csv(_resolve(base, _require(cfg, "data")))
    except FileNotFoundError:
        raise ConfigError(f"key 'data': file not found: {cfg['data']}") from None
    except ValueError as e:
        raise ConfigError(f"key 'data': {e}") from None
    which = cfg.get("which", "code")
    if which not in ("code", "error"):
        raise ConfigError("key 'which' must be 'code' or 'error'")
    fixed = cfg.get("fixed", {}) or {}
    try:
        params = em.DecayModelParams(**{k: float(v) for k, v in fixed.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"key 'fixed': {e}") from None
    odd = None
    if cfg.get("parity"):
        par = cfg["parity"]
        _check_keys(par, {"per_gate_jump_prob", "p_prep_odd"}, "parity")
        odd = em.p_odd_vs_gates(curve.N, _num(par, "per_gate_jump_prob", 0.0),
                                _num(par, "p_prep_odd", 0.0))[0]
    try:
        fit = em.fit_decay_model(curve, which, params, cfg.get("free"), odd)
    except KeyError as e:
        raise ConfigError(f"key 'free': {e.args[0]}") from None
    write_json(out / "fit_report.json", {
        "which": which, "free": list(fit.free), "params": fit.params.as_dict(),
        "stderr": fit.stderr, "residual_norm": fit.residual_norm, "converged": fit.converged,
        "N": curve.N, "model": fit.model})
    atomic_write_text(out / "fit_model.csv",
                      _table("N, fidelity_data, fidelity_model",
                             [(int(n), f, m) for n, f, m in zip(curve.N, curve.fidelity, fit.model)]))
    return (EXIT_OK if fit.converged else EXIT_BUDGET), {}


def cmd_wigner(cfg, base, out, seed):
    import numpy as np
    from . import metrics as M
    from .codespace import logical_state
    from .dynamics import propagate
    from .fileio import read_state, write_json, write_wigner
    from .hilbert import reduce_to_cavity
    _check_keys(cfg, {"fock", "start", "state", "pulse", "at_ns", "radius", "step", "system_params",
                      "cavity_dim", "lossless"})
    system = load_system(cfg, base)
    nc = system.cfg.cavity_dim
    sources = [k for k in ("fock", "start", "state") if k in cfg]
    if len(sources) != 1:
        raise ConfigError("exactly one of 'fock', 'start', 'state' is required")
    if "fock" in cfg:
        n = _num(cfg, "fock", 0, int, 0)
        if n >= nc:
            raise ConfigError("key 'fock' exceeds the cavity truncation")
        psi = np.zeros(system.cfg.dim, dtype=complex)
        psi[n * system.cfg.qubit_dim] = 1
    elif "start" in cfg:
        psi = logical_state(system.code, *_start_angles(cfg["start"]))
    else:
        try:
            psi = read_state(_resolve(base, cfg["state"]))
        except FileNotFoundError:
            raise ConfigError(f"key 'state': file not found: {cfg['state']}") from None
        if psi.size == nc:
            psi = np.kron(psi, np.eye(system.cfg.qubit_dim)[0])
        if psi.size != system.cfg.dim:
            raise ConfigError("key 'state': dimension matches neither cavity nor joint space")
        psi = psi / np.linalg.norm(psi)
    if "pulse" in cfg:
        pulse = _read_pulse(base, cfg["pulse"])
        k = int(round(_num(cfg, "at_ns", pulse.duration, float, 0) / pulse.dt))
        k = min(k, pulse.n_steps)
        psi = propagate(system.H0, system.generators, pulse.slice(0, k), psi).final
    radius = _num(cfg, "radius", 3.0)
    step = _num(cfg, "step", 0.1)
    try:
        grid = M.wigner_grid(radius, step)
    except ValueError as e:
        raise ConfigError(f"keys 'radius'/'step': {e}") from None
    w = M.wigner(reduce_to_cavity(system.cfg, psi), grid)
    write_wigner(out / "wigner.csv", grid, w)
    write_json(out / "summary.json", {"w_origin": float(M.wigner(reduce_to_cavity(system.cfg, psi), [0])[0]),
                                      "integral": float(w.sum() * step ** 2)})
    return EXIT_OK, {}


HANDLERS = {
    "optimize": cmd_optimize, "metrics": cmd_metrics, "jump-sweep": cmd_jump_sweep,
    "experiment": cmd_experiment, "fit": cmd_fit, "wigner": cmd_wigner,
}


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="estctl", description="Error-semitransparent gate toolkit")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", default=None, help="output directory (default: ./estctl-<command>)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="BLAS/OpenMP threads; 1 guarantees bitwise reproducibility")
    return ap


def _code_version() -> str:
    from . import __version__
    return __version__


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("estctl: --threads must be >= 1", file=sys.stderr)
            return EXIT_INPUT
        for v in _THREAD_VARS:
            os.environ[v] = str(args.threads)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("estctl: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    cfg_path = Path(args.config)
    try:
        raw = cfg_path.read_bytes()
        cfg = json.loads(raw)
    except FileNotFoundError:
        print(f"estctl: config not found: {cfg_path}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as e:
        print(f"estctl: config is not valid JSON: {e}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out) if args.out else Path(f"estctl-{args.command}")
    out.mkdir(parents=True, exist_ok=True)

    from .fileio import write_json
    manifest = {
        "command": args.command,
        "config_path": str(cfg_path.resolve()),
        "config_sha256": hashlib.sha256(raw).hexdigest(),
        "seed": args.seed if args.seed is not None else (cfg.get("seed") if isinstance(cfg, dict) else None),
        "threads": args.threads,
        "code_version": _code_version(),
        "output_dir": str(out.resolve()),
        "params_env": os.environ.get("ESTCTL_DEFAULT_PARAMS"),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "status": "running",
    }
    write_json(out / "manifest.json", manifest)
    try:
        code, extra = HANDLERS[args.command](cfg, cfg_path.parent, out, args.seed)
    except ConfigError as e:
        print(f"estctl {args.command}: {e}", file=sys.stderr)
        manifest.update(status="input-error", error=str(e), finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        write_json(out / "manifest.json", manifest)
        return EXIT_INPUT
    manifest.update(extra)
    manifest.update(status={EXIT_OK: "ok", EXIT_BUDGET: "budget-exhausted"}[code],
                    exit_code=code, finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    write_json(out / "manifest.json", manifest)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
