"""Experiments: photon ramp, Rzz sweeps, loss sweep, calibration.

Each experiment returns an :class:`ExperimentResult` holding a table plus the
derived parameters and convergence evidence that go into the run manifest.
Sweeps run as an ordered parallel map, so the worker count never changes
the output.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import circuits, drives
from .circuits import KpoParams, PumpTone, SimpleModelParams, to_ghz
from .dynamics import SolverSettings, lab_frame_settings, schrodinger_propagate
from .fock import StateVector, number, recommended_dim
from .gate import (GateOutcome, RzzSetup, build_hamiltonian, default_settings, peak_for_angle,
                   reference_pair, run_rzz)

OUTPUT_ENV = "KPOSIM_OUTPUT_ROOT"
LOSS_DIM = 20
LOSS_TOL = 1e-10
CERTIFY_THRESHOLD = 1e-6
DIM_BUMP = 8


class ConvergenceError(RuntimeError):
    """Convergence certification exceeded its threshold."""


@dataclass
class ExperimentResult:
    """Tabular output of one experiment."""

    name: str
    columns: list[str]
    units: list[str]
    rows: np.ndarray
    derived: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


# --- execution helpers ---------------------------------------------------------------

def default_workers() -> int:
    return os.cpu_count() or 1


def ordered_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally across processes, in input order."""
    items = list(items)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def state_infidelity(a: StateVector, b: StateVector) -> float:
    """``1 - |<a|b>|^2`` after zero-padding both states to common mode dimensions."""
    dims = tuple(max(x, y) for x, y in zip(a.space.mode_dims, b.space.mode_dims))

    def pad(s: StateVector) -> np.ndarray:
        out = np.zeros(dims, complex)
        out[tuple(slice(0, d) for d in s.space.mode_dims)] = s.as_modes()
        return out.reshape(-1)

    return float(max(0.0, 1.0 - abs(np.vdot(pad(a), pad(b))) ** 2))


def _check_certificate(cert: dict, threshold: float) -> dict:
    cert["threshold"] = threshold
    cert["passed"] = bool(max(cert["tol_halved_delta"], cert["dim_bumped_delta"]) < threshold)
    return cert


# --- photon ramp -----------------------------------------------------------------------

@dataclass(frozen=True)
class RampSpec:
    """Single-KPO pump ramp ``delta_p(t) = delta_max t / T`` from vacuum."""

    kpo: KpoParams
    delta_max: float
    T: float = 2000.0
    dim: int | None = None
    grid_points: int = 2001
    simple_tol: float = 1e-9
    sc_tol: float = 1e-8
    resonance_mode: str = "sc_static"

    def __post_init__(self):
        if self.delta_max < 0 or self.T <= 0:
            raise ValueError("ramp needs delta_max >= 0 and T > 0")
        if self.grid_points < 2:
            raise ValueError("ramp grid needs at least two points")

    @property
    def kerr_and_pump(self) -> tuple[float, float]:
        return circuits.kerr_and_pump(self.kpo, self.delta_max)

    @property
    def resolved_dim(self) -> int:
        if self.dim is not None:
            return self.dim
        K, P = self.kerr_and_pump
        return recommended_dim(math.sqrt(P / K))

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.grid_points)


def ramp_hamiltonian(spec: RampSpec, model: str, dim: int | None = None, omega_tilde=None):
    dim = dim or spec.resolved_dim
    env = drives.ramp(spec.T)
    if model == "simple":
        K, P = spec.kerr_and_pump
        return circuits.build_simple_single(SimpleModelParams(K=K, P=P), dim, env)
    if model == "sc":
        w = omega_tilde if omega_tilde is not None else ramp_resonance(spec)
        return circuits.build_sc_single(spec.kpo, PumpTone(spec.delta_max, 2 * w), dim,
                                        pump_envelope=env)
    raise ValueError(f"unknown model {model!r}")


def ramp_resonance(spec: RampSpec) -> float:
    return circuits.calibrate_kpo(spec.kpo, 40, spec.resonance_mode)


def ramp_settings(spec: RampSpec, model: str, omega_tilde: float | None = None,
                  tol: float | None = None) -> SolverSettings:
    if model == "simple":
        t = tol or spec.simple_tol
        return SolverSettings(rel_tol=t, abs_tol=t)
    w = omega_tilde if omega_tilde is not None else ramp_resonance(spec)
    return lab_frame_settings(2 * w, tol or spec.sc_tol, renormalize=True)


def run_ramp(spec: RampSpec, model: str, dim: int | None = None, tol: float | None = None,
             omega_tilde: float | None = None) -> tuple[np.ndarray, StateVector, dict]:
    """Photon number on the ramp grid, the final state and solver diagnostics."""
    if model == "sc" and omega_tilde is None:
        omega_tilde = ramp_resonance(spec)
    H = ramp_hamiltonian(spec, model, dim, omega_tilde)
    space = H.space
    psi0 = space.basis(0)
    settings = ramp_settings(spec, model, omega_tilde, tol)
    start = time.perf_counter()
    final, traj = schrodinger_propagate(H, psi0, 0.0, spec.T, settings,
                                        observables={"n": number(space)},
                                        sample_times=spec.grid[1:])
    n = np.concatenate([[0.0], traj.observables["n"]])
    diag = dict(traj.diagnostics, model=model, dim=space.mode_dims[0],
                wall_s=time.perf_counter() - start)
    return n, final, diag


def _ramp_task(args):
    spec, model, dim, tol, w = args
    return run_ramp(spec, model, dim, tol, w)


def photon_ramp(spec: RampSpec, models: Iterable[str] = ("simple", "sc"), workers: int = 1,
                certify: bool = True, threshold: float = CERTIFY_THRESHOLD) -> ExperimentResult:
    """``<n>(t)`` for both models on a ``grid_points`` grid over ``[0, T]``."""
    models = tuple(models)
    w = ramp_resonance(spec) if "sc" in models else None
    runs = ordered_map(_ramp_task, [(spec, m, None, None, w) for m in models], workers)
    curves = {m: r[0] for m, r in zip(models, runs)}
    nan = np.full(spec.grid_points, np.nan)
    n_simple, n_sc = curves.get("simple", nan), curves.get("sc", nan)
    rows = np.column_stack([spec.grid, n_simple, n_sc, n_simple - n_sc])
    K, P = spec.kerr_and_pump
    derived = {"K_MHz": to_ghz(K) * 1e3, "P_MHz": to_ghz(P) * 1e3, "P_over_K": P / K,
               "delta_p_max": spec.delta_max, "T_ns": spec.T, "fock_dim": spec.resolved_dim,
               "omega_GHz": to_ghz(spec.kpo.omega), "E_J_GHz": to_ghz(spec.kpo.E_J),
               "theta0_rad": spec.kpo.theta0, "Delta_MHz": 0.0}
    if w is not None:
        derived.update(omega_tilde_GHz=to_ghz(w), omega_p_GHz=to_ghz(2 * w))
    convergence = {}
    if certify:
        for m, (_, final, _) in zip(models, runs):
            base_tol = spec.simple_tol if m == "simple" else spec.sc_tol
            halved = run_ramp(spec, m, None, base_tol / 2, w)[1]
            bumped = run_ramp(spec, m, spec.resolved_dim + DIM_BUMP, None, w)[1]
            convergence[m] = _check_certificate(
                {"tol_halved_delta": state_infidelity(final, halved),
                 "dim_bumped_delta": state_infidelity(final, bumped),
                 "measure": "end-state infidelity"}, threshold)
    return ExperimentResult("photon_ramp", ["t_ns", "n_simple", "n_sc", "n_diff"],
                            ["ns", "dimensionless", "dimensionless", "dimensionless"],
                            rows, derived, convergence, [r[2] for r in runs])


# --- Rzz sweeps -----------------------------------------------------------------------

def _rzz_task(args) -> GateOutcome:
    model, drive, setup, p_g0, gamma, settings, reference, resolved = args
    return run_rzz(model, drive, setup, p_g0, gamma, settings, reference, resolved)


def setup_derived(setup: RzzSetup, model: str, drive: str, resolved=None) -> dict:
    E_C0, g = setup.coupling.resolve(setup.kpo1, setup.kpo2)
    out = {"K_MHz": to_ghz(setup.K) * 1e3, "P_over_K": setup.P_over_K,
           "P_MHz": to_ghz(setup.P_over_K * setup.K) * 1e3, "alpha": setup.alpha,
           "g_MHz": to_ghz(g) * 1e3, "E_C0_GHz": to_ghz(E_C0),
           "Delta12_GHz": to_ghz(setup.kpo1.omega - setup.kpo2.omega),
           "T_g_ns": setup.T_g, "beta": setup.beta, "fock_dims": list(setup.space.mode_dims),
           "theta0_rad": [setup.kpo1.theta0, setup.kpo2.theta0], "Delta_MHz": 0.0,
           "delta_p": [circuits.delta_for_pump(setup.P_over_K * p.kerr, p)
                       for p in (setup.kpo1, setup.kpo2)]}
    if resolved is not None:
        out["sc"] = resolved.summary()
    return out


def _gate_deltas(a: GateOutcome, b: GateOutcome) -> tuple[float, float]:
    dtheta = abs((a.theta or 0.0) - (b.theta or 0.0))
    return abs(a.fidelity - b.fidelity), dtheta


def certify_gate(model: str, drive: str, setup: RzzSetup, p_g0: float, base: GateOutcome,
                 settings: SolverSettings, gamma: float = 0.0,
                 threshold: float = CERTIFY_THRESHOLD) -> dict:
    """Tolerance halving and ``D + 8`` at one sweep point; deltas in F and Theta."""
    halved = run_rzz(model, drive, setup, p_g0, gamma, settings.halved())
    bumped_setup = setup.with_dims(tuple(d + DIM_BUMP for d in setup.space.mode_dims))
    bumped = run_rzz(model, drive, bumped_setup, p_g0, gamma, settings)
    dF_tol, dT_tol = _gate_deltas(base, halved)
    dF_dim, dT_dim = _gate_deltas(base, bumped)
    return _check_certificate({"p_g0_over_K": p_g0 / setup.K, "measure": "gate fidelity F",
                               "tol_halved_delta": dF_tol, "dim_bumped_delta": dF_dim,
                               "tol_halved_theta_delta": dT_tol,
                               "dim_bumped_theta_delta": dT_dim}, threshold)


def rzz_sweep(model: str, drive: str, setup: RzzSetup, p_over_K: Sequence[float],
              workers: int = 1, settings: SolverSettings | None = None, certify: bool = True,
              threshold: float = CERTIFY_THRESHOLD) -> ExperimentResult:
    """Theta, F and leakage against the peak gate amplitude ``p_g0 / K``."""
    p_over_K = np.asarray(p_over_K, dtype=float)
    resolved = setup.sc_setup(drive) if model == "sc" else None
    H0 = build_hamiltonian(model, drive, setup, 0.0, resolved)
    settings = settings or default_settings(model, setup, H0)
    ref = reference_pair(model, drive, setup, settings, resolved)
    tasks = [(model, drive, setup, float(x) * setup.K, 0.0, settings, ref, resolved)
             for x in p_over_K]
    outcomes = ordered_map(_rzz_task, tasks, workers)
    theta = np.array([np.nan if o.theta is None else o.theta for o in outcomes])
    rows = np.column_stack([p_over_K, theta, [o.fidelity for o in outcomes],
                            [o.leakage for o in outcomes]])
    derived = setup_derived(setup, model, drive, resolved)
    within = theta <= math.pi / 2 + 1e-12
    derived["theta_max_rad"] = float(np.nanmax(theta))
    derived["spans_half_pi"] = bool(np.nanmax(theta) >= math.pi / 2)
    derived["min_F_theta_le_half_pi"] = float(np.min(rows[within, 2])) if within.any() else None
    convergence = {}
    if certify:
        k = int(np.argmax(p_over_K))
        convergence = certify_gate(model, drive, setup, tasks[k][3], outcomes[k], settings,
                                   threshold=threshold)
    return ExperimentResult("rzz_sweep", ["p_g0_over_K", "Theta_rad", "F", "leakage"],
                            ["dimensionless", "rad", "dimensionless", "dimensionless"],
                            rows, derived, convergence, [o.diagnostics for o in outcomes])


# --- loss sweep -------------------------------------------------------------------------

def gamma_from_T1_us(T1_us: float) -> float:
    """Loss rate in 1/ns."""
    return 0.0 if math.isinf(T1_us) else 1.0 / (T1_us * 1e3)


def tune_peak(setup: RzzSetup, target: float = math.pi / 2, hi_over_K: float = 10.0,
              theta_tol: float = 1e-3, settings: SolverSettings | None = None,
              drive: str = "sum") -> tuple[float, GateOutcome]:
    """Peak amplitude giving ``Theta = target`` for the lossless simple model."""
    settings = settings or default_settings("simple", setup)
    ref = reference_pair("simple", drive, setup, settings)

    def theta(p):
        return run_rzz("simple", drive, setup, p, 0.0, settings, ref).theta or 0.0

    p = peak_for_angle(theta, target, 0.0, hi_over_K * setup.K, xtol=1e-7 * setup.K)
    outcome = run_rzz("simple", drive, setup, p, 0.0, settings, ref)
    if abs(outcome.theta - target) > theta_tol:
        raise ConvergenceError(f"tuned angle {outcome.theta} misses {target} by more than "
                               f"{theta_tol}")
    return p, outcome


def loss_sweep(setup: RzzSetup, T1_us: Sequence[float], target: float = math.pi / 2,
               hi_over_K: float = 10.0, theta_tol: float = 1e-3, workers: int = 1,
               settings: SolverSettings | None = None, drive: str = "sum",
               certify: bool = True, threshold: float = CERTIFY_THRESHOLD) -> ExperimentResult:
    """Infidelity at ``Theta = target`` against T1 (master equation, simple model).

    The first row is the lossless run (``T1_us = inf``).
    """
    settings = settings or SolverSettings(rel_tol=LOSS_TOL, abs_tol=LOSS_TOL)
    p, lossless = tune_peak(setup, target, hi_over_K, theta_tol, settings, drive)
    ref = reference_pair("simple", drive, setup, settings)
    T1 = np.asarray(T1_us, dtype=float)
    tasks = [("simple", drive, setup, p, gamma_from_T1_us(x), settings, ref, None) for x in T1]
    outcomes = ordered_map(_rzz_task, tasks, workers)
    rows = np.column_stack([np.concatenate([[np.inf], T1]),
                            [lossless.infidelity] + [o.infidelity for o in outcomes],
                            [lossless.theta] + [np.nan if o.theta is None else o.theta
                                                for o in outcomes]])
    derived = setup_derived(setup, "simple", drive)
    infid = rows[1:, 1]
    order = np.argsort(T1)
    derived.update(p_g0_over_K=p / setup.K, theta_lossless_rad=lossless.theta,
                   monotone_decreasing=bool(np.all(np.diff(infid[order]) < 0)),
                   T1_at_0p1_percent_us=crossing_T1(T1, infid, 1e-3))
    convergence = {}
    if certify:
        convergence = certify_gate("simple", drive, setup, p, lossless, settings,
                                   threshold=threshold)
    return ExperimentResult("loss_sweep", ["T1_us", "infidelity", "Theta_rad"],
                            ["us", "dimensionless", "rad"], rows, derived, convergence,
                            [lossless.diagnostics] + [o.diagnostics for o in outcomes])


def crossing_T1(T1: np.ndarray, infidelity: np.ndarray, level: float) -> float | None:
    """T1 where the infidelity crosses ``level``, log-log interpolated."""
    order = np.argsort(T1)
    x, y = np.log(np.asarray(T1)[order]), np.log(np.asarray(infidelity)[order])
    above = y > math.log(level)
    for i in range(len(x) - 1):
        if above[i] and not above[i + 1]:
            frac = (math.log(level) - y[i]) / (y[i + 1] - y[i])
            return float(math.exp(x[i] + frac * (x[i + 1] - x[i])))
    return None


# --- calibration -------------------------------------------------------------------------

def calibrate(kpos: Sequence[KpoParams], P_over_K: float = 4.0,
              coupling: circuits.CouplingParams | None = None,
              resonance_mode: str = "sc_static") -> ExperimentResult:
    """Derived parameter table: K, P, pump depth, calibrated resonance, coupler."""
    entries: list[tuple[str, float, str]] = []
    for i, p in enumerate(kpos, start=1):
        K = p.kerr
        entries += [(f"E_C{i}", to_ghz(p.E_C), "GHz"), (f"E_J{i}", to_ghz(p.E_J), "GHz"),
                    (f"EJ_eff{i}", to_ghz(p.EJ_eff), "GHz"), (f"omega{i}", to_ghz(p.omega), "GHz"),
                    (f"N{i}", p.N, "dimensionless"), (f"theta0_{i}", p.theta0, "rad"),
                    (f"Delta{i}", 0.0, "MHz"), (f"K{i}", to_ghz(K) * 1e3, "MHz"),
                    (f"P{i}", to_ghz(P_over_K * K) * 1e3, "MHz"),
                    (f"delta_p{i}", circuits.delta_for_pump(P_over_K * K, p), "dimensionless")]
    if len(kpos) == 2 and coupling is not None:
        res = circuits.resolve_sc_two(kpos[0], kpos[1], coupling, P_over_K,
                                      resonance_mode=resonance_mode)
        s = res.summary()
        entries += [("E_C0", s["E_C0_GHz"], "GHz"), ("g", s["g_MHz"], "MHz"),
                    ("V", s["V_MHz"], "MHz")]
        for i in (0, 1):
            entries += [(f"E_C{i + 1}_dressed", s["E_C_dressed_GHz"][i], "GHz"),
                        (f"omega{i + 1}_dressed", s["omega_GHz"][i], "GHz"),
                        (f"omega_tilde{i + 1}", s["omega_tilde_GHz"][i], "GHz"),
                        (f"delta_p{i + 1}_dressed", s["delta_p"][i], "dimensionless"),
                        (f"omega_p{i + 1}", s["omega_p_GHz"][i], "GHz")]
        w1, w2 = res.omega_tilde
        entries += [("carrier_sum", to_ghz(w1 + w2), "GHz"),
                    ("carrier_difference", to_ghz(abs(w1 - w2)), "GHz")]
    else:
        for i, p in enumerate(kpos, start=1):
            w = circuits.calibrate_kpo(p, 40, resonance_mode)
            entries += [(f"omega_tilde{i}", to_ghz(w), "GHz"), (f"omega_p{i}", to_ghz(2 * w), "GHz")]
    result = ExperimentResult("calibration", ["quantity", "value", "unit"], [], np.empty((0, 0)))
    result.derived = {name: value for name, value, _ in entries}
    result.diagnostics = [{"quantity": n, "value": v, "unit": u} for n, v, u in entries]
    return result


# --- output ---------------------------------------------------------------------------------

def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def write_csv(result: ExperimentResult, path: Path) -> Path:
    """CSV with a ``#`` units line, a header row and full-precision values."""
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if result.rows.size:
            fh.write("# units: " + ", ".join(f"{c}={u}" for c, u in
                                             zip(result.columns, result.units)) + "\n")
            writer.writerow(result.columns)
            for row in result.rows:
                writer.writerow([repr(float(x)) for x in row])
        else:
            fh.write("# units: value column in the unit named on each row\n")
            writer.writerow(result.columns)
            for d in result.diagnostics:
                writer.writerow([d["quantity"], repr(float(d["value"])), d["unit"]])
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.array([[float(x) for x in ln.strip().split(",")] for ln in lines[1:]])
    return header, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_manifest(path: Path, config: dict, result: ExperimentResult, wall_s: float,
                   csv_path: Path) -> Path:
    from . import __version__
    from .dynamics import default_backend

    digest = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    manifest = {"tool": "kposim", "version": __version__, "experiment": result.name,
                "config": config, "derived": result.derived, "convergence": result.convergence,
                "wall_time_s": wall_s, "csv": csv_path.name, "csv_sha256": digest,
                "backend": default_backend(), "python": platform.python_version(),
                "numpy": np.__version__, "diagnostics": result.diagnostics}
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))
    return path


def plot_svg(csv_path: Path, svg_path: Path, x: str, ys: Sequence[str]) -> Path | None:
    """Quick-look line plot rendered from the CSV; ``None`` without matplotlib."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    header, data = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for y in ys:
        ax.plot(data[:, header.index(x)], data[:, header.index(y)], label=y)
    ax.set_xlabel(x)
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
    return svg_path
