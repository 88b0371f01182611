"""TOML experiment configuration.

Frequencies are given as ordinary frequencies (GHz or MHz, as the key says)
and times in ns; everything is converted to rad/ns and ns on access.
"""
from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .circuits import CircuitError, CouplingParams, KpoParams, ghz, mhz
from .dynamics import SolverSettings
from .gate import RzzSetup

EXPERIMENTS = ("photon-ramp", "rzz-sweep", "loss-sweep", "calibrate")
MODELS = ("simple", "sc")
DRIVES = ("sum", "difference")

SCHEMA = {
    "": {"experiment", "model", "drive"},
    "circuit": {"E_C_GHz", "E_J_GHz", "omega_GHz", "N", "theta0_rad"},
    "kpo1": {"E_C_GHz", "E_J_GHz", "omega_GHz", "N", "theta0_rad"},
    "kpo2": {"E_C_GHz", "E_J_GHz", "omega_GHz", "N", "theta0_rad"},
    "pump": {"P_over_K", "delta_p", "pump_freq_mode", "pump_freq_GHz", "resonance"},
    "coupling": {"g_MHz", "E_C0_GHz"},
    "gate": {"T_g_ns", "beta", "drive_kind", "p_g0_over_K"},
    "sweep": {"variable", "start", "stop", "num", "values", "scale"},
    "ramp": {"T_ns", "delta_p_max", "models"},
    "loss": {"theta_target_rad", "p_g0_over_K_max", "bisect_xtol", "fock_dim"},
    "solver": {"tol", "sc_tol", "lindblad_tol", "method", "fock_dim", "certify",
               "certify_threshold"},
    "output": {"dir", "plot", "grid_points"},
}
SWEEP_VARIABLES = {"rzz-sweep": "p_g0_over_K", "loss-sweep": "T1_us"}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _check_schema(raw: dict) -> None:
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in SCHEMA:
                raise ConfigError(f"unknown section [{key}]")
            unknown = set(value) - SCHEMA[key]
            if unknown:
                raise ConfigError(f"unknown keys in [{key}]: {sorted(unknown)}")
        elif key not in SCHEMA[""]:
            raise ConfigError(f"unknown top-level key {key!r}")


@dataclass
class ExperimentConfig:
    experiment: str
    model: str = "simple"
    drive: str = "sum"
    raw: dict = field(default_factory=dict)
    source: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.drive not in DRIVES:
            raise ConfigError(f"unknown drive {self.drive!r}")
        _check_schema(self.raw)

    # --- generic access ---------------------------------------------------------

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def get(self, section: str, key: str, default=None):
        return self.section(section).get(key, default)

    def set(self, section: str, key: str, value) -> None:
        self.raw.setdefault(section, {})[key] = value

    def snapshot(self) -> dict:
        snap = copy.deepcopy(self.raw)
        snap.update(experiment=self.experiment, model=self.model, drive=self.drive)
        return snap

    # --- physics blocks ------------------------------------------------------------

    def kpo(self, index: int) -> KpoParams:
        block = dict(self.section("circuit"))
        block.update(self.section(f"kpo{index}"))
        try:
            E_C = ghz(float(block["E_C_GHz"]))
            N = int(block["N"])
        except KeyError as exc:
            raise ConfigError(f"kpo{index}: missing {exc.args[0]}") from None
        theta0 = float(block.get("theta0_rad", math.pi / 4))
        has_ej, has_w = "E_J_GHz" in block, "omega_GHz" in block
        if has_ej == has_w:
            raise ConfigError(f"kpo{index}: give exactly one of E_J_GHz and omega_GHz")
        try:
            if has_w:
                return KpoParams.from_omega(ghz(float(block["omega_GHz"])), E_C, N, theta0)
            return KpoParams(E_C, ghz(float(block["E_J_GHz"])), N, theta0)
        except CircuitError as exc:
            raise ConfigError(f"kpo{index}: {exc}") from None

    def coupling(self) -> CouplingParams:
        block = self.section("coupling")
        if ("g_MHz" in block) == ("E_C0_GHz" in block):
            raise ConfigError("[coupling]: give exactly one of g_MHz and E_C0_GHz")
        if "g_MHz" in block:
            return CouplingParams(g=mhz(float(block["g_MHz"])))
        return CouplingParams(E_C0=ghz(float(block["E_C0_GHz"])))

    def pump_over_kerr(self, kpo: KpoParams) -> float:
        block = self.section("pump")
        if "P_over_K" in block and "delta_p" in block:
            raise ConfigError("[pump]: give at most one of P_over_K and delta_p")
        if "delta_p" in block:
            from .circuits import kerr_and_pump
            K, P = kerr_and_pump(kpo, float(block["delta_p"]))
            return P / K
        return float(block.get("P_over_K", 4.0))

    def pump_frequencies(self) -> tuple[float, float] | None:
        mode = self.get("pump", "pump_freq_mode", "auto_calibrated")
        if mode == "auto_calibrated":
            return None
        if mode != "explicit":
            raise ConfigError(f"unknown pump_freq_mode {mode!r}")
        freqs = self.get("pump", "pump_freq_GHz")
        if not isinstance(freqs, list) or len(freqs) != 2:
            raise ConfigError("explicit pump_freq_mode needs pump_freq_GHz = [f1, f2]")
        return ghz(float(freqs[0])), ghz(float(freqs[1]))

    def fock_dim(self) -> int | None:
        d = self.get("solver", "fock_dim")
        if d is None:
            return None
        if int(d) < 4:
            raise ConfigError("fock_dim must be at least 4")
        return int(d)

    def rzz_setup(self) -> RzzSetup:
        kpo1, kpo2 = self.kpo(1), self.kpo(2)
        gate = self.section("gate")
        kind = gate.get("drive_kind", self.drive)
        if kind != self.drive:
            raise ConfigError(f"[gate] drive_kind={kind!r} conflicts with drive={self.drive!r}")
        d = self.fock_dim()
        try:
            return RzzSetup(kpo1, kpo2, self.coupling(), P_over_K=self.pump_over_kerr(kpo1),
                            T_g=float(gate.get("T_g_ns", 40.0)), beta=float(gate.get("beta", 3.0)),
                            dims=(d, d) if d else None,
                            resonance_mode=self.get("pump", "resonance", "sc_static"),
                            simple_tol=float(self.get("solver", "tol", 1e-9)),
                            sc_tol=float(self.get("solver", "sc_tol", 1e-8)))
        except CircuitError as exc:
            raise ConfigError(str(exc)) from None

    def solver_settings(self, model: str) -> SolverSettings | None:
        """Explicit settings only when the config overrides the method."""
        method = self.get("solver", "method")
        if method is None:
            return None
        tol = float(self.get("solver", "tol" if model == "simple" else "sc_tol",
                             1e-9 if model == "simple" else 1e-8))
        try:
            return SolverSettings(method=method, rel_tol=tol, abs_tol=tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # --- sweeps -----------------------------------------------------------------------

    def sweep_values(self) -> np.ndarray:
        block = self.section("sweep")
        expected = SWEEP_VARIABLES.get(self.experiment)
        variable = block.get("variable", expected)
        if variable != expected:
            raise ConfigError(f"{self.experiment} sweeps {expected!r}, not {variable!r}")
        if "values" in block:
            values = np.asarray(block["values"], dtype=float)
        else:
            defaults = {"p_g0_over_K": (0.0, 5.0 if self.drive == "sum" else 20.0, 51),
                        "T1_us": (1.0, 1000.0, 13)}[expected]
            start = float(block.get("start", defaults[0]))
            stop = float(block.get("stop", defaults[1]))
            num = int(block.get("num", defaults[2]))
            if num < 1:
                raise ConfigError("sweep num must be positive")
            if not (math.isfinite(start) and math.isfinite(stop)):
                raise ConfigError("sweep bounds must be finite")
            scale = block.get("scale", "log" if expected == "T1_us" else "linear")
            if scale == "log":
                if start <= 0 or stop <= 0:
                    raise ConfigError("log sweeps need positive bounds")
                values = np.geomspace(start, stop, num)
            elif scale == "linear":
                values = np.linspace(start, stop, num)
            else:
                raise ConfigError(f"unknown sweep scale {scale!r}")
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise ConfigError("sweep values must be finite")
        if expected == "p_g0_over_K" and np.any(values < 0):
            raise ConfigError("p_g0_over_K must be non-negative")
        if expected == "T1_us" and np.any(values <= 0):
            raise ConfigError("T1_us must be positive")
        return values


def load_config(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    """Read a TOML config; ``experiment`` (the CLI subcommand) must agree with the file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, experiment, str(path))


def config_from_dict(raw: dict, experiment: str | None = None,
                     source: str | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    file_exp = raw.pop("experiment", None)
    if experiment and file_exp and experiment != file_exp:
        raise ConfigError(f"config is for {file_exp!r}, not {experiment!r}")
    exp = experiment or file_exp
    if exp is None:
        raise ConfigError("no experiment given")
    model = raw.pop("model", "simple")
    drive = raw.pop("drive", raw.get("gate", {}).get("drive_kind", "sum"))
    return ExperimentConfig(exp, model, drive, raw, source)
