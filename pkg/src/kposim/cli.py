"""``kposim`` command-line front end.

Exit codes: 0 success, 2 configuration error, 3 convergence failure,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import warnings
from pathlib import Path

from . import experiments as ex
from .circuits import CalibrationError, CircuitError
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, config_from_dict, load_config
from .dynamics import SolverSettings
from .gate import DegenerateProjectionError
from .integrators import PropagationError

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_NUMERICAL = 0, 2, 3, 4
log = logging.getLogger("kposim")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kposim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="TOML config, or a manifest.json from an earlier run")
        p.add_argument("--model", choices=("simple", "sc"))
        p.add_argument("--drive", choices=("sum", "difference"))
        p.add_argument("--out", type=Path, help=f"output directory (default ${ex.OUTPUT_ENV}/<name>)")
        p.add_argument("--workers", type=int, help="parallel sweep workers (default: CPU count)")
        p.add_argument("--tol", type=float, help="integrator tolerance for the selected model")
        p.add_argument("--fock-dim", type=int, help="Fock dimension per mode")
        p.add_argument("--no-certify", action="store_true",
                       help="skip tolerance-halving and dimension-bump checks")
        p.add_argument("--plot", action="store_true", help="also write an SVG quick-look plot")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args) -> ExperimentConfig:
    path = Path(args.config)
    if path.suffix == ".json":
        try:
            snapshot = json.loads(path.read_text())["config"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}") from None
        cfg = config_from_dict(snapshot, args.experiment, str(path))
    else:
        cfg = load_config(path, args.experiment)
    # command-line flags override file keys
    if args.model:
        cfg.model = args.model
    if args.drive:
        cfg.drive = args.drive
        if "drive_kind" in cfg.section("gate"):
            cfg.set("gate", "drive_kind", args.drive)
    if args.tol is not None:
        if not 0 < args.tol <= 1e-2:
            raise ConfigError("--tol must lie in (0, 1e-2]")
        key = {"loss-sweep": "lindblad_tol"}.get(cfg.experiment,
                                                  "tol" if cfg.model == "simple" else "sc_tol")
        cfg.set("solver", key, args.tol)
    if args.fock_dim is not None:
        cfg.set("solver", "fock_dim", args.fock_dim)
    if args.no_certify:
        cfg.set("solver", "certify", False)
    if args.plot:
        cfg.set("output", "plot", True)
    cfg.__post_init__()
    return cfg


def _output_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out is not None:
        out = args.out
    elif cfg.get("output", "dir"):
        out = Path(cfg.get("output", "dir"))
    else:
        stem = Path(cfg.source).stem if cfg.source else cfg.experiment
        if stem == "manifest":
            stem = Path(cfg.source).parent.name
        out = ex.output_root() / stem
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_experiment(cfg: ExperimentConfig, workers: int | None) -> tuple[ex.ExperimentResult, tuple]:
    """Dispatch one experiment; returns the result and the plot columns."""
    certify = bool(cfg.get("solver", "certify", True))
    threshold = float(cfg.get("solver", "certify_threshold", ex.CERTIFY_THRESHOLD))
    if cfg.experiment == "photon-ramp":
        models = cfg.get("ramp", "models", ["simple", "sc"])
        if not set(models) <= {"simple", "sc"} or not models:
            raise ConfigError(f"[ramp] models must be a subset of simple/sc, got {models}")
        spec = ex.RampSpec(cfg.kpo(1), float(cfg.get("ramp", "delta_p_max", 0.05)),
                           float(cfg.get("ramp", "T_ns", 2000.0)), cfg.fock_dim(),
                           int(cfg.get("output", "grid_points", 2001)),
                           float(cfg.get("solver", "tol", 1e-9)),
                           float(cfg.get("solver", "sc_tol", 1e-8)),
                           cfg.get("pump", "resonance", "sc_static"))
        result = ex.photon_ramp(spec, models, workers, certify, threshold)
        return result, ("t_ns", ["n_simple", "n_sc"])
    if cfg.experiment == "rzz-sweep":
        setup = cfg.rzz_setup()
        result = ex.rzz_sweep(cfg.model, cfg.drive, setup, cfg.sweep_values(), workers,
                              cfg.solver_settings(cfg.model), certify, threshold)
        return result, ("p_g0_over_K", ["Theta_rad", "F"])
    if cfg.experiment == "loss-sweep":
        if cfg.model != "simple":
            raise ConfigError("the loss sweep uses the simple model")
        setup = cfg.rzz_setup()
        dim = int(cfg.get("loss", "fock_dim", cfg.fock_dim() or ex.LOSS_DIM))
        setup = setup.with_dims((dim, dim))
        tol = float(cfg.get("solver", "lindblad_tol", ex.LOSS_TOL))
        result = ex.loss_sweep(setup, cfg.sweep_values(),
                               float(cfg.get("loss", "theta_target_rad", math.pi / 2)),
                               float(cfg.get("loss", "p_g0_over_K_max", 10.0)),
                               float(cfg.get("loss", "bisect_xtol", 1e-3)), workers,
                               SolverSettings(rel_tol=tol, abs_tol=tol), cfg.drive,
                               certify, threshold)
        return result, ("T1_us", ["infidelity"])
    kpos = [cfg.kpo(1)]
    coupling = None
    if cfg.section("kpo2"):
        kpos.append(cfg.kpo(2))
        if cfg.section("coupling"):
            coupling = cfg.coupling()
    result = ex.calibrate(kpos, cfg.pump_over_kerr(kpos[0]), coupling,
                          cfg.get("pump", "resonance", "sc_static"))
    return result, None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", UserWarning)
    try:
        cfg = _load(args)
        workers = args.workers if args.workers is not None else ex.default_workers()
        if workers < 1:
            raise ConfigError("--workers must be positive")
        out = _output_dir(args, cfg)
        start = time.perf_counter()
        result, plot = run_experiment(cfg, workers)
        wall = time.perf_counter() - start
        csv_path = ex.write_csv(result, out / f"{result.name}.csv")
        ex.write_manifest(out / "manifest.json", cfg.snapshot(), result, wall, csv_path)
        if result.name == "calibration":
            for d in result.diagnostics:
                print(f"{d['quantity']:>22s}  {d['value']:.10g} {d['unit']}")
        if plot and cfg.get("output", "plot", False):
            if ex.plot_svg(csv_path, out / f"{result.name}.svg", *plot) is None:
                log.warning("matplotlib is not installed; no plot written")
        print(f"wrote {csv_path}")
        cert = result.convergence
        if cert and not all(c.get("passed", True) for c in
                            (cert.values() if "passed" not in cert else [cert])):
            print(f"convergence certification failed: {json.dumps(cert)}", file=sys.stderr)
            return EXIT_CONVERGENCE
        return EXIT_OK
    except (ConfigError, CircuitError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ex.ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (PropagationError, CalibrationError, DegenerateProjectionError,
            FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
