"""Command line entry point: ``run``, ``classify`` and ``check``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .dae_core import classify_index, default_samples, projector_chain
from .errors import DaeError, PararealError, StructuralError
from .init import project_consistentialize, warmup_consistentialize
from .integrator import NewtonConfig
from .models import assemble_flux_charge_mna, check_structure, fig2_circuit, parse_netlist, toy_model
from .parareal import (
    ERROR_COMPONENTS,
    SEEDS,
    VARIANTS,
    PararealConfig,
    finalize_trajectory,
    make_grid,
    resolve_workers,
    run,
    sequential_fine,
)

WORKERS_ENV = "PARAREAL_DAE_WORKERS"
MODES = ("parareal", "sequential")
INITIAL = ("consistent", "warmup", "as_is")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: str
    t0: float
    t_end: float
    windows: int
    fine_h: float
    coarse_steps: int = 1
    variant: str = "classic"
    mode: str = "parareal"
    rel_tol: float = 5e-4
    abs_tol: float = 1e-10
    max_iterations: int = 20
    workers: Optional[int] = None
    output_dir: str = "out"
    initial: str = "consistent"
    x0: Optional[list] = None
    warmup_h: Optional[float] = None
    error_components: str = "differential"
    seed: str = "initial"
    newton_abs_tol: float = 1e-10
    newton_rel_tol: float = 1e-12
    newton_max_iterations: int = 50
    source: Optional[str] = field(default=None, repr=False)

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "source"}


_REQUIRED = ("model", "t0", "t_end", "windows", "fine_h")
_KNOWN = {f.name for f in fields(ExperimentConfig)} - {"source"}
_TYPES = {
    "model": str, "variant": str, "mode": str, "output_dir": str, "initial": str,
    "error_components": str, "seed": str,
    "windows": int, "coarse_steps": int, "max_iterations": int, "workers": int,
    "newton_max_iterations": int,
}


def _bundled(name):
    base = resources.files("parareal_dae") / "configs"
    for cand in (name, f"{name}.yaml", f"{name}.yml", f"{name}.json"):
        p = base / cand
        if p.is_file():
            return Path(str(p))
    return None


def bundled_configs() -> list:
    base = resources.files("parareal_dae") / "configs"
    return sorted(p.name.rsplit(".", 1)[0] for p in base.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(arg: str) -> Path:
    p = Path(arg)
    if p.is_file():
        return p
    b = _bundled(arg)
    if b is None:
        raise ConfigError(
            f"config {arg!r} not found (bundled configs: {', '.join(bundled_configs())})"
        )
    return b


def _typed(raw, key, kind):
    v = raw[key]
    if v is None:
        return None
    try:
        if kind is int:
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                raise ValueError
            return int(v)
        if kind is float:
            if isinstance(v, bool):
                raise ValueError
            out = float(v)
            if not math.isfinite(out):
                raise ValueError
            return out
        return str(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {v!r}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw, base_dir=path.parent, source=str(path))


def config_from_dict(raw: dict, base_dir=None, source=None) -> ExperimentConfig:
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = [k for k in _REQUIRED if raw.get(k) is None]
    if missing:
        raise ConfigError(f"missing config keys: {missing}")

    kw = {}
    for f in fields(ExperimentConfig):
        if f.name not in raw or f.name == "source":
            continue
        if f.name == "x0":
            x0 = raw["x0"]
            if x0 is not None:
                if not isinstance(x0, list):
                    raise ConfigError("x0: expected a list of numbers")
                try:
                    x0 = [float(v) for v in x0]
                except (TypeError, ValueError):
                    raise ConfigError("x0: expected a list of numbers") from None
                if not all(math.isfinite(v) for v in x0):
                    raise ConfigError("x0 entries must be finite")
            kw["x0"] = x0
            continue
        kw[f.name] = _typed(raw, f.name, _TYPES.get(f.name, float))

    cfg = ExperimentConfig(**kw, source=source)
    if cfg.model.startswith("netlist:") and base_dir is not None:
        p = Path(cfg.model[len("netlist:"):])
        if not p.is_absolute():
            p = (Path(base_dir) / p).resolve()
        cfg.model = f"netlist:{p}"

    for key, allowed in (
        ("variant", VARIANTS),
        ("mode", MODES),
        ("initial", INITIAL),
        ("error_components", ERROR_COMPONENTS),
        ("seed", SEEDS),
    ):
        if getattr(cfg, key) not in allowed:
            raise ConfigError(f"{key} must be one of {allowed}, got {getattr(cfg, key)!r}")
    if cfg.windows < 1:
        raise ConfigError("windows must be >= 1")
    if not cfg.t_end > cfg.t0:
        raise ConfigError("t_end must exceed t0")
    if cfg.workers is not None and cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def build_model(name: str):
    if name == "builtin:toy":
        return toy_model()
    if name == "builtin:fig2":
        return fig2_circuit()[1]
    if name.startswith("netlist:"):
        path = Path(name[len("netlist:"):])
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read netlist: {exc}") from None
        return assemble_flux_charge_mna(parse_netlist(text), model_id=name)
    raise ConfigError(f"unknown model {name!r} (builtin:toy, builtin:fig2 or netlist:<path>)")


def _start_guess(model, cfg: ExperimentConfig) -> np.ndarray:
    x = np.zeros(model.n_dof) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    if x.shape != (model.n_dof,):
        raise ConfigError(f"x0 must have {model.n_dof} entries ({', '.join(model.component_names)})")
    return x


def initial_value(model, cfg: ExperimentConfig, newton: NewtonConfig) -> np.ndarray:
    x = _start_guess(model, cfg)
    if cfg.initial == "warmup":
        return warmup_consistentialize(model, x, cfg.t0, cfg.warmup_h or cfg.fine_h, newton)
    if cfg.initial == "consistent":
        return project_consistentialize(model, x, cfg.t0, newton)
    return x


def _workers(cfg: ExperimentConfig) -> Optional[int]:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            w = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if w < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1")
        return w
    return cfg.workers


def _fmt(v) -> str:
    return f"{v:.17g}"


def write_trajectory(path: Path, traj):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *traj.component_names])
        for t, x in zip(traj.times, traj.states):
            w.writerow([_fmt(t), *(_fmt(v) for v in x)])


def write_convergence(path: Path, result=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "max_jump_norm", "first_unconverged_window"])
        if result is None:
            return
        for k, (e, first) in enumerate(zip(result.max_jump, result.first_unconverged), start=1):
            w.writerow([k, _fmt(e), "" if first is None else first])


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[Path] = None) -> dict:
    """Execute one configured solve and write the report files.

    Raises ConfigError for bad input and DaeError when the solver aborts; in
    the latter case a report flagged ``aborted`` is still written.
    """
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg.model)
    try:
        grid = make_grid(cfg.t0, cfg.t_end, cfg.windows)
        newton = NewtonConfig(cfg.newton_abs_tol, cfg.newton_rel_tol, cfg.newton_max_iterations)
        pcfg = PararealConfig(
            variant=cfg.variant,
            fine_h=cfg.fine_h,
            coarse_steps_per_window=cfg.coarse_steps,
            rel_tol=cfg.rel_tol,
            abs_tol=cfg.abs_tol,
            max_iterations=cfg.max_iterations,
            newton=newton,
            error_components=cfg.error_components,
            seed=cfg.seed,
            workers=_workers(cfg),
        )
        pcfg.validate(grid)
        _start_guess(model, cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    report = {
        "model_id": model.model_id,
        "component_names": list(model.component_names),
        "config": cfg.echo(),
        "workers": resolve_workers(pcfg.workers, grid.N),
        "aborted": False,
    }
    started = time.perf_counter()
    try:
        x0 = initial_value(model, cfg, newton)
        report["x0"] = x0.tolist()
        if cfg.mode == "sequential":
            values, traj = sequential_fine(model, x0, grid, pcfg)
            report.update(iterations_used=0, converged=True, window_snapshots=[values.tolist()])
            write_convergence(out / "convergence.csv")
        else:
            result = run(model, x0, grid, pcfg)
            traj = finalize_trajectory_quiet(result)
            report.update(
                iterations_used=result.iterations_used,
                converged=result.converged,
                max_jump_norm=result.max_jump,
                first_unconverged_window=result.first_unconverged,
                window_boundaries=grid.boundaries.tolist(),
                window_snapshots=[v.tolist() for v in result.window_values],
                possibly_inconsistent_rows=traj.metadata["possibly_inconsistent"],
            )
            write_convergence(out / "convergence.csv", result)
        write_trajectory(out / "trajectory.csv", traj)
    except DaeError as exc:
        report.update(aborted=True, error=str(exc), converged=False)
        if isinstance(exc, PararealError):
            report.update(failed_window=exc.window, failed_iteration=exc.iteration)
        raise
    finally:
        report["wall_time"] = time.perf_counter() - started
        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2)
    return report


def finalize_trajectory_quiet(result):
    # the converged flag is already in the report, skip the runtime warning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return finalize_trajectory(result)


def _netlist_model(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read netlist: {exc}") from None
    net = parse_netlist(text)
    return net, text


def cmd_run(args) -> int:
    cfg = load_config(resolve_config_path(args.config))
    rep = run_experiment(cfg, args.output_dir)
    out = args.output_dir or cfg.output_dir
    status = "converged" if rep["converged"] else "NOT converged"
    print(
        f"{rep['model_id']}: {cfg.mode}/{cfg.variant} {status}, "
        f"iterations_used={rep['iterations_used']}, wall_time={rep['wall_time']:.2f}s -> {out}"
    )
    return EXIT_OK


def cmd_classify(args) -> int:
    net, _ = _netlist_model(args.netlist)
    model = assemble_flux_charge_mna(net, model_id=f"netlist:{args.netlist}")
    samples = default_samples(model, count=args.samples, seed=0)
    index = classify_index(model, samples)
    print(f"index: {index}")
    if index == 2:
        y, x, t = samples[0]
        T = projector_chain(model, y, x, t, numeric=True).T
        rows = np.max(np.abs(T), axis=1)
        labels = [n for n, r in zip(model.component_names, rows) if r > 1e-10]
        print("index-2 components: " + ", ".join(labels))
    return EXIT_OK


def cmd_check(args) -> int:
    net, _ = _netlist_model(args.netlist)
    rep = check_structure(net)
    print(f"connected: {'yes' if rep.connected else 'no'}")
    print(f"voltage sources free of loops: {'yes' if rep.voltage_sources_independent else 'no'}")
    print(f"current sources free of cutsets: {'yes' if rep.no_current_cutsets else 'no'}")
    return EXIT_OK if rep.ok else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="parareal-dae", description="Parareal for index-2 DAEs and flux-charge circuits."
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log Parareal iterations")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured experiment")
    r.add_argument(
        "config",
        help=f"YAML or JSON config file, or a bundled name ({', '.join(bundled_configs())})",
    )
    r.add_argument("-o", "--output-dir", type=Path, help="override output_dir from the config")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("classify", help="print the tractability index of a netlist")
    c.add_argument("netlist", type=Path)
    c.add_argument("--samples", type=int, default=5, help="random evaluation points")
    c.set_defaults(func=cmd_classify)

    k = sub.add_parser("check", help="topological rank checks on a netlist")
    k.add_argument("netlist", type=Path)
    k.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s"
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, (ValueError, StructuralError)) else EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
