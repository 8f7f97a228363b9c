"""Command-line interface.

    chiral-transport simulate|sweep|optimize|robustness|loss-scan
        [--config PATH] [--out DIR] [--seed N] [--threads N]
    chiral-transport reproduce FIGURE [--out DIR] [--grid N] [--seed N] [--threads N]

Exit codes: 0 success, 2 config error, 3 physics/invariant error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import (
    FIGURES, ConfigSchemaError, ConfigSyntaxError, ExperimentConfig, PhysicsError,
    parse_config,
)
from .dynamics import InvariantError, IntegratorSettings
from .explore import (
    OptimizationError, SimulationSpec, SweepSpec, baseline_spec, detuning_robustness,
    dicke_spec, distance_scan, loss_scan, optimize_coupling, optimize_dicke_coupling,
    provenance, simulate, sweep, w3_spec,
)
from .output import write_columns, write_csv, write_json
from .states import NodeStateSpec

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_IO = 0, 2, 3, 4


# -- writers -----------------------------------------------------------------

def _sim_record(res) -> dict:
    return {"C_max": res.C_max, "F_max": res.F_max,
            "t_star": {"C_max": res.peak_time("C_max"), "F_max": res.peak_time("F_max")},
            "F_at_C_peak": res.fidelity_at_c_peak, "dim": res.dim,
            "diagnostics": res.diagnostics}


def write_simulation(out: Path, name: str, spec: SimulationSpec, res, extra=None,
                     seed: int = 0) -> list:
    csv_path = write_columns(out / f"{name}.csv", {
        "t": res.times, "C_node1": res.concurrence_node1,
        "C_node2": res.concurrence_node2, "F_node2": res.fidelity_node2})
    record = _sim_record(res)
    record["provenance"] = provenance(spec, seed, spec=spec.to_dict(), **(extra or {}))
    return [csv_path, write_json(out / f"{name}.json", record)]


def write_sweep(out: Path, name: str, result, extra=None) -> list:
    names = [n for n, _ in result.axes]
    grids = [g for _, g in result.axes]
    keys = list(result.values)
    rows = []
    for idx in np.ndindex(*[len(g) for g in grids]):
        row = [g[i] for g, i in zip(grids, idx)]
        row += [result.values[k][idx] for k in keys]
        row += [result.peak_times[k][idx] for k in keys if k in result.peak_times]
        rows.append(row)
    header = names + keys + [f"t_star_{k}" for k in keys if k in result.peak_times]
    csv_path = write_csv(out / f"{name}.csv", header, rows)
    record = {"provenance": {**result.provenance, **(extra or {})},
              "errors": {",".join(map(str, k)): v for k, v in result.errors.items()}}
    if len(keys) == 1:
        best = result.argmax()
        record["argmax"] = {n: g[i] for n, g, i in zip(names, grids, best)}
        record["max"] = result.table[best]
    return [csv_path, write_json(out / f"{name}.json", record)]


# -- tasks -------------------------------------------------------------------

def run_simulate(cfg: ExperimentConfig, out: Path, threads: int) -> list:
    spec = cfg.simulation_spec()
    return write_simulation(out, "simulate", spec, simulate(spec),
                            {"config": cfg.model_dump()}, cfg.seed)


def run_sweep(cfg: ExperimentConfig, out: Path, threads: int) -> list:
    spec = SweepSpec(cfg.simulation_spec(),
                     tuple((ax.name, ax.grid()) for ax in cfg.sweep.axes),
                     cfg.sweep.metric, cfg.seed)
    return write_sweep(out, "sweep", sweep(spec, threads), {"config": cfg.model_dump()})


def run_optimize(cfg: ExperimentConfig, out: Path, threads: int) -> list:
    spec = cfg.simulation_spec()
    opt = cfg.optimize
    res = optimize_coupling(spec, opt.bracket, opt.coarse_points, opt.tol, opt.metric,
                            workers=threads)
    n = spec.config.node1.n_qubits
    files = [write_csv(out / "optimize.csv", ["g", opt.metric], res.evaluations.items())]
    record = {"g_opt": res.g_opt, opt.metric: res.value, "sqrtN_gopt": math.sqrt(n) * res.g_opt,
              "provenance": provenance(spec, cfg.seed, config=cfg.model_dump())}
    return files + [write_json(out / "optimize.json", record)]


def run_robustness(cfg: ExperimentConfig, out: Path, threads: int) -> list:
    spec = cfg.simulation_spec()
    rb = cfg.robustness
    stats = detuning_robustness(rb.delta, rb.which, rb.samples, cfg.seed, spec, workers=threads)
    files = [write_csv(out / "robustness.csv", ["sample", "F_max"], enumerate(stats.values))]
    record = {"delta": rb.delta, "which": rb.which, "mean": stats.mean, "min": stats.min,
              "max": stats.max, "samples": rb.samples,
              "provenance": provenance(spec, cfg.seed, config=cfg.model_dump())}
    return files + [write_json(out / "robustness.json", record)]


def run_loss_scan(cfg: ExperimentConfig, out: Path, threads: int) -> list:
    ls = cfg.loss_scan
    result = loss_scan(ls.gammas, ls.optimize_g, cfg.simulation_spec(), ls.bracket,
                       ls.coarse_points, ls.tol, ls.kD, threads)
    return write_sweep(out, "loss_scan", result, {"config": cfg.model_dump()})


# -- figure presets ----------------------------------------------------------

def _grid(n: Optional[int], default: int = 41) -> int:
    return default if n is None else int(n)


def fig1b(out, grid, seed, threads):
    spec = baseline_spec()
    return write_simulation(out, "fig1b", spec, simulate(spec), {"figure": "fig1b"})


def fig1c(out, grid, seed, threads):
    base = baseline_spec()
    spec = replace(base, config=replace(base.config, gamma_L=base.config.gamma_R, kD=math.pi))
    return write_simulation(out, "fig1c", spec, simulate(spec), {"figure": "fig1c"})


def fig2a(out, grid, seed, threads):
    g = np.linspace(0.02, 0.82, _grid(grid))
    res = sweep(SweepSpec(baseline_spec(), (("g1", g), ("g2", g)), "C_max"), threads)
    return write_sweep(out, "fig2a", res, {"figure": "fig2a"})


def fig2b(out, grid, seed, threads):
    kds = np.linspace(0, 2 * math.pi, _grid(grid))[:-1]
    chis = (0.0, 0.5, 0.9, 1.0)
    res = distance_scan(chis, kds, workers=threads)
    files = []
    for i, chi in enumerate(chis):
        files.append(write_csv(out / f"fig2b_chi_{chi:g}.csv",
                               ["kD", "D_over_lambda", "C_max", "t_star"],
                               zip(kds, kds / (2 * math.pi), res.table[i],
                                   res.peak_times["C_max"][i])))
    record = {"provenance": {**res.provenance, "figure": "fig2b"},
              "argmax_kD": {f"{chi:g}": kds[int(np.argmax(res.table[i]))]
                            for i, chi in enumerate(chis)}}
    return files + [write_json(out / "fig2b.json", record)]


def fig2c(out, grid, seed, threads):
    n = _grid(grid)
    base = baseline_spec(initial1=NodeStateSpec.psi_alpha(math.pi / 4, 0.0))
    axes = (("theta", np.linspace(0, math.pi, n)), ("phi", np.linspace(0, 2 * math.pi, n)))
    res = sweep(SweepSpec(base, axes, "F_max"), threads)
    return write_sweep(out, "fig2c", res, {"figure": "fig2c"})


def fig2d(out, grid, seed, threads):
    n = _grid(grid)
    base = baseline_spec(initial1=NodeStateSpec.psi_beta(math.pi / 4, 0.0))
    axes = (("theta", np.linspace(0, 2 * math.pi, n)), ("phi", np.linspace(-math.pi, math.pi, n)))
    res = sweep(SweepSpec(base, axes, "F_max"), threads)
    return write_sweep(out, "fig2d", res, {"figure": "fig2d"})


FIG3A_STATES = (("W3", 3, 1, 0.248), ("3D2", 3, 2, 0.248), ("4D2", 4, 2, 0.215))


def fig3a(out, grid, seed, threads):
    files, record = [], {}
    for name, n, k, g in FIG3A_STATES:
        spec = dicke_spec(n, g, k)
        res = simulate(spec)
        files += write_simulation(out, f"fig3a_{name}", spec, res, {"figure": "fig3a"})
        record[name] = {"n": n, "k": k, "g": g, "F_max": res.F_max,
                        "t_star": res.peak_time("F_max")}
    return files + [write_json(out / "fig3a.json", record)]


FIG3B_SIZES = (2, 3, 4, 5, 6, 8, 10, 15, 20)


def fig3b(out, grid, seed, threads):
    rows = []
    for n in FIG3B_SIZES:
        opt = optimize_dicke_coupling(n, workers=threads)
        rows.append((n, opt.g_opt, math.sqrt(n) * opt.g_opt, opt.value))
    files = [write_csv(out / "fig3b.csv", ["N", "g_opt", "sqrtN_gopt", "F_max"], rows)]
    prov = provenance(dicke_spec(2, 0.3), 0, figure="fig3b", sizes=list(FIG3B_SIZES))
    return files + [write_json(out / "fig3b.json", {"provenance": prov})]


def _robustness_figure(name, which, out, grid, seed, threads):
    deltas = np.linspace(0.0, 0.3, _grid(grid, 7))
    rows = []
    for delta in deltas:
        st = detuning_robustness(float(delta), which, 50, seed, w3_spec(), workers=threads)
        rows.append((delta, st.mean, st.min, st.max))
    files = [write_csv(out / f"{name}.csv", ["delta", "mean", "min", "max"], rows)]
    prov = provenance(w3_spec(), seed, figure=name, which=which, samples=50)
    return files + [write_json(out / f"{name}.json", {"provenance": prov})]


def fig3c(out, grid, seed, threads):
    return _robustness_figure("fig3c", "qubit", out, grid, seed, threads)


def fig3d(out, grid, seed, threads):
    return _robustness_figure("fig3d", "cavity", out, grid, seed, threads)


FIG4A_RATES = (0.0, 0.02, 0.05, 0.1)


def fig4a(out, grid, seed, threads):
    base = baseline_spec()
    base = replace(base, config=replace(base.config, kD=math.pi))
    cols, record = {}, {}
    for rate in FIG4A_RATES:
        spec = replace(base, config=base.config.with_qubit_decay(rate))
        opt = optimize_coupling(spec, (0.05, 0.65), 13, workers=threads)
        res = simulate(replace(spec, config=spec.config.with_couplings(opt.g_opt)))
        cols.setdefault("t", res.times)
        cols[f"F_Gamma_{rate:g}"] = res.fidelity_node2
        record[f"{rate:g}"] = {"g_opt": opt.g_opt, "F_max": res.F_max}
    record["provenance"] = provenance(base, 0, figure="fig4a")
    return [write_columns(out / "fig4a.csv", cols), write_json(out / "fig4a.json", record)]


def fig4b(out, grid, seed, threads):
    rates = np.linspace(0.0, 0.15, _grid(grid, 16))
    res = loss_scan(rates, True, workers=threads)
    return write_sweep(out, "fig4b", res, {"figure": "fig4b"})


PRESETS = {name: globals()[name] for name in FIGURES}


def reproduce(figure: str, out, grid_points: Optional[int] = None, seed: int = 0,
              threads: int = 1) -> list:
    if figure not in PRESETS:
        raise ValueError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    return PRESETS[figure](Path(out), grid_points, seed, threads)


TASK_RUNNERS = {"simulate": run_simulate, "sweep": run_sweep, "optimize": run_optimize,
                "robustness": run_robustness, "loss_scan": run_loss_scan}


def run(cfg: ExperimentConfig, out=None, threads: Optional[int] = None) -> list:
    out = Path(out if out is not None else cfg.output.dir)
    threads = threads or cfg.threads
    if cfg.task == "reproduce":
        return reproduce(cfg.reproduce.figure, out, cfg.reproduce.grid_points, cfg.seed, threads)
    return TASK_RUNNERS[cfg.task](cfg, out, threads)


# -- entry point -------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chiral-transport", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "sweep", "optimize", "robustness", "loss-scan", "reproduce"):
        sp = sub.add_parser(name)
        if name == "reproduce":
            sp.add_argument("figure", nargs="?", choices=FIGURES)
            sp.add_argument("--grid", type=int, default=None,
                            help="grid points per axis (default 41)")
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
    return p


def _load(path: Optional[Path], task: str) -> ExperimentConfig:
    text = "{}" if path is None else path.read_text()
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError:
        return parse_config(text)  # re-raised with position
    if isinstance(data, dict):
        data["task"] = task
    return parse_config(json.dumps(data))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    task = args.command.replace("-", "_")
    try:
        if task == "reproduce" and args.config is None:
            if args.figure is None:
                print("error: reproduce needs a FIGURE or --config", file=sys.stderr)
                return EXIT_CONFIG
            files = reproduce(args.figure, args.out or Path("results"), args.grid,
                              args.seed or 0, args.threads or 1)
        else:
            cfg = _load(args.config, task) if task != "reproduce" else _load_reproduce(args)
            if args.seed is not None:
                cfg = cfg.model_copy(update={"seed": args.seed})
            files = run(cfg, args.out, args.threads)
    except (ConfigSyntaxError, ConfigSchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PhysicsError, InvariantError, OptimizationError) as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for f in files:
        print(f)
    return EXIT_OK


def _load_reproduce(args) -> ExperimentConfig:
    cfg = _load(args.config, "reproduce")
    if args.figure is not None or args.grid is not None:
        section = cfg.reproduce.model_copy(update={
            k: v for k, v in (("figure", args.figure), ("grid_points", args.grid))
            if v is not None})
        cfg = cfg.model_copy(update={"reproduce": section})
    return cfg


if __name__ == "__main__":
    sys.exit(main())
