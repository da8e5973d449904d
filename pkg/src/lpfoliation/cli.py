"""Command-line front end: configuration, batch runs and artifact files."""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError, LPError
from .gap import RateParams, check_all
from .lyapunov_perron import FoliationLeaf, LPConfig, ManifoldGraph, intersect
from .model import build_model, make_nonlinearity
from .noise import OUProcess, TimeGrid, default_tail_cut, ou_stationary, sample_brownian, write_noise_csv
from .semigroup import ConvolutionPlan
from .verify import (check_invariance_manifold, check_leaf_convergence, check_leaf_gradient,
                     check_manifold_gradient, oracle_bvp_compare)

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "model": {"kind": "spectral", "eigenvalues": [0.8, 0.0, -1.5], "labels": ["u", "c", "s"],
              "constants": {"K": 1.0, "alpha": 0.8, "beta": 1.5, "gamma": 0.1, "theta_hy": 0.8, "M_hy": 1.0}},
    "nonlinearity": {"name": "cubic-saturated", "L": 0.005},
    "noise": {"dt": 0.01, "t_min": -40.0, "t_max": 62.0, "mu": 1.0, "seeds": [0],
              "tail_cut": None, "frozen": None},
    "rates": {"eta_cu": -0.8, "zeta": -1.2, "eta_cs": 0.5, "chi": 0.0, "sigma": 0.15,
              "nu": 0.0, "k": 1, "eta_c": None},
    "lp": {"T_horizon": None, "tol": 1e-10, "max_iter": 500, "C_fixed": None,
           "shift_mode": "as-written", "center": 0.0, "quadrature": "exponential",
           "lambda_ladder": [1e2, 1e3, 1e4]},
    "xi_grid": [[0.0, -1.0, 0.0], [0.01, -0.5, 0.0], [0.0, 0.0, 0.0], [-0.01, 0.5, 0.0], [0.0, 1.0, 0.0]],
    "anchor": [0.1, 0.2, -0.1],
    "iota_grid": [[0.0, -0.5, 0.0], [0.0, 0.0, 0.2], [0.0, 0.5, -0.2]],
    "verify": {"r": 1.0, "T": 10.0, "fd_step": 1e-5, "gradient_tol": 1e-4,
               "invariance_tol": None, "oracle_tol": 1e-4, "tol_growth": 0.1},
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown configuration field {where!r}")
        if isinstance(base[key], dict) and base[key] and key not in ("model", "nonlinearity"):
            if not isinstance(val, dict):
                raise ConfigurationError(f"{where} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | None, seed: int | None = None, corrected_shift: bool = False) -> dict:
    """Read a YAML file, fill defaults and apply command-line overrides."""
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be a mapping")
        ver = raw.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ConfigurationError(f"schema_version must be {SCHEMA_VERSION}, got {ver!r}")
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["noise"]["seeds"] = [int(seed)]
    if corrected_shift:
        cfg["lp"]["shift_mode"] = "corrected"
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    n = cfg["noise"]
    if not (isinstance(n["dt"], (int, float)) and n["dt"] > 0):
        raise ConfigurationError("noise.dt must be a positive number")
    if not n["t_min"] <= 0 <= n["t_max"]:
        raise ConfigurationError("noise.t_min must be <= 0 <= noise.t_max")
    if not n["mu"] > 0:
        raise ConfigurationError("noise.mu must be positive")
    seeds = n["seeds"]
    if not (isinstance(seeds, list) and seeds and all(isinstance(s, int) and 0 <= s < 2**64 for s in seeds)):
        raise ConfigurationError("noise.seeds must be a non-empty list of 64-bit unsigned integers")
    if "L" not in cfg["nonlinearity"] or "name" not in cfg["nonlinearity"]:
        raise ConfigurationError("nonlinearity needs fields name and L")
    lp = cfg["lp"]
    if not lp["tol"] > 0:
        raise ConfigurationError("lp.tol must be positive")
    if not (isinstance(lp["max_iter"], int) and lp["max_iter"] > 0):
        raise ConfigurationError("lp.max_iter must be a positive integer")
    for key in ("xi_grid", "iota_grid"):
        if not isinstance(cfg[key], list):
            raise ConfigurationError(f"{key} must be a list of points")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


class Run:
    """Objects built from a resolved configuration."""

    def __init__(self, cfg: dict, threads: int = 1):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.model = build_model(cfg["model"])
        nlc = cfg["nonlinearity"]
        self.nl = make_nonlinearity(nlc["name"], self.model, float(nlc["L"]))
        try:
            self.rates = RateParams(**cfg["rates"])
        except TypeError as exc:
            raise ConfigurationError(f"rates: {exc}") from exc
        lp = cfg["lp"]
        self.lp = LPConfig(rates=self.rates, T_horizon=lp["T_horizon"], tol=float(lp["tol"]),
                           max_iter=int(lp["max_iter"]), C_fixed=lp["C_fixed"], shift_mode=lp["shift_mode"],
                           center=lp["center"],
                           plan=ConvolutionPlan(tuple(lp["lambda_ladder"]), lp["quadrature"]))
        self.noise = cfg["noise"]

    def grid(self) -> TimeGrid:
        n = self.noise
        return TimeGrid(float(n["t_min"]), float(n["t_max"]), float(n["dt"]))

    def sample(self, seed: int):
        n = self.noise
        grid = self.grid()
        if n["frozen"] is not None:
            return None, OUProcess.constant(grid, float(n["frozen"]), float(n["mu"]))
        tail = n["tail_cut"] if n["tail_cut"] is not None else default_tail_cut(float(n["mu"]), grid.dt)
        ntail = int(round(tail / grid.dt))
        path_grid = TimeGrid(grid.t_min - ntail * grid.dt, grid.t_max, grid.dt)
        path = sample_brownian(path_grid, seed)
        return path, ou_stationary(path, float(n["mu"]), ntail * grid.dt)

    def points(self, key: str):
        pts = [np.asarray(p, dtype=float) for p in self.cfg[key]]
        for p in pts:
            if p.shape != (self.model.dim,):
                raise ConfigurationError(f"{key}: every point needs {self.model.dim} components")
        return pts

    def map(self, fn, items):
        items = list(items)
        if self.threads == 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def gap_reports(self):
        return check_all(self.lp.problem(self.model, self.nl.L))


def _f(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_f(v) for v in row])
    path.write_text(buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_manifest(out: Path, name: str, command: str, cfg: dict, body: dict):
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg,
           "config_sha256": config_hash(cfg), **body}
    (out / name).write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")


def cmd_sample_noise(run: Run, out: Path) -> bool:
    files = []
    for seed in run.noise["seeds"]:
        path, ou = run.sample(seed)
        fname = f"noise_seed{seed}.csv"
        buf = io.StringIO()
        if path is None:
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["t", "omega", "z"])
            for t, z in zip(ou.times, ou.z_values):
                w.writerow([_f(t), "nan", _f(z)])
        else:
            write_noise_csv(buf, path, ou)
        (out / fname).write_text(buf.getvalue())
        files.append(fname)
    _write_manifest(out, "manifest.json", "sample-noise", run.cfg, {"files": files})
    return True


def cmd_check_gaps(run: Run, out: Path) -> bool:
    reports = run.gap_reports()
    ok = all(r.passed for r in reports)
    _write_manifest(out, "gaps.json", "check-gaps", run.cfg,
                    {"gap_reports": [r.as_dict() for r in reports], "all_pass": ok})
    return ok


def _labels(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


def cmd_solve_manifold(run: Run, out: Path) -> bool:
    xis = run.points("xi_grid")
    runs, gap = [], None
    for seed in run.noise["seeds"]:
        _, ou = run.sample(seed)
        graph = ManifoldGraph(run.model, run.nl, ou, run.lp)
        gap = graph.report
        sols = run.map(graph.solve, xis)
        _write_rows(out / f"manifold_seed{seed}.csv",
                    _labels("xi", run.model.dim) + _labels("h", run.model.dim),
                    [np.concatenate([x, s.h]) for x, s in zip(xis, sols)])
        runs.append({"seed": seed, "T_horizon": graph.T,
                     "solves": [s.stats.as_dict() for s in sols]})
    _write_manifest(out, "manifest.json", "solve-manifold", run.cfg,
                    {"gap_reports": [gap.as_dict()], "runs": runs})
    return True


def cmd_solve_foliation(run: Run, out: Path) -> bool:
    iotas = run.points("iota_grid")
    anchor = np.asarray(run.cfg["anchor"], dtype=float)
    runs, gaps = [], []
    for seed in run.noise["seeds"]:
        _, ou = run.sample(seed)
        leaf = FoliationLeaf(run.model, run.nl, ou, anchor, run.lp)
        gaps = leaf.reports
        sols = run.map(leaf.solve, iotas)
        _write_rows(out / f"leaf_seed{seed}.csv",
                    _labels("iota", run.model.dim) + _labels("l", run.model.dim),
                    [np.concatenate([i, s.l]) for i, s in zip(iotas, sols)])
        runs.append({"seed": seed, "T_horizon": leaf.T,
                     "solves": [s.stats.as_dict() for s in sols]})
    _write_manifest(out, "manifest.json", "solve-foliation", run.cfg,
                    {"gap_reports": [g.as_dict() for g in gaps], "runs": runs})
    return True


def cmd_intersect(run: Run, out: Path) -> bool:
    anchor = np.asarray(run.cfg["anchor"], dtype=float)
    results = []
    ok = True
    for seed in run.noise["seeds"]:
        _, ou = run.sample(seed)
        graph = ManifoldGraph(run.model, run.nl, ou, run.lp)
        leaf = FoliationLeaf(run.model, run.nl, ou, anchor, run.lp)
        res = intersect(graph, leaf, run.lp)
        good = max(res.residual_leaf, res.residual_manifold) <= 10 * run.lp.tol * (1 + np.linalg.norm(res.point))
        ok &= bool(good)
        results.append({"seed": seed, "point": res.point, "iota": res.iota, "xi": res.xi,
                        "residual_leaf": res.residual_leaf, "residual_manifold": res.residual_manifold,
                        "iterations": res.iterations, "K_u": graph.K_u, "K_s": leaf.K_s})
    _write_manifest(out, "intersection.json", "intersect", run.cfg,
                    {"results": results, "all_pass": ok})
    return ok


def cmd_verify(run: Run, out: Path) -> bool:
    v = run.cfg["verify"]
    xis = run.points("xi_grid")
    iotas = run.points("iota_grid")
    anchor = np.asarray(run.cfg["anchor"], dtype=float)
    reports = []
    for seed in run.noise["seeds"]:
        _, ou = run.sample(seed)
        graph = ManifoldGraph(run.model, run.nl, ou, run.lp)
        leaf = FoliationLeaf(run.model, run.nl, ou, anchor, run.lp)
        group = [check_invariance_manifold(graph, float(v["r"]), xis, v["invariance_tol"]),
                 check_leaf_convergence(leaf, [(anchor, leaf.point(i)) for i in iotas], float(v["T"]),
                                        float(v["tol_growth"]))]
        if run.nl.DF is not None:
            group.append(check_manifold_gradient(graph, xis, v["fd_step"], v["gradient_tol"]))
            group.append(check_leaf_gradient(leaf, iotas, v["fd_step"], v["gradient_tol"]))
        if run.model.n_modes <= 4 and run.noise["frozen"] is not None:
            group.append(oracle_bvp_compare(run.model, run.nl, ou, xis, tol=float(v["oracle_tol"]),
                                            manifold=graph))
        reports += [{"seed": seed, **r.as_dict()} for r in group]
    ok = all(r["pass"] for r in reports)
    _write_manifest(out, "verification.json", "verify", run.cfg,
                    {"gap_reports": [r.as_dict() for r in run.gap_reports()],
                     "reports": reports, "all_pass": ok})
    return ok


def cmd_plot(input_csv: str, out: Path) -> Path:
    """SVG of a manifold or leaf section; two varying inputs give a heat map."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(input_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array([[float(x) for x in r] for r in rows[1:]])
    if data.size == 0:
        raise ConfigurationError(f"{input_csv} has no data rows")
    half = len(header) // 2
    ins, outs = data[:, :half], data[:, half:]
    varying = [j for j in range(half) if np.ptp(ins[:, j]) > 0]
    plt.rcParams["svg.hashsalt"] = "lpfoliation"
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(varying) >= 2:
        j0, j1 = varying[:2]
        sc = ax.scatter(ins[:, j0], ins[:, j1], c=np.linalg.norm(outs, axis=1), cmap="viridis")
        fig.colorbar(sc, ax=ax, label="norm of " + header[half][:-1])
        ax.set_xlabel(header[j0])
        ax.set_ylabel(header[j1])
    else:
        j0 = varying[0] if varying else 0
        order = np.argsort(ins[:, j0])
        for k in range(outs.shape[1]):
            if np.any(outs[:, k] != 0):
                ax.plot(ins[order, j0], outs[order, k], marker="o", label=header[half + k])
        ax.set_xlabel(header[j0])
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
    ax.set_title(Path(input_csv).stem)
    target = out / (Path(input_csv).stem + ".svg")
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)
    return target


COMMANDS = {
    "sample-noise": cmd_sample_noise,
    "check-gaps": cmd_check_gaps,
    "solve-manifold": cmd_solve_manifold,
    "solve-foliation": cmd_solve_foliation,
    "intersect": cmd_intersect,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpfol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="single noise seed, overrides noise.seeds")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--corrected-eq30", dest="corrected_shift", action="store_true",
                       help="use the corrected denominator in the sigma-shifted foliation conditions")
    p = sub.add_parser("plot")
    p.add_argument("input", help="manifold or leaf CSV")
    p.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "plot":
            print(cmd_plot(args.input, out))
            return 0
        cfg = load_config(args.config, args.seed, args.corrected_shift)
        run = Run(cfg, args.threads)
        ok = COMMANDS[args.command](run, out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except LPError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: {'all gates pass' if ok else 'gate failure'} -> {out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
