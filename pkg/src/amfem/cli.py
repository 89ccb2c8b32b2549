"""Command-line front end: run benchmarks, render tables, compare series.

Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error.
AMFEM_THREADS caps worker parallelism (exported to the BLAS thread pools
before the numerics are imported).
"""

from __future__ import annotations

import argparse
import os
import sys

_threads = os.environ.get("AMFEM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from dataclasses import dataclass, field, fields
from typing import Optional

from . import adapt, report
from .mesh import write_vtk
from .problem import BENCHMARKS, benchmark


class ConfigError(Exception):
    """Invalid run configuration."""


# per-benchmark defaults: marking parameter and layer width
DEFAULT_THETA = {
    "lshape": 0.5,
    "kellogg1": 0.7,
    "kellogg2": 0.94,
    "layer": 0.5,
    "interior-layer": 0.5,
}
DEFAULT_EPSILON = {"layer": 0.01, "interior-layer": 0.1}


@dataclass
class RunConfig:
    benchmark: str = ""
    epsilon: Optional[float] = None
    theta: Optional[float] = None
    b: int = 1
    mode: str = "adaptive"
    levels: int = 8
    max_dof: int = 100_000
    max_iters: int = 25
    eta_target: float = 0.0
    weights: tuple = (1.0, 1.0, 1.0)
    out: str = "."
    vtk_every: int = 0
    figures: bool = True
    resolution: int = 1

    def validate(self):
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(
                f"unknown benchmark {self.benchmark!r}; choose from {', '.join(BENCHMARKS)}"
            )
        if self.mode not in ("adaptive", "uniform"):
            raise ConfigError(f"mode must be adaptive or uniform, got {self.mode!r}")
        theta = self.theta if self.theta is not None else DEFAULT_THETA[self.benchmark]
        if not 0.0 < theta <= 1.0:
            raise ConfigError(f"theta must be in (0, 1], got {theta}")
        if self.b < 1:
            raise ConfigError("b must be >= 1")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.max_dof < 1 or self.max_iters < 1:
            raise ConfigError("max-dof and max-iters must be >= 1")
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ConfigError("weights must be three nonnegative numbers")
        if self.vtk_every < 0:
            raise ConfigError("vtk-every must be >= 0")
        self.theta = theta
        if self.epsilon is None:
            self.epsilon = DEFAULT_EPSILON.get(self.benchmark)
        elif self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")


def _parse_weights(text: str) -> tuple:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad weights {text!r}: {exc}") from exc
    if len(parts) != 3:
        raise ConfigError("weights must be 'w_div,w_eta,w_data'")
    return parts


_CONFIG_KEYS = {
    "benchmark": str,
    "epsilon": float,
    "theta": float,
    "b": int,
    "mode": str,
    "levels": int,
    "max_dof": int,
    "max_iters": int,
    "eta_target": float,
    "weights": _parse_weights,
    "out": str,
    "vtk_every": int,
    "figures": lambda s: s.lower() in ("1", "true", "yes", "on"),
    "resolution": int,
}


def load_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; dashes and underscores equal."""
    values = {}
    try:
        with open(path) as f:
            for n, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{n}: expected 'key = value'")
                key, val = (p.strip() for p in line.split("=", 1))
                key = key.replace("-", "_")
                if key not in _CONFIG_KEYS:
                    raise ConfigError(f"{path}:{n}: unknown key {key!r}")
                try:
                    values[key] = _CONFIG_KEYS[key](val)
                except (ValueError, ConfigError) as exc:
                    raise ConfigError(f"{path}:{n}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amfem",
        description="Adaptive mixed finite elements for convection-diffusion-reaction problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark and write history CSV")
    run.add_argument("--config", help="key=value config file (flags win)")
    run.add_argument("--benchmark", choices=BENCHMARKS)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--theta", type=float)
    run.add_argument("--b", type=int)
    run.add_argument("--mode", choices=("adaptive", "uniform"))
    run.add_argument("--levels", type=int, help="records for uniform mode")
    run.add_argument("--max-dof", type=int, dest="max_dof")
    run.add_argument("--max-iters", type=int, dest="max_iters")
    run.add_argument("--eta-target", type=float, dest="eta_target")
    run.add_argument("--weights", type=str, help="w_div,w_eta,w_data")
    run.add_argument("--out", type=str)
    run.add_argument("--vtk-every", type=int, dest="vtk_every")
    run.add_argument("--resolution", type=int)
    fig = run.add_mutually_exclusive_group()
    fig.add_argument("--figures", dest="figures", action="store_true", default=None)
    fig.add_argument("--no-figures", dest="figures", action="store_false")

    table = sub.add_parser("table", help="render a history CSV as a text table")
    table.add_argument("csv")

    comp = sub.add_parser("compare", help="merge two history CSVs for plotting")
    comp.add_argument("csv_a")
    comp.add_argument("csv_b")
    comp.add_argument("--labels", default=None, help="nameA,nameB")
    comp.add_argument("--out", default=None, help="output CSV path (default stdout)")
    cfig = comp.add_mutually_exclusive_group()
    cfig.add_argument("--figures", dest="figures", action="store_true", default=None)
    cfig.add_argument("--no-figures", dest="figures", action="store_false")

    sub.add_parser("bench-list", help="list benchmarks and their defaults")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is None:
            continue
        if f.name == "weights" and isinstance(flag, str):
            flag = _parse_weights(flag)
        setattr(cfg, f.name, flag)
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    spec = benchmark(cfg.benchmark, cfg.epsilon)
    os.makedirs(cfg.out, exist_ok=True)

    dumps = []

    def callback(rec, mesh, solution, est):
        if cfg.vtk_every > 0 and rec.k % cfg.vtk_every == 0:
            import numpy as np

            path = os.path.join(cfg.out, f"mesh_{rec.k}.vtk")
            write_vtk(mesh, path, {"p_h": solution.p_vals,
                                   "eta_K": np.sqrt(est.eta_sq)})
            dumps.append(path)

    stop = adapt.StopRule(max_iters=cfg.max_iters, max_dof=cfg.max_dof,
                          eta_target=cfg.eta_target)
    if cfg.mode == "adaptive":
        result = adapt.run_amfem(spec, cfg.theta, b=cfg.b, stop=stop,
                                 weights=cfg.weights, resolution=cfg.resolution,
                                 callback=callback)
    else:
        result = adapt.run_uniform(spec, cfg.levels, weights=cfg.weights,
                                   b=cfg.b, resolution=cfg.resolution,
                                   callback=callback)

    if result.failure is not None and not result.history:
        raise RuntimeError(f"run failed: {result.failure}")
    csv_path = os.path.join(cfg.out, "history.csv")
    report.write_history_csv(csv_path, result.history)
    print(f"wrote {csv_path} ({len(result.history)} iterations, "
          f"final elements {result.mesh.n_triangles})")
    if result.failure is not None:
        print(f"run aborted early: {result.failure}", file=sys.stderr)
    for path in dumps:
        print(f"wrote {path}")

    if cfg.figures:
        import numpy as np

        from .mixed_fem import postprocess

        title = f"{cfg.benchmark} ({cfg.mode}, theta={cfg.theta})"
        report.render_convergence(os.path.join(cfg.out, "convergence.png"),
                                  result.history, title)
        report.render_mesh(os.path.join(cfg.out, "mesh_final.png"), result.mesh,
                           cell_values=np.sqrt(result.report.eta_sq),
                           title=f"{cfg.benchmark}: {result.mesh.n_triangles} elements")
        post = postprocess(result.mesh, spec, result.solution)
        report.render_displacement(os.path.join(cfg.out, "displacement_final.png"),
                                   result.mesh, post.vertex_values,
                                   title=f"{cfg.benchmark} displacement")
        for name in ("convergence.png", "mesh_final.png", "displacement_final.png"):
            print(f"wrote {os.path.join(cfg.out, name)}")
    return 0 if result.failure is None else 1


def cmd_table(args) -> int:
    history = report.read_history_csv(args.csv)
    print(report.format_table(history))
    return 0


def cmd_compare(args) -> int:
    if args.labels:
        labels = [s.strip() for s in args.labels.split(",")]
        if len(labels) != 2:
            raise ConfigError("--labels needs exactly two names")
    else:
        labels = [os.path.splitext(os.path.basename(p))[0] or f"series{i}"
                  for i, p in enumerate((args.csv_a, args.csv_b))]
        if labels[0] == labels[1]:
            labels = [f"{labels[0]}_a", f"{labels[1]}_b"]
    histories = {}
    for label, path in zip(labels, (args.csv_a, args.csv_b)):
        history = report.read_history_csv(path)
        if not history:
            raise report.ReportError(f"series {label!r} from {path} is empty")
        histories[label] = history
    merged = report.merge_series(histories)
    if args.out:
        report.write_text(args.out, merged)
        print(f"wrote {args.out}")
        if args.figures is None or args.figures:
            fig_path = os.path.splitext(args.out)[0] + ".png"
            report.render_compare(fig_path, histories)
            print(f"wrote {fig_path}")
    else:
        sys.stdout.write(merged)
    return 0


def cmd_bench_list(args) -> int:
    print(f"{'name':<16} {'theta':>6} {'epsilon':>8}  exact")
    for name in BENCHMARKS:
        eps = DEFAULT_EPSILON.get(name)
        spec = benchmark(name, eps)
        print(f"{name:<16} {DEFAULT_THETA[name]:>6} "
              f"{'-' if eps is None else eps:>8}  {'yes' if spec.exact else 'no'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "table":
            return cmd_table(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "bench-list":
            return cmd_bench_list(args)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
