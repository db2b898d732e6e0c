"""Command-line experiment runner.

``python -m onlinemep run --example 1`` writes, per seed, ``manifest.json``,
``trace.csv``, ``metrics.csv`` and ``certificate.json`` under ``--out``.
``sweep`` runs a grid of step-size exponents and writes ``summary.csv``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import engine, geometry, graph, metrics, oracle, problem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    pass


# Settings used for the two built-in examples.
EXAMPLE_DEFAULTS = {
    1: {"algorithm": "exact", "horizon": 2000, "variant": "time_varying",
        "a": 0.5, "b": 1.0 / 3.0, "scale": 20.0, "shift": 8.0},
    2: {"algorithm": "stochastic", "horizon": 100, "variant": "fixed",
        "a": 0.5, "b": 1.0 / 3.0, "scale": 1.0, "shift": 30.0},
}


@dataclass
class ExperimentConfig:
    example: int = 1
    epsilon_sign: str = "capacity"
    constraint_count: int = 6
    graph: str | None = None
    algorithm: str | None = None
    variant: str | None = None
    a: float | None = None
    b: float | None = None
    scale: float | None = None
    shift: float | None = None
    horizon: int | None = None
    seeds: list = field(default_factory=lambda: [0])
    init: list | None = None
    sigma1: float | None = None
    sigma2: float = 0.0
    native_noise: bool = True
    benchmark: str = "closed_form"
    out: str = "runs"
    verify: bool = False
    oracle_tol: float = 1e-8
    workers: int = 1

    def resolved(self) -> "ExperimentConfig":
        """Fill per-example defaults and validate; raises ConfigError on the first problem."""
        if self.example not in EXAMPLE_DEFAULTS:
            raise ConfigError(f"example must be 1 or 2, got {self.example!r}")
        cfg = ExperimentConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        for k, v in EXAMPLE_DEFAULTS[cfg.example].items():
            if getattr(cfg, k) is None:
                setattr(cfg, k, v)
        if cfg.algorithm not in ("exact", "stochastic"):
            raise ConfigError(f"algorithm must be exact or stochastic, got {cfg.algorithm!r}")
        if cfg.algorithm == "stochastic" and cfg.variant != "fixed":
            raise ConfigError("the stochastic algorithm needs the fixed step schedule")
        if not (0 < cfg.a < 1 and 0 < cfg.b < 1):
            raise ConfigError(f"schedule exponents must lie in (0, 1), got a={cfg.a}, b={cfg.b}")
        if not cfg.b < cfg.a < 2 * cfg.b:
            raise ConfigError(f"schedule exponents must satisfy b < a < 2b, got a={cfg.a}, b={cfg.b}")
        if not isinstance(cfg.horizon, int) or cfg.horizon < 0:
            raise ConfigError(f"horizon must be a nonnegative integer, got {cfg.horizon!r}")
        if not cfg.seeds:
            raise ConfigError("at least one seed is required")
        cfg.seeds = [int(s) for s in cfg.seeds]
        if cfg.epsilon_sign not in ("capacity", "paper"):
            raise ConfigError(f"epsilon_sign must be capacity or paper, got {cfg.epsilon_sign!r}")
        if cfg.constraint_count not in (5, 6):
            raise ConfigError(f"constraint_count must be 5 or 6, got {cfg.constraint_count!r}")
        if cfg.benchmark not in ("closed_form", "oracle", "both"):
            raise ConfigError(f"benchmark must be closed_form, oracle or both, got {cfg.benchmark!r}")
        if cfg.oracle_tol <= 0:
            raise ConfigError("oracle_tol must be positive")
        if cfg.workers < 1:
            raise ConfigError("workers must be >= 1")
        if cfg.sigma2 < 0 or (cfg.sigma1 is not None and cfg.sigma1 < 0):
            raise ConfigError("noise scales must be nonnegative")
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]  # a run manifest
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        return cls(**doc)


def build_instance(cfg: ExperimentConfig) -> problem.MepInstance:
    if cfg.example == 1:
        return problem.example1(constraint_count=cfg.constraint_count)
    return problem.example2(epsilon_sign=cfg.epsilon_sign)


def build_graphs(cfg: ExperimentConfig) -> graph.GraphSequence:
    if cfg.graph is None:
        return graph.example1_graphs() if cfg.example == 1 else graph.example2_graphs()
    return graph.GraphSequence.load(cfg.graph)


def build_schedule(cfg: ExperimentConfig) -> engine.StepSchedule:
    if cfg.variant == "fixed":
        return engine.StepSchedule.fixed(cfg.a, cfg.b, cfg.horizon, cfg.shift)
    return engine.StepSchedule.time_varying(cfg.a, cfg.b, cfg.scale, cfg.shift)


def build_noise(cfg: ExperimentConfig, inst) -> oracle.NoiseModel | None:
    if cfg.algorithm != "stochastic":
        return None
    if cfg.native_noise and inst.grad2_noise is not None and cfg.sigma1 is None:
        return oracle.NoiseModel.for_instance(inst, cfg.sigma2)
    return oracle.NoiseModel(cfg.sigma1 or 0.0, cfg.sigma2)


def execute(cfg: ExperimentConfig, seed: int, inst=None, seq=None, bounds=None,
            oracle_path=None):
    """One run; returns (trace, metric bundle, certificate report)."""
    inst = inst or build_instance(cfg)
    seq = seq or build_graphs(cfg)
    sched = build_schedule(cfg)
    init = None if cfg.init is None else np.asarray(cfg.init, dtype=float)
    bounds = bounds or problem.estimate_bounds(inst)
    common = dict(init=init, workers=cfg.workers, verify=cfg.verify, bounds=bounds)
    if cfg.algorithm == "exact":
        trace = engine.run_exact(inst, seq, sched, cfg.horizon, **common)
    else:
        trace = engine.run_stochastic(inst, seq, sched, cfg.horizon,
                                      noise=build_noise(cfg, inst), seed=seed, **common)
    trace.seed = seed
    path = oracle_path if cfg.benchmark == "oracle" else None
    extra = oracle_path if cfg.benchmark == "both" else None
    bundle = metrics.compute_metrics(trace, inst, path=path, oracle_path=extra)
    ell = problem_ell(inst)
    report = metrics.certificate_check(trace, inst, seq, bounds, ell=ell)
    return trace, bundle, report


def problem_ell(inst) -> float:
    geom = geometry.Euclidean()
    return float(geom.estimate_ell(inst.omega, np.random.default_rng(0), 1000))


def _manifest(cfg: ExperimentConfig, seed: int, report, bounds) -> dict:
    return {"config": cfg.to_dict(), "seed": seed, "bounds": bounds.to_dict(),
            "certificate": report.info, "schedule": build_schedule(cfg).to_dict()}


def run_config(cfg: ExperimentConfig, stdout=sys.stdout) -> int:
    cfg = cfg.resolved()
    inst = build_instance(cfg)
    seq = build_graphs(cfg)
    if inst.coupled_affine is not None or inst.m == 1:
        oracle.check_feasible(inst, 0)
    bounds = problem.estimate_bounds(inst)
    oracle_path = None
    if cfg.benchmark != "closed_form":
        oracle_path = oracle.SolutionPath(inst, cfg.oracle_tol)
    status = EXIT_OK
    for seed in cfg.seeds:
        out = Path(cfg.out) / f"seed_{seed}"
        out.mkdir(parents=True, exist_ok=True)
        trace, bundle, report = execute(cfg, seed, inst, seq, bounds, oracle_path)
        trace.to_csv(out / "trace.csv")
        metrics.write_metrics_csv(bundle, out / "metrics.csv")
        report.dump(out / "certificate.json")
        (out / "manifest.json").write_text(
            json.dumps(_manifest(cfg, seed, report, bounds), indent=2, sort_keys=True))
        line = f"seed {seed}: T={trace.horizon}"
        for name in ("regret", "violation"):
            try:
                s = bundle.get(name)
                line += f" {name}/T={s.over_t[-1]:.6g}"
            except KeyError:
                pass
        line += f" certificates={'pass' if report.passed else 'FAIL'}"
        print(line, file=stdout)
        if cfg.verify and not report.passed:
            bad = next(c for c in report.checks if not c.passed)
            print(f"certificate {bad.name} failed: margin {bad.margin:.6g}", file=sys.stderr)
            status = EXIT_VERIFY
    if oracle_path is not None:
        oracle_path.dump_csv(Path(cfg.out) / "solution_path.csv")
    return status


def sweep_config(cfg: ExperimentConfig, grid: list[tuple[float, float]],
                 stdout=sys.stdout) -> int:
    if not grid:
        raise ConfigError("sweep grid is empty")
    base = cfg.resolved()
    inst = build_instance(base)
    seq = build_graphs(base)
    bounds = problem.estimate_bounds(inst)
    rows = []
    for a, b in grid:
        point = ExperimentConfig(**{**base.to_dict(), "a": a, "b": b}).resolved()
        start = time.perf_counter()
        _, bundle, _ = execute(point, point.seeds[0], inst, seq, bounds)
        wall = time.perf_counter() - start
        rows.append((bundle.get("regret").over_t[-1], bundle.get("violation").over_t[-1],
                     a, b, wall))
    rows.sort(key=lambda r: (r[0], r[2], r[3]))
    out = Path(base.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "final_regret_over_T", "final_violation_over_T", "wall_time_s"])
        for r_t, rg_t, a, b, wall in rows:
            w.writerow([repr(a), repr(b), repr(float(r_t)), repr(float(rg_t)), f"{wall:.3f}"])
    print(f"wrote {len(rows)} rows to {out / 'summary.csv'}", file=stdout)
    return EXIT_OK


def _grid_point(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid point must be 'a,b', got {text!r}")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onlinemep",
                                description="Online distributed MEP experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--example", type=int, choices=(1, 2))
    common.add_argument("--config", type=Path, help="JSON config or a run manifest")
    common.add_argument("--graph", help="graph sequence JSON (defaults to the example's)")
    common.add_argument("--algorithm", choices=("exact", "stochastic"))
    common.add_argument("--schedule", dest="variant", choices=("time_varying", "fixed"))
    common.add_argument("--horizon", type=int)
    common.add_argument("--seed", dest="seeds", type=int, action="append")
    common.add_argument("--a", type=float)
    common.add_argument("--b", type=float)
    common.add_argument("--scale", type=float)
    common.add_argument("--shift", type=float)
    common.add_argument("--sigma1", type=float)
    common.add_argument("--sigma2", type=float)
    common.add_argument("--verify", action="store_true", default=None)
    common.add_argument("--epsilon-sign", dest="epsilon_sign", choices=("paper", "capacity"))
    common.add_argument("--constraint-count", dest="constraint_count", type=int, choices=(5, 6))
    common.add_argument("--benchmark", choices=("closed_form", "oracle", "both"))
    common.add_argument("--out")
    common.add_argument("--oracle-tol", dest="oracle_tol", type=float)
    common.add_argument("--workers", type=int)
    sub.add_parser("run", parents=[common], help="run one configuration")
    sw = sub.add_parser("sweep", parents=[common], help="sweep step-size exponents")
    sw.add_argument("--grid", type=_grid_point, action="append", default=[],
                    help="exponent pair 'a,b' (repeatable)")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    doc = {}
    if args.config is not None:
        doc = json.loads(args.config.read_text())
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            doc[f.name] = v
    return ExperimentConfig.from_dict(doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "sweep":
            return sweep_config(cfg, args.grid)
        return run_config(cfg)
    except (ConfigError, graph.GraphError, ValueError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except oracle.InfeasibleError as exc:
        print(f"infeasible problem: {exc}. The coupled constraint is empty under "
              "--epsilon-sign paper; use --epsilon-sign capacity.", file=sys.stderr)
        return EXIT_INFEASIBLE
