"""Regret, constraint violation, path length, consensus errors and runtime certificates.

Everything here works offline on a finished :class:`RunTrace`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import RunTrace
from .graph import GraphSequence, mixing_certificate, transition_product
from .problem import BoundConstants, MepInstance

PASS_TOL = 1e-9
LEMMA1_WINDOW = 200


class MetricsError(ValueError):
    pass


@dataclass(eq=False)
class MetricSeries:
    """Cumulative metric per round ``0..T``. ``agent`` is an index, ``"max"`` or ``"all"``."""

    name: str
    values: np.ndarray
    agent: int | str = "all"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise MetricsError(f"metric {self.name!r} has non-finite entries")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def over_t(self) -> np.ndarray:
        # round 0 is divided by 1 rather than 0
        return self.values / np.maximum(np.arange(len(self.values)), 1)

    @property
    def final(self) -> float:
        return float(self.values[-1])


def _path(inst: MepInstance, path):
    path = path if path is not None else inst.solution_path
    if path is None:
        raise MetricsError(f"instance {inst.name!r} has no solution path; pass "
                           "oracle.SolutionPath(inst) as the benchmark")
    return path


def dynamic_regret(trace: RunTrace, inst: MepInstance, agent: int, path=None) -> MetricSeries:
    """``R_{i,t} = -sum_{s<=t} sum_j f_j^s(x_i(s), x*_s)``."""
    path = _path(inst, path)
    if inst.f_value is None:
        raise MetricsError(f"instance {inst.name!r} has no f_value oracle")
    per_round = np.array([-inst.f_total(t, trace.x[t, agent], np.asarray(path(t), dtype=float))
                          for t in range(len(trace))])
    return MetricSeries("regret", np.cumsum(per_round), agent)


def violation(trace: RunTrace, inst: MepInstance, agent: int) -> MetricSeries:
    """``||[sum_{s<=t} sum_j g_j^s(x_i(s))]_+||``; the positive part acts on the running sum."""
    per_round = np.array([inst.coupled_g(t, trace.x[t, agent]) for t in range(len(trace))])
    cum = np.cumsum(per_round.reshape(len(trace), -1), axis=0)
    return MetricSeries("violation", np.linalg.norm(np.maximum(cum, 0.0), axis=1), agent)


def max_over_agents(series: list[MetricSeries]) -> MetricSeries:
    return MetricSeries(series[0].name, np.max([s.values for s in series], axis=0), "max")


def path_length(inst: MepInstance, horizon: int, path=None) -> float:
    """``Theta_T = sum_{t=0}^{T} ||x*_{t+1} - x*_t||``."""
    path = _path(inst, path)
    pts = np.array([np.asarray(path(t), dtype=float) for t in range(horizon + 2)])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def tracking_error(trace: RunTrace, inst: MepInstance, path=None) -> MetricSeries:
    """Per-round ``max_i ||x_i(t) - x*_t||``."""
    path = _path(inst, path)
    xs = np.array([np.asarray(path(t), dtype=float) for t in range(len(trace))])
    err = np.linalg.norm(trace.x - xs[:, None, :], axis=2).max(axis=1)
    return MetricSeries("tracking", err, "max")


def consensus_errors(trace: RunTrace) -> tuple[MetricSeries, MetricSeries]:
    if trace.n < 2:
        raise MetricsError("consensus errors need at least 2 agents")
    ex = np.linalg.norm(trace.x - trace.x.mean(axis=1, keepdims=True), axis=2).max(axis=1)
    ey = np.linalg.norm(trace.y - trace.y.mean(axis=1, keepdims=True), axis=2).max(axis=1)
    return MetricSeries("consensus_x", ex, "max"), MetricSeries("consensus_y", ey, "max")


# -- certificates -------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    bound: float
    observed: float
    margin: float
    passed: bool
    round: int | None = None


@dataclass
class CertificateReport:
    checks: list[CheckResult]
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks],
                "info": self.info}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _worst(name: str, bound: np.ndarray, observed: np.ndarray, offset: int = 0) -> CheckResult:
    bound = np.broadcast_to(np.asarray(bound, dtype=float), np.shape(observed))
    margin = bound - observed
    if margin.size == 0:
        return CheckResult(name, math.inf, 0.0, math.inf, True, None)
    k = int(np.argmin(margin))
    return CheckResult(name, float(bound.flat[k]), float(observed.flat[k]), float(margin.flat[k]),
                       bool(margin.flat[k] >= -PASS_TOL), k + offset)


def discounted_step_sums(eta: np.ndarray, log_lam: float) -> np.ndarray:
    """``S_t = sum_{s=0}^{t} lam^(t-s) eta_s``, via ``S_t = lam S_{t-1} + eta_t``."""
    lam = math.exp(log_lam)
    out = np.empty(len(eta))
    acc = 0.0
    for t, e in enumerate(eta):
        acc = lam * acc + e
        out[t] = acc
    return out


def lemma1_check(seq: GraphSequence, window: int = LEMMA1_WINDOW, starts=(0,)) -> CheckResult:
    """Worst margin of ``|Phi(t,s)_ij - 1/n| <= C lam^(t-s)`` for ``t - s <= window``."""
    cert = mixing_certificate(seq)
    n = seq.n
    worst = None
    for s in starts:
        Phi = np.eye(n)
        dev = np.empty(window + 1)
        for k in range(window + 1):
            if k:
                Phi = seq.weights_at(s + k - 1) @ Phi
            dev[k] = np.abs(Phi - 1.0 / n).max()
        res = _worst("lemma1_mixing", cert.bound(np.arange(window + 1)), dev)
        if worst is None or res.margin < worst.margin:
            worst = res
    return worst


def certificate_check(trace: RunTrace, inst: MepInstance, seq: GraphSequence,
                      bounds: BoundConstants, ell: float | None = None,
                      lemma1_window: int = LEMMA1_WINDOW) -> CertificateReport:
    """Evaluate every runtime-checkable bound at every round and keep the worst margin."""
    n, m, h = inst.n, inst.m, inst.h
    cert = mixing_certificate(seq)
    mu = trace.mu
    C, log_lam = cert.C, cert.log_lam
    inv_lam = math.exp(-log_lam)
    T = trace.horizon
    exact = trace.algorithm == "exact"
    checks = []

    window = min(lemma1_window, max(T, 1))
    checks.append(lemma1_check(seq, window, starts=range(min(seq.period, 4))))

    ynorm = np.linalg.norm(trace.y, axis=2).max(axis=1)
    checks.append(_worst("lemma3_dual_bound", math.sqrt(n) * bounds.kappa2, ynorm))

    rho5 = (math.sqrt(n) * h * bounds.kappa2 * bounds.kappa3 + bounds.kappa1) / mu
    if exact and T > 0:
        steps = np.linalg.norm(trace.x[1:] - trace.z, axis=2).max(axis=1)
        checks.append(_worst("step_bound", rho5 * trace.eta[:T], steps))

    S = discounted_step_sums(trace.eta, log_lam)
    lam_t = np.exp(np.arange(T + 1) * log_lam)
    ex, ey = consensus_errors(trace)
    rho1 = math.sqrt(m) * n * bounds.kappa * C
    rho2 = (math.sqrt(m) * n ** 1.5 * h * bounds.kappa2 * bounds.kappa3 * C
            + math.sqrt(m) * n * bounds.kappa1 * C) * inv_lam / mu
    if exact:
        checks.append(_worst("lemma5_primal_consensus", rho1 * lam_t + rho2 * S, ex.values))
    rho6 = (math.sqrt(h) * n ** 1.5 * C * bounds.kappa2
            + math.sqrt(h) * n * C * bounds.kappa2) * inv_lam
    checks.append(_worst("lemma5_dual_consensus", rho6 * S, ey.values))

    outside = np.array([max(float(np.linalg.norm(inst.omega.project(x) - x))
                            for x in trace.x[t]) for t in range(T + 1)])
    checks.append(_worst("primal_feasibility", 0.0, outside))
    checks.append(_worst("dual_nonnegativity", 0.0, np.maximum(-trace.y.min(axis=(1, 2)), 0.0)))

    info = {"C": C, "lambda": cert.lam, "log_lambda": log_lam, "mu": mu,
            "rho1": rho1, "rho2": rho2, "rho5": rho5, "rho6": rho6,
            "bounds": bounds.to_dict(), "ell": ell, "algorithm": trace.algorithm}
    return CertificateReport(checks, info)


# -- CSV ------------------------------------------------------------------------

@dataclass
class MetricBundle:
    series: list[MetricSeries]
    scalars: dict = field(default_factory=dict)

    def get(self, name: str, agent="max") -> MetricSeries:
        for s in self.series:
            if s.name == name and s.agent == agent:
                return s
        raise KeyError((name, agent))


def compute_metrics(trace: RunTrace, inst: MepInstance, path=None,
                    oracle_path=None) -> MetricBundle:
    """Per-agent regret and violation plus their max over agents, consensus
    errors and (with a benchmark path) tracking error and path length.
    ``oracle_path`` adds ``regret_oracle`` against a reference-solver path."""
    series: list[MetricSeries] = []
    scalars = {}
    have_path = path is not None or inst.solution_path is not None
    if have_path and inst.f_value is not None:
        reg = [dynamic_regret(trace, inst, i, path) for i in range(trace.n)]
        series += reg + [max_over_agents(reg)]
    if oracle_path is not None and inst.f_value is not None:
        reg = [dynamic_regret(trace, inst, i, oracle_path) for i in range(trace.n)]
        for s in reg:
            s.name = "regret_oracle"
        series += reg + [max_over_agents(reg)]
    vio = [violation(trace, inst, i) for i in range(trace.n)]
    series += vio + [max_over_agents(vio)]
    series += list(consensus_errors(trace))
    if have_path:
        series.append(tracking_error(trace, inst, path))
        scalars["path_length"] = path_length(inst, trace.horizon, path)
    if oracle_path is not None:
        scalars["path_length_oracle"] = path_length(inst, trace.horizon, oracle_path)
    return MetricBundle(series, scalars)


def write_metrics_csv(bundle: MetricBundle, path) -> None:
    """Columns ``round, metric, agent, value, value_over_t``; floats as ``repr``.

    Scalars (path length) go on the final round with agent ``all``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "metric", "agent", "value", "value_over_t"])
        for s in bundle.series:
            over = s.over_t
            for t, v in enumerate(s.values):
                w.writerow([t, s.name, s.agent, repr(float(v)), repr(float(over[t]))])
        if bundle.series:
            T = len(bundle.series[0]) - 1
            for name in sorted(bundle.scalars):
                v = float(bundle.scalars[name])
                w.writerow([T, name, "all", repr(v), repr(v / max(T, 1))])
