"""Online distributed mirror-descent primal-dual algorithms (exact and stochastic)."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import BregmanGeometry, Euclidean, FeasibleSet, mirror_argmin
from .graph import GraphSequence
from .oracle import NoiseModel, noisy_grad2_f, noisy_jac_g
from .problem import BoundConstants, MepInstance


class EngineError(RuntimeError):
    pass


class CertificateViolation(EngineError):
    """An inline (``verify=True``) certificate check failed."""


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``zeta_t = base_t^-a`` and ``eta_t = base_t^-b``.

    ``time_varying``: ``base_t = scale * t + shift`` (the default
    ``scale=1, shift=1`` gives ``(t + 1)^-a``). ``fixed``: ``base = horizon
    + shift`` for every round. Exponents must satisfy ``0 < b < a < 2b < 2``
    so that ``zeta_t <= eta_t``.
    """

    variant: str
    a: float
    b: float
    horizon: int | None = None
    scale: float = 1.0
    shift: float = 1.0

    def __post_init__(self):
        if self.variant not in ("time_varying", "fixed"):
            raise ValueError(f"unknown schedule variant {self.variant!r}")
        if not (0 < self.a < 1 and 0 < self.b < 1):
            raise ValueError(f"exponents must lie in (0, 1), got a={self.a}, b={self.b}")
        if not (self.b < self.a < 2 * self.b):
            raise ValueError(f"exponents must satisfy b < a < 2b, got a={self.a}, b={self.b}")
        if self.shift < 1 or self.scale < 0:
            raise ValueError("schedule needs shift >= 1 and scale >= 0 so steps stay in (0, 1]")
        if self.variant == "fixed" and (self.horizon is None or self.horizon < 0):
            raise ValueError("fixed schedule needs a horizon")

    @classmethod
    def time_varying(cls, a: float, b: float, scale: float = 1.0, shift: float = 1.0):
        return cls("time_varying", a, b, None, scale, shift)

    @classmethod
    def fixed(cls, a: float, b: float, horizon: int, shift: float = 1.0):
        return cls("fixed", a, b, horizon, 1.0, shift)

    def base(self, t: int) -> float:
        if self.variant == "fixed":
            return self.horizon + self.shift
        return self.scale * t + self.shift

    def zeta(self, t: int) -> float:
        return self.base(t) ** (-self.a)

    def eta(self, t: int) -> float:
        return self.base(t) ** (-self.b)

    def as_fixed(self, horizon: int) -> "StepSchedule":
        return StepSchedule.fixed(self.a, self.b, horizon, self.shift)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "a": self.a, "b": self.b, "horizon": self.horizon,
                "scale": self.scale, "shift": self.shift}


@dataclass(eq=False)
class RunTrace:
    """Full history of a run.

    ``x``/``y``/``zeta``/``eta`` hold rounds ``0..T``; ``z``, ``grad`` (the
    primal gradient actually used) and ``g_own`` (agent ``i``'s dual
    innovation ``g_i^t(x_i(t))``) hold the ``T`` update rounds ``0..T-1``.
    """

    x: np.ndarray  # (T+1, n, m)
    y: np.ndarray  # (T+1, n, h)
    z: np.ndarray  # (T, n, m)
    grad: np.ndarray  # (T, n, m)
    g_own: np.ndarray  # (T, n, h)
    zeta: np.ndarray  # (T+1,)
    eta: np.ndarray  # (T+1,)
    instance: str
    algorithm: str
    schedule: StepSchedule
    seed: int | None = None
    noise: NoiseModel | None = None
    mu: float = 2.0
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.x.shape[0] - 1

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    def to_csv(self, path) -> None:
        """Rows ``round, agent, coord, x, y_1..y_h, zeta, eta``."""
        h = self.y.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "agent", "coord", "x"] + [f"y_{k + 1}" for k in range(h)]
                       + ["zeta", "eta"])
            for t in range(len(self)):
                for i in range(self.n):
                    ys = [repr(float(v)) for v in self.y[t, i]]
                    for c in range(self.x.shape[2]):
                        w.writerow([t, i, c, repr(float(self.x[t, i, c]))] + ys
                                   + [repr(float(self.zeta[t])), repr(float(self.eta[t]))])


def primal_step(geom: BregmanGeometry, omega: FeasibleSet, z_i, grad_f, jac_g, y_i,
                zeta: float, eta: float) -> np.ndarray:
    """Mirror step from ``z_i`` with tilt ``zeta * grad_f + eta * jac_g @ y_i``."""
    tilt = zeta * np.asarray(grad_f, dtype=float) + eta * (np.asarray(jac_g) @ np.asarray(y_i))
    return mirror_argmin(geom, omega, z_i, tilt)


def dual_step(seq: GraphSequence, t: int, y_all, g_vals, eta: float) -> np.ndarray:
    """``[(1 - eta) A(t) y + eta g]_+`` row-wise (one row per agent)."""
    Y = np.asarray(y_all, dtype=float)
    return np.maximum((1.0 - eta) * (seq.weights_at(t) @ Y) + eta * np.asarray(g_vals), 0.0)


def default_init(inst: MepInstance) -> np.ndarray:
    return inst.initial_states()


def _checked(value, what, i, t, shape):
    arr = np.asarray(value, dtype=float).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise EngineError(f"{what} oracle returned non-finite values for agent {i} at round {t}")
    return arr


def _run(inst: MepInstance, seq: GraphSequence, sched: StepSchedule, horizon: int, init,
         geom: BregmanGeometry | None, noise: NoiseModel | None, seed: int | None,
         workers: int, verify: bool, bounds: BoundConstants | None, algorithm: str) -> RunTrace:
    if seq.n != inst.n:
        raise EngineError(f"graph has {seq.n} agents, instance has {inst.n}")
    if horizon < 0:
        raise EngineError("horizon must be nonnegative")
    geom = geom or Euclidean()
    n, m, h = inst.n, inst.m, inst.h
    X0 = default_init(inst) if init is None else np.asarray(init, dtype=float)
    X0 = X0.reshape(n, m)
    for i in range(n):
        if not inst.omega.contains(X0[i]):
            raise EngineError(f"initial state of agent {i} is outside the feasible set")
    if verify and bounds is None:
        raise EngineError("verify=True needs bound constants")

    T = horizon
    xs = np.empty((T + 1, n, m))
    ys = np.zeros((T + 1, n, h))
    zs = np.empty((T, n, m))
    grads = np.empty((T, n, m))
    gown = np.empty((T, n, h))
    zeta = np.array([sched.zeta(t) for t in range(T + 1)])
    eta = np.array([sched.eta(t) for t in range(T + 1)])
    xs[0] = X0
    if verify:
        y_cap = math.sqrt(n) * bounds.kappa2 + 1e-9
        step_cap = (math.sqrt(n) * h * bounds.kappa2 * bounds.kappa3 + bounds.kappa1) / geom.mu

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def agent_update(i, t, X, Y, Z):
        x = X[i]
        if noise is None:
            gf = _checked(inst.grad2_f(i, t, x), "grad2_f", i, t, (m,))
            J = _checked(inst.jac_g(i, t, x), "jac_g", i, t, (m, h))
        else:
            gf = _checked(noisy_grad2_f(inst, i, t, x, noise, seed), "grad2_f", i, t, (m,))
            J = _checked(noisy_jac_g(inst, i, t, x, noise, seed), "jac_g", i, t, (m, h))
        gv = _checked(inst.g(i, t, x), "g", i, t, (h,))
        x_new = primal_step(geom, inst.omega, Z[i], gf, J, Y[i], zeta[t], eta[t])
        return x_new, gf, gv

    try:
        for t in range(T):
            X, Y = xs[t], ys[t]
            Z = seq.weights_at(t) @ X
            if pool is None:
                results = [agent_update(i, t, X, Y, Z) for i in range(n)]
            else:
                results = list(pool.map(lambda i: agent_update(i, t, X, Y, Z), range(n)))
            for i, (x_new, gf, gv) in enumerate(results):
                xs[t + 1, i] = x_new
                grads[t, i] = gf
                gown[t, i] = gv
            zs[t] = Z
            ys[t + 1] = dual_step(seq, t, Y, gown[t], eta[t])
            if verify:
                ymax = np.linalg.norm(ys[t + 1], axis=1).max()
                if ymax > y_cap:
                    raise CertificateViolation(f"round {t + 1}: max ||y_i|| = {ymax:.6g} "
                                               f"exceeds sqrt(n) kappa2 = {y_cap:.6g}")
                if noise is None:
                    step = np.linalg.norm(xs[t + 1] - Z, axis=1).max()
                    if step > step_cap * eta[t] + 1e-9:
                        raise CertificateViolation(f"round {t}: step {step:.6g} exceeds "
                                                   f"{step_cap * eta[t]:.6g}")
    finally:
        if pool is not None:
            pool.shutdown()

    return RunTrace(x=xs, y=ys, z=zs, grad=grads, g_own=gown, zeta=zeta, eta=eta,
                    instance=inst.name, algorithm=algorithm, schedule=sched, seed=seed,
                    noise=noise, mu=geom.mu)


def run_exact(inst: MepInstance, seq: GraphSequence, sched: StepSchedule, horizon: int,
              init=None, geom: BregmanGeometry | None = None, workers: int = 1,
              verify: bool = False, bounds: BoundConstants | None = None) -> RunTrace:
    """Exact-gradient algorithm: mix primal states, mirror step on local
    gradients plus the dual-weighted constraint Jacobian, regularized dual
    consensus update. ``y_i(0) = 0``."""
    return _run(inst, seq, sched, horizon, init, geom, None, None, workers, verify, bounds,
                "exact")


def run_stochastic(inst: MepInstance, seq: GraphSequence, sched: StepSchedule, horizon: int,
                   init=None, noise: NoiseModel | None = None, seed: int = 0,
                   geom: BregmanGeometry | None = None, workers: int = 1,
                   verify: bool = False, bounds: BoundConstants | None = None) -> RunTrace:
    """Stochastic-gradient algorithm with fixed step sizes.

    The primal step uses noisy gradient and Jacobian draws; the dual
    innovation uses the exact ``g_i^t(x_i(t))``. Deterministic given ``seed``.
    """
    if sched.variant != "fixed":
        raise EngineError("the stochastic algorithm needs a fixed step schedule")
    noise = noise if noise is not None else NoiseModel()
    return _run(inst, seq, sched, horizon, init, geom, noise, seed, workers, verify, bounds,
                "stochastic")
