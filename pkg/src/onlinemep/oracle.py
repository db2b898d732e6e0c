"""Reference solutions of the per-round MEP and the stochastic-gradient noise model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .geometry import Box, FeasibleSet
from .problem import MepInstance

MAX_ITER = 1_000_000
FEAS_TOL = 1e-12
MAX_BAND = 0.1


class OracleError(RuntimeError):
    pass


class InfeasibleError(OracleError):
    """The per-round feasible set is empty."""


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

def calibrated_std(sigma: float, dim: int) -> float:
    """Per-component standard deviation of the calibrated Gaussian.

    With variance ``sigma^2 (1 - exp(-1/(2 dim))) / 2`` per component,
    ``E exp(||xi||^2 / sigma^2) = exp(1/4)`` exactly, below the ``exp(1)``
    ceiling, and ``exp(||xi||^2 / sigma^2)`` has finite variance so the
    Monte-Carlo self-check has a meaningful confidence band.
    """
    return sigma * math.sqrt(-math.expm1(-1.0 / (2 * dim)) / 2.0)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian perturbations of the primal gradient and the constraint Jacobian.

    ``native=True`` takes the primal perturbation from the instance's own
    ``grad2_noise`` hook instead (Example 2 maps its demand shock into the
    gradient); ``sigma1`` then only labels its sub-Gaussian parameter.
    """

    sigma1: float = 0.0
    sigma2: float = 0.0
    native: bool = False

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("noise scales must be nonnegative")

    @classmethod
    def for_instance(cls, inst: MepInstance, sigma2: float = 0.0) -> "NoiseModel":
        if inst.grad2_noise is None:
            raise ValueError(f"instance {inst.name!r} has no native noise")
        return cls(sigma1=float(inst.native_sigma1 or 0.0), sigma2=sigma2, native=True)

    def to_dict(self) -> dict:
        return {"sigma1": self.sigma1, "sigma2": self.sigma2, "native": self.native}


PRIMAL_CHANNEL = 0
JACOBIAN_CHANNEL = 1


def noise_stream(seed: int, channel: int, i: int, t: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, channel, agent, round)``; draw order never matters."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), channel, int(i), int(t)]))


def noisy_grad2_f(inst: MepInstance, i: int, t: int, x, noise: NoiseModel,
                  seed: int) -> np.ndarray:
    exact = np.asarray(inst.grad2_f(i, t, x), dtype=float)
    if noise.native:
        if noise.sigma1 == 0:
            return exact
        return exact + inst.grad2_noise(i, t, x, noise_stream(seed, PRIMAL_CHANNEL, i, t))
    if noise.sigma1 == 0:
        return exact
    rng = noise_stream(seed, PRIMAL_CHANNEL, i, t)
    return exact + rng.normal(0.0, calibrated_std(noise.sigma1, exact.size), exact.shape)


def noisy_jac_g(inst: MepInstance, i: int, t: int, x, noise: NoiseModel,
                seed: int) -> np.ndarray:
    exact = np.asarray(inst.jac_g(i, t, x), dtype=float).reshape(inst.m, inst.h)
    if noise.sigma2 == 0:
        return exact
    rng = noise_stream(seed, JACOBIAN_CHANNEL, i, t)
    return exact + rng.normal(0.0, calibrated_std(noise.sigma2, exact.size), exact.shape)


@dataclass(frozen=True)
class SubGaussianReport:
    estimate: float
    band: float
    threshold: float
    passed: bool


def subgaussian_selfcheck(noise: NoiseModel, samples: int = 100_000, dim: int = 1,
                          which: str = "grad", seed: int = 0, scale: float = 1.0,
                          inst: MepInstance | None = None) -> SubGaussianReport:
    """Monte-Carlo estimate of ``E exp(||xi||^2 / sigma^2)`` against ``exp(1)``.

    ``scale`` multiplies the drawn noise (to probe a mis-calibrated model).
    The band is three standard errors relative to the estimate; the check
    passes when ``estimate <= e (1 + band)`` and the band is at most
    ``MAX_BAND``.
    """
    if samples < 100_000:
        raise ValueError("self-check needs at least 1e5 samples")
    sigma = noise.sigma1 if which == "grad" else noise.sigma2
    if sigma == 0:
        return SubGaussianReport(1.0, 0.0, math.e, True)
    rng = np.random.default_rng(seed)
    if which == "grad" and noise.native:
        if inst is None:
            raise ValueError("native noise needs the instance")
        x = inst.omega.center()
        xi = np.array([inst.grad2_noise(0, 0, x, rng) for _ in range(samples)])
    else:
        xi = rng.normal(0.0, calibrated_std(sigma, dim), size=(samples, dim))
    xi = scale * xi
    with np.errstate(over="ignore"):
        vals = np.exp(np.sum(xi * xi, axis=1) / sigma**2)
    est = float(vals.mean())
    if not math.isfinite(est):
        return SubGaussianReport(est, math.inf, math.e, False)
    with np.errstate(over="ignore"):
        band = 3.0 * float(vals.std()) / math.sqrt(samples) / est
    # an unreliable estimate (exploding sample variance) is itself a failure
    passed = math.isfinite(band) and band <= MAX_BAND and est <= math.e * (1.0 + band)
    return SubGaussianReport(est, band, math.e, passed)


# ---------------------------------------------------------------------------
# feasible-set projection
# ---------------------------------------------------------------------------

def _interval_of(G, a: float, b: float):
    """``{x in [a, b] : G(x) <= 0}`` for convex scalar ``G``; ``None`` if empty."""
    res = minimize_scalar(G, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-13, "maxiter": 1000})
    xm = float(res.x)
    for cand in (a, b):
        if G(cand) < G(xm):
            xm = cand
    if G(xm) > FEAS_TOL:
        return None
    lo = a if G(a) <= 0 else brentq(G, a, xm, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    hi = b if G(b) <= 0 else brentq(G, xm, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return lo, hi


def _box_halfspace_projector(box: Box, a: np.ndarray, b: float):
    """Projection onto ``box ∩ {a @ x + b <= 0}``.

    The projection is ``clip(v - lam a)`` for the smallest ``lam >= 0`` that
    satisfies the halfspace; ``a @ clip(v - lam a)`` is piecewise linear in
    ``lam`` so ``lam`` is found exactly from the sorted breakpoints.
    """
    if np.sum(np.minimum(a * box.lower, a * box.upper)) + b > FEAS_TOL:
        return None
    nz = a != 0

    def proj(v):
        v = np.asarray(v, dtype=float)
        x = box.project(v)
        if a @ x + b <= 0:
            return x
        bps = np.concatenate([(v[nz] - box.lower[nz]) / a[nz], (v[nz] - box.upper[nz]) / a[nz]])
        bps = np.unique(np.concatenate([[0.0], bps[bps > 0]]))
        X = np.clip(v[None, :] - bps[:, None] * a[None, :], box.lower, box.upper)
        vals = X @ a + b
        k = int(np.argmax(vals <= 0))  # first breakpoint where the halfspace holds
        l0, l1, f0, f1 = bps[k - 1], bps[k], vals[k - 1], vals[k]
        lam = l1 if f0 == f1 else l0 + (l1 - l0) * f0 / (f0 - f1)
        return box.project(v - lam * a)

    return proj


def feasible_projector(inst: MepInstance, t: int):
    """Exact projector onto the round-``t`` feasible set, or ``None`` if no exact form applies.

    Raises :class:`InfeasibleError` when the set is provably empty.
    """
    omega = inst.omega
    if inst.coupled_affine is not None and isinstance(omega, Box) and inst.h == 1:
        a, b = inst.coupled_affine(t)
        proj = _box_halfspace_projector(omega, np.asarray(a, dtype=float).ravel(),
                                        float(np.asarray(b).ravel()[0]))
        if proj is None:
            raise InfeasibleError(f"{inst.name}: coupled constraint infeasible on the set at round {t}")
        return proj
    if inst.m == 1 and isinstance(omega, Box):
        lo, hi = float(omega.lower[0]), float(omega.upper[0])
        for k in range(inst.h):
            iv = _interval_of(lambda v: float(inst.coupled_g(t, np.array([v]))[k]), lo, hi)
            if iv is None:
                raise InfeasibleError(f"{inst.name}: constraint {k} infeasible at round {t}")
            lo, hi = max(lo, iv[0]), min(hi, iv[1])
            if lo > hi:
                raise InfeasibleError(f"{inst.name}: empty feasible interval at round {t}")
        return lambda v: np.clip(np.asarray(v, dtype=float), lo, hi)
    return None


def check_feasible(inst: MepInstance, t: int = 0) -> None:
    """Raise :class:`InfeasibleError` if the round-``t`` feasible set is empty."""
    if feasible_projector(inst, t) is not None:
        return
    # generic: minimize the total squared violation over the set
    x = _penalty_feasibility(inst, t)
    if np.max(inst.coupled_g(t, x)) > 1e-6:
        raise InfeasibleError(f"{inst.name}: no feasible point found at round {t}")


def _penalty_feasibility(inst, t, iters=20_000):
    x = inst.omega.center()
    step = 1.0
    for _ in range(iters):
        gv = np.maximum(inst.coupled_g(t, x), 0.0)
        if gv.max() <= 0:
            return x
        grad = inst.coupled_jac(t, x) @ gv
        x_new = inst.omega.project(x - step * grad)
        if 0.5 * np.sum(np.maximum(inst.coupled_g(t, x_new), 0) ** 2) > 0.5 * np.sum(gv**2):
            step *= 0.5
            continue
        x = x_new
    return x


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _diameter(omega: FeasibleSet) -> float:
    return 2.0 * omega.radius


def _projected_gradient_min(obj, grad, proj, x0, tol, scale):
    """Projected gradient with backtracking on a smooth convex objective."""
    x = proj(x0)
    step = 1.0
    for it in range(MAX_ITER):
        gx = grad(x)
        res = np.linalg.norm(x - proj(x - gx))
        if res * scale < tol:
            return x
        fx = obj(x)
        while True:
            x_new = proj(x - step * gx)
            d = x_new - x
            if obj(x_new) <= fx + gx @ d + 0.5 / step * (d @ d) + 1e-15 * abs(fx):
                break
            step *= 0.5
            if step < 1e-16:
                raise OracleError("backtracking failed in the reference solver")
        x = x_new
        step *= 1.5
    raise OracleError(f"reference solver hit {MAX_ITER} iterations (residual {res:.3e})")


def _extragradient(F, proj, x0, tol, scale):
    """Extragradient with a backtracked local-Lipschitz step size."""
    x = proj(x0)
    alpha = 1.0
    for it in range(MAX_ITER):
        Fx = F(x)
        res = np.linalg.norm(x - proj(x - Fx))
        if res * scale < tol:
            return x
        while True:
            y = proj(x - alpha * Fx)
            Fy = F(y)
            if alpha * np.linalg.norm(Fy - Fx) <= 0.9 * np.linalg.norm(y - x) + 1e-300:
                break
            alpha *= 0.5
            if alpha < 1e-16:
                raise OracleError("step size collapsed in the extragradient solver")
        x = proj(x - alpha * Fy)
        alpha *= 1.2
    raise OracleError(f"extragradient hit {MAX_ITER} iterations (residual {res:.3e})")


def _penalized(inst, t, base_F, tol, scale):
    x = inst.omega.center()
    for rho in 10.0 ** np.arange(0, 9):
        def F(v, rho=rho):
            viol = np.maximum(inst.coupled_g(t, v), 0.0)
            return base_F(v) + rho * inst.coupled_jac(t, v) @ viol
        x = _extragradient(F, inst.omega.project, x, tol, scale)
    if np.max(inst.coupled_g(t, x)) > 1e-6:
        raise InfeasibleError(f"{inst.name}: penalty homotopy ended infeasible at round {t}")
    return x


def sample_feasible(inst: MepInstance, t: int, rng: np.random.Generator, size: int,
                    proj=None) -> np.ndarray:
    """Points of the round-``t`` feasible set (set samples pushed onto it)."""
    proj = proj or feasible_projector(inst, t)
    pts = inst.omega.sample(rng, size)
    if proj is not None:
        return np.array([proj(p) for p in pts])
    keep = [p for p in pts if np.max(inst.coupled_g(t, p)) <= 0]
    return np.array(keep).reshape(-1, inst.m)


def mep_gap(inst: MepInstance, t: int, xhat, probes: np.ndarray) -> float:
    """``min_y sum_i f_i^t(xhat, y)`` over the probe points."""
    return min(inst.f_total(t, xhat, y) for y in probes)


def solve_instantaneous(inst: MepInstance, t: int, tolerance: float = 1e-8,
                        probes: int = 1000, seed: int = 0) -> np.ndarray:
    """Solution of the round-``t`` MEP, certified on random feasible probes.

    Separable instances minimize the aggregate objective by projected
    gradient; other instances run extragradient on the aggregate operator.
    The constraint is handled by exact projection where available and by a
    squared-hinge penalty homotopy otherwise. The result must satisfy
    ``sum_i f_i^t(xhat, y) >= -10 * tolerance`` at every probe.
    """
    proj = feasible_projector(inst, t)
    scale = 1.0 + _diameter(inst.omega)
    x0 = inst.omega.center()

    def F(v):
        return inst.operator(t, v)

    if proj is None:
        xhat = _penalized(inst, t, F, tolerance, scale)
    elif inst.kind == "separable" and inst.psi is not None:
        def obj(v):
            return float(sum(inst.psi(i, t, v) for i in range(inst.n)))
        xhat = _projected_gradient_min(obj, F, proj, x0, tolerance, scale)
    else:
        xhat = _extragradient(F, proj, x0, tolerance, scale)

    if inst.f_value is not None and probes:
        rng = np.random.default_rng([seed, int(t)])
        ys = sample_feasible(inst, t, rng, probes, proj)
        if len(ys):
            gap = mep_gap(inst, t, xhat, ys)
            if gap < -10.0 * tolerance:
                raise OracleError(f"{inst.name}: round {t} solution fails the probe "
                                  f"certificate (min sum f = {gap:.3e})")
    return xhat


class SolutionPath:
    """Lazily computed, cached reference solutions keyed by round."""

    def __init__(self, inst: MepInstance, tolerance: float = 1e-8, probes: int = 100):
        self.inst = inst
        self.tolerance = tolerance
        self.probes = probes
        self._cache: dict[int, np.ndarray] = {}

    def __call__(self, t: int) -> np.ndarray:
        t = int(t)
        if t not in self._cache:
            self._cache[t] = solve_instantaneous(self.inst, t, self.tolerance, self.probes)
        return self._cache[t]

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "coord", "x_star"])
            for t in sorted(self._cache):
                for k, v in enumerate(self._cache[t]):
                    w.writerow([t, k, repr(float(v))])

    def load_csv(self, path) -> None:
        rows: dict[int, dict[int, float]] = {}
        with open(Path(path), newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.setdefault(int(rec["t"]), {})[int(rec["coord"])] = float(rec["x_star"])
        for t, coords in rows.items():
            self._cache[t] = np.array([coords[k] for k in sorted(coords)])
