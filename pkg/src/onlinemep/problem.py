"""Online MEP instances and bound-constant estimation.

Agents are 0-based in code. Formulas that use the agent label (``i/2``,
``5i + 45``) are written with ``label = i + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import Box, FeasibleSet

BOUND_FLOOR = 1e-9
INFLATION = 1.1


@dataclass(frozen=True)
class BoundConstants:
    """Suprema assumed by the analysis.

    kappa bounds ``||x||`` on the set, kappa1 the bifunction gradient,
    kappa2 each agent's constraint value, kappa3 each constraint gradient,
    L the first-argument Lipschitz constant (``None`` without ``f_value``).
    """

    kappa: float
    kappa1: float
    kappa2: float
    kappa3: float
    L: float | None = None

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "kappa1": self.kappa1, "kappa2": self.kappa2,
                "kappa3": self.kappa3, "L": self.L}


@dataclass(frozen=True, eq=False)
class MepInstance:
    """An online MEP with coupled inequality constraints.

    Oracle signatures (``i`` agent, ``t`` round, points as 1-D arrays):

    * ``grad2_f(i, t, x)`` -> ``(m,)`` gradient of ``f_i^t(x, .)`` at ``x``
    * ``g(i, t, x)`` -> ``(h,)``; ``jac_g(i, t, x)`` -> ``(m, h)``
    * ``f_value(i, t, x, y)`` -> float, needed only for regret
    * ``solution_path(t)`` -> ``(m,)`` benchmark solution

    ``psi``/``grad_psi`` are set for separable instances (``f = psi(y) - psi(x)``).
    ``coupled_affine(t)`` returns ``(a, b)`` with ``sum_i g_i^t(x) = a @ x + b``
    when the coupled constraint is affine; the reference oracle then projects
    onto the feasible set exactly. ``grad2_noise(i, t, x, rng)`` is an
    instance-native perturbation of ``grad2_f`` used by stochastic runs.
    """

    name: str
    n: int
    m: int
    h: int
    omega: FeasibleSet
    grad2_f: Callable
    g: Callable
    jac_g: Callable
    f_value: Callable | None = None
    solution_path: Callable | None = None
    kind: str = "general"
    psi: Callable | None = None
    grad_psi: Callable | None = None
    coupled_affine: Callable | None = None
    grad2_noise: Callable | None = None
    native_sigma1: float | None = None
    default_init: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an MEP instance needs at least 2 agents")
        if self.omega.dim != self.m:
            raise ValueError(f"feasible set has dimension {self.omega.dim}, expected {self.m}")
        if self.kind not in ("general", "separable", "vi"):
            raise ValueError(f"unknown instance kind {self.kind!r}")

    def operator(self, t: int, x) -> np.ndarray:
        """Aggregate ``sum_i grad2_f(i, t, x)``; its VI over the feasible set is the MEP."""
        return sum(np.asarray(self.grad2_f(i, t, x), dtype=float) for i in range(self.n))

    def coupled_g(self, t: int, x) -> np.ndarray:
        return sum(np.asarray(self.g(i, t, x), dtype=float) for i in range(self.n))

    def coupled_jac(self, t: int, x) -> np.ndarray:
        return sum(np.asarray(self.jac_g(i, t, x), dtype=float) for i in range(self.n))

    def f_total(self, t: int, x, y) -> float:
        if self.f_value is None:
            raise ValueError(f"instance {self.name!r} has no f_value oracle")
        return float(sum(self.f_value(i, t, x, y) for i in range(self.n)))

    def initial_states(self) -> np.ndarray:
        if self.default_init is not None:
            return np.array(self.default_init, dtype=float)
        return np.tile(self.omega.center(), (self.n, 1))


# ---------------------------------------------------------------------------
# built-in examples
# ---------------------------------------------------------------------------

def example1(constraint_count: int = 6) -> MepInstance:
    """Six agents on ``[-2, 2]`` with quadratic bifunctions and constraints.

    ``f_i^t(x, y) = (i/2)(y^2 - x^2) - 3 (y - x) sin t`` and
    ``g_i^t(x) = (sin t + 1) x^2 - (i/6) x``. With ``constraint_count=5`` the
    sixth agent's constraint is dropped (it contributes ``g = 0``).
    """
    if constraint_count not in (5, 6):
        raise ValueError("constraint_count must be 5 or 6")
    active = constraint_count

    def grad2_f(i, t, x):
        return np.array([(i + 1) * x[0] - 3.0 * np.sin(t)])

    def f_value(i, t, x, y):
        x, y = float(x[0]), float(y[0])
        return 0.5 * (i + 1) * (y * y - x * x) - 3.0 * (y - x) * np.sin(t)

    def g(i, t, x):
        if i >= active:
            return np.zeros(1)
        return np.array([(np.sin(t) + 1.0) * x[0] ** 2 - (i + 1) / 6.0 * x[0]])

    def jac_g(i, t, x):
        if i >= active:
            return np.zeros((1, 1))
        return np.array([[2.0 * (np.sin(t) + 1.0) * x[0] - (i + 1) / 6.0]])

    def psi(i, t, x):
        return 0.5 * (i + 1) * float(x[0]) ** 2 - 3.0 * float(x[0]) * np.sin(t)

    def grad_psi(i, t, x):
        return grad2_f(i, t, x)

    def solution_path(t):
        return np.array([6.0 * np.sin(t) / 7.0])

    return MepInstance(
        name="example1", n=6, m=1, h=1, omega=Box([-2.0], [2.0]),
        grad2_f=grad2_f, g=g, jac_g=jac_g, f_value=f_value,
        solution_path=solution_path, kind="separable", psi=psi, grad_psi=grad_psi,
        default_init=np.array([[-2.0], [-1.5], [-1.0], [2.0], [1.5], [1.0]]),
        params={"constraint_count": constraint_count},
    )


EXAMPLE2_EPSILON = np.array([10.0, 15.0, 8.0, 8.0, 15.0])
EXAMPLE2_THETA_VAR = 0.5
# sub-Gaussian parameter for the native noise -theta e_i, theta ~ N(0, 1/2):
# E exp(theta^2 / s^2) = (1 - 1/s^2)^(-1/2) = 1.155 <= e at s = 2, with finite variance
EXAMPLE2_NATIVE_SIGMA1 = 2.0


def example2(epsilon_sign: str = "capacity", q: str | float = "quantity") -> MepInstance:
    """Five-firm Nash-Cournot game written as a VI on ``[0, 30]^5``.

    Firm ``i`` has cost ``C_i = k x_i - q_i d_i(x)`` with ``k = 5 sin(t/6)``,
    demand ``d_i = l_i + theta - sum(x)`` and ``l_i = 5 i + 45 - 2.5 i sin(t/6)``.
    ``q="quantity"`` takes ``q_i = x_i``; a number uses a constant ``q_i``.
    ``epsilon_sign="capacity"`` uses ``g_i(x) = x_i - eps_i`` (coupled
    constraint ``sum(x) <= 56``); ``"paper"`` uses ``x_i + eps_i``, which
    leaves the feasible set empty.
    """
    if epsilon_sign not in ("capacity", "paper"):
        raise ValueError("epsilon_sign must be 'capacity' or 'paper'")
    sign = -1.0 if epsilon_sign == "capacity" else 1.0
    labels = np.arange(1, 6, dtype=float)
    quantity = q == "quantity"
    q_const = None if quantity else float(q)

    def coeffs(t):
        s = np.sin(t / 6.0)
        return 5.0 * s, 5.0 * labels + 45.0 - 2.5 * labels * s

    def marginal(i, t, x):
        # d C_i / d x_i at theta = 0
        k, l = coeffs(t)
        if quantity:
            return k - l[i] + x.sum() + x[i]
        return k + q_const

    def grad2_f(i, t, x):
        out = np.zeros(5)
        out[i] = marginal(i, t, np.asarray(x, dtype=float))
        return out

    def f_value(i, t, x, y):
        x = np.asarray(x, dtype=float)
        return marginal(i, t, x) * (float(y[i]) - float(x[i]))

    def g(i, t, x):
        return np.array([float(x[i]) + sign * EXAMPLE2_EPSILON[i]])

    def jac_g(i, t, x):
        out = np.zeros((5, 1))
        out[i, 0] = 1.0
        return out

    def coupled_affine(t):
        return np.ones((1, 5)), np.array([sign * EXAMPLE2_EPSILON.sum()])

    def grad2_noise(i, t, x, rng):
        out = np.zeros(5)
        if quantity:
            out[i] = -rng.normal(0.0, np.sqrt(EXAMPLE2_THETA_VAR))
        return out

    def solution_path(t):
        s = np.sin(t / 6.0)
        return np.array([abs(35.0 / 12.0 * s), 5 + 5.0 / 12.0 * s, 10 - 25.0 / 12.0 * s,
                         15 - 55.0 / 12.0 * s, 20 - 85.0 / 12.0 * s])

    init = np.array([[10, 15, 20, 25, 30], [5, 10, 15, 20, 25], [3, 8, 13, 18, 23],
                     [5, 10, 15, 20, 25], [10, 15, 20, 25, 30]], dtype=float)
    return MepInstance(
        name="example2", n=5, m=5, h=1, omega=Box(np.zeros(5), np.full(5, 30.0)),
        grad2_f=grad2_f, g=g, jac_g=jac_g, f_value=f_value,
        solution_path=solution_path, kind="vi", coupled_affine=coupled_affine,
        grad2_noise=grad2_noise, native_sigma1=EXAMPLE2_NATIVE_SIGMA1 if quantity else 0.0,
        default_init=init, params={"epsilon_sign": epsilon_sign, "q": q},
    )


def expected_cost_example2(i: int, t: int, x, q: str | float = "quantity") -> float:
    """Expected cost ``C_i^t(x)`` of firm ``i`` (theta at its mean 0)."""
    x = np.asarray(x, dtype=float)
    s = np.sin(t / 6.0)
    k = 5.0 * s
    l_i = 5.0 * (i + 1) + 45.0 - 2.5 * (i + 1) * s
    qi = x[i] if q == "quantity" else float(q)
    return k * x[i] - qi * (l_i - x.sum())


def builtin_separable(psi: Callable, grad_psi: Callable, omega: FeasibleSet, n: int,
                      g: Callable | None = None, jac_g: Callable | None = None,
                      h: int = 1, name: str = "separable",
                      coupled_affine: Callable | None = None) -> MepInstance:
    """Optimization-type MEP with ``f_i^t(x, y) = psi_i^t(y) - psi_i^t(x)``.

    ``g``/``jac_g`` default to the zero constraint. ``solution_path`` is left
    unset; use the reference oracle.
    """
    m = omega.dim
    if g is None:
        def g(i, t, x):
            return np.zeros(h)

        def jac_g(i, t, x):
            return np.zeros((m, h))
    elif jac_g is None:
        raise ValueError("a constraint oracle needs its Jacobian")

    def grad2_f(i, t, x):
        return np.atleast_1d(np.asarray(grad_psi(i, t, x), dtype=float))

    def f_value(i, t, x, y):
        return float(psi(i, t, y) - psi(i, t, x))

    return MepInstance(name=name, n=n, m=m, h=h, omega=omega, grad2_f=grad2_f, g=g,
                       jac_g=jac_g, f_value=f_value, kind="separable", psi=psi,
                       grad_psi=grad_psi, coupled_affine=coupled_affine)


def random_quadratic_instance(rng: np.random.Generator, n: int = 4, m: int = 2,
                              h: int = 1, name: str = "synthetic") -> MepInstance:
    """Separable instance with random strongly convex quadratics and convex
    quadratic constraints on a box, for invariant testing."""
    lo = -rng.uniform(1.0, 3.0, m)
    hi = rng.uniform(1.0, 3.0, m)
    omega = Box(lo, hi)
    H = []
    for _ in range(n):
        B = rng.standard_normal((m, m))
        H.append(B @ B.T / m + 0.5 * np.eye(m))
    c = rng.standard_normal((n, m))
    freq = rng.uniform(0.05, 0.5, size=n)
    Gc = rng.uniform(0.1, 0.5, size=(n, h))
    Gl = rng.standard_normal((n, h, m))
    Gb = rng.uniform(-1.0, 0.0, size=(n, h))

    def psi(i, t, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ H[i] @ x - np.cos(freq[i] * t) * c[i] @ x

    def grad_psi(i, t, x):
        return H[i] @ np.asarray(x, dtype=float) - np.cos(freq[i] * t) * c[i]

    def g(i, t, x):
        x = np.asarray(x, dtype=float)
        return Gc[i] * (x @ x) + Gl[i] @ x + Gb[i]

    def jac_g(i, t, x):
        x = np.asarray(x, dtype=float)
        return (2.0 * np.outer(x, Gc[i]) + Gl[i].T)

    return builtin_separable(psi, grad_psi, omega, n, g, jac_g, h=h, name=name)


BUILTINS = {"example1": example1, "example2": example2}


# ---------------------------------------------------------------------------
# checks and constants
# ---------------------------------------------------------------------------

def _sample_points(omega: FeasibleSet, rng, samples: int) -> np.ndarray:
    pts = [omega.sample(rng, samples), omega.center()[None, :]]
    if isinstance(omega, Box) and omega.dim <= 10:
        corners = np.array(np.meshgrid(*zip(omega.lower, omega.upper))).reshape(omega.dim, -1).T
        pts.append(corners)
    return np.vstack(pts)


def _finite(value, what, i, t):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} oracle returned non-finite values for agent {i} at round {t}")
    return arr


def estimate_bounds(inst: MepInstance, samples: int = 2000, seed: int = 0,
                    rounds: int = 2000) -> BoundConstants:
    """Monte-Carlo suprema over the set and rounds ``0..rounds-1``, inflated by 1.1.

    Box corners and the set center are always included in the sample.
    ``kappa`` is the exact set radius.
    """
    if samples < 1000:
        raise ValueError("estimate_bounds needs at least 1000 samples")
    rng = np.random.default_rng(seed)
    pts = _sample_points(inst.omega, rng, samples)
    ts = rng.integers(0, rounds, size=len(pts))
    k1 = k2 = k3 = 0.0
    lip = 0.0
    for x, t in zip(pts, ts):
        t = int(t)
        for i in range(inst.n):
            k1 = max(k1, np.linalg.norm(_finite(inst.grad2_f(i, t, x), "grad2_f", i, t)))
            k2 = max(k2, np.linalg.norm(_finite(inst.g(i, t, x), "g", i, t)))
            J = _finite(inst.jac_g(i, t, x), "jac_g", i, t).reshape(inst.m, inst.h)
            k3 = max(k3, np.linalg.norm(J, axis=0).max())
    if inst.f_value is not None:
        xs = inst.omega.sample(rng, samples)
        ys = inst.omega.sample(rng, samples)
        zs = inst.omega.sample(rng, samples)
        for x, y, z, t in zip(xs, ys, zs, rng.integers(0, rounds, size=samples)):
            d = np.linalg.norm(x - y)
            if d < 1e-12:
                continue
            t = int(t)
            for i in range(inst.n):
                diff = abs(inst.f_value(i, t, x, z) - inst.f_value(i, t, y, z))
                lip = max(lip, _finite(diff, "f_value", i, t) / d)

    def inflate(v):
        return max(INFLATION * float(v), BOUND_FLOOR)

    return BoundConstants(
        kappa=max(inst.omega.radius, BOUND_FLOOR),
        kappa1=inflate(k1), kappa2=inflate(k2), kappa3=inflate(k3),
        L=inflate(lip) if inst.f_value is not None else None,
    )


@dataclass
class ConsistencyReport:
    self_value: float  # max |f_i^t(x, x)|
    grad_fd: float  # max relative error of grad2_f vs central differences of f_value
    jac_fd: float  # max relative error of jac_g vs central differences of g

    def ok(self, tol_self: float = 1e-12, tol_fd: float = 1e-5) -> bool:
        return self.self_value <= tol_self and self.grad_fd <= tol_fd and self.jac_fd <= tol_fd


def consistency_report(inst: MepInstance, samples: int = 1000, seed: int = 0,
                       rounds: int = 100, step: float = 1e-6) -> ConsistencyReport:
    """Sampled checks of ``f(x, x) = 0`` and finite-difference agreement of the gradients.

    Points are drawn from the set shrunk towards its center so that
    central differences stay inside.
    """
    rng = np.random.default_rng(seed)
    c = inst.omega.center()
    pts = c + 0.9 * (inst.omega.sample(rng, samples) - c)
    ts = rng.integers(0, rounds, size=samples)
    agents = rng.integers(0, inst.n, size=samples)
    self_val = grad_err = jac_err = 0.0
    eye = np.eye(inst.m)
    for x, t, i in zip(pts, ts, agents):
        t, i = int(t), int(i)
        if inst.f_value is not None:
            self_val = max(self_val, abs(inst.f_value(i, t, x, x)))
            fd = np.array([(inst.f_value(i, t, x, x + step * e) - inst.f_value(i, t, x, x - step * e))
                           / (2 * step) for e in eye])
            gr = np.asarray(inst.grad2_f(i, t, x))
            grad_err = max(grad_err, np.linalg.norm(fd - gr) / max(1.0, np.linalg.norm(gr)))
        J = np.asarray(inst.jac_g(i, t, x)).reshape(inst.m, inst.h)
        fdJ = np.array([(np.asarray(inst.g(i, t, x + step * e)) - np.asarray(inst.g(i, t, x - step * e)))
                        / (2 * step) for e in eye])
        jac_err = max(jac_err, np.linalg.norm(fdJ - J) / max(1.0, np.linalg.norm(J)))
    return ConsistencyReport(self_val, grad_err, jac_err)
