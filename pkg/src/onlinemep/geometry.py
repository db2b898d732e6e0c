"""Feasible sets, Bregman divergences, and the mirror-descent step.

The Euclidean geometry uses the un-halved divergence ``||x - y||^2`` (so its
strong-convexity modulus is 2) and the step has the closed form
``Proj(z - s/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

INNER_TOL = 1e-10
INNER_MAX_ITER = 10_000
MAX_CONDITION = 1e12


class MirrorStepError(RuntimeError):
    """The iterative inner solver hit its iteration cap."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"inner solver did not converge after {iterations} "
                         f"iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


# ---------------------------------------------------------------------------
# feasible sets
# ---------------------------------------------------------------------------

class FeasibleSet:
    """Compact convex set with an exact Euclidean projection."""

    dim: int

    def project(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def radius(self) -> float:
        """``max_{x in set} ||x||``."""
        raise NotImplementedError

    def center(self) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` points of the set, shape ``(size, dim)``."""
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(self.project(x) - x) <= tol)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, v):
        return np.clip(v, self.lower, self.upper)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def center(self):
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def to_dict(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Ball(FeasibleSet):
    center_: np.ndarray
    radius_: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center_, dtype=float)).copy()
        if not self.radius_ > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center_", c)

    @property
    def dim(self) -> int:
        return self.center_.size

    def project(self, v):
        d = np.asarray(v, dtype=float) - self.center_
        nrm = np.linalg.norm(d)
        if nrm <= self.radius_:
            return np.array(v, dtype=float)
        return self.center_ + d * (self.radius_ / nrm)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.center_) + self.radius_)

    def center(self):
        return self.center_.copy()

    def sample(self, rng, size):
        d = rng.standard_normal((size, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius_ * rng.uniform(size=(size, 1)) ** (1.0 / self.dim)
        return self.center_ + r * d

    def to_dict(self):
        return {"type": "ball", "center": self.center_.tolist(), "radius": self.radius_}


@dataclass(frozen=True)
class Simplex(FeasibleSet):
    """``{x : sum(x) = 1, x_i >= floor}``."""

    m: int
    floor: float = 0.0

    def __post_init__(self):
        if self.m < 1 or self.floor < 0 or self.floor * self.m > 1:
            raise ValueError("simplex needs m >= 1 and 0 <= floor <= 1/m")

    @property
    def dim(self) -> int:
        return self.m

    def project(self, v):
        v = np.asarray(v, dtype=float)
        mass = 1.0 - self.floor * self.m
        u = v - self.floor
        # sort-based projection onto {u >= 0, sum(u) = mass}
        srt = np.sort(u)[::-1]
        css = np.cumsum(srt) - mass
        idx = np.arange(1, self.m + 1)
        rho = np.nonzero(srt - css / idx > 0)[0][-1]
        theta = css[rho] / (rho + 1.0)
        return np.maximum(u - theta, 0.0) + self.floor

    @property
    def radius(self) -> float:
        top = 1.0 - (self.m - 1) * self.floor
        return float(np.sqrt(top**2 + (self.m - 1) * self.floor**2))

    def center(self):
        return np.full(self.m, 1.0 / self.m)

    def sample(self, rng, size):
        mass = 1.0 - self.floor * self.m
        return self.floor + mass * rng.dirichlet(np.ones(self.m), size=size)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return bool(abs(x.sum() - 1) <= tol and np.all(x >= self.floor - tol))

    def to_dict(self):
        return {"type": "simplex", "m": self.m, "floor": self.floor}


@dataclass(frozen=True, eq=False)
class Product(FeasibleSet):
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ValueError("product of zero sets")
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "_splits", np.cumsum([p.dim for p in self.parts])[:-1])

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self.parts)

    def _blocks(self, v):
        return np.split(np.asarray(v, dtype=float), self._splits)

    def project(self, v):
        return np.concatenate([p.project(b) for p, b in zip(self.parts, self._blocks(v))])

    @property
    def radius(self) -> float:
        return float(np.sqrt(sum(p.radius**2 for p in self.parts)))

    def center(self):
        return np.concatenate([p.center() for p in self.parts])

    def sample(self, rng, size):
        return np.hstack([p.sample(rng, size) for p in self.parts])

    def contains(self, x, tol=1e-9):
        return all(p.contains(b, tol) for p, b in zip(self.parts, self._blocks(x)))

    def to_dict(self):
        return {"type": "product", "parts": [p.to_dict() for p in self.parts]}


def set_from_dict(doc: dict) -> FeasibleSet:
    kind = doc["type"]
    if kind == "box":
        return Box(doc["lower"], doc["upper"])
    if kind == "ball":
        return Ball(doc["center"], doc["radius"])
    if kind == "simplex":
        return Simplex(int(doc["m"]), float(doc.get("floor", 0.0)))
    if kind == "product":
        return Product(tuple(set_from_dict(p) for p in doc["parts"]))
    raise ValueError(f"unknown feasible set type {kind!r}")


def project(omega: FeasibleSet, v) -> np.ndarray:
    return omega.project(np.asarray(v, dtype=float))


# ---------------------------------------------------------------------------
# Bregman geometries
# ---------------------------------------------------------------------------

class BregmanGeometry:
    """Distance-generating function ``phi`` and its divergence."""

    mu: float

    def phi(self, x) -> float:
        raise NotImplementedError

    def grad_phi(self, x) -> np.ndarray:
        raise NotImplementedError

    def divergence(self, x, y) -> float:
        raise NotImplementedError

    def K(self, omega: FeasibleSet) -> float:
        """Constant with ``D(x, y) <= K ||x - y||^2`` on ``omega``."""
        raise NotImplementedError

    def domain(self, omega: FeasibleSet) -> FeasibleSet:
        """The set the mirror step actually ranges over."""
        return omega

    def estimate_ell(self, omega: FeasibleSet, rng: np.random.Generator,
                     samples: int = 2000) -> float:
        """Sampled ``2 sup ||grad phi||`` over the set."""
        pts = self.domain(omega).sample(rng, samples)
        return 2.0 * max(float(np.linalg.norm(self.grad_phi(p))) for p in pts)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Mahalanobis(BregmanGeometry):
    """``D(x, y) = (x - y)^T P^{-1} (x - y)``, generated by ``phi(x) = x^T P^{-1} x``."""

    P: np.ndarray
    Q: np.ndarray = field(init=False, repr=False)
    mu: float = field(init=False)
    L: float = field(init=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, rtol=0, atol=1e-12):
            raise ValueError("P must be symmetric")
        try:
            chol = np.linalg.cholesky(P)
        except np.linalg.LinAlgError as exc:
            raise ValueError("P must be positive definite") from exc
        eig = np.linalg.eigvalsh(P)
        if eig[-1] / eig[0] > MAX_CONDITION:
            raise ValueError(f"P is too ill-conditioned (cond {eig[-1] / eig[0]:.2e})")
        Linv = np.linalg.inv(chol)
        Q = Linv.T @ Linv
        Q = 0.5 * (Q + Q.T)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "mu", 2.0 / eig[-1])
        object.__setattr__(self, "L", 2.0 / eig[0])

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x)

    def grad_phi(self, x):
        return 2.0 * self.Q @ np.asarray(x, dtype=float)

    def divergence(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return float(d @ self.Q @ d)

    def K(self, omega):
        return self.L / 2.0

    def to_dict(self):
        return {"type": "mahalanobis", "P": self.P.tolist()}


@dataclass(frozen=True)
class Euclidean(BregmanGeometry):
    """``D(x, y) = ||x - y||^2`` (un-halved, so ``mu = 2`` and ``K = 1``)."""

    mu: float = 2.0
    L: float = 2.0
    Q: float = 1.0

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ x)

    def grad_phi(self, x):
        return 2.0 * np.asarray(x, dtype=float)

    def divergence(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return float(d @ d)

    def K(self, omega):
        return 1.0

    def to_dict(self):
        return {"type": "euclidean"}


@dataclass(frozen=True)
class KL(BregmanGeometry):
    """Negative-entropy geometry on a floored simplex.

    ``phi(x) = sum x log x - x``; on the simplex the divergence reduces to
    ``sum x_i (log x_i - log y_i)``.
    """

    floor: float = 1e-6
    mu: float = 1.0  # Pinsker, using ||.||_1 >= ||.||_2

    def __post_init__(self):
        if not self.floor > 0:
            raise ValueError("KL geometry needs a positive floor")

    @staticmethod
    def _check(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("KL geometry needs strictly positive coordinates")
        return x

    def phi(self, x):
        x = self._check(x)
        return float(np.sum(x * np.log(x) - x))

    def grad_phi(self, x):
        return np.log(self._check(x))

    def divergence(self, x, y):
        x, y = self._check(x), self._check(y)
        return float(np.sum(x * (np.log(x) - np.log(y)) - x + y))

    def domain(self, omega):
        if not isinstance(omega, Simplex):
            raise ValueError("KL geometry is defined on simplex sets only")
        if omega.floor >= self.floor:
            return omega
        return Simplex(omega.m, self.floor)

    def K(self, omega):
        return 1.0 / self.domain(omega).floor

    def to_dict(self):
        return {"type": "kl", "floor": self.floor}


def geometry_from_dict(doc: dict) -> BregmanGeometry:
    kind = doc["type"]
    if kind == "euclidean":
        return Euclidean()
    if kind == "mahalanobis":
        return Mahalanobis(np.asarray(doc["P"], dtype=float))
    if kind == "kl":
        return KL(float(doc.get("floor", 1e-6)))
    raise ValueError(f"unknown geometry type {kind!r}")


def divergence(geom: BregmanGeometry, x, y) -> float:
    return geom.divergence(x, y)


def three_point_gap(geom: BregmanGeometry, z, s, xhat, w) -> float:
    """``<s, xhat - w> - (D(w, z) - D(w, xhat) - D(xhat, z))``.

    Nonpositive for every ``w`` in the set exactly when ``xhat`` is the
    mirror step from ``z`` with tilt ``s``.
    """
    s = np.asarray(s, dtype=float)
    lhs = float(s @ (np.asarray(xhat) - np.asarray(w)))
    rhs = geom.divergence(w, z) - geom.divergence(w, xhat) - geom.divergence(xhat, z)
    return lhs - rhs


# ---------------------------------------------------------------------------
# mirror step
# ---------------------------------------------------------------------------

def _kl_simplex_step(z, s, floor):
    # minimizer is x_i = max(floor, exp(lw_i - nu)); pick the active set by sorting
    lw = np.log(z) - s
    m = lw.size
    order = np.argsort(lw)[::-1]
    lws = lw[order]
    log_floor = np.log(floor) if floor > 0 else -np.inf
    for k in range(m, 0, -1):
        free_mass = 1.0 - floor * (m - k)
        nu = logsumexp(lws[:k]) - np.log(free_mass)
        if lws[k - 1] - nu >= log_floor and (k == m or lws[k] - nu <= log_floor):
            x = np.full(m, floor)
            x[order[:k]] = np.exp(lws[:k] - nu)
            return x
    raise AssertionError("no consistent active set for the entropic step")


def projected_gradient(grad, L: float, mu: float, proj, x0, tol: float = INNER_TOL,
                       max_iter: int = INNER_MAX_ITER) -> np.ndarray:
    """Accelerated projected gradient for an ``mu``-strongly convex, ``L``-smooth objective.

    Stops when the gradient-mapping norm ``L ||x - proj(x - grad(x)/L)||``
    drops below ``tol``.
    """
    x = proj(np.asarray(x0, dtype=float))
    v = x.copy()
    q = mu / L
    beta = (1 - np.sqrt(q)) / (1 + np.sqrt(q))
    res = np.inf
    for it in range(1, max_iter + 1):
        x_new = proj(v - grad(v) / L)
        v = x_new + beta * (x_new - x)
        x = x_new
        res = L * np.linalg.norm(x - proj(x - grad(x) / L))
        if res < tol:
            return x
    raise MirrorStepError(float(res), max_iter)


def mirror_argmin(geom: BregmanGeometry, omega: FeasibleSet, z, s,
                  method: str = "auto", tol: float = INNER_TOL,
                  max_iter: int = INNER_MAX_ITER) -> np.ndarray:
    """``argmin_{x in omega} D(x, z) + <s, x>``.

    ``method="auto"`` uses a closed form where one exists (Euclidean with any
    set that has an exact projection, KL on a simplex) and the iterative
    solver otherwise; ``method="iterative"`` forces the iterative solver.
    """
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("mirror step tilt must be finite")
    if isinstance(geom, KL):
        dom = geom.domain(omega)
        return _kl_simplex_step(KL._check(z), s, dom.floor)
    if method == "auto" and isinstance(geom, Euclidean):
        return omega.project(z - 0.5 * s)
    if method not in ("auto", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    Q = geom.Q

    def grad(x):
        return 2.0 * np.dot(Q, x - z) + s

    return projected_gradient(grad, geom.L, geom.mu, omega.project, z, tol, max_iter)
