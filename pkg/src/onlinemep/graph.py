"""Time-varying digraph sequences with doubly stochastic weights.

Round ``t`` uses ``graphs[t % period]`` unless an explicit per-round
``schedule`` is supplied, in which case round ``t`` uses
``graphs[schedule[t % len(schedule)]]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DOUBLY_STOCHASTIC_TOL = 1e-12


class GraphError(ValueError):
    """Raised for malformed weight matrices or disconnected sequences."""


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """A weighted digraph; ``weights[i, j] > 0`` means agent i hears agent j."""

    weights: np.ndarray

    def __post_init__(self):
        A = np.array(self.weights, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise GraphError(f"weights must be square, got shape {A.shape}")
        n = A.shape[0]
        if n < 2:
            raise GraphError("a graph needs at least 2 agents")
        if np.any(A < 0) or np.any(A > 1 + DOUBLY_STOCHASTIC_TOL):
            raise GraphError("weights must lie in [0, 1]")
        if np.any(np.abs(A.sum(axis=1) - 1) > DOUBLY_STOCHASTIC_TOL):
            raise GraphError("row sums must equal 1")
        if np.any(np.abs(A.sum(axis=0) - 1) > DOUBLY_STOCHASTIC_TOL):
            raise GraphError("column sums must equal 1")
        if np.any(np.diag(A) <= 0):
            raise GraphError("every agent must be its own neighbor (positive diagonal)")
        A.setflags(write=False)
        object.__setattr__(self, "weights", A)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def min_weight(self) -> float:
        return float(self.weights[self.weights > 0].min())

    def edges(self) -> np.ndarray:
        """Boolean adjacency, ``adj[i, j]`` true when j -> i is an edge."""
        return self.weights > 0


@dataclass(frozen=True)
class MixingCertificate:
    """Constants of the geometric mixing bound ``|Phi(t,s)_ij - 1/n| <= C lam^(t-s)``.

    ``lam`` can round to 1.0 in floating point when ``gamma^((n-1)U)`` is
    below machine epsilon; ``log_lam`` keeps the exact (negative) exponent.
    """

    C: float
    lam: float
    log_lam: float

    def bound(self, k) -> np.ndarray | float:
        return self.C * np.exp(np.asarray(k, dtype=float) * self.log_lam)


@dataclass(frozen=True, eq=False)
class GraphSequence:
    graphs: tuple[WeightedDigraph, ...]
    period: int
    schedule: tuple[int, ...] | None = None
    gamma: float = field(init=False)

    def __post_init__(self):
        graphs = tuple(g if isinstance(g, WeightedDigraph) else WeightedDigraph(g)
                       for g in self.graphs)
        if not graphs:
            raise GraphError("graph sequence is empty")
        n = graphs[0].n
        if any(g.n != n for g in graphs):
            raise GraphError("all graphs in a sequence must share the agent count")
        if self.period < 1:
            raise GraphError("period must be >= 1")
        if self.schedule is not None:
            sched = tuple(int(k) for k in self.schedule)
            if not sched or min(sched) < 0 or max(sched) >= len(graphs):
                raise GraphError("schedule entries must index into graphs")
            object.__setattr__(self, "schedule", sched)
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "gamma", min(g.min_weight for g in graphs))

    @property
    def n(self) -> int:
        return self.graphs[0].n

    def index_at(self, t: int) -> int:
        if self.schedule is not None:
            return self.schedule[t % len(self.schedule)]
        return t % len(self.graphs)

    def weights_at(self, t: int) -> np.ndarray:
        return self.graphs[self.index_at(t)].weights

    def _cycle_length(self) -> int:
        if self.schedule is not None:
            return len(self.schedule)
        return len(self.graphs)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "period": self.period,
            "graphs": [{"n": g.n, "weights": g.weights.tolist()} for g in self.graphs],
        }
        if self.schedule is not None:
            doc["schedule"] = list(self.schedule)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "GraphSequence":
        graphs = []
        for k, entry in enumerate(doc["graphs"]):
            W = np.asarray(entry["weights"], dtype=float)
            if "n" in entry and W.shape != (entry["n"], entry["n"]):
                raise GraphError(f"graph {k}: declared n={entry['n']} but weights are {W.shape}")
            graphs.append(WeightedDigraph(W))
        return cls(tuple(graphs), int(doc["period"]), doc.get("schedule"))

    @classmethod
    def load(cls, path) -> "GraphSequence":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _strongly_connected(adj: np.ndarray) -> bool:
    # Warshall closure on the boolean adjacency (n is small).
    reach = adj | np.eye(adj.shape[0], dtype=bool)
    for k in range(adj.shape[0]):
        reach = reach | (reach[:, [k]] & reach[[k], :])
    return bool(reach.all())


def first_disconnected_window(seq: GraphSequence) -> int | None:
    """Start round of the first U-window whose union graph is not strongly connected."""
    U = seq.period
    # The schedule repeats after lcm(cycle, U) rounds, so every distinct window
    # start (a multiple of U) is covered within that horizon.
    horizon = math.lcm(seq._cycle_length(), U)
    for start in range(0, horizon, U):
        union = np.zeros((seq.n, seq.n), dtype=bool)
        for t in range(start, start + U):
            union |= seq.weights_at(t) > 0
        if not _strongly_connected(union):
            return start
    return None


def check_u_strong_connectivity(seq: GraphSequence) -> bool:
    return first_disconnected_window(seq) is None


def transition_product(seq: GraphSequence, t: int, s: int) -> np.ndarray:
    """``Phi(t, s) = A(t-1) ... A(s+1) A(s)``, identity when ``t == s``."""
    if t < s:
        raise ValueError(f"transition_product needs t >= s, got t={t}, s={s}")
    Phi = np.eye(seq.n)
    for k in range(s, t):
        Phi = seq.weights_at(k) @ Phi
    return Phi


def mixing_certificate(seq: GraphSequence) -> MixingCertificate:
    start = first_disconnected_window(seq)
    if start is not None:
        raise GraphError(f"sequence is not {seq.period}-strongly connected: "
                         f"window starting at round {start} fails")
    gamma = seq.gamma
    if not 0 < gamma <= 1:
        raise GraphError(f"gamma must lie in (0, 1], got {gamma}")
    k = (seq.n - 1) * seq.period
    log_gk = k * math.log(gamma)
    gk = math.exp(log_gk)
    if gk >= 1:
        # gamma == 1 only for the identity, which cannot be connected; guard anyway
        raise GraphError("gamma^((n-1)U) must be < 1")
    log_lam = math.log1p(-gk) / k
    lam = math.exp(log_lam)
    # C = 2 lam^-1 (1 + gamma^-k) / (1 - gamma^k)
    C = 2.0 * math.exp(-log_lam) * (1.0 + math.exp(-log_gk)) / (1.0 - gk)
    return MixingCertificate(C=C, lam=lam, log_lam=log_lam)


def mix(seq: GraphSequence, t: int, vectors) -> np.ndarray:
    """Return ``out[i] = sum_j A(t)[i, j] * vectors[j]``.

    ``vectors`` is ``(n,)`` for scalar states or ``(n, d)`` with one row per agent.
    """
    V = np.asarray(vectors, dtype=float)
    if V.ndim not in (1, 2) or V.shape[0] != seq.n:
        raise ValueError(f"expected {seq.n} agent vectors, got array of shape {V.shape}")
    return seq.weights_at(t) @ V


# -- built-in sequences ------------------------------------------------------

def cycle_weights(n: int, cycle, weight: float = 0.5) -> np.ndarray:
    """Lazy permutation matrix: ``(1-w) I + w P`` with P the directed cycle on ``cycle``.

    Nodes outside ``cycle`` keep weight 1 on themselves. Agents are 0-based.
    """
    A = np.eye(n)
    cycle = list(cycle)
    for k, a in enumerate(cycle):
        b = cycle[(k + 1) % len(cycle)]
        A[b, b] -= weight
        A[b, a] += weight
    return A


def example1_graphs() -> GraphSequence:
    """Six agents, four graphs per period (U=4), each graph disconnected.

    Stand-in topology: directed 3-cycles 1->2->3->1 and 4->5->6->4 followed by
    the swaps 3<->4 and 6<->1. Every weight is 0.5.
    """
    graphs = (
        cycle_weights(6, [0, 1, 2]),
        cycle_weights(6, [3, 4, 5]),
        cycle_weights(6, [2, 3]),
        cycle_weights(6, [5, 0]),
    )
    return GraphSequence(tuple(WeightedDigraph(A) for A in graphs), period=4)


def example2_graphs() -> GraphSequence:
    """Five agents, two graphs per period (U=2): cycles 1->2->3->1 and 3->4->5->3."""
    graphs = (cycle_weights(5, [0, 1, 2]), cycle_weights(5, [2, 3, 4]))
    return GraphSequence(tuple(WeightedDigraph(A) for A in graphs), period=2)


def complete_graph(n: int) -> GraphSequence:
    return GraphSequence((WeightedDigraph(np.full((n, n), 1.0 / n)),), period=1)


def random_sequence(n: int, period: int, rng: np.random.Generator,
                    n_graphs: int | None = None) -> GraphSequence:
    """Random U-strongly connected sequence of lazy Birkhoff mixtures.

    Each graph is ``w0 I + sum_k w_k P_k`` for a few random permutations. A
    Hamiltonian cycle is split into ``period`` consecutive chunks, and chunk
    ``r`` is added (as a 2-cycle swap per edge) to every graph used at offset
    ``r`` of a window, so each window's union contains the whole cycle.
    """
    n_graphs = period if n_graphs is None else n_graphs
    if n_graphs % period:
        raise ValueError("n_graphs must be a multiple of period")
    order = rng.permutation(n)
    ring = [(int(order[k]), int(order[(k + 1) % n])) for k in range(n)]
    chunks = np.array_split(np.arange(n), period)
    graphs = []
    for g in range(n_graphs):
        chunk = chunks[g % period]
        perms = [np.eye(n)]
        for k in chunk:
            a, b = ring[k]
            P = np.eye(n)
            P[[a, b]] = P[[b, a]]
            perms.append(P)
        for _ in range(int(rng.integers(0, 3))):
            perms.append(np.eye(n)[rng.permutation(n)])
        w = rng.uniform(0.5, 1.5, size=len(perms))
        w[0] += 1.0
        w /= w.sum()
        A = sum(wk * P for wk, P in zip(w, perms))
        graphs.append(WeightedDigraph(A))
    return GraphSequence(tuple(graphs), period=period)
