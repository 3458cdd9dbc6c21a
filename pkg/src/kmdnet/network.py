"""Consensus networks with state-dependent coupling weights.

Agents follow ``dx_i/dt = sum_j w_ij(x) (x_j - x_i)`` over an undirected
connected graph with ``w_ij = w~_ij g(x_i - x_j)``.  The disagreement system
replaces the Laplacian ``L(x)`` by ``L(x) + (delta/n) J`` so that the origin
becomes a hyperbolic stable fixed point.

Sign convention: spectra are stored as positive decay rates (eigenvalues of
``+L_d(0)``); the Jacobian of the disagreement field is ``-L_d(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EigenFailure, GraphError


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph on nodes ``0..n-1``.

    ``edges`` holds ``(i, j, w)`` triples with ``i < j`` and ``w > 0``.
    Construction fails for self-loops, duplicates, non-positive weights or
    a disconnected edge set.
    """

    n: int
    edges: tuple

    def __init__(self, n: int, edges: Iterable):
        clean = []
        seen = set()
        for e in edges:
            if len(e) == 2:
                i, j, w = int(e[0]), int(e[1]), 1.0
            else:
                i, j, w = int(e[0]), int(e[1]), float(e[2])
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            i, j = min(i, j), max(i, j)
            if not (0 <= i and j < n):
                raise GraphError(f"edge ({i}, {j}) references a node outside 0..{n - 1}")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            if not w > 0:
                raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
            seen.add((i, j))
            clean.append((i, j, w))
        if n < 1:
            raise GraphError("graph needs at least one node")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", tuple(sorted(clean)))
        if not self.is_connected():
            raise GraphError("graph is disconnected; the coupling graph must be "
                             "connected (Assumption 2)")

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        if not self.edges:
            return False
        i, j, _ = np.array(self.edges).T
        adj = coo_matrix((np.ones(len(i)), (i.astype(int), j.astype(int))),
                         shape=(self.n, self.n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    @property
    def heads(self) -> np.ndarray:
        return np.array([e[0] for e in self.edges], dtype=int)

    @property
    def tails(self) -> np.ndarray:
        return np.array([e[1] for e in self.edges], dtype=int)

    @property
    def weights(self) -> np.ndarray:
        return np.array([e[2] for e in self.edges], dtype=float)

    def laplacian(self) -> np.ndarray:
        """Laplacian of the constant weights ``w~``."""
        lap = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            lap[i, j] -= w
            lap[j, i] -= w
            lap[i, i] += w
            lap[j, j] += w
        return lap


def complete_graph(n: int, weight: float = 1.0) -> Graph:
    return Graph(n, [(i, j, weight) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int, weight: float = 1.0) -> Graph:
    return Graph(n, [(i, i + 1, weight) for i in range(n - 1)])


def random_connected_graph(n: int, m: int, seed=None, weight_range=None,
                           max_tries: int = 10_000) -> Graph:
    """Erdos-Renyi ``G(n, m)`` graph, resampled until connected.

    ``weight_range=(lo, hi)`` draws uniform edge weights; default is unit
    weights.
    """
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if not n - 1 <= m <= len(pairs):
        raise GraphError(f"a connected graph on {n} nodes needs {n - 1}..{len(pairs)} edges, got {m}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        chosen = rng.choice(len(pairs), size=m, replace=False)
        if weight_range is None:
            w = np.ones(m)
        else:
            w = rng.uniform(*weight_range, size=m)
        edges = [(*pairs[c], float(wk)) for c, wk in zip(sorted(chosen), w)]
        try:
            return Graph(n, edges)
        except GraphError:
            continue
    raise GraphError(f"no connected G({n}, {m}) sample after {max_tries} tries")


@dataclass(frozen=True)
class CouplingFunction:
    """Edge coupling as a function of the state difference ``d = x_i - x_j``.

    kinds
        ``constant``: ``g = 1``.
        ``power_decay``: ``g = (1 + d^2)^(-alpha)``.
        ``kuramoto_sinc``: ``K sin(d)/d`` (equal to ``K`` at ``d = 0``).
    """

    kind: str = "constant"
    parameter: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power_decay", "kuramoto_sinc"):
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.kind == "power_decay" and self.parameter < 0:
            raise ValueError("power_decay needs alpha >= 0")
        if self.kind == "kuramoto_sinc" and self.parameter <= 0:
            raise ValueError("kuramoto_sinc needs K > 0")

    @classmethod
    def constant(cls):
        return cls("constant", 0.0)

    @classmethod
    def power_decay(cls, alpha: float):
        return cls("power_decay", float(alpha))

    @classmethod
    def kuramoto(cls, gain: float):
        return cls("kuramoto_sinc", float(gain))

    @property
    def scale_at_zero(self) -> float:
        return self.parameter if self.kind == "kuramoto_sinc" else 1.0

    def __call__(self, diff):
        d = np.asarray(diff, dtype=float)
        if self.kind == "constant":
            return np.ones_like(d)
        if self.kind == "power_decay":
            return (1.0 + d * d) ** (-self.parameter)
        return self.parameter * np.sinc(d / np.pi)


@dataclass(frozen=True)
class LinearSpectrum:
    """Decay rates and orthonormal eigenvectors of ``L_d(0)``.

    Index 0 is always the consensus direction ``1/sqrt(n)`` with rate
    ``delta``; the remaining rates are the nonzero linearized Laplacian
    eigenvalues in ascending order.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def delta(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def laplacian_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[1:]

    @property
    def algebraic_connectivity(self) -> float:
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else float("inf")


def mean_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.mean(axis=-1)


def center(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=-1, keepdims=True)


def disagreement_lyapunov(x) -> np.ndarray:
    """``1/2 sum_{i != j} (x_i - x_j)^2`` along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return n * (x * x).sum(axis=-1) - x.sum(axis=-1) ** 2


@dataclass(frozen=True, eq=False)
class Network:
    graph: Graph
    coupling: CouplingFunction = CouplingFunction()
    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def n(self) -> int:
        return self.graph.n

    def edge_weights(self, x) -> np.ndarray:
        """``w_ij(x)`` for every edge, shape ``x.shape[:-1] + (E,)``."""
        x = np.asarray(x, dtype=float)
        g = self.graph
        return g.weights * self.coupling(x[..., g.heads] - x[..., g.tails])

    def laplacian_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = self.graph
        w = self.edge_weights(x)
        lap = np.zeros((self.n, self.n))
        lap[g.heads, g.tails] = -w
        lap[g.tails, g.heads] = -w
        lap[np.diag_indices(self.n)] = -lap.sum(axis=1)
        return lap

    def disagreement_laplacian_at(self, x) -> np.ndarray:
        return self.laplacian_at(x) + self.delta / self.n

    def vector_field(self, x) -> np.ndarray:
        """``-L(x) x``; accepts a batch of states along the leading axes."""
        x = np.asarray(x, dtype=float)
        g = self.graph
        heads, tails = g.heads, g.tails
        flux = self.edge_weights(x) * (x[..., tails] - x[..., heads])
        out = np.zeros_like(x)
        np.add.at(out.T, heads, flux.T)
        np.add.at(out.T, tails, -flux.T)
        return out

    def disagreement_vector_field(self, y) -> np.ndarray:
        """``-L_d(y) y = -L(y) y - (delta/n)(1^T y) 1``."""
        y = np.asarray(y, dtype=float)
        return self.vector_field(y) - self.delta * y.mean(axis=-1, keepdims=True)

    def linear_laplacian(self) -> np.ndarray:
        """Laplacian at the origin, edge weights ``g(0) w~``."""
        return self.coupling.scale_at_zero * self.graph.laplacian()

    def jacobian_at_origin(self):
        """Jacobian ``A = -L_d(0)`` of the disagreement field and the spectrum of ``-A``."""
        n = self.n
        lap = self.linear_laplacian()
        jac = -(lap + self.delta / n * np.ones((n, n)))
        ones = np.ones(n) / np.sqrt(n)
        if n == 1:
            return jac, LinearSpectrum(np.array([self.delta]), ones[:, None])
        # orthonormal basis of 1-perp, then diagonalize the restricted Laplacian
        basis = scipy.linalg.null_space(ones[None, :])
        try:
            rates, w = scipy.linalg.eigh(basis.T @ lap @ basis)
        except np.linalg.LinAlgError as exc:
            raise EigenFailure(str(exc)) from exc
        vecs = basis @ w
        # deterministic sign: largest-magnitude entry positive
        idx = np.argmax(np.abs(vecs), axis=0)
        vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
        eigenvalues = np.concatenate([[self.delta], rates])
        eigenvectors = np.column_stack([ones, vecs])
        return jac, LinearSpectrum(eigenvalues, eigenvectors)

    @property
    def spectrum(self) -> LinearSpectrum:
        return self.jacobian_at_origin()[1]
