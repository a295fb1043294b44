"""Graph representation, vertex-weight bookkeeping, and walk matrices.

Vertices are dense integer ids ``0..n-1`` with two distinguished vertices:
``v_in`` where walks start and ``v_out`` where they are absorbed.  A
positive vertex weighting ``rho`` induces edge weights
``wt(x, y) = rho(x) * rho(y)``, the degree-like quantity
``tilde_rho(x) = rho(x) * sum_{y ~ x} rho(y)``, and the transition rule
``P(x, y) = rho(y) / sum_{z ~ x} rho(z)``.

Instances and weight assignments are immutable after construction (their
arrays are write-protected), so they are safe to share across workers.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    Disconnected,
    DuplicateEdge,
    InOutCoincide,
    NonpositiveWeight,
    SelfLoop,
)

__all__ = [
    "GraphInstance",
    "WeightAssignment",
    "GraphMetrics",
    "build_graph",
    "derived_weights",
    "transition_matrix",
    "laplacians",
    "graph_metrics",
    "load_instance",
    "instance_to_dict",
    "save_instance",
]


@dataclass(frozen=True)
class GraphInstance:
    """A validated, connected, simple undirected graph with in/out vertices.

    ``adjacency`` is a dense 0/1 float matrix (convenient for the linear
    algebra downstream); ``neighbors`` gives sorted neighbor tuples.
    ``distances`` holds BFS hop counts to ``v_out``; ``bipartition`` is a
    +/-1 coloring when the graph is bipartite, else None.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    v_in: int
    v_out: int
    adjacency: np.ndarray
    neighbors: tuple[tuple[int, ...], ...]
    out_removed_connected: bool
    bipartite: bool
    bipartition: np.ndarray | None
    distances: np.ndarray

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])


@dataclass(frozen=True)
class WeightAssignment:
    """Positive vertex weights plus every derived quantity the model uses.

    Invariants (checked at construction):
      * ``tilde_rho(x) = rho(x) * sum_{y~x} rho(y)``
      * ``rho_star(x) = tilde_rho(x) / rho(x)``
      * ``edge_wt[x, y] = rho(x) * rho(y)`` on edges, 0 elsewhere
      * ``vol = sum(tilde_rho) = 2 * total edge weight``

    Solvers normalize so ``rho(v_out) = 1``; the constructor itself accepts
    any positive weighting (the induced walk only depends on ratios).
    """

    graph: GraphInstance
    rho: np.ndarray
    tilde_rho: np.ndarray
    rho_star: np.ndarray
    vol: float
    edge_wt: np.ndarray

    def normalized(self) -> "WeightAssignment":
        """Rescale so that rho(v_out) = 1 (leaves the walk unchanged)."""
        return derived_weights(self.graph, self.rho / self.rho[self.graph.v_out])


@dataclass(frozen=True)
class GraphMetrics:
    distances: np.ndarray
    bipartite: bool
    bipartition: np.ndarray | None


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _bfs_components(n: int, neighbors, start: int, skip: int | None = None):
    """Vertices reachable from start, optionally ignoring one vertex."""
    seen = {start}
    q = deque([start])
    while q:
        u = q.popleft()
        for v in neighbors[u]:
            if v != skip and v not in seen:
                seen.add(v)
                q.append(v)
    return seen


def build_graph(n: int, edges, v_in: int, v_out: int) -> GraphInstance:
    """Validate and assemble a GraphInstance.

    Raises SelfLoop, DuplicateEdge, InOutCoincide, or Disconnected with the
    offending vertices named.  Bipartiteness, the bipartition coloring, and
    BFS distances to ``v_out`` are computed eagerly since several downstream
    operations branch on them.
    """
    if n < 2:
        raise ValueError(f"need at least 2 vertices, got n={n}")
    for v, name in ((v_in, "v_in"), (v_out, "v_out")):
        if not (0 <= v < n):
            raise ValueError(f"{name}={v} outside 0..{n - 1}")
    if v_in == v_out:
        raise InOutCoincide(f"v_in and v_out are both {v_in}")

    canon: list[tuple[int, int]] = []
    seen_edges: set[tuple[int, int]] = set()
    for e in edges:
        x, y = int(e[0]), int(e[1])
        if not (0 <= x < n and 0 <= y < n):
            raise ValueError(f"edge ({x},{y}) outside 0..{n - 1}")
        if x == y:
            raise SelfLoop(f"edge ({x},{y}) is a self-loop")
        key = (min(x, y), max(x, y))
        if key in seen_edges:
            raise DuplicateEdge(f"edge {key} appears more than once")
        seen_edges.add(key)
        canon.append(key)
    canon.sort()

    adjacency = np.zeros((n, n))
    for x, y in canon:
        adjacency[x, y] = 1.0
        adjacency[y, x] = 1.0
    neighbors = tuple(
        tuple(int(v) for v in np.flatnonzero(adjacency[u])) for u in range(n)
    )

    reach = _bfs_components(n, neighbors, v_out)
    if len(reach) != n:
        missing = sorted(set(range(n)) - reach)
        raise Disconnected(f"vertices {missing} unreachable from v_out={v_out}")
    reach_wo = _bfs_components(n, neighbors, v_in, skip=v_out)
    out_removed_connected = len(reach_wo) == n - 1

    # BFS distances to v_out and 2-coloring in one sweep over the graph.
    distances = np.full(n, -1, dtype=np.int64)
    color = np.zeros(n, dtype=np.int64)
    distances[v_out] = 0
    color[v_out] = 1
    bipartite = True
    q = deque([v_out])
    while q:
        u = q.popleft()
        for v in neighbors[u]:
            if distances[v] < 0:
                distances[v] = distances[u] + 1
                color[v] = -color[u]
                q.append(v)
            elif color[v] == color[u]:
                bipartite = False
    bipartition = _freeze(color) if bipartite else None

    return GraphInstance(
        n=n,
        edges=tuple(canon),
        v_in=v_in,
        v_out=v_out,
        adjacency=_freeze(adjacency),
        neighbors=neighbors,
        out_removed_connected=out_removed_connected,
        bipartite=bipartite,
        bipartition=bipartition,
        distances=_freeze(distances),
    )


def derived_weights(g: GraphInstance, rho) -> WeightAssignment:
    """Compute tilde_rho, rho_star, edge weights, and volume for ``rho``."""
    rho = np.asarray(rho, dtype=float).copy()
    if rho.shape != (g.n,):
        raise ValueError(f"rho has shape {rho.shape}, expected ({g.n},)")
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        bad = int(np.flatnonzero(~(rho > 0) | ~np.isfinite(rho))[0])
        raise NonpositiveWeight(f"rho[{bad}] = {rho[bad]} is not a positive real")
    edge_wt = np.outer(rho, rho) * g.adjacency
    tilde_rho = edge_wt.sum(axis=1)
    rho_star = tilde_rho / rho
    vol = float(tilde_rho.sum())
    return WeightAssignment(
        graph=g,
        rho=_freeze(rho),
        tilde_rho=_freeze(tilde_rho),
        rho_star=_freeze(rho_star),
        vol=vol,
        edge_wt=_freeze(edge_wt),
    )


def transition_matrix(g: GraphInstance, w: WeightAssignment) -> np.ndarray:
    """Row-stochastic P with P(x, y) = rho(y) / sum_{z ~ x} rho(z).

    Invariant under global rescaling of rho: the edge weights
    rho(x)rho(y) define the same walk.
    """
    denom = g.adjacency @ w.rho
    return g.adjacency * w.rho[None, :] / denom[:, None]


def laplacians(g: GraphInstance, w: WeightAssignment):
    """Return (L, T, normL).

    L is the combinatorial Laplacian: diag(tilde_rho) minus the edge-weight
    matrix.  T = diag(tilde_rho).  normL = T^{-1/2} L T^{-1/2} is symmetric
    positive semidefinite with a zero eigenvalue along sqrt(tilde_rho).
    """
    T = np.diag(w.tilde_rho)
    L = T - w.edge_wt
    inv_sqrt = 1.0 / np.sqrt(w.tilde_rho)
    normL = L * inv_sqrt[:, None] * inv_sqrt[None, :]
    return L, T, normL


def graph_metrics(g: GraphInstance) -> GraphMetrics:
    """BFS distances to v_out, bipartiteness, and the +/-1 coloring."""
    return GraphMetrics(
        distances=g.distances,
        bipartite=g.bipartite,
        bipartition=g.bipartition,
    )


# -- JSON instance files ---------------------------------------------------
#
# {"n": int, "edges": [[i, j], ...], "v_in": int, "v_out": int,
#  "rho": [floats]}    with "rho" optional.
# By convention shipped instance files use v_out = 0, but the loader accepts
# any valid id and never permutes vertices (outputs stay aligned with the
# caller's ids).


def load_instance(path) -> tuple[GraphInstance, WeightAssignment | None]:
    """Load and validate an instance file; returns (graph, weights-or-None)."""
    data = json.loads(Path(path).read_text())
    return instance_from_dict(data)


def instance_from_dict(data: dict) -> tuple[GraphInstance, WeightAssignment | None]:
    for key in ("n", "edges", "v_in", "v_out"):
        if key not in data:
            raise ValueError(f"instance file missing required field '{key}'")
    g = build_graph(int(data["n"]), data["edges"], int(data["v_in"]), int(data["v_out"]))
    w = None
    if data.get("rho") is not None:
        w = derived_weights(g, np.asarray(data["rho"], dtype=float))
    return g, w


def instance_to_dict(g: GraphInstance, rho=None) -> dict:
    d = {
        "n": g.n,
        "edges": [list(e) for e in g.edges],
        "v_in": g.v_in,
        "v_out": g.v_out,
    }
    if rho is not None:
        d["rho"] = [float(x) for x in np.asarray(rho)]
    return d


def save_instance(path, g: GraphInstance, rho=None) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(g, rho), indent=2) + "\n")
