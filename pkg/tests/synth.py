"""Shared generators for randomized tests.

All generators are deterministic functions of the supplied Generator, and
every instance they return satisfies the connectivity preconditions of the
forward maps (the graph minus v_out stays connected; for trees that means
v_out is a leaf).
"""

from __future__ import annotations

import heapq

import numpy as np

import walkweights as ww


def random_tree(n: int, rng: np.random.Generator) -> ww.GraphInstance:
    """Uniform random labeled tree (Pruefer decode); v_out is a random leaf."""
    if n < 2:
        raise ValueError("need n >= 2")
    if n == 2:
        edges = [(0, 1)]
    else:
        prufer = rng.integers(0, n, size=n - 2)
        degree = np.ones(n, dtype=int)
        for x in prufer:
            degree[x] += 1
        edges = []
        leaves = [v for v in range(n) if degree[v] == 1]
        heapq.heapify(leaves)
        for x in prufer:
            leaf = heapq.heappop(leaves)
            edges.append((leaf, int(x)))
            degree[x] -= 1
            if degree[x] == 1:
                heapq.heappush(leaves, int(x))
        edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
    deg = np.zeros(n, dtype=int)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    leaf_ids = [v for v in range(n) if deg[v] == 1]
    v_out = int(leaf_ids[rng.integers(len(leaf_ids))])
    others = [v for v in range(n) if v != v_out]
    v_in = int(others[rng.integers(len(others))])
    return ww.build_graph(n, edges, v_in=v_in, v_out=v_out)


def random_connected_instance(
    n: int, rng: np.random.Generator, p: float = 0.45
) -> ww.GraphInstance:
    """Erdos-Renyi instance conditioned on both connectivity requirements."""
    while True:
        mask = np.triu(rng.random((n, n)) < p, 1)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]
        try:
            g = ww.build_graph(n, edges, v_in=n - 1, v_out=0)
        except ww.errors.WalkWeightsError:
            continue
        if g.out_removed_connected:
            return g


def random_rho(
    g: ww.GraphInstance,
    rng: np.random.Generator,
    lo: float = 0.2,
    hi: float = 5.0,
    pin_out: bool = True,
) -> np.ndarray:
    rho = rng.uniform(lo, hi, g.n)
    if pin_out:
        rho[g.v_out] = 1.0
    return rho


def tau_of(g: ww.GraphInstance, rho) -> np.ndarray:
    return ww.expected_occupation_fixed_point(g, ww.derived_weights(g, rho)).values


def path_instance(n: int) -> ww.GraphInstance:
    """Path 0-1-...-(n-1) with v_out = 0 and v_in = n-1."""
    return ww.build_graph(n, [(i, i + 1) for i in range(n - 1)], v_in=n - 1, v_out=0)


def complete_instance(n: int) -> ww.GraphInstance:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return ww.build_graph(n, edges, v_in=1, v_out=0)


def cycle_instance(n: int) -> ww.GraphInstance:
    """Cycle 0-1-...-(n-1)-0 with v_out = 0; v_in opposite-ish."""
    edges = [(i, (i + 1) % n) for i in range(n)]
    return ww.build_graph(n, edges, v_in=n // 2, v_out=0)


def petersen_instance() -> ww.GraphInstance:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return ww.build_graph(10, outer + spokes + inner, v_in=7, v_out=0)
