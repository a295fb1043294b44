"""Expected and empirical occupation times of absorbing walks.

The forward map rho -> tau is computed three independent ways:

* a Green's-function formula built on the spectral machinery,
* the unique fixed point of the visit-balance matrix M (direct solve),
* seeded Monte Carlo over simulated proper walks.

Agreement of the three routes is the module's core correctness argument
and is exercised heavily by the test suite.

Conventions: tau(v_out) = 1 (the single terminal visit is counted) and
tau(v_in) >= 1 (the start counts as a visit).
"""

from __future__ import annotations

import multiprocessing
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import Disconnected, SingularSystem, StepLimitExceeded
from .graph_core import GraphInstance, WeightAssignment, transition_matrix
from .spectral_green import SpectralData, spectral_data

__all__ = [
    "OccupationVector",
    "WalkTrace",
    "make_walk_trace",
    "occupation_matrix",
    "expected_occupation_fixed_point",
    "expected_occupation_green",
    "expected_hitting_time",
    "simulate_walk",
    "empirical_occupation",
    "occupation_to_dict",
    "occupation_to_csv",
]

DEFAULT_STEP_LIMIT = 10_000_000

# Walk indices are grouped into fixed-size chunks; each chunk draws its
# uniforms from an independent substream keyed by (seed, chunk index), with
# one full-width block per step, so walk k always consumes the same numbers
# no matter how chunks are scheduled across workers.
DEFAULT_CHUNK = 16384


@dataclass(frozen=True)
class OccupationVector:
    """Vertex-indexed visit counts; ``kind`` is "expected" or "empirical".

    ``stderr`` holds per-vertex standard errors for empirical vectors.
    """

    values: np.ndarray
    kind: str
    stderr: np.ndarray | None = None


@dataclass(frozen=True)
class WalkTrace:
    """A finite walk and its visit-count vector."""

    vertices: tuple[int, ...]
    trace: np.ndarray

    @property
    def length(self) -> int:
        """Number of steps (edges) in the walk."""
        return len(self.vertices) - 1

    def is_proper(self, g: GraphInstance) -> bool:
        return (
            self.vertices[0] == g.v_in
            and self.vertices[-1] == g.v_out
            and int(self.trace[g.v_out]) == 1
        )


def make_walk_trace(g: GraphInstance, vertices) -> WalkTrace:
    """Build a WalkTrace, validating that consecutive vertices are adjacent."""
    seq = tuple(int(v) for v in vertices)
    if not seq:
        raise ValueError("empty walk")
    for a, b in zip(seq, seq[1:]):
        if not g.adjacency[a, b]:
            raise ValueError(f"walk steps across non-edge ({a},{b})")
    trace = np.bincount(np.asarray(seq), minlength=g.n).astype(np.int64)
    trace.flags.writeable = False
    return WalkTrace(vertices=seq, trace=trace)


def occupation_matrix(g: GraphInstance, w: WeightAssignment) -> np.ndarray:
    """Visit-balance matrix M whose unique pinned fixed point is tau.

    Entries: M(v_out, v_out) = M(v_in, v_out) = 1;
    M(v, u) = rho(v) / sum_{z ~ u} rho(z) for v ~ u with u, v != v_out;
    all other entries 0.  Requires the graph minus v_out to stay connected,
    otherwise the fixed point is not unique.
    """
    if not g.out_removed_connected:
        raise Disconnected("graph minus v_out is disconnected")
    n, out = g.n, g.v_out
    neighbor_mass = g.adjacency @ w.rho
    M = g.adjacency * (w.rho[:, None] / neighbor_mass[None, :])
    M[out, :] = 0.0
    M[:, out] = 0.0
    M[out, out] = 1.0
    M[g.v_in, out] = 1.0
    return M


def expected_occupation_fixed_point(
    g: GraphInstance, w: WeightAssignment
) -> OccupationVector:
    """Solve M r = r with r(v_out) pinned to 1 by direct linear solve."""
    n, out = g.n, g.v_out
    M = occupation_matrix(g, w)
    A = M - np.eye(n)
    A[out, :] = 0.0
    A[out, out] = 1.0
    b = np.zeros(n)
    b[out] = 1.0
    try:
        with warnings.catch_warnings():
            # The residual check below is the authority on solution quality.
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            r = scipy.linalg.solve(A, b)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"pinned fixed-point system is singular: {exc}") from exc
    if not np.all(np.isfinite(r)) or np.abs(M @ r - r).max() > 1e-8 * max(
        1.0, np.abs(r).max()
    ):
        raise SingularSystem("fixed-point residual check failed")
    return OccupationVector(values=_clip_tiny(r), kind="expected")


def _clip_tiny(values: np.ndarray) -> np.ndarray:
    """Zero out roundoff-scale negatives, then freeze."""
    out = np.where((values < 0) & (values > -1e-10), 0.0, values)
    out.flags.writeable = False
    return out


def expected_occupation_green(
    g: GraphInstance, w: WeightAssignment, spec: SpectralData | None = None
) -> OccupationVector:
    """Occupation times from the Green's matrix.

    tau(x) = tilde_rho(x) * ( G(o,o)/tilde(o) - G(i,o)/tilde(i)
                             - G(o,x)/tilde(o) + G(i,x)/tilde(i) )

    The raw formula counts visits strictly before absorption, which gives 0
    at v_out; the returned vector patches that entry to 1 so all three
    forward routes share the proper-walk convention.
    """
    if spec is None or spec.bigG is None:
        spec = spectral_data(g, w)
    G = spec.bigG
    t = w.tilde_rho
    i, o = g.v_in, g.v_out
    S = G[o, o] / t[o] - G[i, o] / t[i] - G[o, :] / t[o] + G[i, :] / t[i]
    tau = t * S
    tau[o] = 1.0
    return OccupationVector(values=_clip_tiny(tau), kind="expected")


def expected_hitting_time(
    g: GraphInstance,
    w: WeightAssignment,
    spec: SpectralData | None,
    x: int,
    y: int,
) -> float:
    """Expected first-hitting time of y from x, with E(x -> x) = 0 exactly.

    Pass ``spec=None`` to have the spectral data computed on the fly.
    """
    if x == y:
        return 0.0
    if spec is None or spec.bigG is None:
        spec = spectral_data(g, w)
    G = spec.bigG
    t = w.tilde_rho
    return float(w.vol / t[y] * G[y, y] - w.vol / t[x] * G[x, y])


# -- simulation ------------------------------------------------------------


def _cumulative_rows(g: GraphInstance, w: WeightAssignment) -> np.ndarray:
    P = transition_matrix(g, w)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    return cum


def simulate_walk(
    g: GraphInstance,
    w: WeightAssignment,
    rng: np.random.Generator,
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> WalkTrace:
    """One proper walk from v_in to absorption at v_out.

    The walk consumes one uniform per step from ``rng``; supplying the same
    generator state reproduces the same trace exactly.
    """
    cum = _cumulative_rows(g, w)
    v = g.v_in
    seq = [v]
    for _ in range(step_limit):
        v = int(np.searchsorted(cum[v], rng.random(), side="right"))
        seq.append(v)
        if v == g.v_out:
            return make_walk_trace(g, seq)
    raise StepLimitExceeded(
        f"walk exceeded {step_limit} steps without reaching v_out "
        "(near-degenerate weights?)"
    )


def _chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    )


def _simulate_chunk(args) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep-simulate one chunk of walks; returns (sum_tr, sum_sq) int64."""
    cum, v_in, v_out, seed, chunk_index, count, step_limit = args
    n = cum.shape[0]
    gen = _chunk_rng(seed, chunk_index)
    tr = np.zeros((count, n), dtype=np.int64)
    tr[:, v_in] = 1
    pos = np.full(count, v_in, dtype=np.int64)
    active = np.arange(count)
    for _ in range(step_limit):
        if active.size == 0:
            break
        u = gen.random(count)  # full width keeps per-walk substreams fixed
        rows = cum[pos[active]]
        nxt = (u[active, None] >= rows).sum(axis=1)
        tr[active, nxt] += 1
        pos[active] = nxt
        active = active[nxt != v_out]
    else:
        if active.size:
            raise StepLimitExceeded(
                f"{active.size} walks in chunk {chunk_index} exceeded "
                f"{step_limit} steps"
            )
    return tr.sum(axis=0), (tr * tr).sum(axis=0)


def empirical_occupation(
    g: GraphInstance,
    w: WeightAssignment,
    N: int,
    seed: int,
    *,
    workers: int = 1,
    step_limit: int = DEFAULT_STEP_LIMIT,
    chunk_size: int = DEFAULT_CHUNK,
) -> OccupationVector:
    """Mean trace over N independent seeded walks, with standard errors.

    Results are bit-identical for any ``workers`` value: walk k's random
    numbers depend only on (seed, k, chunk_size), and traces are integer
    vectors accumulated exactly, so neither scheduling nor summation order
    can perturb the output.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if not g.out_removed_connected:
        raise Disconnected("graph minus v_out is disconnected")
    cum = _cumulative_rows(g, w)
    tasks = []
    start = 0
    chunk_index = 0
    while start < N:
        count = min(chunk_size, N - start)
        tasks.append((cum, g.v_in, g.v_out, seed, chunk_index, count, step_limit))
        start += count
        chunk_index += 1

    if workers == 1 or len(tasks) == 1:
        results = [_simulate_chunk(t) for t in tasks]
    else:
        with multiprocessing.Pool(processes=min(workers, len(tasks))) as pool:
            results = pool.map(_simulate_chunk, tasks)

    sum_tr = np.zeros(g.n, dtype=np.int64)
    sum_sq = np.zeros(g.n, dtype=np.int64)
    for s, q in results:
        sum_tr += s
        sum_sq += q
    mean = sum_tr / N
    if N > 1:
        var = (sum_sq.astype(float) - sum_tr.astype(float) ** 2 / N) / (N - 1)
        stderr = np.sqrt(np.maximum(var, 0.0) / N)
    else:
        stderr = np.zeros(g.n)
    mean.flags.writeable = False
    stderr.flags.writeable = False
    return OccupationVector(values=mean, kind="empirical", stderr=stderr)


# -- serialization -----------------------------------------------------------


def occupation_to_dict(vec: OccupationVector) -> dict:
    d = {"tau": [float(x) for x in vec.values], "kind": vec.kind}
    if vec.stderr is not None:
        d["stderr"] = [float(x) for x in vec.stderr]
    return d


def occupation_to_csv(vec: OccupationVector) -> str:
    """CSV with header ``vertex,tau`` (plus ``stderr`` for empirical runs)."""
    if vec.stderr is not None:
        lines = ["vertex,tau,stderr"]
        lines += [
            f"{v},{float(t)!r},{float(s)!r}"
            for v, (t, s) in enumerate(zip(vec.values, vec.stderr))
        ]
    else:
        lines = ["vertex,tau"]
        lines += [f"{v},{float(t)!r}" for v, t in enumerate(vec.values)]
    return "\n".join(lines) + "\n"
