"""Segment-constrained clustering that turns features + timestamps into a full partition.

Three algorithms are provided:

* :func:`energy_function_boundaries` places each boundary between two
  consecutive timestamps so that the summed squared deviation from the side
  means is minimal.
* :func:`constrained_kmedoids` minimises the summed distance of every frame to
  its cluster medoid over temporally contiguous clusters, either exactly or by
  alternating medoid and boundary updates.
* :func:`temporal_agnes` merges adjacent clusters bottom-up with average
  linkage until one cluster per timestamp remains.

All argmins break ties toward the smallest index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .core import FeatureSequence, SegmentPartition, TimestampAnnotation, ValidationError

log = logging.getLogger(__name__)

AGNES_MAX_FRAMES = 20_000


def _check_inputs(f: FeatureSequence, ts: TimestampAnnotation) -> None:
    if ts.N == 0:
        raise ValidationError("at least one timestamp is required")
    ts.check_length(f.T)


def pair_energy(x: np.ndarray) -> np.ndarray:
    """Energies of every split of a window ``x`` (frames ``tau_n..tau_{n+1}`` inclusive).

    Entry ``k-1`` is the energy of placing the boundary ``k`` frames into the
    window, for ``k = 1..len(x)-1``: left side ``x[:k]``, right side ``x[k:]``.
    """
    x = x - x.mean(axis=0)
    n = len(x)
    csum = np.cumsum(x, axis=0)
    csq = np.cumsum(np.einsum("ij,ij->i", x, x))
    total, total_sq = csum[-1], csq[-1]
    k = np.arange(1, n)
    left_sum = csum[:-1]
    right_sum = total - left_sum
    left_sse = csq[:-1] - np.einsum("ij,ij->i", left_sum, left_sum) / k
    right_sse = (total_sq - csq[:-1]) - np.einsum("ij,ij->i", right_sum, right_sum) / (n - k)
    return left_sse + right_sse


def energy_function_boundaries(f: FeatureSequence, ts: TimestampAnnotation) -> SegmentPartition:
    """Place each action change between consecutive timestamps by two-sided variance minimisation."""
    _check_inputs(f, ts)
    x = f.as_float64()
    bounds = [0]
    for a, b in zip(ts.frames[:-1], ts.frames[1:]):
        energy = pair_energy(x[a:b + 1])
        bounds.append(int(a) + 1 + int(np.argmin(energy)))
    bounds.append(f.T)
    return SegmentPartition(bounds)


@dataclass
class KMedoidsResult:
    partition: SegmentPartition
    medoids: np.ndarray
    objective: list[float] = field(default_factory=list)
    iterations: int = 0


def _medoid(dist: np.ndarray, start: int, end: int) -> int:
    block = dist[start:end, start:end]
    return start + int(np.argmin(block.sum(axis=1)))


def _kmedoids_objective(dist: np.ndarray, bounds: np.ndarray, medoids: np.ndarray) -> float:
    return float(sum(dist[bounds[n]:bounds[n + 1], m].sum() for n, m in enumerate(medoids)))


def constrained_kmedoids_run(f: FeatureSequence, ts: TimestampAnnotation,
                             max_iters: int = 50) -> KMedoidsResult:
    """Contiguity-constrained k-medoids with the full objective trace.

    The objective is recorded after initialisation and after every medoid or
    boundary half-step, so the trace is non-increasing by construction.
    """
    _check_inputs(f, ts)
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    x = f.as_float64()
    T, N = f.T, ts.N
    tau = ts.frames
    dist = cdist(x, x)
    bounds = np.empty(N + 1, dtype=np.int64)
    bounds[0], bounds[-1] = 0, T
    bounds[1:-1] = (tau[:-1] + tau[1:] + 1) // 2
    medoids = np.array([_medoid(dist, bounds[n], bounds[n + 1]) for n in range(N)])
    trace = [_kmedoids_objective(dist, bounds, medoids)]
    it = 0
    for it in range(1, max_iters + 1):
        new_medoids = np.array([_medoid(dist, bounds[n], bounds[n + 1]) for n in range(N)])
        # keep the current medoid unless another one is strictly better
        for n in range(N):
            s, e = bounds[n], bounds[n + 1]
            cur = dist[s:e, medoids[n]].sum() if s <= medoids[n] < e else np.inf
            if dist[s:e, new_medoids[n]].sum() >= cur:
                new_medoids[n] = medoids[n]
        trace.append(_kmedoids_objective(dist, bounds, new_medoids))

        new_bounds = bounds.copy()
        for n in range(N - 1):
            lo = max(new_medoids[n], tau[n])
            hi = min(new_medoids[n + 1], tau[n + 1])
            # split b in (lo, hi]: frames [lo, b) go left, [b, hi] go right
            to_left = dist[lo:hi + 1, new_medoids[n]]
            to_right = dist[lo:hi + 1, new_medoids[n + 1]]
            cost = np.cumsum(to_left)[:-1] + (to_right.sum() - np.cumsum(to_right)[:-1])
            cur = bounds[n + 1] - lo - 1
            best = int(np.argmin(cost))
            new_bounds[n + 1] = lo + 1 + (best if cost[best] < cost[cur] else cur)
        trace.append(_kmedoids_objective(dist, new_bounds, new_medoids))

        converged = np.array_equal(new_bounds, bounds) and np.array_equal(new_medoids, medoids)
        bounds, medoids = new_bounds, new_medoids
        if converged:
            break
    return KMedoidsResult(SegmentPartition(bounds), medoids, trace, it)


def constrained_kmedoids_exact(f: FeatureSequence, ts: TimestampAnnotation) -> KMedoidsResult:
    """Globally optimal contiguous k-medoids by dynamic programming over boundaries.

    Boundary ``b_{n+1}`` ranges over ``(tau_n, tau_{n+1}]``; a segment's cost is
    its best in-segment medoid's summed distance, read off column prefix sums.
    """
    _check_inputs(f, ts)
    x = f.as_float64()
    T, N = f.T, ts.N
    tau = ts.frames
    dist = cdist(x, x)
    colsum = np.zeros((T + 1, T))
    colsum[1:] = np.cumsum(dist, axis=0)
    # candidate values of b_n for n = 0..N
    cands = [np.array([0])]
    cands += [np.arange(tau[n] + 1, tau[n + 1] + 1) for n in range(N - 1)]
    cands.append(np.array([T]))

    value = np.zeros(1)
    choice = []
    medoid_tabs = []
    for n in range(N):
        starts, ends = cands[n], cands[n + 1]
        lo, hi = starts[0], ends[-1]
        cost = np.empty((len(starts), len(ends)))
        med = np.empty((len(starts), len(ends)), dtype=np.int64)
        m_idx = np.arange(lo, hi)
        for i, s in enumerate(starts):
            # rows: end e, cols: medoid m in [lo, hi)
            seg = colsum[ends][:, lo:hi] - colsum[s, lo:hi]
            invalid = (m_idx[None, :] < s) | (m_idx[None, :] >= ends[:, None])
            seg = np.where(invalid, np.inf, seg)
            j = np.argmin(seg, axis=1)
            med[i] = lo + j
            cost[i] = seg[np.arange(len(ends)), j]
        total = value[:, None] + cost
        best = np.argmin(total, axis=0)
        choice.append(best)
        medoid_tabs.append(med)
        value = total[best, np.arange(len(ends))]

    bounds = np.empty(N + 1, dtype=np.int64)
    medoids = np.empty(N, dtype=np.int64)
    j = 0
    bounds[N] = T
    for n in range(N - 1, -1, -1):
        i = choice[n][j]
        medoids[n] = medoid_tabs[n][i, j]
        bounds[n] = cands[n][i]
        j = i
    return KMedoidsResult(SegmentPartition(bounds), medoids, [float(value[0])], 0)


def constrained_kmedoids(f: FeatureSequence, ts: TimestampAnnotation,
                         max_iters: int = 50, method: str = "exact") -> SegmentPartition:
    """Contiguity-constrained k-medoids partition.

    ``method="exact"`` returns the global optimum of the medoid objective;
    ``method="alternate"`` runs the medoid/boundary alternation, which can stop
    in a local optimum.
    """
    if method == "exact":
        return constrained_kmedoids_exact(f, ts).partition
    if method == "alternate":
        return constrained_kmedoids_run(f, ts, max_iters).partition
    raise ValidationError(f"unknown k-medoids method {method!r}")


class AgnesWorkspace:
    """Distance matrix, prefix-sum tables and adjacent-cluster linkages for temporal AGNES.

    ``D[tau_n, tau_{n+1}]`` is infinite. Any block containing such an entry
    has infinite linkage, tracked with a separate prefix count so the finite
    sums stay exact.
    """

    def __init__(self, x: np.ndarray, tau: np.ndarray):
        T = len(x)
        self.D = cdist(x, x)
        blocked = np.zeros((T, T), dtype=np.int64)
        blocked[tau[:-1], tau[1:]] = 1
        self.D[tau[:-1], tau[1:]] = np.inf
        finite = np.where(blocked == 1, 0.0, self.D)
        self._sum = np.zeros((T + 1, T + 1))
        self._sum[1:, 1:] = finite.cumsum(axis=0).cumsum(axis=1)
        self._inf = np.zeros((T + 1, T + 1), dtype=np.int64)
        self._inf[1:, 1:] = blocked.cumsum(axis=0).cumsum(axis=1)
        self.bounds = list(range(T + 1))
        self.d = [self.linkage_sum(i, i + 1, i + 1, i + 2) for i in range(T - 1)]

    @property
    def q(self) -> int:
        return len(self.bounds) - 1

    def linkage_sum(self, a0: int, a1: int, b0: int, b1: int) -> float:
        """Sum of ``D`` over rows ``[a0, a1)`` x columns ``[b0, b1)`` in O(1)."""
        s, c = self._sum, self._inf
        if c[a1, b1] - c[a0, b1] - c[a1, b0] + c[a0, b0]:
            return np.inf
        return s[a1, b1] - s[a0, b1] - s[a1, b0] + s[a0, b0]

    def merge(self, i: int) -> None:
        """Merge cluster ``i`` with cluster ``i + 1`` and update the neighbouring linkages."""
        b, d = self.bounds, self.d
        if i > 0:
            # left neighbour vs merged cluster
            w_old = (b[i] - b[i - 1]) * (b[i + 1] - b[i])
            extra = self.linkage_sum(b[i - 1], b[i], b[i + 1], b[i + 2])
            d[i - 1] = (d[i - 1] * w_old + extra) / ((b[i] - b[i - 1]) * (b[i + 2] - b[i]))
        if i + 2 < len(b) - 1:
            # merged cluster vs right neighbour
            w_old = (b[i + 2] - b[i + 1]) * (b[i + 3] - b[i + 2])
            extra = self.linkage_sum(b[i], b[i + 1], b[i + 2], b[i + 3])
            d[i + 1] = (d[i + 1] * w_old + extra) / ((b[i + 3] - b[i + 2]) * (b[i + 2] - b[i]))
        del b[i + 1]
        del d[i]


def temporal_agnes(f: FeatureSequence, ts: TimestampAnnotation,
                   max_frames: int = AGNES_MAX_FRAMES, downsample: int = 1) -> SegmentPartition:
    """Agglomerative clustering restricted to temporally adjacent clusters.

    ``downsample > 1`` clusters every ``downsample``-th frame and maps the
    boundaries back to the full grid; this is an approximation and is logged.
    """
    _check_inputs(f, ts)
    if f.T < ts.N:
        raise ValidationError(f"T={f.T} is smaller than the timestamp count N={ts.N}")
    if downsample > 1:
        return _agnes_downsampled(f, ts, max_frames, downsample)
    if f.T > max_frames:
        raise ValidationError(
            f"temporal AGNES needs O(T^2) memory; T={f.T} exceeds the cap of {max_frames} frames, "
            "pass a downsampling factor")
    ws = AgnesWorkspace(f.as_float64(), ts.frames)
    while ws.q > ts.N:
        ws.merge(int(np.argmin(ws.d)))
    return SegmentPartition(ws.bounds)


def _agnes_downsampled(f: FeatureSequence, ts: TimestampAnnotation, max_frames: int,
                       factor: int) -> SegmentPartition:
    tau = ts.frames // factor
    if np.any(np.diff(tau) == 0):
        raise ValidationError(f"downsampling by {factor} maps two timestamps onto one frame")
    log.info("temporal AGNES on %d frames downsampled by %d", f.T, factor)
    small = FeatureSequence(f.data[::factor])
    sub = temporal_agnes(small, TimestampAnnotation(tau, ts.classes, ts.num_classes), max_frames)
    b = sub.boundaries * factor
    b[-1] = f.T
    return SegmentPartition(b)


ALGORITHMS = {
    "energy": energy_function_boundaries,
    "kmedoids": constrained_kmedoids,
    "agnes": temporal_agnes,
}
