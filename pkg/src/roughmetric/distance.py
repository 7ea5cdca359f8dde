"""Lattice shortest-path distances induced by metric fields.

A metric field turns the node lattice into a weighted graph: every node is
joined to its neighbours within a reach-``K`` stencil, and each edge carries
the length of the straight segment measured in the metric (composite midpoint
quadrature of sqrt(g(dx, dx)) with multilinear interpolation of the metric
components).  Shortest paths over that graph give the induced distance; the
verifiers in this module compare such distances across metric sequences and
against closed-form limits.

Edges whose interpolated matrix fails positive definiteness at some quadrature
sample are dropped rather than clamped, so degenerate regions show up as
missing connectivity instead of being silently regularized.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.stats import qmc

from .grid import (
    Domain,
    GridError,
    MetricField,
    ScalarField,
    ball_node_indices,
    gradient,
    metric_pairs,
)
from .sobolev import CoverReport, metric_w1p_distance, superlevel_cover

__all__ = [
    "StencilSpec",
    "DistanceGraph",
    "DistanceMatrix",
    "ConvergenceReport",
    "EuclideanLimitReport",
    "BadSetReport",
    "GradientBoundReport",
    "UnreachableError",
    "EdgeDroppedError",
    "edge_weight",
    "build_distance_graph",
    "shortest_distance",
    "distance_field",
    "distance_matrix",
    "uniform_metric_distance",
    "limit_inequality_report",
    "euclidean_limit_check",
    "bad_set_diagnostic",
    "gradient_bound_check",
    "halton_landmarks",
]

SYMMETRY_TOL = 1e-12
TRIANGLE_TOL = 1e-9


class UnreachableError(GridError):
    """Raised when no stencil path joins two nodes (edges dropped or absent)."""


class EdgeDroppedError(GridError):
    """Raised when a single requested edge fails the positivity check."""


# ---------------------------------------------------------------------------
# stencil
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StencilSpec:
    """Neighbourhood reach and per-edge quadrature resolution.

    ``reach`` admits every integer offset v with ||v||_inf <= reach and
    gcd of the components equal to 1 (primitive directions only; longer
    multiples are path concatenations).  ``quad_samples`` is the number of
    midpoint samples per edge.
    """

    reach: int = 3
    quad_samples: int = 3

    def __post_init__(self) -> None:
        if int(self.reach) != self.reach or self.reach < 1:
            raise GridError(f"stencil reach must be an integer >= 1, got {self.reach}")
        if int(self.quad_samples) != self.quad_samples or self.quad_samples < 2:
            raise GridError(
                f"quad_samples must be an integer >= 2, got {self.quad_samples}"
            )

    def offsets(self, dim: int) -> np.ndarray:
        """All admissible offsets, symmetric under negation, lexicographic."""
        rng = range(-self.reach, self.reach + 1)
        out = []
        for vec in np.stack(np.meshgrid(*[list(rng)] * dim, indexing="ij"), -1).reshape(-1, dim):
            if not vec.any():
                continue
            if math.gcd(*(abs(int(c)) for c in vec)) != 1:
                continue
            out.append(tuple(int(c) for c in vec))
        out.sort()
        return np.asarray(out, dtype=np.int64)

    def canonical_offsets(self, dim: int) -> np.ndarray:
        """One representative per +-v pair (first nonzero component positive)."""
        offs = self.offsets(dim)
        keep = []
        for vec in offs:
            lead = vec[np.nonzero(vec)[0][0]]
            if lead > 0:
                keep.append(vec)
        return np.asarray(keep, dtype=np.int64)


# ---------------------------------------------------------------------------
# interpolation helpers
# ---------------------------------------------------------------------------


def _substituted_comps(metric: MetricField) -> tuple[np.ndarray, np.ndarray]:
    """Metric components with flagged nodes replaced by local averages.

    Flagged nodes take the mean of the non-flagged components in a ball of
    radius 2h around them; nodes with no donor stay invalid.
    """
    dom = metric.domain
    comps = np.array(metric.comps, copy=True)
    invalid = np.zeros(dom.shape, dtype=bool)
    if not metric.flagged.any():
        return comps, invalid
    flat_flags = np.nonzero(metric.flagged.reshape(-1))[0]
    radius = 2.0 * max(dom.spacing)
    flat_comps = comps.reshape(-1, comps.shape[-1])
    flat_ok = ~metric.flagged.reshape(-1)
    for idx in flat_flags:
        pos = dom.positions[idx]
        ball = ball_node_indices(dom, pos, radius)
        donors = ball[flat_ok[ball]]
        if donors.size == 0:
            invalid.reshape(-1)[idx] = True
        else:
            flat_comps[idx] = flat_comps[donors].mean(axis=0)
    return comps, invalid


def _corner_decomposition(shift: np.ndarray) -> list[tuple[np.ndarray, float]]:
    """Integer corner shifts and multilinear weights for a fractional shift."""
    lo = np.floor(shift).astype(np.int64)
    frac = shift - lo
    dim = len(shift)
    corners: list[tuple[np.ndarray, float]] = []
    for bits in range(2**dim):
        corner = lo.copy()
        weight = 1.0
        for ax in range(dim):
            if (bits >> ax) & 1:
                corner[ax] += 1
                weight *= frac[ax]
            else:
                weight *= 1.0 - frac[ax]
        if weight > 0.0:
            corners.append((corner, float(weight)))
    return corners


def _shifted(arr: np.ndarray, corner: np.ndarray, periodic: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Array gathered at index + corner; validity mask on box domains."""
    if periodic:
        return np.roll(arr, tuple(-corner), axis=tuple(range(len(corner)))), None
    out = arr
    valid = np.ones(arr.shape[: len(corner)], dtype=bool)
    for ax, c in enumerate(corner):
        c = int(c)
        if c == 0:
            continue
        n = arr.shape[ax]
        idx = np.arange(n) + c
        ok = (idx >= 0) & (idx < n)
        idx = np.clip(idx, 0, n - 1)
        out = np.take(out, idx, axis=ax)
        shape = [1] * valid.ndim
        shape[ax] = n
        valid = valid & ok.reshape(shape)
    return out, valid


def _interp_comps_at_shift(
    comps: np.ndarray,
    shift: np.ndarray,
    periodic: bool,
    invalid: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation of component arrays at a fixed index shift.

    The validity mask excludes positions whose interpolation corners leave a
    box domain or touch a node marked invalid.
    """
    grid_shape = comps.shape[:-1]
    out = np.zeros_like(comps)
    valid = np.ones(grid_shape, dtype=bool)
    for corner, weight in _corner_decomposition(shift):
        vals, mask = _shifted(comps, corner, periodic)
        out += weight * vals
        if mask is not None:
            valid &= mask
        if invalid is not None:
            hit, _ = _shifted(invalid, corner, periodic)
            valid &= ~hit
    return out, valid


def _eig_min_comps(comps: np.ndarray, dim: int) -> np.ndarray:
    """Smallest eigenvalue of symmetric matrices given as packed components."""
    if dim == 2:
        a, b, c = comps[..., 0], comps[..., 1], comps[..., 2]
        half_tr = 0.5 * (a + c)
        rad = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b**2, 0.0))
        return half_tr - rad
    a, b, c, d, e, f = (comps[..., k] for k in range(6))
    # trigonometric closed form for the symmetric 3x3 spectrum
    q = (a + d + f) / 3.0
    p2 = b**2 + c**2 + e**2
    p1 = (a - q) ** 2 + (d - q) ** 2 + (f - q) ** 2 + 2.0 * p2
    p = np.sqrt(np.maximum(p1 / 6.0, 0.0))
    safe = np.where(p > 0.0, p, 1.0)
    ba, bb, bc = (a - q) / safe, b / safe, c / safe
    bd, be, bf = (d - q) / safe, e / safe, f / safe
    detb = ba * (bd * bf - be**2) - bb * (bb * bf - be * bc) + bc * (bb * be - bd * bc)
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    return np.where(p > 0.0, lo, q)


def _form_weights(offset: np.ndarray, spacing: Sequence[float], dim: int) -> np.ndarray:
    """Quadratic-form weights per packed component for displacement offset*h."""
    disp = offset.astype(float) * np.asarray(spacing, dtype=float)
    weights = []
    for a, b in metric_pairs(dim):
        w = disp[a] * disp[b]
        weights.append(w if a == b else 2.0 * w)
    return np.asarray(weights)


# ---------------------------------------------------------------------------
# single-edge weight
# ---------------------------------------------------------------------------


def edge_weight(
    metric: MetricField,
    a: Sequence[float],
    b: Sequence[float],
    quad_samples: int = 3,
) -> float:
    """Length of the straight segment a -> b measured in the metric.

    Composite midpoint rule over ``quad_samples`` interpolation points of
    sqrt(g(x)(b - a, b - a)).  A non-positive-definite interpolated matrix at
    any sample drops the edge (:class:`EdgeDroppedError`) instead of clamping.
    """
    if quad_samples < 2:
        raise GridError(f"quad_samples must be >= 2, got {quad_samples}")
    dom = metric.domain
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (dom.dim,) or b.shape != (dom.dim,):
        raise GridError("segment endpoints must match the domain dimension")
    comps, invalid = _substituted_comps(metric)
    disp = b - a
    if not dom.periodic and not (dom.contains(a) and dom.contains(b)):
        raise GridError("segment endpoints fall outside the box domain")
    total = 0.0
    spacing = np.asarray(dom.spacing)
    for j in range(quad_samples):
        frac = (j + 0.5) / quad_samples
        point = a + frac * disp
        idx_f = point / spacing - 0.5
        base = np.floor(idx_f).astype(np.int64)
        t = idx_f - base
        mat_comps = np.zeros(comps.shape[-1])
        for corner, weight in _corner_decomposition(t):
            node = base + corner
            if dom.periodic:
                node = node % np.asarray(dom.shape)
            else:
                node = np.clip(node, 0, np.asarray(dom.shape) - 1)
            if invalid[tuple(node)]:
                raise EdgeDroppedError(
                    f"edge sample {j} interpolates an invalid node at {tuple(node)}"
                )
            mat_comps += weight * comps[tuple(node)]
        if _eig_min_comps(mat_comps[np.newaxis], dom.dim)[0] <= 0.0:
            raise EdgeDroppedError(
                f"interpolated matrix not positive definite at sample {j}"
            )
        quad_form = 0.0
        for k, (p, q) in enumerate(metric_pairs(dom.dim)):
            factor = 1.0 if p == q else 2.0
            quad_form += factor * mat_comps[k] * disp[p] * disp[q]
        total += math.sqrt(quad_form)
    return total / quad_samples


# ---------------------------------------------------------------------------
# graph construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DistanceGraph:
    """Sparse stencil graph with metric edge weights (canonical half-stored)."""

    domain: Domain
    stencil: StencilSpec
    matrix: csr_matrix
    node_valid: np.ndarray
    total_edges: int
    dropped_edges: int
    metric_ref: str

    def __post_init__(self) -> None:
        self.node_valid.setflags(write=False)


def _metric_ref(metric: MetricField) -> str:
    digest = hashlib.sha256(np.ascontiguousarray(metric.comps).tobytes()).hexdigest()
    dom = metric.domain
    return (
        f"{dom.kind}-{dom.dim}d-res{dom.resolution[0]}"
        f"-flagged{int(metric.flagged.sum())}-{digest[:12]}"
    )


def build_distance_graph(metric: MetricField, stencil: StencilSpec | None = None) -> DistanceGraph:
    """Assemble the weighted stencil graph over the metric's node lattice.

    One vectorized pass per canonical offset: the packed components are
    multilinearly interpolated at every quadrature sample (a fixed fractional
    shift of the whole lattice), checked for positive definiteness, and folded
    into the midpoint-rule weight.  Opposite offsets share weights, so only
    the canonical half is stored; shortest paths treat the graph undirected.
    """
    stencil = stencil or StencilSpec()
    dom = metric.domain
    comps, invalid = _substituted_comps(metric)
    node_valid = ~invalid
    flat_valid = node_valid.reshape(-1)
    n = dom.n_nodes
    shape = np.asarray(dom.shape)
    m = stencil.quad_samples

    flat_index = np.arange(n, dtype=np.int64).reshape(dom.shape)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    total_edges = 0
    dropped = 0

    for offset in stencil.canonical_offsets(dom.dim):
        target, target_mask = _shifted(flat_index, offset, dom.periodic)
        edge_ok = flat_valid & flat_valid[target.reshape(-1)]
        if target_mask is not None:
            edge_ok &= target_mask.reshape(-1)
        weights = _form_weights(offset, dom.spacing, dom.dim)
        invalid_mask = invalid if invalid.any() else None
        acc = np.zeros(n)
        for j in range(m):
            frac = (j + 0.5) / m
            interp, sample_mask = _interp_comps_at_shift(
                comps, frac * offset.astype(float), dom.periodic, invalid_mask
            )
            if sample_mask is not None:
                edge_ok &= sample_mask.reshape(-1)
            eig_lo = _eig_min_comps(interp, dom.dim).reshape(-1)
            edge_ok &= eig_lo > 0.0
            quad_form = interp.reshape(n, -1) @ weights
            acc += np.sqrt(np.maximum(quad_form, 0.0))
        acc /= m
        possible = int(edge_ok.size) if dom.periodic else int(
            target_mask.reshape(-1).sum()
        )
        kept = int(edge_ok.sum())
        total_edges += possible
        dropped += possible - kept
        rows.append(np.nonzero(edge_ok)[0])
        cols.append(target.reshape(-1)[edge_ok])
        data.append(acc[edge_ok])

    matrix = csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return DistanceGraph(
        domain=dom,
        stencil=stencil,
        matrix=matrix,
        node_valid=node_valid,
        total_edges=total_edges,
        dropped_edges=dropped,
        metric_ref=_metric_ref(metric),
    )


def _as_graph(metric: MetricField | DistanceGraph, stencil: StencilSpec | None) -> DistanceGraph:
    if isinstance(metric, DistanceGraph):
        if stencil is not None and stencil != metric.stencil:
            raise GridError("stencil argument conflicts with the prebuilt graph")
        return metric
    return build_distance_graph(metric, stencil)


# ---------------------------------------------------------------------------
# shortest paths
# ---------------------------------------------------------------------------


def _sweep(graph: DistanceGraph, sources: Sequence[int], predecessors: bool = False):
    return dijkstra(
        graph.matrix,
        directed=False,
        indices=list(sources),
        return_predecessors=predecessors,
    )


def shortest_distance(
    metric: MetricField | DistanceGraph,
    x: Sequence[float],
    y: Sequence[float],
    stencil: StencilSpec | None = None,
) -> tuple[float, tuple[int, ...]]:
    """Induced distance between the nodes nearest x and y, with the path.

    Returns ``(value, path)`` where path is the flat node index sequence from
    x's node to y's node along a shortest stencil polyline.
    """
    graph = _as_graph(metric, stencil)
    dom = graph.domain
    src = dom.nearest_node(x)
    dst = dom.nearest_node(y)
    if src == dst:
        return 0.0, (src,)
    dist, pred = _sweep(graph, [src], predecessors=True)
    value = float(dist[0, dst])
    if not np.isfinite(value):
        raise UnreachableError(
            f"node {dst} unreachable from node {src}: all connecting edges dropped"
        )
    path = [dst]
    cursor = dst
    while cursor != src:
        cursor = int(pred[0, cursor])
        path.append(cursor)
    return value, tuple(reversed(path))


def distance_field(
    metric: MetricField | DistanceGraph,
    source: Sequence[float],
    stencil: StencilSpec | None = None,
) -> ScalarField:
    """Distance from one source node to every node, as a scalar field.

    Unreachable nodes are flagged (and zeroed) rather than carrying infinities,
    so the field serializes through the binary field format unchanged.
    """
    graph = _as_graph(metric, stencil)
    dom = graph.domain
    src = dom.nearest_node(source)
    dist = _sweep(graph, [src])[0]
    unreachable = ~np.isfinite(dist)
    dist = np.where(unreachable, 0.0, dist)
    return ScalarField(dom, dist.reshape(dom.shape), unreachable.reshape(dom.shape))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Pairwise induced distances over a landmark node set."""

    landmarks: tuple[int, ...]
    values: np.ndarray
    metric_ref: str
    stencil: StencilSpec
    unreachable: np.ndarray

    def __post_init__(self) -> None:
        self.values.setflags(write=False)
        self.unreachable.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.landmarks)

    def to_csv(self, path) -> None:
        """Square matrix with a landmark coordinate header."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["landmark"] + [str(i) for i in self.landmarks])
            for i, row in enumerate(self.values):
                writer.writerow([str(self.landmarks[i])] + [repr(float(v)) for v in row])


def distance_matrix(
    metric: MetricField | DistanceGraph,
    landmarks: Sequence,
    stencil: StencilSpec | None = None,
    workers: int = 1,
) -> DistanceMatrix:
    """All pairwise distances between landmark nodes.

    Landmarks may be flat node indices or points (snapped to nearest nodes)
    and must be distinct after snapping.  One label-setting sweep runs per
    landmark; sweeps are independent, so ``workers`` threads may split them
    without changing any output bit.
    """
    graph = _as_graph(metric, stencil)
    dom = graph.domain
    idx: list[int] = []
    for mark in landmarks:
        if np.isscalar(mark) or isinstance(mark, (int, np.integer)):
            node = int(mark)
            if not 0 <= node < dom.n_nodes:
                raise GridError(f"landmark index {node} out of range")
        else:
            node = dom.nearest_node(mark)
        idx.append(node)
    if len(set(idx)) != len(idx):
        raise GridError("landmarks must snap to distinct nodes")

    if workers <= 1 or len(idx) <= 1:
        full = _sweep(graph, idx)
    else:
        chunks = np.array_split(np.asarray(idx), min(workers, len(idx)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _sweep(graph, list(c)), chunks))
        full = np.vstack(parts)
    values = full[:, idx]

    unreachable = ~np.isfinite(values)
    values = np.where(unreachable, np.inf, values)
    np.fill_diagonal(values, 0.0)

    scale = max(1.0, float(np.max(values[np.isfinite(values)], initial=0.0)))
    asym = np.max(np.abs(values - values.T), initial=0.0, where=np.isfinite(values) & np.isfinite(values.T))
    if asym > SYMMETRY_TOL * scale:
        raise GridError(
            f"distance matrix asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e} x scale"
        )
    values = 0.5 * (values + values.T)

    finite = np.isfinite(values)
    if finite.all():
        via = np.min(values[:, :, None] + values[None, :, :], axis=1)
        defect = float(np.max(values - via, initial=0.0))
        if defect > TRIANGLE_TOL * scale:
            raise GridError(
                f"triangle inequality defect {defect:.3e} exceeds {TRIANGLE_TOL:.0e} x scale"
            )
    return DistanceMatrix(
        landmarks=tuple(idx),
        values=values,
        metric_ref=graph.metric_ref,
        stencil=graph.stencil,
        unreachable=unreachable,
    )


def uniform_metric_distance(first: DistanceMatrix, second: DistanceMatrix) -> float:
    """Sup over landmark pairs of the distance-matrix difference."""
    if first.landmarks != second.landmarks:
        raise GridError("distance matrices use different landmark sets")
    if first.unreachable.any() or second.unreachable.any():
        raise GridError("uniform distance undefined with unreachable landmark pairs")
    return float(np.max(np.abs(first.values - second.values), initial=0.0))


def halton_landmarks(domain: Domain, count: int) -> tuple[int, ...]:
    """Deterministic low-discrepancy landmark nodes (Halton points, snapped)."""
    if count < 1:
        raise GridError("landmark count must be >= 1")
    sampler = qmc.Halton(d=domain.dim, scramble=False)
    extent = np.asarray(domain.extent)
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < count:
        for point in sampler.random(max(count, 8)) * extent:
            node = domain.nearest_node(point)
            if node not in seen:
                seen.add(node)
                chosen.append(node)
                if len(chosen) == count:
                    break
    return tuple(chosen)


# ---------------------------------------------------------------------------
# convergence verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """Sampled uniform-convergence record for a distance-matrix sequence."""

    pair_set: tuple[tuple[int, int], ...]
    per_k: tuple[float, ...]
    per_k_relative: tuple[float, ...]
    inequality_margin: float
    tol: float
    verdicts: dict[str, bool]


def limit_inequality_report(
    sequence: Sequence[DistanceMatrix],
    reference: DistanceMatrix,
    tol: float,
) -> ConvergenceReport:
    """Compare a distance-matrix sequence against a reference limit.

    Verdicts (relative to per-pair reference distances at tolerance ``tol``):
    ``cauchy_decreasing`` — sup deviations decrease along k and end below tol;
    ``upper_bound`` — final distances nowhere exceed the reference beyond tol;
    ``continuous_limit`` — final distances match the reference within tol.
    """
    if len(sequence) < 3:
        raise GridError("limit comparison needs a sequence of length >= 3")
    for mat in sequence:
        if mat.landmarks != reference.landmarks:
            raise GridError("sequence and reference use different landmark sets")
    k_count = len(sequence)
    size = reference.size
    pairs = [(i, j) for i in range(size) for j in range(i + 1, size)]
    ref = reference.values
    ref_floor = np.maximum(ref, np.max(ref) * 1e-12 + 1e-300)

    per_k = []
    per_k_rel = []
    for mat in sequence:
        diff = np.abs(mat.values - ref)
        per_k.append(float(np.max(diff, initial=0.0)))
        per_k_rel.append(float(np.max(diff / ref_floor, initial=0.0)))
    last = sequence[-1].values
    margin = float(np.min((ref - last)[~np.eye(size, dtype=bool)], initial=np.inf))

    decreasing = all(
        later <= earlier * (1.0 + 1e-9) + 1e-15
        for earlier, later in zip(per_k_rel, per_k_rel[1:])
    )
    verdict_a = decreasing and per_k_rel[-1] < tol
    rel_last = np.abs(last - ref) / ref_floor
    over = (last - ref) / ref_floor
    verdict_b = bool(np.all(over <= tol))
    verdict_c = bool(np.all(rel_last <= tol))
    return ConvergenceReport(
        pair_set=tuple(pairs),
        per_k=tuple(per_k),
        per_k_relative=tuple(per_k_rel),
        inequality_margin=margin,
        tol=float(tol),
        verdicts={
            "cauchy_decreasing": verdict_a,
            "upper_bound": verdict_b,
            "continuous_limit": verdict_c,
        },
    )


@dataclass(frozen=True)
class EuclideanLimitReport:
    """Distance-vs-Euclidean record for a metric sequence approaching identity."""

    pairs: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    w1p_to_identity: tuple[float, ...]
    deviations: np.ndarray  # (k, pairs) |d_k - euclid| / euclid
    final_deviation: float
    tol: float
    metrication_allowance: float
    passed: bool


def euclidean_limit_check(
    metrics: Sequence[MetricField],
    pairs: Sequence[Sequence[Sequence[float]]],
    tol: float,
    stencil: StencilSpec | None = None,
    p: float = 2.0,
    metrication_allowance: float = 0.01,
) -> EuclideanLimitReport:
    """Check that induced distances approach Euclidean separations.

    The W^{1,p} distance of each metric (and inverse) to the identity is
    recorded as the hypothesis trail; per-pair relative deviations from the
    Euclidean distance must end below ``tol`` plus the stencil's metrication
    allowance.
    """
    if not metrics:
        raise GridError("metric sequence is empty")
    stencil = stencil or StencilSpec()
    dom = metrics[0].domain

    def identity_gen(*mesh):
        eye = np.eye(dom.dim)
        return np.broadcast_to(eye, mesh[0].shape + (dom.dim, dom.dim))

    from .grid import sample_metric

    identity = sample_metric(dom, identity_gen)
    w1p = tuple(metric_w1p_distance(g, identity, p) for g in metrics)

    devs = np.zeros((len(metrics), len(pairs)))
    for k, metric in enumerate(metrics):
        graph = build_distance_graph(metric, stencil)
        for col, (a, b) in enumerate(pairs):
            euclid = dom.distance(a, b)
            if euclid <= 0:
                raise GridError("pair endpoints coincide")
            value, _ = shortest_distance(graph, a, b)
            devs[k, col] = abs(value - euclid) / euclid
    final = float(np.max(devs[-1], initial=0.0))
    passed = final <= tol + metrication_allowance
    return EuclideanLimitReport(
        pairs=tuple(
            (tuple(float(c) for c in a), tuple(float(c) for c in b)) for a, b in pairs
        ),
        w1p_to_identity=w1p,
        deviations=devs,
        final_deviation=final,
        tol=float(tol),
        metrication_allowance=float(metrication_allowance),
        passed=passed,
    )


# ---------------------------------------------------------------------------
# degenerate-set diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BadSetReport:
    """Nodes where the metric degenerates below an eigenvalue threshold."""

    threshold: float
    node_indices: tuple[int, ...]
    node_fraction: float
    cover: CoverReport | None
    cover_skip_reason: str | None
    tau: float
    delta: float
    certified_lower_bound: float


def bad_set_diagnostic(
    metric: MetricField,
    a: float,
    p: float | None = None,
    s: float = 1.0,
    tau: float = 1.0,
    delta: float = 1.0,
    osc_tol: float = 0.08,
) -> BadSetReport:
    """Locate near-degenerate nodes and bound the region's content.

    Nodes with smallest eigenvalue below ``a`` form the proxy bad set.  A
    superlevel cover of the summed inverse components at threshold 1/a bounds
    the set's content when the cover hypotheses hold (failures are recorded,
    not raised).  The certified separation lower bound (a/4) * min(tau/2,
    delta) is reported for the configured tau and delta.
    """
    if a <= 0:
        raise GridError(f"eigenvalue threshold must be positive, got {a}")
    dom = metric.domain
    if p is None:
        p = 1.5 if dom.dim == 2 else 2.5
    eig_lo = metric.eig_min.reshape(-1)
    ok = ~metric.flagged.reshape(-1)
    bad = np.nonzero(ok & (eig_lo < a))[0]

    inv_sum = np.zeros(dom.shape)
    for k, (i, j) in enumerate(metric_pairs(dom.dim)):
        factor = 1.0 if i == j else 2.0
        inv_sum += factor * np.abs(metric.inverse_comps[..., k])
    scalar = ScalarField(dom, np.where(metric.flagged, 0.0, inv_sum), metric.flagged)

    cover = None
    reason = None
    try:
        cover = superlevel_cover(scalar, 1.0 / a, p=p, s=s, osc_tol=osc_tol)
    except GridError as err:
        reason = str(err)

    lower = (a / 4.0) * min(tau / 2.0, delta)
    return BadSetReport(
        threshold=float(a),
        node_indices=tuple(int(i) for i in bad),
        node_fraction=float(bad.size / max(1, int(ok.sum()))),
        cover=cover,
        cover_skip_reason=reason,
        tau=float(tau),
        delta=float(delta),
        certified_lower_bound=float(lower),
    )


@dataclass(frozen=True)
class GradientBoundReport:
    """Nodewise check of |grad d| against the inverse-component bound."""

    c_factor: float
    allowance: float
    checked_nodes: int
    violation_indices: tuple[int, ...]
    max_ratio: float
    identity_gradient_spread: tuple[float, float]


def gradient_bound_check(
    dist: ScalarField,
    metric: MetricField,
    source: Sequence[float],
    c_factor: float | None = None,
    allowance: float = 0.05,
    tip_exclusion: float = 8.0,
) -> GradientBoundReport:
    """Compare the distance field's gradient against c(n) * sum |g^{ij}|.

    ``dist`` must be a full-grid distance-to-one-source field.  Nodes within
    ``tip_exclusion`` spacings of the source are skipped: the distance cone's
    curvature there makes centered differences underestimate the slope by
    O((h/r)^2), which is tip geometry rather than a bound violation.  Flagged
    nodes and their neighbours are excluded via the gradient's touch mask.
    Violations beyond the bound times (1 + allowance) are listed.
    """
    dom = dist.domain
    if dom != metric.domain:
        raise GridError("distance field and metric live on different domains")
    if c_factor is None:
        c_factor = float(dom.dim)
    grad = gradient(dist)
    mag = grad.magnitude().values.reshape(-1)

    inv_sum = np.zeros(dom.shape)
    for k, (i, j) in enumerate(metric_pairs(dom.dim)):
        factor = 1.0 if i == j else 2.0
        inv_sum += factor * np.abs(metric.inverse_comps[..., k])
    bound = c_factor * inv_sum.reshape(-1)

    near_source = np.zeros(dom.n_nodes, dtype=bool)
    near = ball_node_indices(
        dom, dom.positions[dom.nearest_node(source)], tip_exclusion * max(dom.spacing)
    )
    near_source[near] = True
    usable = ~grad.flagged.reshape(-1) & ~metric.flagged.reshape(-1) & ~near_source

    ratio = np.zeros(dom.n_nodes)
    positive = usable & (bound > 0)
    ratio[positive] = mag[positive] / bound[positive]
    violations = np.nonzero(positive & (ratio > 1.0 + allowance))[0]
    spread = (
        float(np.min(mag[usable], initial=np.inf)),
        float(np.max(mag[usable], initial=0.0)),
    )
    return GradientBoundReport(
        c_factor=float(c_factor),
        allowance=float(allowance),
        checked_nodes=int(positive.sum()),
        violation_indices=tuple(int(i) for i in violations),
        max_ratio=float(np.max(ratio, initial=0.0)),
        identity_gradient_spread=spread,
    )
