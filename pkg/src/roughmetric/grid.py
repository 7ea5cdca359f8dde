"""Uniform lattice domains and the fields that live on them.

A :class:`Domain` is a uniform Cartesian grid over a flat torus or a closed
box.  Nodes sit at cell centers: along axis ``a`` the coordinates are
``(i + 1/2) * h_a`` for ``i = 0 .. resolution_a - 1`` with spacing
``h_a = extent_a / resolution_a``.  On the torus every axis wraps; on the box
the grid simply stops at the outermost cell centers and derivative stencils
fall back to one-sided differences there.

Scalar, metric, and gradient fields store one value (or one symmetric matrix,
or one vector) per node.  Nodes may be *flagged* as singular; flagged nodes
are excluded from quadrature and from derivative stencils, and every consumer
in this package is expected to either skip them or substitute local averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "GridError",
    "SamplingError",
    "Ball",
    "Domain",
    "ScalarField",
    "GradientField",
    "MetricField",
    "QuadratureResult",
    "make_domain",
    "sample_scalar",
    "sample_metric",
    "gradient",
    "integrate",
    "region_quadrature",
    "eigen_range",
    "ball_node_indices",
    "unit_ball_volume",
    "metric_pairs",
]

INVERSE_CONSISTENCY_TOL = 1e-9
NON_SPD_REJECT_FRACTION = 0.01


class GridError(ValueError):
    """Invalid domain, field, or region construction."""


class SamplingError(GridError):
    """A generator produced a non-finite value at an undeclared node."""


def metric_pairs(dim: int) -> tuple[tuple[int, int], ...]:
    """Index pairs (i, j), i <= j, of the stored symmetric components."""
    return tuple((i, j) for i in range(dim) for j in range(i, dim))


def unit_ball_volume(s: float) -> float:
    """Volume normalizing constant pi^(s/2) / Gamma(s/2 + 1), any real s > 0."""
    if s <= 0:
        raise ValueError(f"dimension parameter must be positive, got {s}")
    return math.pi ** (s / 2.0) / math.gamma(s / 2.0 + 1.0)


@dataclass(frozen=True)
class Ball:
    """Coordinate ball used as a quadrature / averaging region."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise GridError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class Domain:
    """Uniform cell-centered grid on a flat torus or closed box.

    Parameters
    ----------
    kind:
        ``"torus"`` (periodic) or ``"box"`` (closed ``[0, extent]^n``).
    dim:
        Spatial dimension, 2 or 3.
    extent:
        Physical side length per axis.
    resolution:
        Node count per axis, at least 8.
    """

    kind: str
    dim: int
    extent: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("torus", "box"):
            raise GridError(f"unknown domain kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise GridError(f"dimension must be 2 or 3, got {self.dim}")
        extent = tuple(float(e) for e in self.extent)
        resolution = tuple(int(r) for r in self.resolution)
        if len(extent) != self.dim or len(resolution) != self.dim:
            raise GridError("extent/resolution arity must match dimension")
        if any(e <= 0 for e in extent):
            raise GridError(f"extent must be positive, got {extent}")
        if any(r < 8 for r in resolution):
            raise GridError(f"resolution must be at least 8 per axis, got {resolution}")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "resolution", resolution)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / r for e, r in zip(self.extent, self.resolution))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def periodic(self) -> bool:
        return self.kind == "torus"

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """Per-axis node coordinates (cell centers), read-only."""
        out = []
        for e, r in zip(self.extent, self.resolution):
            ax = (np.arange(r, dtype=np.float64) + 0.5) * (e / r)
            ax.setflags(write=False)
            out.append(ax)
        return tuple(out)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        """Meshgrid (indexing='ij') of node coordinates, read-only."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        for g in grids:
            g.setflags(write=False)
        return tuple(grids)

    @cached_property
    def positions(self) -> np.ndarray:
        """Node positions as a flat (n_nodes, dim) array, read-only."""
        pos = np.stack([g.ravel() for g in self.mesh], axis=-1)
        pos.setflags(write=False)
        return pos

    def node_position(self, flat_index: int) -> np.ndarray:
        return self.positions[flat_index].copy()

    def nearest_node(self, point: Sequence[float]) -> int:
        """Flat index of the node closest to ``point`` (periodic on the torus)."""
        if len(point) != self.dim:
            raise GridError(
                f"point has {len(point)} coordinates, domain is {self.dim}d"
            )
        idx = []
        for x, e, r in zip(point, self.extent, self.resolution):
            h = e / r
            i = int(np.floor(float(x) / h))  # cell centers at (i + 1/2) h
            if self.periodic:
                i %= r
            else:
                i = min(max(i, 0), r - 1)
            idx.append(i)
        return int(np.ravel_multi_index(tuple(idx), self.resolution))

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Shortest displacement b - a, minimum-image on the torus."""
        d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
        if self.periodic:
            ext = np.asarray(self.extent)
            d = d - ext * np.round(d / ext)
        return d

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm(self.displacement(a, b)))

    def contains(self, point: Sequence[float]) -> bool:
        if self.periodic:
            return True
        return all(0.0 <= float(x) <= e for x, e in zip(point, self.extent))


def make_domain(
    kind: str,
    dim: int,
    extent: float | Sequence[float],
    resolution: int | Sequence[int],
) -> Domain:
    """Build a :class:`Domain`, broadcasting scalar extent/resolution per axis."""
    if np.isscalar(extent):
        extent = (float(extent),) * dim
    if np.isscalar(resolution):
        resolution = (int(resolution),) * dim
    return Domain(kind=kind, dim=dim, extent=tuple(extent), resolution=tuple(resolution))


def _as_flag_mask(domain: Domain, flagged: np.ndarray | None) -> np.ndarray:
    if flagged is None:
        mask = np.zeros(domain.shape, dtype=bool)
    else:
        mask = np.array(flagged, dtype=bool)
        if mask.shape != domain.shape:
            raise GridError("flag mask shape does not match domain")
    mask.setflags(write=False)
    return mask


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One float64 value per node, with an explicit singular-node mask."""

    domain: Domain
    values: np.ndarray
    flagged: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.domain.shape:
            raise GridError(
                f"value shape {values.shape} does not match domain {self.domain.shape}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flagged", _as_flag_mask(self.domain, self.flagged))
        bad = ~np.isfinite(values) & ~self.flagged
        if np.any(bad):
            flat = int(np.flatnonzero(bad.ravel())[0])
            pos = self.domain.node_position(flat)
            raise SamplingError(
                f"non-finite value at undeclared node {flat} (position {tuple(pos)})"
            )

    @property
    def flagged_indices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.flagged.ravel()))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.domain, values, self.flagged)


@dataclass(frozen=True, eq=False)
class GradientField:
    """One vector per node; flags cover nodes whose stencil touched a flag."""

    domain: Domain
    vectors: np.ndarray
    flagged: np.ndarray

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.shape != self.domain.shape + (self.domain.dim,):
            raise GridError("gradient shape does not match domain")
        vectors = vectors.copy()
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "flagged", _as_flag_mask(self.domain, self.flagged))

    def magnitude(self) -> ScalarField:
        mag = np.sqrt(np.sum(self.vectors**2, axis=-1))
        mag = np.where(self.flagged, 0.0, mag)
        return ScalarField(self.domain, mag, self.flagged)


def sample_scalar(
    domain: Domain,
    generator: Callable[..., np.ndarray],
    singular_points: Iterable[Sequence[float]] = (),
) -> ScalarField:
    """Evaluate ``generator`` on the node mesh.

    ``generator`` receives one coordinate array per axis (meshgrid layout) and
    must broadcast to the grid shape.  Singular points are snapped to their
    nearest node and flagged; a non-finite value anywhere else raises
    :class:`SamplingError` naming the offending node.
    """
    raw = np.asarray(generator(*domain.mesh), dtype=np.float64)
    values = np.broadcast_to(raw, domain.shape).copy()
    flagged = np.zeros(domain.shape, dtype=bool)
    for p in singular_points:
        flat = domain.nearest_node(p)
        flagged.ravel()[flat] = True
    values[flagged & ~np.isfinite(values)] = 0.0
    return ScalarField(domain, values, flagged)


def gradient(field: ScalarField) -> GradientField:
    """Second-order central differences; one-sided at box faces.

    Nodes adjacent to a flagged node (or box-face nodes using a flagged
    neighbor) inherit the flag, so downstream quadrature can exclude them.
    """
    dom = field.domain
    u = field.values
    n = dom.dim
    grads = np.empty(dom.shape + (n,), dtype=np.float64)
    touched = field.flagged.copy()
    for a in range(n):
        h = dom.spacing[a]
        if dom.periodic:
            fwd = np.roll(u, -1, axis=a)
            bwd = np.roll(u, 1, axis=a)
            grads[..., a] = (fwd - bwd) / (2.0 * h)
            touched |= np.roll(field.flagged, -1, axis=a)
            touched |= np.roll(field.flagged, 1, axis=a)
        else:
            g = np.empty_like(u)
            sl = [slice(None)] * n

            def ax(i: slice) -> tuple:
                s = list(sl)
                s[a] = i
                return tuple(s)

            g[ax(slice(1, -1))] = (u[ax(slice(2, None))] - u[ax(slice(0, -2))]) / (2 * h)
            g[ax(slice(0, 1))] = (u[ax(slice(1, 2))] - u[ax(slice(0, 1))]) / h
            g[ax(slice(-1, None))] = (u[ax(slice(-1, None))] - u[ax(slice(-2, -1))]) / h
            grads[..., a] = g
            shifted = np.zeros_like(field.flagged)
            shifted[ax(slice(0, -1))] |= field.flagged[ax(slice(1, None))]
            shifted[ax(slice(1, None))] |= field.flagged[ax(slice(0, -1))]
            touched |= shifted
    grads[touched] = 0.0
    return GradientField(dom, grads, touched)


def ball_node_indices(domain: Domain, center: Sequence[float], radius: float) -> np.ndarray:
    """Flat indices of nodes whose centers lie within ``radius`` of ``center``.

    Membership uses the minimum-image distance on the torus.  The result is
    sorted, and each node appears once even when the ball wraps around.
    """
    if radius <= 0:
        raise GridError(f"ball radius must be positive, got {radius}")
    center = np.asarray([float(c) for c in center], dtype=np.float64)
    if not domain.periodic:
        lo = np.zeros(domain.dim)
        hi = np.asarray(domain.extent)
        gap = np.maximum(lo - center, 0.0) + np.maximum(center - hi, 0.0)
        if float(np.linalg.norm(gap)) > radius:
            raise GridError(
                f"ball at {tuple(center)} with radius {radius} lies outside the domain"
            )
    ranges = []
    for a in range(domain.dim):
        h = domain.spacing[a]
        r = domain.resolution[a]
        ci = (center[a] / h) - 0.5  # fractional node index of the center
        lo_i = int(np.floor(ci - radius / h)) - 1
        hi_i = int(np.ceil(ci + radius / h)) + 1
        if domain.periodic:
            span = min(hi_i - lo_i + 1, r)
            idx = (np.arange(lo_i, lo_i + span)) % r
            idx = np.unique(idx)
        else:
            idx = np.arange(max(lo_i, 0), min(hi_i, r - 1) + 1)
        if idx.size == 0:
            return np.empty(0, dtype=np.int64)
        ranges.append(idx)
    grids = np.meshgrid(*ranges, indexing="ij")
    flat = np.ravel_multi_index([g.ravel() for g in grids], domain.resolution)
    pos = domain.positions[flat]
    d = pos - center
    if domain.periodic:
        ext = np.asarray(domain.extent)
        d = d - ext * np.round(d / ext)
    inside = np.sum(d * d, axis=1) <= radius * radius
    return np.sort(flat[inside])


@dataclass(frozen=True)
class QuadratureResult:
    """Midpoint-rule sum over a region, with singular-cell bookkeeping."""

    value: float
    volume: float
    excluded_volume: float
    node_count: int


def region_quadrature(field: ScalarField, region: Ball | None = None) -> QuadratureResult:
    """Midpoint quadrature of ``field`` over the full domain or a ball.

    Flagged nodes are excluded from the sum and their total cell volume is
    reported in ``excluded_volume``; ``volume`` is the quadrature volume of the
    non-flagged nodes actually summed.
    """
    dom = field.domain
    cell = dom.cell_volume
    if region is None:
        mask = ~field.flagged.ravel()
        vals = field.values.ravel()[mask]
        excluded = int(np.count_nonzero(field.flagged))
        return QuadratureResult(
            value=float(np.sum(vals) * cell),
            volume=float(vals.size * cell),
            excluded_volume=float(excluded * cell),
            node_count=int(vals.size),
        )
    idx = ball_node_indices(dom, region.center, region.radius)
    if idx.size == 0:
        return QuadratureResult(0.0, 0.0, 0.0, 0)
    flags = field.flagged.ravel()[idx]
    vals = field.values.ravel()[idx][~flags]
    return QuadratureResult(
        value=float(np.sum(vals) * cell),
        volume=float(vals.size * cell),
        excluded_volume=float(np.count_nonzero(flags) * cell),
        node_count=int(vals.size),
    )


def integrate(field: ScalarField, region: Ball | None = None) -> float:
    """Midpoint-rule integral ``h^n * sum`` over the region's non-flagged nodes."""
    return region_quadrature(field, region).value


# ---------------------------------------------------------------------------
# symmetric 2x2 / 3x3 spectral and inverse kernels (vectorized, closed form)
# ---------------------------------------------------------------------------


def _eig_bounds_sym2(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, d = c[..., 0], c[..., 1], c[..., 2]
    mean = 0.5 * (a + d)
    rad = np.sqrt(np.maximum(0.25 * (a - d) ** 2 + b * b, 0.0))
    return mean - rad, mean + rad


def _eig_bounds_sym3(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # trigonometric closed form for the characteristic cubic of a symmetric 3x3
    a00, a01, a02, a11, a12, a22 = (c[..., k] for k in range(6))
    q = (a00 + a11 + a22) / 3.0
    p2 = (a00 - q) ** 2 + (a11 - q) ** 2 + (a22 - q) ** 2 + 2.0 * (
        a01**2 + a02**2 + a12**2
    )
    p = np.sqrt(np.maximum(p2 / 6.0, 0.0))
    safe = np.where(p > 0, p, 1.0)
    b00, b11, b22 = (a00 - q) / safe, (a11 - q) / safe, (a22 - q) / safe
    b01, b02, b12 = a01 / safe, a02 / safe, a12 / safe
    detb = (
        b00 * (b11 * b22 - b12 * b12)
        - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02)
    )
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    hi = q + 2.0 * p * np.cos(phi)
    lo = np.where(p > 0, lo, q)
    hi = np.where(p > 0, hi, q)
    return lo, hi


def _det_sym(c: np.ndarray, dim: int) -> np.ndarray:
    if dim == 2:
        return c[..., 0] * c[..., 2] - c[..., 1] ** 2
    a00, a01, a02, a11, a12, a22 = (c[..., k] for k in range(6))
    return (
        a00 * (a11 * a22 - a12 * a12)
        - a01 * (a01 * a22 - a12 * a02)
        + a02 * (a01 * a12 - a11 * a02)
    )


def _inverse_sym(c: np.ndarray, dim: int) -> np.ndarray:
    det = _det_sym(c, dim)
    safe = np.where(det != 0.0, det, 1.0)
    out = np.empty_like(c)
    if dim == 2:
        a, b, d = c[..., 0], c[..., 1], c[..., 2]
        out[..., 0] = d / safe
        out[..., 1] = -b / safe
        out[..., 2] = a / safe
    else:
        a00, a01, a02, a11, a12, a22 = (c[..., k] for k in range(6))
        out[..., 0] = (a11 * a22 - a12 * a12) / safe
        out[..., 1] = (a02 * a12 - a01 * a22) / safe
        out[..., 2] = (a01 * a12 - a02 * a11) / safe
        out[..., 3] = (a00 * a22 - a02 * a02) / safe
        out[..., 4] = (a02 * a01 - a00 * a12) / safe
        out[..., 5] = (a00 * a11 - a01 * a01) / safe
    out[det == 0.0] = np.nan
    return out


def _eig_bounds(c: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    return _eig_bounds_sym2(c) if dim == 2 else _eig_bounds_sym3(c)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric positive-definite matrix per node, stored as n(n+1)/2 components.

    Components follow the row-major upper triangle given by
    :func:`metric_pairs`.  The inverse components and per-node eigenvalue
    bounds are computed once at construction; the inverse is checked against
    ``(g^ij)(g_jk) = delta`` to 1e-9 in the max norm on non-flagged nodes.
    """

    domain: Domain
    comps: np.ndarray
    flagged: np.ndarray
    non_spd_indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        dom = self.domain
        m = len(metric_pairs(dom.dim))
        comps = np.asarray(self.comps, dtype=np.float64)
        if comps.shape != dom.shape + (m,):
            raise GridError(
                f"metric component shape {comps.shape} does not match domain"
            )
        comps = comps.copy()
        comps.setflags(write=False)
        object.__setattr__(self, "comps", comps)
        object.__setattr__(self, "flagged", _as_flag_mask(dom, self.flagged))
        bad = np.any(~np.isfinite(comps), axis=-1) & ~self.flagged
        if np.any(bad):
            flat = int(np.flatnonzero(bad.ravel())[0])
            raise SamplingError(
                f"non-finite metric at undeclared node {flat} "
                f"(position {tuple(dom.node_position(flat))})"
            )
        lo, hi = _eig_bounds(comps, dom.dim)
        inv = _inverse_sym(comps, dom.dim)
        ok = ~self.flagged
        if np.any(ok):
            err = self._identity_residual(comps, inv)
            err = np.where(ok, err, 0.0)
            worst = float(np.max(err))
            if worst > INVERSE_CONSISTENCY_TOL:
                raise GridError(
                    f"inverse consistency residual {worst:.3e} exceeds "
                    f"{INVERSE_CONSISTENCY_TOL:.1e}"
                )
        for arr in (lo, hi, inv):
            arr.setflags(write=False)
        object.__setattr__(self, "_eig_min", lo)
        object.__setattr__(self, "_eig_max", hi)
        object.__setattr__(self, "_inv_comps", inv)

    @staticmethod
    def _identity_residual(comps: np.ndarray, inv: np.ndarray) -> np.ndarray:
        if comps.shape[-1] == 3:
            a, b, d = comps[..., 0], comps[..., 1], comps[..., 2]
            ia, ib, id_ = inv[..., 0], inv[..., 1], inv[..., 2]
            r00 = a * ia + b * ib - 1.0
            r01 = a * ib + b * id_
            r10 = b * ia + d * ib
            r11 = b * ib + d * id_ - 1.0
            return np.max(np.abs(np.stack([r00, r01, r10, r11], axis=-1)), axis=-1)
        g = _comps_to_matrices(comps, 3)
        gi = _comps_to_matrices(inv, 3)
        prod = np.einsum("...ij,...jk->...ik", g, gi)
        prod = prod - np.eye(3)
        return np.max(np.abs(prod), axis=(-2, -1))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def inverse_comps(self) -> np.ndarray:
        return self._inv_comps  # type: ignore[attr-defined]

    @property
    def eig_min(self) -> np.ndarray:
        return self._eig_min  # type: ignore[attr-defined]

    @property
    def eig_max(self) -> np.ndarray:
        return self._eig_max  # type: ignore[attr-defined]

    def matrices(self) -> np.ndarray:
        """Dense (..., n, n) symmetric matrices (a copy)."""
        return _comps_to_matrices(self.comps, self.dim)

    def inverse_matrices(self) -> np.ndarray:
        return _comps_to_matrices(self.inverse_comps, self.dim)

    def matrix_at(self, flat_index: int) -> np.ndarray:
        return self.matrices().reshape(self.domain.n_nodes, self.dim, self.dim)[
            flat_index
        ]

    def component_field(self, i: int, j: int, inverse: bool = False) -> ScalarField:
        pairs = metric_pairs(self.dim)
        key = (min(i, j), max(i, j))
        k = pairs.index(key)
        src = self.inverse_comps if inverse else self.comps
        return ScalarField(self.domain, src[..., k], self.flagged)


def _comps_to_matrices(comps: np.ndarray, dim: int) -> np.ndarray:
    out = np.empty(comps.shape[:-1] + (dim, dim), dtype=np.float64)
    for k, (i, j) in enumerate(metric_pairs(dim)):
        out[..., i, j] = comps[..., k]
        out[..., j, i] = comps[..., k]
    return out


def _matrices_to_comps(mats: np.ndarray, dim: int) -> np.ndarray:
    pairs = metric_pairs(dim)
    out = np.empty(mats.shape[:-2] + (len(pairs),), dtype=np.float64)
    for k, (i, j) in enumerate(pairs):
        out[..., k] = mats[..., i, j]
    return out


def sample_metric(
    domain: Domain,
    generator: Callable[..., np.ndarray],
    singular_points: Iterable[Sequence[float]] = (),
) -> MetricField:
    """Evaluate a matrix-valued ``generator`` on the node mesh.

    ``generator`` maps coordinate arrays to a ``(*grid, n, n)`` array; the
    upper triangle is stored.  Nodes where the sample is not positive
    definite are flagged and recorded in ``non_spd_indices``; if more than
    1% of nodes fail, the construction is rejected outright.
    """
    mats = np.asarray(generator(*domain.mesh), dtype=np.float64)
    want = domain.shape + (domain.dim, domain.dim)
    mats = np.broadcast_to(mats, want)
    comps = _matrices_to_comps(mats, domain.dim)
    flagged = np.zeros(domain.shape, dtype=bool)
    for p in singular_points:
        flagged.ravel()[domain.nearest_node(p)] = True
    comps = comps.copy()
    comps[flagged & ~np.all(np.isfinite(comps), axis=-1)] = 0.0
    nonfinite = ~np.all(np.isfinite(comps), axis=-1) & ~flagged
    if np.any(nonfinite):
        flat = int(np.flatnonzero(nonfinite.ravel())[0])
        raise SamplingError(
            f"non-finite metric at undeclared node {flat} "
            f"(position {tuple(domain.node_position(flat))})"
        )
    lo, _ = _eig_bounds(comps, domain.dim)
    non_spd = (lo <= 0.0) & ~flagged
    n_bad = int(np.count_nonzero(non_spd))
    if n_bad > NON_SPD_REJECT_FRACTION * domain.n_nodes:
        raise SamplingError(
            f"{n_bad} of {domain.n_nodes} nodes are not positive definite "
            f"(> {NON_SPD_REJECT_FRACTION:.0%}); metric rejected"
        )
    non_spd_idx = tuple(int(i) for i in np.flatnonzero(non_spd.ravel()))
    flagged = flagged | non_spd
    # flagged rows hold the identity so cached inverse/eig arrays stay finite;
    # consumers must skip or substitute these nodes anyway
    for k, (i, j) in enumerate(metric_pairs(domain.dim)):
        comps[flagged, k] = 1.0 if i == j else 0.0
    return MetricField(domain, comps, flagged, non_spd_indices=non_spd_idx)


def eigen_range(metric: MetricField) -> tuple[ScalarField, ScalarField]:
    """Per-node (eig_min, eig_max) fields from the closed-form kernels."""
    lo = np.where(metric.flagged, 0.0, metric.eig_min)
    hi = np.where(metric.flagged, 0.0, metric.eig_max)
    return (
        ScalarField(metric.domain, lo, metric.flagged),
        ScalarField(metric.domain, hi, metric.flagged),
    )
