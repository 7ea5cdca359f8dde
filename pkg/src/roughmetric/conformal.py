"""Conformal metrics u^{4/(n-2)} g0, scalar curvature, and energy diagnostics.

The factor u lives on a flat background; the scalar curvature of the
conformal metric comes from the classical transformation law

    R(g) = u^{-(n+2)/(n-2)} * ( -(4(n-1)/(n-2)) lap(u) + R0 * u ),

with the Laplacian discretized by the standard 2n+1-point stencil.  The
L^{n/2} curvature energy integral dV_g = u^{2n/(n-2)} dx is exactly invariant
under constant rescalings of u in the discrete algebra, which the checks in
this module assert rather than assume.  Test families (concentrating bubbles,
mollified poles) and ball-mass probes for atom detection live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .grid import (
    Ball,
    Domain,
    GridError,
    MetricField,
    ScalarField,
    ball_node_indices,
    gradient,
    metric_pairs,
    region_quadrature,
)
from .distance import DistanceGraph, StencilSpec, build_distance_graph, shortest_distance

__all__ = [
    "ConformalFactor",
    "CurvatureReport",
    "MassReport",
    "HarnackReport",
    "RescalingReport",
    "DistanceRatioReport",
    "conformal_metric",
    "scalar_curvature",
    "volume_normalize",
    "curvature_energy_invariance_check",
    "atom_masses",
    "mean_log_normalize",
    "log_gradient_energy",
    "harnack_ratio",
    "bubble_factor",
    "mollified_pole_factor",
    "distance_ratio_probe",
]

VOLUME_NORMALIZE_TOL = 1e-10


@dataclass(frozen=True)
class ConformalFactor:
    """Strictly positive conformal factor over a flat background.

    ``normalization`` records the cumulative constant applied by the
    normalization helpers; it starts at 1 for freshly sampled factors.
    Dimension n = 3 is the supported conformal dimension (n = 2 has no
    conformal exponent 4/(n-2)); the exponents are derived from n throughout
    so nothing else pins the dimension.
    """

    u: ScalarField
    background: MetricField | None = None
    normalization: float = 1.0

    def __post_init__(self) -> None:
        n = self.u.domain.dim
        if n < 3:
            raise GridError(
                f"conformal exponent 4/(n-2) needs n >= 3, got n = {n}"
            )
        if self.background is not None and self.background.domain != self.u.domain:
            raise GridError("factor and background live on different domains")
        vals = self.u.values
        ok = ~self.u.flagged
        if np.any(ok & (vals <= 0.0)):
            flat = int(np.flatnonzero((ok & (vals <= 0.0)).ravel())[0])
            raise GridError(
                f"conformal factor not strictly positive at node {flat}"
            )

    @property
    def n(self) -> int:
        return self.u.domain.dim

    @property
    def domain(self) -> Domain:
        return self.u.domain

    @property
    def metric_exponent(self) -> float:
        return 4.0 / (self.n - 2.0)

    @property
    def volume_exponent(self) -> float:
        return 2.0 * self.n / (self.n - 2.0)

    def scaled(self, c: float) -> "ConformalFactor":
        if c <= 0:
            raise GridError(f"scaling constant must be positive, got {c}")
        field = ScalarField(self.domain, c * self.u.values, self.u.flagged)
        return replace(self, u=field, normalization=self.normalization * c)


def conformal_metric(factor: ConformalFactor) -> MetricField:
    """Metric with components u^{4/(n-2)} (g0)_{ij}; flags propagate."""
    dom = factor.domain
    scale = np.power(factor.u.values, factor.metric_exponent)
    if factor.background is None:
        m = len(metric_pairs(dom.dim))
        comps = np.zeros(dom.shape + (m,))
        for k, (i, j) in enumerate(metric_pairs(dom.dim)):
            if i == j:
                comps[..., k] = scale
        flags = factor.u.flagged
    else:
        comps = scale[..., np.newaxis] * factor.background.comps
        flags = factor.u.flagged | factor.background.flagged
    # flagged rows hold the identity so the cached inverse stays finite
    for k, (i, j) in enumerate(metric_pairs(dom.dim)):
        comps[..., k] = np.where(flags, 1.0 if i == j else 0.0, comps[..., k])
    return MetricField(dom, comps, flags)


def _laplacian(field: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """2n+1-point Laplacian; returns (values, flag mask incl. box margins)."""
    dom = field.domain
    vals = field.values
    out = np.zeros_like(vals)
    flags = field.flagged.copy()
    for ax in range(dom.dim):
        h2 = dom.spacing[ax] ** 2
        if dom.periodic:
            fwd = np.roll(vals, -1, axis=ax)
            bwd = np.roll(vals, 1, axis=ax)
            flags |= np.roll(field.flagged, -1, axis=ax)
            flags |= np.roll(field.flagged, 1, axis=ax)
        else:
            fwd = np.empty_like(vals)
            bwd = np.empty_like(vals)
            sl = [slice(None)] * dom.dim
            hi, lo = sl.copy(), sl.copy()
            hi[ax], lo[ax] = slice(1, None), slice(0, -1)
            fwd[tuple(lo)] = vals[tuple(hi)]
            bwd[tuple(hi)] = vals[tuple(lo)]
            edge_lo, edge_hi = sl.copy(), sl.copy()
            edge_lo[ax], edge_hi[ax] = 0, -1
            fwd[tuple(edge_hi)] = 0.0
            bwd[tuple(edge_lo)] = 0.0
            flags[tuple(edge_lo)] = True
            flags[tuple(edge_hi)] = True
            shifted = np.zeros_like(field.flagged)
            shifted[tuple(lo)] = field.flagged[tuple(hi)]
            flags |= shifted
            shifted = np.zeros_like(field.flagged)
            shifted[tuple(hi)] = field.flagged[tuple(lo)]
            flags |= shifted
        out += (fwd - 2.0 * vals + bwd) / h2
    return np.where(flags, 0.0, out), flags


@dataclass(frozen=True)
class CurvatureReport:
    """Scalar curvature of the conformal metric with its global integrals."""

    R: ScalarField
    energy: float
    volume: float
    excluded_volume: float
    c: float

    def to_records(self) -> list[tuple[str, float]]:
        return [
            ("energy", self.energy),
            ("volume", self.volume),
            ("excluded_volume", self.excluded_volume),
            ("normalization", self.c),
        ]


def scalar_curvature(
    factor: ConformalFactor,
    background_curvature: ScalarField | None = None,
) -> CurvatureReport:
    """Scalar curvature field plus L^{n/2} energy and conformal volume.

    Flat backgrounds contribute no zeroth-order term; a precomputed background
    curvature field can supply one.  Box margins and Laplacian-touched
    neighbourhoods of flagged nodes are flagged in the output field and their
    cells are excluded from the integrals (the excluded volume is reported).
    """
    n = factor.n
    u = factor.u
    lap, flags = _laplacian(u)
    coef = 4.0 * (n - 1.0) / (n - 2.0)
    rhs = -coef * lap
    if background_curvature is not None:
        if background_curvature.domain != u.domain:
            raise GridError("background curvature lives on a different domain")
        rhs = rhs + background_curvature.values * u.values
        flags = flags | background_curvature.flagged
    safe_u = np.where(flags | (u.values <= 0), 1.0, u.values)
    R_vals = np.power(safe_u, -(n + 2.0) / (n - 2.0)) * rhs
    R = ScalarField(u.domain, np.where(flags, 0.0, R_vals), flags)

    weight = np.power(safe_u, factor.volume_exponent)
    density_energy = np.abs(R.values) ** (n / 2.0) * weight
    energy_field = ScalarField(u.domain, np.where(flags, 0.0, density_energy), flags)
    volume_field = ScalarField(u.domain, np.where(flags, 0.0, weight), flags)
    qe = region_quadrature(energy_field)
    qv = region_quadrature(volume_field)
    return CurvatureReport(
        R=R,
        energy=qe.value,
        volume=qv.value,
        excluded_volume=qv.excluded_volume,
        c=factor.normalization,
    )


def volume_normalize(factor: ConformalFactor) -> tuple[ConformalFactor, float]:
    """Scale the factor so the conformal volume is exactly one.

    c = volume^{-(n-2)/(2n)}; the scaled factor's recomputed volume must land
    within 1e-10 of 1 (raised otherwise, e.g. when flags dominate the grid).
    """
    report = scalar_curvature(factor)
    volume = report.volume
    if not np.isfinite(volume) or volume <= 0.0:
        raise GridError(f"conformal volume {volume} is not normalizable")
    n = factor.n
    c = volume ** (-(n - 2.0) / (2.0 * n))
    scaled = factor.scaled(c)
    check = scalar_curvature(scaled).volume
    if abs(check - 1.0) > VOLUME_NORMALIZE_TOL:
        raise GridError(
            f"normalized volume {check} misses 1 beyond {VOLUME_NORMALIZE_TOL:.0e}"
        )
    return scaled, float(c)


@dataclass(frozen=True)
class RescalingReport:
    """Curvature-energy deviations under constant rescalings of the factor."""

    base_energy: float
    scales: tuple[float, ...]
    energies: tuple[float, ...]
    relative_deviations: tuple[float, ...]
    max_deviation: float


def curvature_energy_invariance_check(
    factor: ConformalFactor, scales: Sequence[float]
) -> RescalingReport:
    """Assert-free record of energy under u -> c u for each scale c.

    The discrete operator satisfies the identity exactly (the Laplacian is
    linear and the volume weight cancels the curvature power), so the
    deviations measure only floating-point roundoff.
    """
    base = scalar_curvature(factor).energy
    energies = []
    devs = []
    for c in scales:
        if c <= 0:
            raise GridError(f"rescaling constants must be positive, got {c}")
        e = scalar_curvature(factor.scaled(float(c))).energy
        energies.append(e)
        devs.append(abs(e - base) / base if base > 0 else abs(e - base))
    return RescalingReport(
        base_energy=base,
        scales=tuple(float(c) for c in scales),
        energies=tuple(energies),
        relative_deviations=tuple(devs),
        max_deviation=max(devs) if devs else 0.0,
    )


@dataclass(frozen=True)
class MassReport:
    """Ball curvature masses per (center, radius); atoms sit at the smallest radius."""

    centers: tuple[tuple[float, ...], ...]
    radii: tuple[float, ...]
    masses: np.ndarray  # (centers, radii)
    atom_estimates: tuple[float, ...]
    total_energy: float

    def __post_init__(self) -> None:
        self.masses.setflags(write=False)


def atom_masses(
    factor: ConformalFactor,
    centers: Sequence[Sequence[float]],
    radii: Sequence[float],
    report: CurvatureReport | None = None,
) -> MassReport:
    """Curvature mass of shrinking balls around candidate concentration points.

    ``radii`` must decrease strictly, with the smallest at least 2h.  The
    masses over nested balls of a nonnegative density are non-increasing by
    construction; the atom estimate for each center is the smallest-radius
    mass.  Pass a precomputed ``report`` to avoid recomputing the curvature.
    """
    dom = factor.domain
    radii = [float(r) for r in radii]
    if not radii:
        raise GridError("radius schedule is empty")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise GridError("radius schedule must decrease strictly")
    if radii[-1] < 2.0 * max(dom.spacing) * (1.0 - 1e-12):
        raise GridError(
            f"smallest radius {radii[-1]} is below the 2h resolution floor"
        )
    rep = report if report is not None else scalar_curvature(factor)
    n = factor.n
    safe_u = np.where(rep.R.flagged, 1.0, np.where(factor.u.values > 0, factor.u.values, 1.0))
    density = np.abs(rep.R.values) ** (n / 2.0) * np.power(safe_u, factor.volume_exponent)
    density = np.where(rep.R.flagged, 0.0, density).reshape(-1)
    cell = dom.cell_volume

    masses = np.zeros((len(centers), len(radii)))
    for i, center in enumerate(centers):
        for j, r in enumerate(radii):
            nodes = ball_node_indices(dom, center, r)
            masses[i, j] = float(density[nodes].sum() * cell)
    atom = tuple(float(m) for m in masses[:, -1])
    return MassReport(
        centers=tuple(tuple(float(c) for c in q) for q in centers),
        radii=tuple(radii),
        masses=masses,
        atom_estimates=atom,
        total_energy=rep.energy,
    )


def mean_log_normalize(
    factor: ConformalFactor, region: Ball
) -> tuple[ConformalFactor, float]:
    """Scale the factor so log u has zero mean over the region.

    Flagged nodes inside the region are excluded from the mean (their volume
    is visible through :func:`roughmetric.grid.region_quadrature`).
    """
    dom = factor.domain
    nodes = ball_node_indices(dom, region.center, region.radius)
    ok = ~factor.u.flagged.reshape(-1)[nodes]
    vals = factor.u.values.reshape(-1)[nodes][ok]
    if vals.size == 0:
        raise GridError("region contains no usable nodes")
    if np.any(vals <= 0):
        raise GridError("factor not positive throughout the region")
    c = float(np.exp(-np.mean(np.log(vals))))
    scaled = factor.scaled(c)
    new_mean = float(np.mean(np.log(scaled.u.values.reshape(-1)[nodes][ok])))
    if abs(new_mean) > 1e-10:
        raise GridError(f"mean log {new_mean} misses zero beyond 1e-10")
    return scaled, c


def log_gradient_energy(
    factor: ConformalFactor, center: Sequence[float], radii: Sequence[float]
) -> tuple[float, ...]:
    """Scale-normalized Dirichlet energy r^{2-n} * integral_{B_r} |grad log u|^2."""
    dom = factor.domain
    radii = [float(r) for r in radii]
    largest = max(radii)
    nodes = ball_node_indices(dom, center, largest)
    vals = factor.u.values.reshape(-1)[nodes]
    ok = ~factor.u.flagged.reshape(-1)[nodes]
    if np.any(ok & (vals <= 0)):
        raise GridError("factor not positive on the largest ball")
    safe = np.where(factor.u.flagged | (factor.u.values <= 0), 1.0, factor.u.values)
    log_field = ScalarField(dom, np.where(factor.u.flagged, 0.0, np.log(safe)), factor.u.flagged)
    grad = gradient(log_field)
    dens = grad.magnitude().values ** 2
    dens = np.where(grad.flagged, 0.0, dens).reshape(-1)
    cell = dom.cell_volume
    out = []
    for r in radii:
        ball = ball_node_indices(dom, center, r)
        out.append(float(r ** (2.0 - dom.dim) * dens[ball].sum() * cell))
    return tuple(out)


@dataclass(frozen=True)
class HarnackReport:
    """Oscillation of the normalized factor against local curvature energy."""

    ratio: float
    local_energy: float
    normalization: float


def harnack_ratio(
    factor: ConformalFactor, outer: Ball, inner: Ball
) -> HarnackReport:
    """sup/inf of the mean-log-normalized factor on the inner ball.

    Paired with the curvature energy over the outer ball: small local energy
    should keep the ratio moderate, while concentrating factors blow it up.
    """
    dom = factor.domain
    sep = dom.distance(outer.center, inner.center)
    if sep + inner.radius > outer.radius * (1.0 + 1e-12):
        raise GridError("inner ball is not contained in the outer ball")
    normalized, c = mean_log_normalize(factor, outer)
    nodes = ball_node_indices(dom, inner.center, inner.radius)
    ok = ~normalized.u.flagged.reshape(-1)[nodes]
    vals = normalized.u.values.reshape(-1)[nodes][ok]
    if vals.size == 0:
        raise GridError("inner ball contains no usable nodes")
    rep = scalar_curvature(factor)
    n = factor.n
    safe_u = np.where(rep.R.flagged, 1.0, np.where(factor.u.values > 0, factor.u.values, 1.0))
    density = np.abs(rep.R.values) ** (n / 2.0) * np.power(safe_u, factor.volume_exponent)
    density = np.where(rep.R.flagged, 0.0, density).reshape(-1)
    outer_nodes = ball_node_indices(dom, outer.center, outer.radius)
    local = float(density[outer_nodes].sum() * dom.cell_volume)
    return HarnackReport(
        ratio=float(vals.max() / vals.min()),
        local_energy=local,
        normalization=c,
    )


# ---------------------------------------------------------------------------
# test families
# ---------------------------------------------------------------------------


def _radius_squared(dom: Domain, center: Sequence[float]) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    mesh = dom.mesh
    r2 = np.zeros(dom.shape)
    for ax in range(dom.dim):
        d = mesh[ax] - center[ax]
        if dom.periodic:
            ext = dom.extent[ax]
            d = d - ext * np.round(d / ext)
        r2 += d * d
    return r2


def bubble_factor(lam: float, center: Sequence[float], domain: Domain) -> ConformalFactor:
    """Concentrating factor u = (lam / (lam^2 + |x - c|^2))^{(n-2)/2}.

    As lam -> 0 the factor concentrates a fixed quantum of curvature energy
    at the center while vanishing elsewhere.
    """
    if lam <= 0:
        raise GridError(f"bubble scale must be positive, got {lam}")
    r2 = _radius_squared(domain, center)
    vals = (lam / (lam**2 + r2)) ** ((domain.dim - 2.0) / 2.0)
    return ConformalFactor(ScalarField(domain, vals, np.zeros(domain.shape, bool)))


def mollified_pole_factor(
    a: float, eps: float, center: Sequence[float], domain: Domain
) -> ConformalFactor:
    """Pole factor u = 1 + (|x - c|^2 + eps^2)^{-a/2}.

    ``eps`` should stay at or above 2h for a resolved profile; ``eps = 0``
    gives the raw pole with the singular node flagged.
    """
    if a <= 0:
        raise GridError(f"pole exponent must be positive, got {a}")
    if eps < 0:
        raise GridError(f"mollification width must be nonnegative, got {eps}")
    r2 = _radius_squared(domain, center)
    base = r2 + eps**2
    flags = np.zeros(domain.shape, bool)
    if eps == 0.0:
        flags = base <= 0.0
        base = np.where(flags, 1.0, base)
    vals = 1.0 + np.power(base, -a / 2.0)
    vals = np.where(flags, 0.0, vals)
    return ConformalFactor(ScalarField(domain, vals, flags))


@dataclass(frozen=True)
class DistanceRatioReport:
    """Pairwise d_limit / d_final ratios with the probe ball's curvature mass."""

    pairs: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    ratios: tuple[float, ...]
    max_ratio: float
    ball: Ball
    ball_mass_final: float
    ball_mass_limit: float


def distance_ratio_probe(
    factors: Sequence[ConformalFactor],
    limit: ConformalFactor,
    ball: Ball,
    pairs: Sequence[Sequence[Sequence[float]]],
    stencil: StencilSpec | None = None,
) -> DistanceRatioReport:
    """Distance under the limit metric relative to the final family member.

    Pairs must lie inside the probe ball.  The ball's curvature mass is
    reported for the final member and for the limit factor; the ratio sits
    near one exactly when no pair's geodesic feels the concentration.
    """
    if not factors:
        raise GridError("factor sequence is empty")
    dom = limit.domain
    for a, b in pairs:
        for point in (a, b):
            if dom.distance(point, ball.center) > ball.radius * (1.0 + 1e-12):
                raise GridError("probe pair endpoint falls outside the ball")
    stencil = stencil or StencilSpec(reach=2, quad_samples=2)
    final = factors[-1]
    graph_limit = build_distance_graph(conformal_metric(limit), stencil)
    graph_final = build_distance_graph(conformal_metric(final), stencil)
    ratios = []
    for a, b in pairs:
        d_lim, _ = shortest_distance(graph_limit, a, b)
        d_fin, _ = shortest_distance(graph_final, a, b)
        if d_fin <= 0:
            raise GridError("pair endpoints snap to the same node")
        ratios.append(d_lim / d_fin)

    radius = max(ball.radius, 2.0 * max(dom.spacing))
    mass_final = atom_masses(final, [ball.center], [radius]).atom_estimates[0]
    mass_limit = atom_masses(limit, [ball.center], [radius]).atom_estimates[0]
    return DistanceRatioReport(
        pairs=tuple(
            (tuple(float(c) for c in a), tuple(float(c) for c in b)) for a, b in pairs
        ),
        ratios=tuple(float(r) for r in ratios),
        max_ratio=float(max(ratios)),
        ball=ball,
        ball_mass_final=float(mass_final),
        ball_mass_limit=float(mass_limit),
    )
