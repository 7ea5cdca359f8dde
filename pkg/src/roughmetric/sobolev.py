"""Ball averages, Sobolev norms, concentration scans, and Vitali covers.

The central objects are the r-average ``u_{x,r}`` (mean of a field over the
ball ``B_r(x)``), its centered limit as ``r`` shrinks through a radius
schedule, and the superlevel machinery that certifies a Hausdorff-content
bound for the set where that limit is large: points where the averaged field
exceeds ``t`` concentrate gradient energy at some scheduled radius, the
concentration balls are thinned to a disjoint family by greedy Vitali
selection, and the 5x enlargements of the survivors cover every detected
node.  The certified bound ``(5^s omega_s / t1) * integral |grad u|^p`` then
dominates the summed content of the enlarged balls by construction.

Whole-grid scans evaluate ball sums for every node at once via FFT
convolution; single probes gather nodes directly.  Both use the same
membership rule (node centers within the radius, minimum image on the torus).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .grid import (
    Domain,
    GridError,
    MetricField,
    ScalarField,
    ball_node_indices,
    gradient,
    integrate,
    region_quadrature,
    unit_ball_volume,
)

__all__ = [
    "AverageProbe",
    "SobolevReport",
    "ConcentrationScan",
    "VitaliSelection",
    "CoverReport",
    "AeConvergenceReport",
    "DEFAULT_OSC_TOL",
    "DEFAULT_LAMBDA_PRIME",
    "default_radii",
    "r_average",
    "ball_average_fields",
    "centered_average_limit",
    "sobolev_norms",
    "metric_w1p_distance",
    "concentration_scan",
    "vitali_cover",
    "superlevel_cover",
    "curve_trace",
    "interpolate_at",
    "ae_convergence_check",
]

DEFAULT_OSC_TOL = 1e-3
DEFAULT_LAMBDA_PRIME = 8.0
ENLARGEMENT = 5.0


def _max_spacing(domain: Domain) -> float:
    return max(domain.spacing)


def default_radii(
    domain: Domain,
    r_max: float | None = None,
    ratio: float = 0.5,
    min_count: int = 6,
) -> tuple[float, ...]:
    """Geometric radius schedule from ``r_max`` down to the 2h floor.

    The schedule is strictly decreasing with factor ``ratio`` and stops at the
    smallest radius still >= twice the coarsest spacing.  Raises if fewer than
    ``min_count`` radii fit (the grid is too coarse to probe averages).
    """
    if not 0 < ratio < 1:
        raise GridError(f"radius ratio must be in (0,1), got {ratio}")
    floor = 2.0 * _max_spacing(domain)
    if r_max is None:
        r_max = min(domain.extent) / 4.0
    if r_max < floor * (1.0 - 1e-12):
        raise GridError(
            f"r_max={r_max:.4g} is below the 2h floor {floor:.4g}; grid too coarse"
        )
    radii = []
    r = float(r_max)
    while r >= floor * (1.0 - 1e-12):
        radii.append(r)
        r *= ratio
    if len(radii) < min_count:
        # widen the ratio so a geometric schedule still spans [2h, r_max]
        fitted = (floor / r_max) ** (1.0 / (min_count - 1))
        radii = [float(r_max) * fitted**i for i in range(min_count - 1)]
        radii.append(floor)
    return tuple(radii)


def r_average(u: ScalarField, center: Sequence[float], radius: float) -> float:
    """Mean of ``u`` over the non-flagged nodes of ``B_radius(center)``.

    The radius must be at least twice the coarsest grid spacing and the ball
    must contain at least one non-singular node.
    """
    dom = u.domain
    if radius < 2.0 * _max_spacing(dom) * (1.0 - 1e-12):
        raise GridError(
            f"average radius {radius:.4g} is below the 2h floor "
            f"{2.0 * _max_spacing(dom):.4g}"
        )
    idx = ball_node_indices(dom, center, radius)
    if idx.size:
        flags = u.flagged.ravel()[idx]
        vals = u.values.ravel()[idx][~flags]
    else:
        vals = np.empty(0)
    if vals.size == 0:
        raise GridError(
            f"ball at {tuple(float(c) for c in center)} radius {radius:.4g} "
            "contains no non-singular node"
        )
    return float(np.mean(vals))


def _ball_kernel(domain: Domain, radius: float) -> np.ndarray:
    """Centered indicator kernel of lattice offsets within ``radius``."""
    reach = [int(math.floor(radius / h)) for h in domain.spacing]
    for a, (k, r) in enumerate(zip(reach, domain.resolution)):
        if 2 * k + 1 > r:
            raise GridError(
                f"scan radius {radius:.4g} needs a {2 * k + 1}-wide window on axis "
                f"{a} but the grid has only {r} nodes"
            )
    axes = [np.arange(-k, k + 1) * h for k, h in zip(reach, domain.spacing)]
    grids = np.meshgrid(*axes, indexing="ij")
    dist2 = sum(g * g for g in grids)
    return (dist2 <= radius * radius).astype(np.float64)


def _convolve(domain: Domain, values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    if domain.periodic:
        pad = np.zeros(domain.shape, dtype=np.float64)
        slices = tuple(slice(0, k) for k in kernel.shape)
        pad[slices] = kernel
        shift = tuple(-(k // 2) for k in kernel.shape)
        pad = np.roll(pad, shift, axis=tuple(range(domain.dim)))
        axes = tuple(range(domain.dim))
        out = np.fft.irfftn(
            np.fft.rfftn(values) * np.fft.rfftn(pad), s=domain.shape, axes=axes
        )
        return out
    return fftconvolve(values, kernel, mode="same")


def ball_average_fields(
    u: ScalarField, radii: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Ball averages of ``u`` at every node for each radius.

    Returns ``(averages, counts)`` with shapes ``(len(radii), *grid)``.
    Flagged nodes are excluded from both numerator and denominator; entries
    where a ball holds no usable node are NaN.
    """
    dom = u.domain
    ok = (~u.flagged).astype(np.float64)
    masked = np.where(u.flagged, 0.0, u.values)
    avgs = np.empty((len(radii),) + dom.shape, dtype=np.float64)
    counts = np.empty_like(avgs)
    for k, r in enumerate(radii):
        kernel = _ball_kernel(dom, float(r))
        num = _convolve(dom, masked, kernel)
        den = _convolve(dom, ok, kernel)
        den = np.round(den)
        counts[k] = den
        with np.errstate(invalid="ignore", divide="ignore"):
            avgs[k] = np.where(den > 0, num / np.maximum(den, 1.0), np.nan)
    return avgs, counts


@dataclass(frozen=True)
class AverageProbe:
    """r-averages of a field at one point along a shrinking radius schedule."""

    center: tuple[float, ...]
    radii: tuple[float, ...]
    averages: tuple[float, ...]
    oscillation: float
    osc_tol: float
    limit: float | None
    oscillatory: bool


def _tail_oscillation(averages: Sequence[float]) -> float:
    # total variation in excess of the net drift: zero for monotone settling
    # (whatever its rate), of order the swing amplitude for alternation
    m = len(averages)
    tail = list(averages)[m - math.ceil(m / 2):]
    variation = sum(abs(b - a) for a, b in zip(tail, tail[1:]))
    return float(variation - abs(tail[-1] - tail[0]))


def centered_average_limit(
    u: ScalarField,
    center: Sequence[float],
    radii: Sequence[float] | None = None,
    osc_tol: float = DEFAULT_OSC_TOL,
) -> AverageProbe:
    """Probe the centered average limit of ``u`` at ``center``.

    Averages are taken at each scheduled radius (strictly decreasing, at
    least six entries, smallest >= 2h).  Over the last ``ceil(m/2)`` radii
    the total variation in excess of the net drift measures genuine
    oscillation (monotone settling scores zero); beyond ``osc_tol`` the probe
    is flagged oscillatory and carries no limit, otherwise the limit is the
    average at the smallest radius.
    """
    dom = u.domain
    if radii is None:
        radii = default_radii(dom)
    radii = tuple(float(r) for r in radii)
    if len(radii) < 6:
        raise GridError(f"radius schedule needs at least 6 entries, got {len(radii)}")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise GridError("radius schedule must be strictly decreasing")
    if radii[-1] < 2.0 * _max_spacing(dom) * (1.0 - 1e-12):
        raise GridError(
            f"smallest radius {radii[-1]:.4g} is below the 2h floor "
            f"{2.0 * _max_spacing(dom):.4g}"
        )
    averages = tuple(r_average(u, center, r) for r in radii)
    osc = _tail_oscillation(averages)
    oscillatory = osc > osc_tol
    return AverageProbe(
        center=tuple(float(c) for c in center),
        radii=radii,
        averages=averages,
        oscillation=osc,
        osc_tol=osc_tol,
        limit=None if oscillatory else averages[-1],
        oscillatory=oscillatory,
    )


@dataclass(frozen=True)
class SobolevReport:
    """L^p and W^{1,p} norms of a scalar field."""

    p: float
    lp_norm: float
    grad_lp_norm: float
    w1p_norm: float

    def to_records(self) -> list[str]:
        return [
            f"p={self.p!r}",
            f"lp_norm={self.lp_norm!r}",
            f"grad_lp_norm={self.grad_lp_norm!r}",
            f"w1p_norm={self.w1p_norm!r}",
        ]


def _lp_power(u: ScalarField, p: float) -> float:
    """integral of |u|^p over non-flagged nodes."""
    vals = np.abs(np.where(u.flagged, 0.0, u.values)) ** p
    return float(np.sum(vals) * u.domain.cell_volume)


def sobolev_norms(u: ScalarField, p: float) -> SobolevReport:
    """Midpoint-quadrature L^p, gradient L^p, and combined W^{1,p} norms."""
    if p < 1:
        raise GridError(f"p must be >= 1, got {p}")
    lp_pow = _lp_power(u, p)
    grad = gradient(u)
    mag = grad.magnitude()
    grad_pow = _lp_power(mag, p)
    return SobolevReport(
        p=float(p),
        lp_norm=lp_pow ** (1.0 / p),
        grad_lp_norm=grad_pow ** (1.0 / p),
        w1p_norm=(lp_pow + grad_pow) ** (1.0 / p),
    )


def metric_w1p_distance(g1: MetricField, g2: MetricField, p: float) -> float:
    """W^{1,p} distance between metric fields.

    Sums the W^{1,p} powers of every stored component difference (and of the
    inverse component differences) and returns the larger of the two combined
    norms.
    """
    if g1.domain is not g2.domain and g1.domain != g2.domain:
        raise GridError("metric fields live on different domains")
    flags = g1.flagged | g2.flagged

    def combined(c1: np.ndarray, c2: np.ndarray) -> float:
        total = 0.0
        for k in range(c1.shape[-1]):
            diff = ScalarField(g1.domain, c1[..., k] - c2[..., k], flags)
            total += _lp_power(diff, p)
            total += _lp_power(gradient(diff).magnitude(), p)
        return total ** (1.0 / p)

    direct = combined(g1.comps, g2.comps)
    inverse = combined(g1.inverse_comps, g2.inverse_comps)
    return max(direct, inverse)


@dataclass(frozen=True)
class ConcentrationScan:
    """Nodes whose gradient energy concentrates at a scheduled radius.

    For each node the scan records the largest radius ``r0`` with
    ``r0^{-s} * integral_{B_r0} |grad u|^p >= t1``, when one exists.
    """

    p: float
    s: float
    t1: float
    radii: tuple[float, ...]
    node_indices: np.ndarray
    node_radii: np.ndarray

    def radius_of(self, flat_index: int) -> float | None:
        hit = np.nonzero(self.node_indices == flat_index)[0]
        if hit.size == 0:
            return None
        return float(self.node_radii[hit[0]])


def concentration_scan(
    u: ScalarField,
    p: float,
    s: float,
    t1: float,
    radii: Sequence[float] | None = None,
) -> ConcentrationScan:
    """Scan every node for gradient-energy concentration.

    Requires ``n - p < s < n``.  The energy density ``|grad u|^p`` is
    integrated over balls of each scheduled radius by FFT convolution; the
    largest radius passing ``r^{-s} I_r >= t1`` is kept per node.
    """
    dom = u.domain
    n = dom.dim
    if not (n - p < s < n):
        raise GridError(f"need n-p < s < n, got n={n}, p={p}, s={s}")
    if t1 <= 0:
        raise GridError(f"concentration threshold t1 must be positive, got {t1}")
    if radii is None:
        radii = default_radii(dom)
    radii = tuple(sorted((float(r) for r in radii), reverse=True))
    grad = gradient(u)
    density = np.where(grad.flagged, 0.0, grad.magnitude().values ** p)
    cell = dom.cell_volume
    best = np.full(dom.shape, np.nan)
    for r in radii:  # descending: first hit is the largest radius
        kernel = _ball_kernel(dom, r)
        ball_int = _convolve(dom, density, kernel) * cell
        hit = (ball_int >= t1 * r**s) & np.isnan(best)
        best[hit] = r
    found = ~np.isnan(best)
    idx = np.flatnonzero(found.ravel())
    return ConcentrationScan(
        p=float(p),
        s=float(s),
        t1=float(t1),
        radii=radii,
        node_indices=idx,
        node_radii=best.ravel()[idx],
    )


@dataclass(frozen=True)
class VitaliSelection:
    """Greedy disjoint subfamily of candidate balls (radius desc, index asc)."""

    centers: np.ndarray
    radii: np.ndarray
    candidate_indices: np.ndarray


def vitali_cover(
    domain: Domain, centers: np.ndarray, radii: np.ndarray
) -> VitaliSelection:
    """Greedy Vitali selection over candidate balls.

    Candidates are visited in (radius descending, original index ascending)
    order; a ball is kept iff it is strictly disjoint from every ball already
    kept (center distance > sum of radii, minimum image on the torus).  Every
    candidate center then lies within 5x the radius of some kept ball.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, domain.dim)
    radii = np.asarray(radii, dtype=np.float64).reshape(-1)
    if centers.shape[0] != radii.shape[0]:
        raise GridError("candidate centers and radii length mismatch")
    if np.any(radii <= 0):
        raise GridError("candidate radii must be positive")
    order = np.lexsort((np.arange(radii.size), -radii))
    kept: list[int] = []
    ext = np.asarray(domain.extent)
    for i in order:
        c = centers[i]
        ok = True
        if kept:
            d = centers[kept] - c
            if domain.periodic:
                d = d - ext * np.round(d / ext)
            dist = np.sqrt(np.sum(d * d, axis=1))
            ok = bool(np.all(dist > radii[kept] + radii[i]))
        if ok:
            kept.append(int(i))
    kept_arr = np.asarray(kept, dtype=np.int64)
    return VitaliSelection(
        centers=centers[kept_arr],
        radii=radii[kept_arr],
        candidate_indices=kept_arr,
    )


@dataclass(frozen=True)
class CoverReport:
    """Certified Hausdorff-content bound for a superlevel set.

    ``detected`` holds the nodes whose centered average limit exceeds the
    threshold; each carries the concentration radius found for it.  Balls in
    ``selected_*`` are pairwise disjoint; their 5x enlargements cover every
    detected node, and ``content_bound <= certified_bound`` holds by
    construction because each selected ball traps at least ``t1 * r^s`` of
    gradient energy.
    """

    t: float
    t1: float
    p: float
    s: float
    lambda_prime: float
    enlargement: float
    detected_indices: np.ndarray
    detected_radii: np.ndarray
    oscillatory_indices: np.ndarray
    unconcentrated_indices: np.ndarray
    selected_centers: np.ndarray
    selected_radii: np.ndarray
    content_bound: float
    certified_bound: float
    energy: float

    def to_records(self) -> list[str]:
        return [
            f"t={self.t!r}",
            f"t1={self.t1!r}",
            f"p={self.p!r}",
            f"s={self.s!r}",
            f"lambda_prime={self.lambda_prime!r}",
            f"enlargement={self.enlargement!r}",
            f"detected_count={self.detected_indices.size}",
            f"oscillatory_count={self.oscillatory_indices.size}",
            f"unconcentrated_count={self.unconcentrated_indices.size}",
            f"selected_count={self.selected_radii.size}",
            f"content_bound={self.content_bound!r}",
            f"certified_bound={self.certified_bound!r}",
            f"energy={self.energy!r}",
        ]


def superlevel_cover(
    u: ScalarField,
    t: float,
    p: float,
    s: float,
    lambda_prime: float = DEFAULT_LAMBDA_PRIME,
    radii: Sequence[float] | None = None,
    osc_tol: float = DEFAULT_OSC_TOL,
) -> CoverReport:
    """Cover the set where the centered average limit of ``u`` exceeds ``t``.

    Requires the smallness hypothesis ``mean |u| <= t * omega_n / 4`` (else
    the superlevel set need not be content-small and the call errors out) and
    ``n - p < s < n``.  Detection, concentration, and Vitali selection run on
    the shared radius schedule; the certified bound is
    ``(5^s omega_s / t1) * integral |grad u|^p`` with ``t1 = (t/Lambda')^p``.
    """
    dom = u.domain
    n = dom.dim
    if t <= 0:
        raise GridError(f"threshold t must be positive, got {t}")
    if lambda_prime <= 0:
        raise GridError(f"Lambda' must be positive, got {lambda_prime}")
    omega_n = unit_ball_volume(n)
    mean_abs = integrate(
        ScalarField(dom, np.abs(u.values), u.flagged)
    ) / region_quadrature(u).volume
    allowed = t * omega_n / 4.0
    if mean_abs > allowed:
        raise GridError(
            f"L1 smallness hypothesis fails: mean |u| = {mean_abs:.6g} exceeds "
            f"t * omega_n / 4 = {allowed:.6g}"
        )
    if radii is None:
        radii = default_radii(dom)
    radii = tuple(sorted((float(r) for r in radii), reverse=True))
    if len(radii) < 6:
        raise GridError(f"radius schedule needs at least 6 entries, got {len(radii)}")

    avgs, _ = ball_average_fields(u, radii)
    m = len(radii)
    tail = avgs[m - math.ceil(m / 2):]
    osc = np.nanmax(tail, axis=0) - np.nanmin(tail, axis=0)
    oscillatory = osc > osc_tol
    limit = avgs[-1]
    usable = ~u.flagged & ~oscillatory & np.isfinite(limit)
    detected_mask = usable & (np.abs(limit) > t)
    detected = np.flatnonzero(detected_mask.ravel())
    oscillatory_idx = np.flatnonzero((oscillatory & ~u.flagged).ravel())

    t1 = (t / lambda_prime) ** p
    scan = concentration_scan(u, p, s, t1, radii)
    radius_by_node = dict(zip(scan.node_indices.tolist(), scan.node_radii.tolist()))
    det_radii = np.array([radius_by_node.get(int(i), np.nan) for i in detected])
    have = ~np.isnan(det_radii)
    unconcentrated = detected[~have]
    cand_idx = detected[have]
    cand_radii = det_radii[have]
    cand_centers = dom.positions[cand_idx]

    if cand_idx.size:
        sel = vitali_cover(dom, cand_centers, cand_radii)
        sel_centers, sel_radii = sel.centers, sel.radii
    else:
        sel_centers = np.empty((0, dom.dim))
        sel_radii = np.empty(0)

    omega_s = unit_ball_volume(s) if s > 0 else float("nan")
    content = float(omega_s * np.sum((ENLARGEMENT * sel_radii) ** s))
    grad = gradient(u)
    energy = _lp_power(grad.magnitude(), p)
    certified = float(ENLARGEMENT**s * omega_s / t1 * energy)
    return CoverReport(
        t=float(t),
        t1=float(t1),
        p=float(p),
        s=float(s),
        lambda_prime=float(lambda_prime),
        enlargement=ENLARGEMENT,
        detected_indices=detected,
        detected_radii=det_radii,
        oscillatory_indices=oscillatory_idx,
        unconcentrated_indices=unconcentrated,
        selected_centers=sel_centers,
        selected_radii=sel_radii,
        content_bound=content,
        certified_bound=certified,
        energy=energy,
    )


# ---------------------------------------------------------------------------
# traces along curves
# ---------------------------------------------------------------------------


def interpolate_at(
    u: ScalarField, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation of ``u`` at coordinate points.

    Returns ``(values, tainted)`` where ``tainted`` marks points whose
    interpolation cell touches a flagged node.  Outside the outermost cell
    centers of a box the field extends constantly; on the torus indices wrap.
    """
    dom = u.domain
    pts = np.asarray(points, dtype=np.float64).reshape(-1, dom.dim)
    frac_idx = np.empty_like(pts)
    for a in range(dom.dim):
        frac_idx[:, a] = pts[:, a] / dom.spacing[a] - 0.5
    base = np.floor(frac_idx).astype(np.int64)
    w = frac_idx - base
    vals = np.zeros(pts.shape[0])
    tainted = np.zeros(pts.shape[0], dtype=bool)
    res = np.asarray(dom.resolution)
    if not dom.periodic:
        # clamp so boundary cells extend constantly past the outermost centers
        for a in range(dom.dim):
            lo = base[:, a] < 0
            hi = base[:, a] > res[a] - 2
            w[lo, a] = 0.0
            base[lo, a] = 0
            w[hi, a] = 1.0
            base[hi, a] = res[a] - 2
    for corner in range(2**dom.dim):
        bits = [(corner >> a) & 1 for a in range(dom.dim)]
        idx = base + np.asarray(bits)
        if dom.periodic:
            idx = idx % res
        weight = np.ones(pts.shape[0])
        for a in range(dom.dim):
            weight = weight * (w[:, a] if bits[a] else (1.0 - w[:, a]))
        flat = np.ravel_multi_index(idx.T, dom.resolution)
        vals += weight * u.values.ravel()[flat]
        tainted |= u.flagged.ravel()[flat] & (weight > 0)
    return vals, tainted


def curve_trace(
    u: ScalarField,
    polyline: Sequence[Sequence[float]],
    samples_per_segment: int = 8,
) -> tuple[np.ndarray, float]:
    """Sampled values of ``u`` along a polyline and their line integral.

    Each segment is sampled at ``samples_per_segment >= 4`` midpoints with
    multilinear interpolation; samples whose cell touches a flagged node fall
    back to a radius-2h ball average.  The polyline must stay inside the
    domain.  Integration is composite midpoint per segment.
    """
    dom = u.domain
    if samples_per_segment < 4:
        raise GridError(
            f"need at least 4 samples per segment, got {samples_per_segment}"
        )
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != dom.dim:
        raise GridError("polyline must be a sequence of at least two points")
    for q in pts:
        if not dom.contains(q):
            raise GridError(f"polyline point {tuple(q)} lies outside the domain")
    total = 0.0
    traced: list[np.ndarray] = []
    fallback_r = 2.0 * _max_spacing(dom)
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        if length == 0.0:
            continue
        tpar = (np.arange(samples_per_segment) + 0.5) / samples_per_segment
        samples = a[None, :] + tpar[:, None] * seg[None, :]
        vals, tainted = interpolate_at(u, samples)
        for i in np.flatnonzero(tainted):
            vals[i] = r_average(u, samples[i], fallback_r)
        traced.append(vals)
        total += float(np.sum(vals)) * length / samples_per_segment
    sampled = np.concatenate(traced) if traced else np.zeros(0)
    return sampled, total


# ---------------------------------------------------------------------------
# almost-everywhere convergence of centered averages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AeConvergenceReport:
    """Probewise convergence of centered averages along a field sequence."""

    p: float
    norms: tuple[float, ...]
    schedule: tuple[float, ...]
    schedule_satisfied: bool
    probe_points: tuple[tuple[float, ...], ...]
    excluded_probes: tuple[int, ...]
    deviations: np.ndarray  # (k, probes) |u_k hat - u hat|
    sup_deviation: tuple[float, ...]
    converged_fraction: float
    tol: float


def ae_convergence_check(
    sequence: Sequence[ScalarField],
    u: ScalarField,
    p: float,
    probes: Sequence[Sequence[float]],
    radii: Sequence[float] | None = None,
    s: float | None = None,
    t1: float | None = None,
    osc_tol: float = DEFAULT_OSC_TOL,
    tol: float = 1e-2,
) -> AeConvergenceReport:
    """Check centered-average convergence ``u_k -> u`` at probe points.

    W^{1,p} norms of the differences are recorded against the geometric
    ``2^{-k}`` schedule (scaled to the first term); whether they satisfy it is
    reported, not enforced.  Probes falling in a concentration set of some
    difference (when ``s``/``t1`` are given) or oscillating at the limit field
    are excluded.  The remaining probes must approach the limit averages; the
    report carries per-step sup deviations and the fraction of probes whose
    final deviation is below ``tol``.
    """
    dom = u.domain
    if radii is None:
        radii = default_radii(dom)
    norms = tuple(
        sobolev_norms(
            ScalarField(dom, uk.values - u.values, uk.flagged | u.flagged), p
        ).w1p_norm
        for uk in sequence
    )
    scale = norms[0] if norms and norms[0] > 0 else 1.0
    schedule = tuple(scale * 2.0 ** (-k) for k in range(len(norms)))
    satisfied = all(nk <= sk * (1 + 1e-9) for nk, sk in zip(norms, schedule))

    excluded: set[int] = set()
    if s is not None and t1 is not None:
        for uk in sequence:
            diff = ScalarField(dom, uk.values - u.values, uk.flagged | u.flagged)
            scan = concentration_scan(diff, p, s, t1, radii)
            for j, q in enumerate(probes):
                node = dom.nearest_node(q)
                if scan.radius_of(node) is not None:
                    excluded.add(j)
    base_probes = []
    for j, q in enumerate(probes):
        if j in excluded:
            continue
        probe = centered_average_limit(u, q, radii, osc_tol)
        if probe.oscillatory:
            excluded.add(j)
        else:
            base_probes.append((j, probe.limit))
    devs = np.full((len(sequence), len(base_probes)), np.nan)
    for k, uk in enumerate(sequence):
        for col, (j, base_limit) in enumerate(base_probes):
            pk = centered_average_limit(uk, probes[j], radii, osc_tol)
            # transient oscillation at one member only blanks that entry;
            # the probe stays in play for later members
            if not pk.oscillatory:
                devs[k, col] = abs(pk.limit - base_limit)
    sup_dev = tuple(
        float(np.nanmax(devs[k])) if devs.shape[1] and np.any(np.isfinite(devs[k])) else float("nan")
        for k in range(len(sequence))
    )
    if devs.shape[1]:
        final = devs[-1]
        converged = float(np.mean(np.isfinite(final) & (final <= tol)))
    else:
        converged = 1.0
    return AeConvergenceReport(
        p=float(p),
        norms=norms,
        schedule=schedule,
        schedule_satisfied=satisfied,
        probe_points=tuple(tuple(float(c) for c in q) for q in probes),
        excluded_probes=tuple(sorted(excluded)),
        deviations=devs,
        sup_deviation=sup_dev,
        converged_fraction=converged,
        tol=float(tol),
    )
