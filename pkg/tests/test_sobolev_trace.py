"""Averages, norms, concentration detection, Vitali covers, traces."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughmetric import (
    Ball,
    GridError,
    ScalarField,
    ae_convergence_check,
    centered_average_limit,
    concentration_scan,
    curve_trace,
    default_radii,
    make_domain,
    metric_w1p_distance,
    r_average,
    sample_scalar,
    sobolev_norms,
    superlevel_cover,
    vitali_cover,
)
from roughmetric.families import (
    enveloped_pole_scalar,
    identity_metric,
    oscillation_metric,
)
from roughmetric.grid import unit_ball_volume


@pytest.fixture(scope="module")
def torus256():
    return make_domain("torus", 2, 2.0, 256)


# ---------------------------------------------------------------------------
# r-averages
# ---------------------------------------------------------------------------


def test_r_average_constant(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.full(x.shape, 5.0))
    assert r_average(u, (0.3, 0.7), 0.2) == pytest.approx(5.0, abs=1e-12)


def test_r_average_odd_function(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: x - 0.5)
    assert abs(r_average(u, (0.5, 0.5), 0.25)) <= 1e-10


def test_r_average_radial_closed_form(torus256):
    # mean of |x - c| over B_1(c) in 2D is 2/3
    c = (1.0, 1.0)
    u = sample_scalar(
        torus256, lambda x, y: np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2)
    )
    h = torus256.spacing[0]
    assert r_average(u, c, 1.0) == pytest.approx(2.0 / 3.0, abs=4 * h)


def test_r_average_linear_and_monotone(unit_torus):
    rng = np.random.default_rng(7)
    u = sample_scalar(unit_torus, lambda x, y: np.sin(2 * np.pi * x) * y)
    w = sample_scalar(unit_torus, lambda x, y: np.cos(2 * np.pi * y) + x)
    a, b = 1.7, -0.4
    combo = ScalarField(unit_torus, a * u.values + b * w.values, u.flagged)
    center, radius = (0.42, 0.58), 0.2
    lhs = r_average(combo, center, radius)
    rhs = a * r_average(u, center, radius) + b * r_average(w, center, radius)
    assert lhs == pytest.approx(rhs, abs=1e-12)

    bigger = ScalarField(unit_torus, u.values + np.abs(rng.normal(size=unit_torus.shape)), u.flagged)
    assert r_average(u, center, radius) <= r_average(bigger, center, radius) + 1e-12


# ---------------------------------------------------------------------------
# centered average limits
# ---------------------------------------------------------------------------


def test_average_limit_continuous_field(torus256):
    u = sample_scalar(torus256, lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y))
    x = (0.77, 1.21)
    probe = centered_average_limit(u, x, default_radii(torus256), osc_tol=1e-3)
    exact = np.sin(np.pi * x[0]) * np.cos(np.pi * x[1])
    assert not probe.oscillatory
    assert probe.limit == pytest.approx(exact, abs=0.02)


def test_average_limit_jump_midpoint(torus256):
    u = sample_scalar(torus256, lambda x, y: np.sign(x - 1.0))
    probe = centered_average_limit(u, (1.0, 0.9), default_radii(torus256), osc_tol=0.05)
    assert not probe.oscillatory
    assert probe.limit == pytest.approx(0.0, abs=0.05)


def test_average_limit_flags_log_oscillator(torus256):
    # phase sin(pi log2 r) alternates between consecutive dyadic radii, so
    # the average sequence cannot settle
    c = torus256.node_position(torus256.nearest_node((1.0, 1.0)))

    def gen(x, y):
        r = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2)
        with np.errstate(divide="ignore"):
            return np.where(r == 0, 0.0, np.sin(np.pi * np.log2(np.maximum(r, 1e-300))))

    u = sample_scalar(torus256, gen)
    probe = centered_average_limit(u, c, default_radii(torus256), osc_tol=1e-3)
    assert probe.oscillatory
    assert probe.limit is None


def test_default_radii_dyadic_when_room(torus256):
    radii = default_radii(torus256)
    ratios = [radii[i] / radii[i + 1] for i in range(len(radii) - 1)]
    assert all(r == pytest.approx(2.0, rel=1e-12) for r in ratios)
    assert radii[-1] == pytest.approx(2.0 * max(torus256.spacing), rel=1e-12)


def test_default_radii_geometric_on_coarse_grid(unit_torus):
    # six probes cannot be dyadic between extent/4 and 2h here; the schedule
    # stays geometric with a fitted ratio instead
    radii = default_radii(unit_torus)
    assert len(radii) >= 6
    ratios = [radii[i] / radii[i + 1] for i in range(len(radii) - 1)]
    assert all(r == pytest.approx(ratios[0], rel=1e-9) for r in ratios)
    assert radii[-1] >= 2.0 * max(unit_torus.spacing) * (1 - 1e-12)


# ---------------------------------------------------------------------------
# concentration + Vitali
# ---------------------------------------------------------------------------


def test_concentration_empty_for_smooth_field(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.sin(2 * np.pi * x))
    scan = concentration_scan(u, p=1.5, s=1.0, t1=1e3)
    assert len(scan.node_indices) == 0


def test_concentration_detects_pole(torus256):
    c = torus256.node_position(torus256.nearest_node((1.0, 1.0)))
    h = torus256.spacing[0]

    def gen(x, y):
        r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2
        return (r2 + (2 * h) ** 2) ** (-0.25)

    u = sample_scalar(torus256, gen)
    # t1 ~ pole_energy / (few h): only balls hugging the pole pass
    scan = concentration_scan(u, p=1.5, s=1.0, t1=60.0)
    assert len(scan.node_indices) > 0
    positions = torus256.positions[np.asarray(scan.node_indices)]
    dist = np.linalg.norm(positions - np.asarray(c), axis=1)
    assert float(dist.max()) <= 8 * h


def test_concentration_affine_below_threshold(unit_box):
    # box, not torus: 3*x would have a seam jump under wrapping
    u = sample_scalar(unit_box, lambda x, y: 3.0 * x)
    radii = default_radii(unit_box)
    # affine: ball energy is at most |grad|^p * omega_n * r^n (clipped at walls)
    ceiling = max(3.0**1.5 * unit_ball_volume(2) * r ** (2 - 1.0) for r in radii)
    scan = concentration_scan(u, p=1.5, s=1.0, t1=1.01 * ceiling, radii=radii)
    assert len(scan.node_indices) == 0


def test_vitali_single_candidate(unit_torus):
    sel = vitali_cover(unit_torus, np.array([[0.5, 0.5]]), np.array([0.1]))
    assert sel.radii.tolist() == [0.1]
    assert sel.centers.tolist() == [[0.5, 0.5]]


def test_vitali_two_disjoint(unit_torus):
    sel = vitali_cover(
        unit_torus, np.array([[0.2, 0.2], [0.8, 0.8]]), np.array([0.1, 0.05])
    )
    assert len(sel.radii) == 2


def test_vitali_random_candidates_covered(unit_torus):
    rng = np.random.default_rng(42)
    centers = rng.uniform(0, 1, size=(100, 2))
    radii = rng.uniform(0.01, 0.12, size=100)
    sel = vitali_cover(unit_torus, centers, radii)
    # selected balls pairwise disjoint
    for i in range(len(sel.radii)):
        for j in range(i + 1, len(sel.radii)):
            gap = unit_torus.distance(sel.centers[i], sel.centers[j])
            assert gap > sel.radii[i] + sel.radii[j]
    # every candidate ball sits inside the 5x enlargement of a selected ball
    # with radius at least its own
    for c, r in zip(centers, radii):
        ok = False
        for cs, rs in zip(sel.centers, sel.radii):
            if rs >= r - 1e-12 and unit_torus.distance(c, cs) + r <= 5 * rs + 1e-12:
                ok = True
                break
        assert ok


# ---------------------------------------------------------------------------
# superlevel covers
# ---------------------------------------------------------------------------


def test_cover_zero_field(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.zeros(x.shape))
    rep = superlevel_cover(u, t=1.0, p=1.5, s=1.0)
    assert rep.detected_indices.size == 0
    assert rep.content_bound == 0.0


def test_cover_smooth_below_threshold(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: 0.2 * np.sin(2 * np.pi * x))
    rep = superlevel_cover(u, t=1.0, p=1.5, s=1.0)
    assert rep.detected_indices.size == 0


def _pole_field(dom, center, a=0.5, envelope=0.35):
    h = max(dom.spacing)

    def gen(x, y):
        r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
        return (r2 + (2 * h) ** 2) ** (-a / 2) * np.exp(-r2 / (2 * envelope**2))

    return sample_scalar(dom, gen)


def test_cover_concentrates_at_pole(torus256):
    u = _pole_field(torus256, (1.0, 1.0))
    rep = superlevel_cover(u, t=1.2, p=1.5, s=1.0, osc_tol=0.08)
    assert rep.detected_indices.size > 0
    assert rep.content_bound <= rep.certified_bound
    positions = torus256.positions[rep.detected_indices]
    dist = np.linalg.norm(positions - np.array([1.0, 1.0]), axis=1)
    assert float(dist.max()) <= 0.5


def test_cover_threshold_monotone(torus256):
    u = _pole_field(torus256, (1.0, 1.0))
    hi = superlevel_cover(u, t=1.6, p=1.5, s=1.0, osc_tol=0.08)
    lo = superlevel_cover(u, t=0.8, p=1.5, s=1.0, osc_tol=0.08)
    assert set(hi.detected_indices.tolist()) <= set(lo.detected_indices.tolist())


def test_cover_requires_l1_smallness(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.full(x.shape, 2.0))
    with pytest.raises(GridError, match="smallness"):
        superlevel_cover(u, t=0.5, p=1.5, s=1.0)


# ---------------------------------------------------------------------------
# Sobolev norms
# ---------------------------------------------------------------------------


def test_norms_constant(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.ones(x.shape))
    rep = sobolev_norms(u, p=2.0)
    assert rep.lp_norm == pytest.approx(1.0, abs=1e-12)
    assert rep.grad_lp_norm == 0.0


def test_norms_sine_fourier_oracle(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.sin(2 * np.pi * x))
    rep = sobolev_norms(u, p=2.0)
    assert rep.lp_norm == pytest.approx(np.sqrt(0.5), abs=1e-6)
    # central differences attenuate the mode by sin(2 pi h)/(2 pi h)
    assert rep.grad_lp_norm == pytest.approx(2 * np.pi * np.sqrt(0.5), rel=2e-3)


def test_norms_homogeneous(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.sin(2 * np.pi * x) + 0.3 * y)
    r1 = sobolev_norms(u, p=3.0)
    scaled = ScalarField(unit_torus, -2.5 * u.values, u.flagged)
    r2 = sobolev_norms(scaled, p=3.0)
    assert r2.lp_norm == pytest.approx(2.5 * r1.lp_norm, rel=1e-12)
    assert r2.grad_lp_norm == pytest.approx(2.5 * r1.grad_lp_norm, rel=1e-12)
    assert r2.w1p_norm == pytest.approx(2.5 * r1.w1p_norm, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_norm_triangle_inequality(seed):
    dom = make_domain("torus", 2, 1.0, 16)
    rng = np.random.default_rng(seed)
    u = ScalarField(dom, rng.normal(size=dom.shape), np.zeros(dom.shape, bool))
    w = ScalarField(dom, rng.normal(size=dom.shape), np.zeros(dom.shape, bool))
    s = ScalarField(dom, u.values + w.values, np.zeros(dom.shape, bool))
    for p in (1.5, 2.0, 3.0):
        lhs = sobolev_norms(s, p).w1p_norm
        rhs = sobolev_norms(u, p).w1p_norm + sobolev_norms(w, p).w1p_norm
        assert lhs <= rhs + 1e-10


# ---------------------------------------------------------------------------
# metric W^{1,p} distance
# ---------------------------------------------------------------------------


def test_metric_distance_self_zero(unit_torus):
    g = oscillation_metric(unit_torus, 2)
    assert metric_w1p_distance(g, g, p=2.0) == 0.0


def test_metric_distance_constant_closed_form(unit_torus):
    # id vs c^2 id on the unit torus: direct branch is |c^2-1| sqrt(2),
    # inverse branch |c^{-2}-1| sqrt(2); the larger wins
    gid = identity_metric(unit_torus)
    c = 2.0
    g = sample_metric_scaled(unit_torus, c * c)
    expect = max(abs(c * c - 1.0), abs(1.0 / (c * c) - 1.0)) * np.sqrt(2.0)
    assert metric_w1p_distance(gid, g, p=2.0) == pytest.approx(expect, rel=1e-12)


def sample_metric_scaled(dom, factor):
    from roughmetric import sample_metric

    def gen(*mesh):
        out = np.zeros(mesh[0].shape + (dom.dim, dom.dim))
        for ax in range(dom.dim):
            out[..., ax, ax] = factor
        return out

    return sample_metric(dom, gen)


def test_metric_distance_oscillation_monotone():
    dom = make_domain("torus", 2, 2.0, 64)
    gid = identity_metric(dom)
    vals = [metric_w1p_distance(oscillation_metric(dom, k), gid, p=2.0) for k in range(1, 7)]
    for a, b in zip(vals, vals[1:]):
        assert b <= a * 1.05
    # gradient term dominates: amplitude k^-2 times frequency k gives O(1/k)
    assert vals[-1] < 0.35 * vals[1]


# ---------------------------------------------------------------------------
# curve traces
# ---------------------------------------------------------------------------


def test_trace_constant_segment(unit_box):
    u = sample_scalar(unit_box, lambda x, y: np.full(x.shape, 2.5))
    _, integral = curve_trace(u, [(0.1, 0.4), (0.9, 0.4)], samples_per_segment=8)
    assert integral == pytest.approx(2.5 * 0.8, abs=1e-10)


def test_trace_affine_exact(unit_box):
    u = sample_scalar(unit_box, lambda x, y: x)
    samples, integral = curve_trace(u, [(0.0078125, 0.5), (0.9921875, 0.5)], samples_per_segment=64)
    # multilinear interpolation is exact for affine data
    assert integral == pytest.approx(0.5 * (0.9921875**2 - 0.0078125**2) / 0.984375 * 0.984375, abs=1e-6)
    assert len(samples) == 64


def test_trace_mollified_pole(unit_box):
    vals = {}
    for eps_mult in (2.0, 4.0):
        h = unit_box.spacing[0]
        eps = eps_mult * h

        def gen(x, y):
            r2 = (x - 0.5) ** 2 + (y - 0.5) ** 2
            return (r2 + eps**2) ** (-0.4)

        u = sample_scalar(unit_box, gen)
        _, coarse = curve_trace(u, [(0.1, 0.5), (0.9, 0.5)], samples_per_segment=32)
        _, dense = curve_trace(u, [(0.1, 0.5), (0.9, 0.5)], samples_per_segment=64)
        assert np.isfinite(coarse)
        assert coarse == pytest.approx(dense, rel=5e-3)
        vals[eps_mult] = coarse
    # heavier mollification flattens the spike, shrinking the integral
    assert vals[4.0] < vals[2.0]


def test_trace_rejects_outside_points(unit_box):
    u = sample_scalar(unit_box, lambda x, y: x)
    with pytest.raises(GridError):
        curve_trace(u, [(0.5, 0.5), (1.5, 0.5)])


# ---------------------------------------------------------------------------
# a.e. convergence of centered averages
# ---------------------------------------------------------------------------


def test_ae_constant_sequence(unit_torus):
    u = sample_scalar(unit_torus, lambda x, y: np.sin(np.pi * x) * y)
    probes = [(0.3, 0.3), (0.6, 0.8), (0.9, 0.1)]
    rep = ae_convergence_check([u, u, u], u, p=2.0, probes=probes, tol=1e-10)
    assert rep.converged_fraction == 1.0
    assert max(rep.sup_deviation) <= 1e-12


def test_ae_oscillation_sequence():
    dom = make_domain("torus", 2, 2.0, 128)
    base = sample_scalar(dom, lambda x, y: np.zeros(x.shape))
    seq = [
        sample_scalar(dom, lambda x, y, k=k: np.sin(k * np.pi * x) / k**2)
        for k in range(1, 7)
    ]
    probes = [(0.31, 0.41), (1.13, 0.77), (1.71, 1.23), (0.57, 1.91)]
    rep = ae_convergence_check(seq, base, p=2.0, probes=probes, tol=0.05, osc_tol=0.05)
    assert rep.converged_fraction == 1.0
    sups = [s for s in rep.sup_deviation if np.isfinite(s)]
    for a, b in zip(sups, sups[1:]):
        assert b <= a * 1.10
    assert sups[-1] <= 0.05


def test_ae_pole_probe_excluded():
    dom = make_domain("torus", 2, 2.0, 128)
    c = dom.node_position(dom.nearest_node((1.0, 1.0)))
    h = dom.spacing[0]
    limit = enveloped_pole_scalar(dom, c, a=0.5, eps=h / 16)
    seq = [
        enveloped_pole_scalar(dom, c, a=0.5, eps=(2.0**-k) * 32 * h)
        for k in range(4)
    ]
    probes = [tuple(c), (0.3, 0.3), (1.7, 0.5)]
    rep = ae_convergence_check(
        seq, limit, p=1.5, probes=probes, s=1.0, t1=0.5, tol=0.2, osc_tol=0.08
    )
    assert 0 in rep.excluded_probes
    assert rep.converged_fraction == 1.0
