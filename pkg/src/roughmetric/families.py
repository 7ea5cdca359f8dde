"""Parametrized field families shared by experiments and tests."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .grid import Domain, GridError, MetricField, ScalarField, sample_metric, sample_scalar

__all__ = [
    "identity_metric",
    "oscillation_metric",
    "oscillation_scalar",
    "random_spd_metric",
    "enveloped_pole_scalar",
]


def identity_metric(domain: Domain) -> MetricField:
    """The flat background metric."""
    eye = np.eye(domain.dim)

    def gen(*mesh: np.ndarray) -> np.ndarray:
        return np.broadcast_to(eye, mesh[0].shape + (domain.dim, domain.dim))

    return sample_metric(domain, gen)


def oscillation_metric(domain: Domain, k: int) -> MetricField:
    """Conformally oscillating metric (1 + k^{-2} sin(k pi x1)) * identity.

    The amplitude decays quadratically while the frequency grows, so the
    family approaches the identity in W^{1,p} but each member wiggles.  On an
    extent-2 torus every integer k keeps the factor periodic.
    """
    if k < 1:
        raise GridError(f"oscillation index must be >= 1, got {k}")

    def gen(*mesh: np.ndarray) -> np.ndarray:
        f = 1.0 + np.sin(k * np.pi * mesh[0]) / float(k) ** 2
        out = np.zeros(mesh[0].shape + (domain.dim, domain.dim))
        for ax in range(domain.dim):
            out[..., ax, ax] = f
        return out

    return sample_metric(domain, gen)


def oscillation_scalar(domain: Domain, k: int) -> ScalarField:
    """Scalar companion of the oscillation family, k^{-2} sin(k pi x1)."""
    if k < 1:
        raise GridError(f"oscillation index must be >= 1, got {k}")
    return sample_scalar(
        domain, lambda *mesh: np.sin(k * np.pi * mesh[0]) / float(k) ** 2
    )


def random_spd_metric(domain: Domain, seed: int, modes: int = 3) -> MetricField:
    """Seeded random smooth metric, positive definite by diagonal dominance.

    Each component is a low-order trigonometric polynomial whose amplitude
    budget keeps every matrix strictly diagonally dominant, so the smallest
    eigenvalue stays above 0.1 regardless of seed.
    """
    rng = np.random.default_rng(seed)
    dim = domain.dim
    budget = 0.4
    n_off = dim * (dim - 1) // 2

    def trig_poly(*mesh: np.ndarray) -> np.ndarray:
        out = np.zeros(mesh[0].shape)
        for _ in range(modes):
            amp = rng.uniform(-1.0, 1.0)
            freqs = rng.integers(1, 4, size=dim)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            wave = np.full(mesh[0].shape, phase)
            for ax in range(dim):
                wave = wave + 2.0 * np.pi * freqs[ax] * mesh[ax] / domain.extent[ax]
            out = out + amp * np.sin(wave)
        return out

    def gen(*mesh: np.ndarray) -> np.ndarray:
        out = np.zeros(mesh[0].shape + (dim, dim))
        diag_amp = budget / 2.0
        off_amp = budget / (2.0 * max(1, n_off) * 2.0)
        for ax in range(dim):
            wave = trig_poly(*mesh)
            wave /= max(1e-12, np.abs(wave).max())
            out[..., ax, ax] = 1.0 + diag_amp * wave
        for i in range(dim):
            for j in range(i + 1, dim):
                wave = trig_poly(*mesh)
                wave /= max(1e-12, np.abs(wave).max())
                out[..., i, j] = off_amp * wave
                out[..., j, i] = out[..., i, j]
        return out

    return sample_metric(domain, gen)


def enveloped_pole_scalar(
    domain: Domain,
    center: Sequence[float],
    a: float = 0.5,
    eps: float | None = None,
    envelope_radius: float = 0.35,
) -> ScalarField:
    """Localized mollified pole (r^2 + eps^2)^{-a/2} * exp(-r^2 / 2R^2).

    The Gaussian envelope trims the pole's slow power tail so the domain mean
    stays small relative to the peak — the regime where superlevel thresholds
    can sit above the integral-smallness floor while still detecting the
    pole's neighbourhood.
    """
    if a <= 0:
        raise GridError(f"pole exponent must be positive, got {a}")
    if eps is None:
        eps = 2.0 * max(domain.spacing)
    if eps <= 0:
        raise GridError(f"mollification width must be positive, got {eps}")
    center = np.asarray(center, dtype=float)

    def gen(*mesh: np.ndarray) -> np.ndarray:
        r2 = np.zeros(mesh[0].shape)
        for ax in range(domain.dim):
            d = mesh[ax] - center[ax]
            if domain.periodic:
                ext = domain.extent[ax]
                d = d - ext * np.round(d / ext)
            r2 += d * d
        return (r2 + eps**2) ** (-a / 2.0) * np.exp(-r2 / (2.0 * envelope_radius**2))

    return sample_scalar(domain, gen)
