"""Optical link budget for the two satellite-to-ground downlinks.

All losses are positive numbers in dB (``-10 log10`` of a transmittance).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._atomic import atomic_open
from .geometry import PassSample


class LinkBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class LinkParams:
    divergence_full_angle: float = 10e-6  # rad, e^-2 full angle
    tx_optics_efficiency: float = 0.5
    rx_aperture_diameter: float = 1.2  # m
    rx_optics_efficiency: float = 1.0
    detector_efficiency: float = 1.0
    pointing_jitter_sigma: float = 0.41e-6  # rad, per axis
    zenith_atmospheric_transmission: float = 0.7
    filter_transmission: float = 1.0

    def __post_init__(self):
        for name in (
            "tx_optics_efficiency",
            "rx_optics_efficiency",
            "detector_efficiency",
            "zenith_atmospheric_transmission",
            "filter_transmission",
        ):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise LinkBudgetError(f"{name}={v} must lie in (0, 1]")
        if self.divergence_full_angle <= 0:
            raise LinkBudgetError("divergence_full_angle must be positive")
        if self.rx_aperture_diameter <= 0:
            raise LinkBudgetError("rx_aperture_diameter must be positive")
        if self.pointing_jitter_sigma < 0:
            raise LinkBudgetError("pointing_jitter_sigma must be non-negative")

    def efficiency_product(self, include_detector: bool = True) -> float:
        p = self.tx_optics_efficiency * self.rx_optics_efficiency * self.filter_transmission
        if include_detector:
            p *= self.detector_efficiency
        return p


@dataclass(frozen=True)
class AttenuationSample:
    t: float
    loss1_db: float
    loss2_db: float
    total_db: float


def to_db(transmittance):
    return -10.0 * np.log10(transmittance)


def from_db(loss_db):
    return 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0)


def collected_fraction(range_km, divergence_full_angle, rx_aperture_diameter):
    """Encircled energy of a far-field Gaussian beam inside the receiver aperture."""
    w = 0.5 * divergence_full_angle * np.asarray(range_km, dtype=float) * 1e3
    r = 0.5 * rx_aperture_diameter
    return -np.expm1(-2.0 * r * r / (w * w))


def diffraction_loss(range_km, divergence_full_angle, rx_aperture_diameter):
    """Geometric/diffraction loss of a Gaussian beam truncated by the receiver.

    The beam radius at the receiver is ``w = (theta/2) * range`` with
    ``theta`` the e^-2 full divergence angle. Tends to 0 dB as the aperture
    grows and to ``10 log10(w^2 / 2r^2)`` once the aperture is much
    smaller than the spot.
    """
    if np.any(np.asarray(range_km) <= 0):
        raise LinkBudgetError("range must be positive")
    f = collected_fraction(range_km, divergence_full_angle, rx_aperture_diameter)
    out = to_db(f)
    return float(out) if np.ndim(out) == 0 else out


def pointing_loss(jitter_sigma, divergence_full_angle):
    """Mean on-axis intensity penalty from random pointing error.

    ``jitter_sigma`` is the per-axis standard deviation of an isotropic
    bivariate Gaussian pointing error. Averaging the Gaussian beam profile
    over the resulting Rayleigh-distributed offset gives
    ``1 / (1 + 16 sigma^2 / theta^2)``.
    """
    if np.any(np.asarray(jitter_sigma) < 0):
        raise LinkBudgetError("pointing jitter must be non-negative")
    ratio = np.asarray(jitter_sigma, dtype=float) / divergence_full_angle
    out = 10.0 * np.log10(1.0 + 16.0 * ratio * ratio)
    return float(out) if np.ndim(out) == 0 else out


MIN_ELEVATION_DEG = 5.0


def atmospheric_loss(elevation_deg, zenith_transmission):
    """Plane-parallel airmass scaling, ``T ** (1/sin e)``; needs e >= 5 deg."""
    e = np.asarray(elevation_deg, dtype=float)
    if np.any(e < MIN_ELEVATION_DEG):
        raise LinkBudgetError(f"elevation below {MIN_ELEVATION_DEG} deg is outside the airmass model")
    if not 0.0 < zenith_transmission <= 1.0:
        raise LinkBudgetError("zenith_transmission must lie in (0, 1]")
    out = -10.0 * math.log10(zenith_transmission) / np.sin(np.radians(e))
    return float(out) if np.ndim(out) == 0 else out


def downlink_loss(sample: PassSample, which: int, params: LinkParams, include_detector: bool = True) -> float:
    """Total loss (dB) of downlink 1 or 2 at one pass sample."""
    if which == 1:
        rng, el = sample.range1, sample.elevation1
    elif which == 2:
        rng, el = sample.range2, sample.elevation2
    else:
        raise LinkBudgetError("which must be 1 or 2")
    return link_loss(rng, el, params, include_detector)


def link_loss(range_km, elevation_deg, params: LinkParams, include_detector: bool = True):
    """Vectorised form of :func:`downlink_loss` over range/elevation arrays."""
    out = (
        diffraction_loss(range_km, params.divergence_full_angle, params.rx_aperture_diameter)
        + pointing_loss(params.pointing_jitter_sigma, params.divergence_full_angle)
        + atmospheric_loss(elevation_deg, params.zenith_atmospheric_transmission)
        + to_db(params.efficiency_product(include_detector))
    )
    return float(out) if np.ndim(out) == 0 else out


def two_downlink_attenuation(
    samples: Sequence[PassSample], params1: LinkParams, params2: LinkParams
) -> list[AttenuationSample]:
    if not samples:
        raise LinkBudgetError("empty pass")
    r1 = np.array([s.range1 for s in samples])
    r2 = np.array([s.range2 for s in samples])
    e1 = np.array([s.elevation1 for s in samples])
    e2 = np.array([s.elevation2 for s in samples])
    l1 = np.atleast_1d(link_loss(r1, e1, params1))
    l2 = np.atleast_1d(link_loss(r2, e2, params2))
    return [
        AttenuationSample(s.t, float(a), float(b), float(a) + float(b)) for s, a, b in zip(samples, l1, l2)
    ]


def write_attenuation(rows: Sequence[AttenuationSample], path) -> None:
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "loss1_db", "loss2_db", "total_db"])
        for a in rows:
            w.writerow([repr(a.t), repr(a.loss1_db), repr(a.loss2_db), repr(a.total_db)])


def load_attenuation(path) -> list[AttenuationSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            AttenuationSample(float(r["t_s"]), float(r["loss1_db"]), float(r["loss2_db"]), float(r["total_db"]))
            for r in csv.DictReader(fh)
        ]


def fiber_comparison(ground_separation_km: float, fiber_loss_db_per_km: float, satellite_total_db: float) -> float:
    """Orders of magnitude by which the two-downlink beats direct fibre.

    Each photon travels half the separation through fibre, so the pair sees
    the full separation's worth of loss.
    """
    if ground_separation_km <= 0 or fiber_loss_db_per_km <= 0 or satellite_total_db <= 0:
        raise LinkBudgetError("inputs must be positive")
    return (fiber_loss_db_per_km * ground_separation_km - satellite_total_db) / 10.0
