"""Space-time separation of source, setting-choice and measurement events.

Events live in an Earth-centred frame treated as inertial for the few
minutes of a pass: stations stay where the geometry put them.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .eventsim import QrngParams
from .geometry import EARTH_RADIUS_KM, PassSample

C_KM_S = 299792.458
EARTH_ROTATION_RAD_S = 7.2921159e-5

SPACELIKE, TIMELIKE, LIGHTLIKE = "spacelike", "timelike", "lightlike"
PAIRS = (("R1", "R2"), ("R1", "M2"), ("M1", "R2"), ("M1", "M2"), ("R1", "S"), ("R2", "S"))
LIGHTLIKE_TOL_KM = 1e-9


class DelayRangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpacetimeEvent:
    label: str
    position: tuple[float, float, float]  # km
    time: float  # s

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (*self.position, self.time)):
            raise ValueError(f"event {self.label} has non-finite coordinates")


@dataclass(frozen=True)
class Interval:
    classification: str
    margin: float  # km, |dx| - c|dt|


@dataclass
class LoopholeReport:
    pairs: dict[str, Interval]
    max_path_difference: float  # km
    earth_rotation_error_km: float
    assumptions: list[str] = field(default_factory=list)

    @property
    def all_spacelike(self) -> bool:
        return all(iv.classification == SPACELIKE for iv in self.pairs.values())

    def to_dict(self) -> dict:
        return {
            "pairs": {k: {"classification": v.classification, "margin_km": v.margin} for k, v in self.pairs.items()},
            "max_path_difference_km": self.max_path_difference,
            "earth_rotation_error_km": self.earth_rotation_error_km,
            "all_spacelike": self.all_spacelike,
            "assumptions": self.assumptions,
        }


def classify_margin(margin: float, tol: float = LIGHTLIKE_TOL_KM) -> str:
    if abs(margin) <= tol:
        return LIGHTLIKE
    return SPACELIKE if margin > 0 else TIMELIKE


def interval_classify(a: SpacetimeEvent, b: SpacetimeEvent) -> Interval:
    dx = float(np.linalg.norm(np.subtract(a.position, b.position)))
    margin = dx - C_KM_S * abs(a.time - b.time)
    return Interval(classify_margin(margin), margin)


def build_events(
    sample: PassSample,
    stations: Sequence[np.ndarray],
    qrng_delay: float | Sequence[float],
    measurement_lag: float,
    t_source: float | None = None,
    delay_bounds: tuple[float, float] | None = None,
) -> dict[str, SpacetimeEvent]:
    """Events S, R1, R2, M1, M2 for a pair emitted at ``sample``.

    ``stations`` are the two station position vectors (km). Measurement i
    happens ``measurement_lag`` after light from S reaches station i; its
    setting was generated ``qrng_delay`` (per station, or shared) earlier.
    A delay outside ``delay_bounds`` draws a :class:`DelayRangeWarning`.

    Times are measured from the emission unless ``t_source`` is given. Only
    differences matter, and a small origin keeps light-cone margins accurate
    to well under a micrometre.
    """
    if measurement_lag < 0:
        raise ValueError("measurement lag must be non-negative")
    delays = (qrng_delay, qrng_delay) if np.isscalar(qrng_delay) else tuple(qrng_delay)
    if delay_bounds is not None:
        lo, hi = delay_bounds
        for d in delays:
            if not lo - 1e-15 <= d <= hi + 1e-15:
                warnings.warn(f"setting delay {d:.3e} s outside [{lo:.3e}, {hi:.3e}] s", DelayRangeWarning, stacklevel=2)
    t_s = 0.0 if t_source is None else t_source
    sat = tuple(sample.position)
    events = {"S": SpacetimeEvent("S", sat, t_s)}
    for i, (pos, delay) in enumerate(zip(stations, delays), start=1):
        r = float(np.linalg.norm(np.subtract(sat, pos)))
        t_m = t_s + r / C_KM_S + measurement_lag
        p = tuple(float(v) for v in pos)
        events[f"M{i}"] = SpacetimeEvent(f"M{i}", p, t_m)
        events[f"R{i}"] = SpacetimeEvent(f"R{i}", p, t_m - delay)
    return events


def delay_range(qrng: QrngParams) -> tuple[float, float]:
    return qrng.setting_lead_range()


def loophole_report(
    samples: Sequence[PassSample],
    stations: Sequence[np.ndarray],
    qrng: QrngParams | Sequence[QrngParams],
    measurement_lag: float,
    grid_points: int = 0,
) -> LoopholeReport:
    """Worst-case (minimum-margin) separation of each event pair over the
    pass and over every combination of setting delays.

    Margins are piecewise linear in each delay, so the delay-range endpoints
    suffice; ``grid_points > 0`` adds interior delays as a cross-check.
    """
    if not samples:
        raise ValueError("empty pass")
    qrngs = (qrng, qrng) if isinstance(qrng, QrngParams) else tuple(qrng)
    grids = []
    for q in qrngs:
        lo, hi = delay_range(q)
        pts = [lo, hi] if grid_points <= 0 else list(np.linspace(lo, hi, grid_points + 2))
        grids.append(pts)

    worst: dict[str, float] = {}
    for sample in samples:
        for d1, d2 in itertools.product(*grids):
            ev = build_events(sample, stations, (d1, d2), measurement_lag)
            for a, b in PAIRS:
                key = f"{a}-{b}"
                m = interval_classify(ev[a], ev[b]).margin
                if key not in worst or m < worst[key]:
                    worst[key] = m
    pairs = {k: Interval(classify_margin(m), m) for k, m in worst.items()}
    max_diff = max(abs(s.range1 - s.range2) for s in samples)
    duration = samples[-1].t - samples[0].t
    coslat = max(
        math.hypot(p[0], p[1]) / float(np.linalg.norm(p)) for p in (np.asarray(s, dtype=float) for s in stations)
    )
    rot_err = EARTH_ROTATION_RAD_S * EARTH_RADIUS_KM * coslat * 0.5 * duration
    assumptions = [
        "stations fixed in an inertial frame for the duration of the pass",
        "possible hidden variables originate with the entangled pair at S",
        "setting generation precedes use by the QRNG output delay up to one decision period",
        f"measurement completes {measurement_lag:.3e} s after the photon's light-cone arrival",
    ]
    return LoopholeReport(pairs, float(max_diff), float(rot_err), assumptions)
