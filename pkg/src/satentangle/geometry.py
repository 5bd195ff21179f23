"""Satellite pass geometry over a pair of ground stations.

Spherical Earth, circular orbit, great-circle ground track. Positions are
in an Earth-centred frame in km; Earth rotation during a pass is neglected.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from ._atomic import atomic_open

EARTH_RADIUS_KM = 6371.0

EPHEMERIS_COLUMNS = (
    "t_s",
    "range1_km",
    "range2_km",
    "elev1_deg",
    "elev2_deg",
    "x_km",
    "y_km",
    "z_km",
)


class GeometryError(ValueError):
    pass


class EphemerisError(ValueError):
    """Malformed ephemeris table. ``row`` is the 1-based data row, if known."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class NoPassWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GroundStation:
    name: str
    latitude: float  # deg
    longitude: float  # deg
    altitude: float  # km

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise GeometryError(f"{self.name}: latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise GeometryError(f"{self.name}: longitude {self.longitude} outside [-180, 180]")
        if not 0.0 <= self.altitude <= 9.0:
            raise GeometryError(f"{self.name}: altitude {self.altitude} km outside [0, 9]")

    @property
    def position(self) -> np.ndarray:
        return (EARTH_RADIUS_KM + self.altitude) * unit_vector(self.latitude, self.longitude)

    @property
    def up(self) -> np.ndarray:
        return unit_vector(self.latitude, self.longitude)


@dataclass(frozen=True)
class OrbitModel:
    """Circular orbit whose ground track is a great circle.

    The satellite is over ``(ref_lat, ref_lon)`` heading ``azimuth`` (degrees
    clockwise from north) at time ``epoch`` on the pass clock.
    """

    altitude: float = 500.0  # km
    speed: float = 7.6  # km/s, orbital (not ground-track) speed
    ref_lat: float = 0.0
    ref_lon: float = 0.0
    azimuth: float = 0.0
    epoch: float = 0.0

    def __post_init__(self):
        if self.altitude <= 0:
            raise GeometryError("orbit altitude must be positive")
        if self.speed <= 0:
            raise GeometryError("orbit speed must be positive")

    @property
    def radius(self) -> float:
        return EARTH_RADIUS_KM + self.altitude

    @property
    def angular_rate(self) -> float:
        """rad/s along the orbit."""
        return self.speed / self.radius

    def position(self, t) -> np.ndarray:
        """Satellite position(s) in km at pass-clock time(s) ``t``; shape (..., 3)."""
        lat, lon, az = np.radians([self.ref_lat, self.ref_lon, self.azimuth])
        p0 = unit_vector(self.ref_lat, self.ref_lon)
        north = np.array([-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon), math.cos(lat)])
        east = np.array([-math.sin(lon), math.cos(lon), 0.0])
        heading = math.cos(az) * north + math.sin(az) * east
        phi = self.angular_rate * (np.asarray(t, dtype=float) - self.epoch)
        u = np.cos(phi)[..., None] * p0 + np.sin(phi)[..., None] * heading
        return self.radius * u


@dataclass(frozen=True)
class PassSample:
    t: float  # s since pass start
    range1: float  # km
    range2: float
    elevation1: float  # deg
    elevation2: float
    position: tuple[float, float, float]  # km


def unit_vector(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])


def central_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in rad between two Earth-centred vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.atan2(np.linalg.norm(np.cross(a, b)), float(np.dot(a, b)))


def ground_distance(s1: GroundStation, s2: GroundStation) -> float:
    """Great-circle distance in km at mean sea level."""
    return EARTH_RADIUS_KM * central_angle(s1.up, s2.up)


def _check_outside(sat: np.ndarray, station: GroundStation) -> None:
    if np.any(np.linalg.norm(sat, axis=-1) <= EARTH_RADIUS_KM + station.altitude):
        raise GeometryError("satellite position lies inside the Earth")


def slant_range(sat_position, station: GroundStation):
    """Straight-line distance (km) from station to satellite.

    Accepts a single 3-vector or an array of shape (n, 3).
    """
    sat = np.asarray(sat_position, dtype=float)
    _check_outside(sat, station)
    d = np.linalg.norm(sat - station.position, axis=-1)
    return float(d) if d.ndim == 0 else d


def elevation_angle(sat_position, station: GroundStation):
    """Angle (deg) of the station-to-satellite line above the local horizontal."""
    sat = np.asarray(sat_position, dtype=float)
    _check_outside(sat, station)
    los = sat - station.position
    up = los @ station.up
    horizontal = np.linalg.norm(los - up[..., None] * station.up, axis=-1)
    el = np.degrees(np.arctan2(up, horizontal))
    return float(el) if el.ndim == 0 else el


def _min_elevation(orbit: OrbitModel, stations: Sequence[GroundStation], t) -> np.ndarray:
    pos = orbit.position(t)
    return np.minimum(elevation_angle(pos, stations[0]), elevation_angle(pos, stations[1]))


def find_pass_window(
    orbit: OrbitModel, stations: Sequence[GroundStation], cutoff: float
) -> tuple[float, float] | None:
    """Absolute pass-clock interval where both elevations are >= cutoff.

    Only the visibility window nearest the orbit epoch is considered. The
    search grid is fixed (1 s) so the result does not depend on sampling.
    """
    half = 0.5 * math.pi / orbit.angular_rate
    grid = np.arange(orbit.epoch - half, orbit.epoch + half + 1.0, 1.0)
    g = _min_elevation(orbit, stations, grid) - cutoff
    if np.all(g < 0):
        return None
    k = int(np.argmax(g))
    lo = k
    while lo > 0 and g[lo - 1] >= 0:
        lo -= 1
    hi = k
    while hi < len(grid) - 1 and g[hi + 1] >= 0:
        hi += 1

    def f(t):
        return float(_min_elevation(orbit, stations, t)) - cutoff

    xtol = 1e-12
    start = grid[lo] if lo == 0 else brentq(f, grid[lo - 1], grid[lo], xtol=xtol, rtol=1e-15)
    end = grid[hi] if hi == len(grid) - 1 else brentq(f, grid[hi], grid[hi + 1], xtol=xtol, rtol=1e-15)
    return start, end


def propagate_pass(
    orbit: OrbitModel,
    stations: Sequence[GroundStation],
    dt: float = 1.0,
    cutoff: float = 10.0,
) -> list[PassSample]:
    """Sample the two-station pass at fixed ``dt`` from the moment both
    stations see the satellite above ``cutoff`` degrees.

    Sample ``k`` sits at ``t = k*dt`` after the exact pass start, so halving
    ``dt`` reproduces every other sample bit-for-bit. Returns an empty list
    (with a :class:`NoPassWarning`) when there is no common visibility.
    """
    if dt <= 0:
        raise GeometryError("dt must be positive")
    if not 0.0 <= cutoff < 90.0:
        raise GeometryError("cutoff must lie in [0, 90)")
    if len(stations) != 2:
        raise GeometryError("exactly two stations are required")
    window = find_pass_window(orbit, stations, cutoff)
    if window is None:
        warnings.warn(f"no common pass above {cutoff} deg", NoPassWarning, stacklevel=2)
        return []
    start, end = window
    n = int(math.floor((end - start) / dt + 1e-9)) + 1
    t = np.arange(n) * dt
    pos = orbit.position(start + t)
    r1 = slant_range(pos, stations[0])
    r2 = slant_range(pos, stations[1])
    e1 = elevation_angle(pos, stations[0])
    e2 = elevation_angle(pos, stations[1])
    return [
        PassSample(float(t[k]), float(r1[k]), float(r2[k]), float(e1[k]), float(e2[k]), tuple(map(float, pos[k])))
        for k in range(n)
    ]


def write_ephemeris(samples: Sequence[PassSample], path) -> None:
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EPHEMERIS_COLUMNS)
        for s in samples:
            w.writerow([repr(v) for v in (s.t, s.range1, s.range2, s.elevation1, s.elevation2, *s.position)])


def load_ephemeris(path, min_range_km: float = 0.0) -> list[PassSample]:
    """Read an ephemeris CSV (see ``EPHEMERIS_COLUMNS``).

    Rows are validated: strictly increasing ``t_s``, elevations in
    [-90, 90], ranges at least ``min_range_km`` (pass the orbit altitude to
    enforce the usual lower bound). Errors name the offending data row.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in EPHEMERIS_COLUMNS if c not in header]
        if missing:
            raise EphemerisError(f"{path}: missing columns {missing}")
        samples: list[PassSample] = []
        for row_no, row in enumerate(reader, start=1):
            try:
                v = {c: float(row[c]) for c in EPHEMERIS_COLUMNS}
            except (TypeError, ValueError) as exc:
                raise EphemerisError(f"unparseable value ({exc})", row_no) from None
            if samples and v["t_s"] <= samples[-1].t:
                raise EphemerisError("t_s not strictly increasing", row_no)
            for c in ("range1_km", "range2_km"):
                if not v[c] >= min_range_km:
                    raise EphemerisError(f"{c}={v[c]} below {min_range_km} km", row_no)
            for c in ("elev1_deg", "elev2_deg"):
                if not -90.0 <= v[c] <= 90.0:
                    raise EphemerisError(f"{c}={v[c]} outside [-90, 90]", row_no)
            samples.append(
                PassSample(
                    v["t_s"],
                    v["range1_km"],
                    v["range2_km"],
                    v["elev1_deg"],
                    v["elev2_deg"],
                    (v["x_km"], v["y_km"], v["z_km"]),
                )
            )
    return samples
