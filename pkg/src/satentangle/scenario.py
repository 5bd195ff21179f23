"""Scenario files: versioned JSON describing one complete experiment.

Unknown keys are rejected so that a typo cannot silently fall back to a
default. Every error names the offending key path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import quantum
from .eventsim import ClockModel, DetectorParams, QrngParams, StationConfig
from .geometry import GroundStation, OrbitModel, PassSample, load_ephemeris, propagate_pass
from .linkbudget import LinkParams
from .spacetime import C_KM_S

SCHEMA = "satentangle.scenario/1"
REFERENCE_NAME = "micius-1203km.json"
FIDELITY_NAME = "micius-1203km-fidelity.json"


class ScenarioError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# section -> {key: required}
_ORBIT = {"altitude_km": True, "speed_km_s": True, "ref_lat_deg": True, "ref_lon_deg": True, "azimuth_deg": True, "epoch_s": False}
_STATION = {"name": True, "latitude_deg": True, "longitude_deg": True, "altitude_km": True}
_PASS = {"dt_s": False, "cutoff_deg": False}
_LINK = {
    "divergence_full_angle_rad": True,
    "tx_optics_efficiency": True,
    "rx_aperture_diameter_m": True,
    "rx_optics_efficiency": True,
    "pointing_jitter_sigma_rad": True,
    "zenith_atmospheric_transmission": True,
    "filter_transmission": True,
}
_SOURCE = {"pair_rate_hz": True, "fidelity": True, "onboard_sampling_fraction_per_arm": False, "noise_model": False}
_POL = {"compensation_contrast": False, "residual_model": False}
_DETECTOR = {"efficiency": True, "dark_rate_hz": True, "background_rate_hz": True, "time_jitter_sigma_ps": True}
_QRNG = {"decision_rate_hz": True, "output_delay_s": True}
_CLOCK = {"offset_ps": True, "drift_ps_per_s": True, "sync_pulse_rate_hz": True, "sync_jitter_sigma_ps": True}
_EXPERIMENT = {"mode": True, "angles1_rad": True, "angles2_rad": True, "handedness2": False}
_TOP = {
    "schema": True,
    "name": False,
    "orbit": False,
    "ephemeris": False,
    "stations": True,
    "pass": False,
    "links": True,
    "source": True,
    "polarization": False,
    "detectors": True,
    "qrng": True,
    "clocks": True,
    "experiment": True,
    "window_ps": True,
    "window_convention": False,
    "seed": True,
    "slice_s": False,
    "measurement_lag_s": False,
    "output_dir": False,
    "provenance": False,
}


def _check_keys(obj: Any, allowed: dict[str, bool], path: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(path or "<root>", "expected an object")
    for k in obj:
        if k not in allowed:
            raise ScenarioError(f"{path}.{k}" if path else k, "unknown key")
    for k, required in allowed.items():
        if required and k not in obj:
            raise ScenarioError(f"{path}.{k}" if path else k, "missing required key")
    return obj


def _pair(obj: Any, path: str) -> list:
    if not isinstance(obj, list) or len(obj) != 2:
        raise ScenarioError(path, "expected a list of two entries")
    return obj


def _build(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(path, str(exc)) from None


@dataclass
class Scenario:
    name: str
    stations: tuple[GroundStation, GroundStation]
    links: tuple[LinkParams, LinkParams]
    source: quantum.SourceParams
    detectors: tuple[tuple[DetectorParams, DetectorParams], tuple[DetectorParams, DetectorParams]]
    qrng: tuple[QrngParams, QrngParams]
    clocks: tuple[ClockModel, ClockModel]
    mode: str
    angles: tuple[tuple[float, ...], tuple[float, ...]]
    window_ps: float
    seed: int
    orbit: OrbitModel | None = None
    ephemeris: Path | None = None
    dt_s: float = 1.0
    cutoff_deg: float = 10.0
    noise_model: str = "werner"
    compensation_contrast: float = math.inf
    residual_model: str = "none"
    handedness2: int | str = "calibrate"
    window_convention: str = "plus_minus"
    slice_s: float = 1.0
    measurement_lag_s: float = 100e-9
    output_dir: str = "out"
    provenance: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    # ---- derived objects -------------------------------------------------

    def pass_samples(self) -> list[PassSample]:
        if self.ephemeris is not None:
            min_range = self.orbit.altitude - max(s.altitude for s in self.stations) if self.orbit else 0.0
            return load_ephemeris(self.ephemeris, min_range)
        return propagate_pass(self.orbit, self.stations, self.dt_s, self.cutoff_deg)

    def source_state(self) -> quantum.TwoQubitState:
        f = self.source.target_fidelity
        state = quantum.make_werner(f) if self.noise_model == "werner" else quantum.make_colored(f)
        if self.residual_model == "rotation":
            eps = quantum.residual_from_contrast(self.compensation_contrast)
            u = quantum.rotation(eps)
            state = quantum.apply_local_unitaries(state, u, u)
        elif self.residual_model == "dephasing":
            state = quantum.dephase(state, quantum.coherence_from_contrast(self.compensation_contrast))
        return state

    def handedness(self) -> int:
        if self.handedness2 == "calibrate":
            pairs = [(a, b) for a in self.angles[0] for b in self.angles[1]]
            if all(any(math.isclose(a, x) and math.isclose(b, y) for a, b in pairs) for x, y in quantum.CHSH_ANGLES):
                return quantum.calibrate_handedness()
            return 1
        return int(self.handedness2)

    def station_configs(self, samples: list[PassSample] | None = None) -> tuple[StationConfig, StationConfig]:
        delays = (0.0, 0.0)
        if samples:
            mid = samples[len(samples) // 2]
            delays = (mid.range1 / C_KM_S * 1e12, mid.range2 / C_KM_S * 1e12)
        signs = (1, self.handedness())
        return tuple(
            StationConfig(self.detectors[i], self.qrng[i], self.angles[i], self.clocks[i], delays[i], signs[i])
            for i in range(2)
        )

    def link_with_detectors(self, which: int) -> LinkParams:
        dets = self.detectors[which]
        return replace(self.links[which], detector_efficiency=0.5 * (dets[0].efficiency + dets[1].efficiency))

    def resolved(self) -> dict:
        """Fully resolved parameters for run manifests."""
        return self.raw


def _parse(data: dict, base: Path | None) -> Scenario:
    _check_keys(data, _TOP, "")
    if data["schema"] != SCHEMA:
        raise ScenarioError("schema", f"expected {SCHEMA!r}, got {data['schema']!r}")

    orbit = None
    if data.get("orbit") is not None:
        o = _check_keys(data["orbit"], _ORBIT, "orbit")
        orbit = _build(
            "orbit",
            OrbitModel,
            o["altitude_km"],
            o["speed_km_s"],
            o["ref_lat_deg"],
            o["ref_lon_deg"],
            o["azimuth_deg"],
            o.get("epoch_s", 0.0),
        )
    ephemeris = None
    if data.get("ephemeris") is not None:
        ephemeris = Path(data["ephemeris"])
        if base is not None and not ephemeris.is_absolute():
            ephemeris = base / ephemeris
    if orbit is None and ephemeris is None:
        raise ScenarioError("orbit", "either orbit or ephemeris is required")

    stations = []
    for i, s in enumerate(_pair(data["stations"], "stations")):
        p = f"stations[{i}]"
        _check_keys(s, _STATION, p)
        stations.append(_build(p, GroundStation, s["name"], s["latitude_deg"], s["longitude_deg"], s["altitude_km"]))

    pss = _check_keys(data.get("pass", {}), _PASS, "pass")

    links = []
    for i, l in enumerate(_pair(data["links"], "links")):
        p = f"links[{i}]"
        _check_keys(l, _LINK, p)
        links.append(
            _build(
                p,
                LinkParams,
                divergence_full_angle=l["divergence_full_angle_rad"],
                tx_optics_efficiency=l["tx_optics_efficiency"],
                rx_aperture_diameter=l["rx_aperture_diameter_m"],
                rx_optics_efficiency=l["rx_optics_efficiency"],
                pointing_jitter_sigma=l["pointing_jitter_sigma_rad"],
                zenith_atmospheric_transmission=l["zenith_atmospheric_transmission"],
                filter_transmission=l["filter_transmission"],
            )
        )

    src = _check_keys(data["source"], _SOURCE, "source")
    source = _build(
        "source",
        quantum.SourceParams,
        src["pair_rate_hz"],
        src["fidelity"],
        src.get("onboard_sampling_fraction_per_arm", 0.01),
    )
    noise_model = src.get("noise_model", "werner")
    if noise_model not in ("werner", "colored"):
        raise ScenarioError("source.noise_model", "must be 'werner' or 'colored'")

    pol = _check_keys(data.get("polarization", {}), _POL, "polarization")
    contrast = float(pol.get("compensation_contrast", math.inf))
    residual_model = pol.get("residual_model", "none")
    if residual_model not in ("none", "rotation", "dephasing"):
        raise ScenarioError("polarization.residual_model", "must be 'none', 'rotation' or 'dephasing'")
    if contrast < 1:
        raise ScenarioError("polarization.compensation_contrast", "must be >= 1")

    detectors = []
    for i, pair in enumerate(_pair(data["detectors"], "detectors")):
        ports = []
        for j, d in enumerate(_pair(pair, f"detectors[{i}]")):
            p = f"detectors[{i}][{j}]"
            _check_keys(d, _DETECTOR, p)
            ports.append(
                _build(p, DetectorParams, d["efficiency"], d["dark_rate_hz"], d["background_rate_hz"], d["time_jitter_sigma_ps"])
            )
        detectors.append(tuple(ports))

    qrngs = []
    for i, q in enumerate(_pair(data["qrng"], "qrng")):
        p = f"qrng[{i}]"
        _check_keys(q, _QRNG, p)
        delay = q["output_delay_s"]
        if not isinstance(delay, list) or len(delay) != 2:
            raise ScenarioError(f"{p}.output_delay_s", "expected [min, max]")
        qrngs.append(_build(p, QrngParams, q["decision_rate_hz"], (float(delay[0]), float(delay[1]))))

    clocks = []
    for i, c in enumerate(_pair(data["clocks"], "clocks")):
        p = f"clocks[{i}]"
        _check_keys(c, _CLOCK, p)
        clocks.append(
            _build(p, ClockModel, c["offset_ps"], c["drift_ps_per_s"], c["sync_pulse_rate_hz"], c["sync_jitter_sigma_ps"])
        )

    exp = _check_keys(data["experiment"], _EXPERIMENT, "experiment")
    if exp["mode"] not in ("bell", "fidelity"):
        raise ScenarioError("experiment.mode", "must be 'bell' or 'fidelity'")
    angles = []
    for k in ("angles1_rad", "angles2_rad"):
        a = exp[k]
        if not isinstance(a, list) or not a or not all(0.0 <= float(x) < math.pi for x in a):
            raise ScenarioError(f"experiment.{k}", "expected a non-empty list of angles in [0, pi)")
        angles.append(tuple(float(x) for x in a))
    handed = exp.get("handedness2", "calibrate")
    if handed not in ("calibrate", 1, -1):
        raise ScenarioError("experiment.handedness2", "must be 'calibrate', 1 or -1")

    seed = data["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ScenarioError("seed", "must be an unsigned 64-bit integer")
    window = float(data["window_ps"])
    if window <= 0:
        raise ScenarioError("window_ps", "must be positive")
    convention = data.get("window_convention", "plus_minus")
    if convention not in ("plus_minus", "full_width"):
        raise ScenarioError("window_convention", "must be 'plus_minus' or 'full_width'")
    slice_s = float(data.get("slice_s", 1.0))
    if slice_s <= 0:
        raise ScenarioError("slice_s", "must be positive")
    lag = float(data.get("measurement_lag_s", 100e-9))
    if lag < 0:
        raise ScenarioError("measurement_lag_s", "must be non-negative")

    return Scenario(
        name=data.get("name", "unnamed"),
        stations=tuple(stations),
        links=tuple(links),
        source=source,
        detectors=tuple(detectors),
        qrng=tuple(qrngs),
        clocks=tuple(clocks),
        mode=exp["mode"],
        angles=tuple(angles),
        window_ps=window,
        seed=seed,
        orbit=orbit,
        ephemeris=ephemeris,
        dt_s=float(pss.get("dt_s", 1.0)),
        cutoff_deg=float(pss.get("cutoff_deg", 10.0)),
        noise_model=noise_model,
        compensation_contrast=contrast,
        residual_model=residual_model,
        handedness2=handed,
        window_convention=convention,
        slice_s=slice_s,
        measurement_lag_s=lag,
        output_dir=data.get("output_dir", "out"),
        provenance=data.get("provenance", {}),
        raw=data,
    )


def parse_scenario(data: dict, base: Path | None = None) -> Scenario:
    return _parse(data, base)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"{path}: invalid JSON ({exc})") from None
    return _parse(data, path.parent)


def shipped_scenarios() -> list[str]:
    data = resources.files("satentangle").joinpath("data")
    return sorted(p.name for p in data.iterdir() if p.name.endswith(".json"))


def reference_scenario_data(name: str = REFERENCE_NAME) -> dict:
    """Raw dict of a scenario shipped with the package."""
    if name not in shipped_scenarios():
        raise FileNotFoundError(name)
    text = resources.files("satentangle").joinpath("data", name).read_text(encoding="utf-8")
    return json.loads(text)


def reference_scenario(name: str = REFERENCE_NAME) -> Scenario:
    return _parse(reference_scenario_data(name), None)


def with_overrides(data: dict, **changes) -> dict:
    """Deep-copied scenario dict with dotted-path overrides, e.g. ``{"source.pair_rate_hz": 1e6}``."""
    out = json.loads(json.dumps(data))
    for dotted, value in changes.items():
        node = out
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node[int(p)] if isinstance(node, list) else node[p]
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return out


def angles_array(angles) -> np.ndarray:
    return np.asarray(angles, dtype=float)
