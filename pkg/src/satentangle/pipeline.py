"""End-to-end wiring shared by the command line and the demos."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estimators, timesync
from .eventsim import PS, SimulationResult, simulate_pass, singles_rate_estimate
from .geometry import PassSample
from .linkbudget import AttenuationSample, link_loss, two_downlink_attenuation
from .quantum import CHSH_ANGLES
from .scenario import Scenario


class AnalysisError(ValueError):
    """Estimator preconditions not met by the data."""


@dataclass(frozen=True)
class LossCurves:
    """Channel losses (dB, detector efficiency excluded) versus time since the
    start of the pass, linearly interpolated between ephemeris samples."""

    t: np.ndarray
    loss1: np.ndarray
    loss2: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def channel(self, which: int):
        y = self.loss1 if which == 1 else self.loss2
        x = self.t - self.t[0]
        return lambda t: np.interp(t, x, y)

    @property
    def grid(self) -> np.ndarray:
        return self.t - self.t[0]


def pass_attenuation(scn: Scenario, samples: list[PassSample]) -> list[AttenuationSample]:
    return two_downlink_attenuation(samples, scn.link_with_detectors(0), scn.link_with_detectors(1))


def loss_curves(scn: Scenario, samples: list[PassSample]) -> LossCurves:
    if len(samples) < 2:
        raise ValueError("need at least two pass samples")
    t = np.array([s.t for s in samples])
    r1 = np.array([s.range1 for s in samples])
    r2 = np.array([s.range2 for s in samples])
    e1 = np.array([s.elevation1 for s in samples])
    e2 = np.array([s.elevation2 for s in samples])
    l1 = link_loss(r1, e1, scn.links[0], include_detector=False)
    l2 = link_loss(r2, e2, scn.links[1], include_detector=False)
    return LossCurves(t, np.asarray(l1, float), np.asarray(l2, float))


def simulate(scn: Scenario, samples=None, duration: float | None = None, seed=None, workers: int = 1, with_sync=True):
    """Full-rate event simulation over the pass (or its first ``duration`` s)."""
    samples = scn.pass_samples() if samples is None else samples
    curves = loss_curves(scn, samples)
    duration = curves.duration if duration is None else min(duration, curves.duration)
    cfgs = scn.station_configs(samples)
    result = simulate_pass(
        scn.source.pair_rate,
        duration,
        scn.source_state(),
        curves.channel(1),
        curves.channel(2),
        cfgs,
        scn.seed if seed is None else seed,
        slice_s=scn.slice_s,
        with_sync=with_sync,
        workers=workers,
        loss_grid=curves.grid,
    )
    return result, curves, cfgs


def expected_singles(scn: Scenario, curves: LossCurves, duration: float) -> tuple[float, float]:
    """Expected detection tags (excluding sync) per station over ``[0, duration)``."""
    out = []
    x = np.linspace(0.0, duration, 2001)
    for k, which in ((0, 1), (1, 2)):
        loss = curves.channel(which)(x)
        total = 0.0
        for det in scn.detectors[k]:
            # each port sees half the photons on average for unpolarised marginals
            half = singles_rate_estimate(0.5 * scn.source.pair_rate, loss, det)
            total += np.trapezoid(half, x)
        out.append(float(total))
    return out[0], out[1]


def analyze(tags1, tags2, scn: Scenario, mode: str, window_ps: float | None = None, duration: float | None = None) -> dict:
    """Sync fit, coincidence matching and the estimators ``mode`` asks for.

    ``duration`` (s) defaults to the span of the station-1 sync tags.
    """
    window = scn.window_ps if window_ps is None else float(window_ps)
    half = timesync.acceptance_half_width(window, scn.window_convention)
    sync1 = timesync.sync_times(tags1)
    sync2 = timesync.sync_times(tags2)
    out: dict = {"mode": mode, "window_ps": window, "window_convention": scn.window_convention}

    if len(sync1) >= timesync.MIN_SYNC_TAGS and len(sync2) >= timesync.MIN_SYNC_TAGS:
        fit = timesync.fit_clock(sync1, sync2)
    elif mode == "rates":
        fit = timesync.SyncFit()
    else:
        raise AnalysisError(f"need at least {timesync.MIN_SYNC_TAGS} sync tags per station for {mode} analysis")
    out["sync"] = {"offset_ps": fit.offset, "drift_ps_per_s": fit.drift, "residual_rms_ps": fit.residual_rms}

    records = timesync.match_coincidences(tags1, tags2, fit, half)
    if duration is None:
        duration = float(sync1[-1] - sync1[0]) / PS if len(sync1) > 1 else 0.0
    n_det1 = int(np.sum(tags1["channel"] != 2))
    n_det2 = int(np.sum(tags2["channel"] != 2))
    rates = {"coincidences": len(records), "effective_time_s": duration}
    if duration > 0:
        rates["rate_hz"] = len(records) / duration
        s1, s2 = n_det1 / duration, n_det2 / duration
        rates["singles_hz"] = [s1, s2]
        rates["accidental_rate_hz"] = timesync.accidental_rate(s1, s2, 2.0 * half)
    else:
        rates["rate_hz"] = 0.0
    out["rates"] = rates
    out["records"] = records

    angles1, angles2 = scn.angles
    if mode == "bell":
        settings, excluded = estimators.counts_from_records(records, angles1, angles2)
        wanted = [(a, b) for a, b in CHSH_ANGLES]
        try:
            bell = estimators.chsh(settings, wanted)
        except estimators.EstimatorError as exc:
            raise AnalysisError(str(exc)) from None
        out["bell"] = bell.to_dict()
        out["bell"]["excluded"] = excluded
    elif mode == "fidelity":
        settings, excluded = estimators.counts_from_records(records, angles1, angles2)
        try:
            hv = _setting(settings, 0.0, 0.0)
            diag = _setting(settings, math.pi / 4, math.pi / 4)
            f, sig = estimators.fidelity_lower_bound(hv, diag)
        except estimators.EstimatorError as exc:
            raise AnalysisError(str(exc)) from None
        out["fidelity"] = {
            "F_low": f,
            "sigma": sig,
            "counts_hv": hv.counts.astype(int).tolist(),
            "counts_diag": diag.counts.astype(int).tolist(),
            # records with one station in each basis carry no information here
            "mixed_basis": len(records) - excluded - hv.total - diag.total,
            "excluded": excluded,
        }
    elif mode != "rates":
        raise ValueError(f"unknown mode {mode!r}")
    return out


def _setting(settings, a, b):
    for s in settings:
        if math.isclose(s.angle1, a, abs_tol=1e-9) and math.isclose(s.angle2, b, abs_tol=1e-9):
            return s
    raise estimators.EstimatorError(f"scenario has no setting ({a:.6f}, {b:.6f})")


def truth_coincidence_rate(result: SimulationResult) -> float:
    """Ground-truth rate of pairs detected at both stations."""
    return len(result.detected_pairs()) / result.duration if result.duration > 0 else 0.0
