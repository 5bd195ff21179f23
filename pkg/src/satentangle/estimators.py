"""Correlations, CHSH S, visibility and a fidelity lower bound from counts.

Uncertainties are first-order propagation of independent Poisson errors on
the raw counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .quantum import CHSH_ANGLES, CHSH_SIGNS


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class SettingCounts:
    angle1: float
    angle2: float
    n_pp: int = 0
    n_pm: int = 0
    n_mp: int = 0
    n_mm: int = 0

    def __post_init__(self):
        if min(self.n_pp, self.n_pm, self.n_mp, self.n_mm) < 0:
            raise EstimatorError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm

    @property
    def counts(self) -> np.ndarray:
        return np.array([self.n_pp, self.n_pm, self.n_mp, self.n_mm], dtype=float)

    def scaled(self, k: int) -> "SettingCounts":
        return SettingCounts(self.angle1, self.angle2, k * self.n_pp, k * self.n_pm, k * self.n_mp, k * self.n_mm)

    @classmethod
    def from_array(cls, angle1, angle2, counts) -> "SettingCounts":
        return cls(angle1, angle2, *(int(c) for c in counts))


@dataclass(frozen=True)
class BellResult:
    E: tuple[float, float, float, float]
    sigma_E: tuple[float, float, float, float]
    S: float
    sigma_S: float
    violation_sigmas: float
    settings: tuple[tuple[float, float], ...] = field(default=CHSH_ANGLES)

    def to_dict(self) -> dict:
        return {
            "settings": [list(s) for s in self.settings],
            "E": list(self.E),
            "sigma_E": list(self.sigma_E),
            "S": self.S,
            "sigma_S": self.sigma_S,
            "violation_sigmas": self.violation_sigmas,
        }


def correlation(counts: SettingCounts) -> tuple[float, float]:
    n = counts.counts
    total = n.sum()
    if total <= 0:
        raise EstimatorError(f"no counts at setting ({counts.angle1}, {counts.angle2})")
    sign = np.array([1.0, -1.0, -1.0, 1.0])
    e = float(sign @ n / total)
    grad = (sign - e) / total
    return e, float(math.sqrt(np.sum(grad**2 * n)))


def visibility(counts: SettingCounts) -> float:
    """Correlated-minus-anticorrelated fraction in the counts' own basis."""
    return correlation(counts)[0]


def visibility_from_contrast(contrast: float) -> float:
    return (contrast - 1.0) / (contrast + 1.0)


def _find(settings: Sequence[SettingCounts], a: float, b: float) -> SettingCounts:
    for s in settings:
        if math.isclose(s.angle1, a, abs_tol=1e-9) and math.isclose(s.angle2, b, abs_tol=1e-9):
            return s
    raise EstimatorError(f"missing setting ({a:.6f}, {b:.6f})")


def chsh(settings: Sequence[SettingCounts], angles=CHSH_ANGLES) -> BellResult:
    """S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')| with ``angles`` listed in
    that order."""
    es, sig = [], []
    for a, b in angles:
        e, s = correlation(_find(settings, a, b))
        es.append(e)
        sig.append(s)
    S = abs(sum(c * e for c, e in zip(CHSH_SIGNS, es)))
    sigma_S = math.sqrt(sum(s * s for s in sig))
    violation = (S - 2.0) / sigma_S if sigma_S > 0 else math.inf
    return BellResult(tuple(es), tuple(sig), S, sigma_S, violation, tuple(angles))


def fidelity_lower_bound(counts_hv: SettingCounts, counts_diag: SettingCounts) -> tuple[float, float]:
    """Lower bound on the overlap with (|HV> + |VH>)/sqrt(2).

    Uses H/V-basis populations and the diagonal-basis correlator:
    ``F >= (P_HV + P_VH)/2 + E_diag/2 - sqrt(P_HH * P_VV)``, which follows
    from positivity of the density matrix.
    """
    n = counts_hv.counts
    total = n.sum()
    if total <= 0 or counts_diag.total <= 0:
        raise EstimatorError("both bases need counts")
    n_hh, n_hv, n_vh, n_vv = n
    e_x, sig_x = correlation(counts_diag)
    cross = math.sqrt(n_hh * n_vv) / total
    f = (n_hv + n_vh) / (2.0 * total) + 0.5 * e_x - cross

    pop = (n_hv + n_vh) / (2.0 * total)
    # d(pop)/dn_k and d(cross)/dn_k; each term is multiplied by sqrt(n_k)
    d_pop = np.array([0.0, 0.5, 0.5, 0.0]) / total - pop / total
    d_cross_scaled = np.zeros(4)
    for k, other in ((0, n_vv), (3, n_hh)):
        if n[k] > 0:
            d_cross_scaled[k] = math.sqrt(other) / (2.0 * total) - cross * math.sqrt(n[k]) / total
    for k in (1, 2):
        d_cross_scaled[k] = -cross * math.sqrt(n[k]) / total
    var = np.sum((d_pop * np.sqrt(n) - d_cross_scaled) ** 2) + (0.5 * sig_x) ** 2
    return float(f), float(math.sqrt(var))


def counts_from_records(records, angles1: Sequence[float], angles2: Sequence[float]) -> tuple[list[SettingCounts], int]:
    """Aggregate coincidence records into per-setting counts.

    Records whose basis index has no configured angle are counted in the
    returned ``excluded`` total rather than silently dropped.
    """
    out = []
    b1 = records["basis1"].astype(int)
    b2 = records["basis2"].astype(int)
    valid = (b1 < len(angles1)) & (b2 < len(angles2))
    for i, a in enumerate(angles1):
        for j, b in enumerate(angles2):
            sel = valid & (b1 == i) & (b2 == j)
            o1 = records["outcome1"][sel]
            o2 = records["outcome2"][sel]
            out.append(
                SettingCounts(
                    a,
                    b,
                    int(np.sum((o1 > 0) & (o2 > 0))),
                    int(np.sum((o1 > 0) & (o2 < 0))),
                    int(np.sum((o1 < 0) & (o2 > 0))),
                    int(np.sum((o1 < 0) & (o2 < 0))),
                )
            )
    return out, int(np.sum(~valid))


def coincidence_rate_report(records, effective_time: float, angles1=None, angles2=None) -> dict:
    if effective_time <= 0:
        raise EstimatorError("effective time must be positive")
    n = len(records)
    report = {"coincidences": n, "effective_time_s": effective_time, "rate_hz": n / effective_time}
    if angles1 is not None and angles2 is not None and n:
        settings, excluded = counts_from_records(records, angles1, angles2)
        report["per_setting"] = [
            {"angles": [s.angle1, s.angle2], "count": s.total, "rate_hz": s.total / effective_time} for s in settings
        ]
        report["excluded"] = excluded
    return report


def bootstrap_chsh(records, angles1, angles2, n_resamples: int, rng: np.random.Generator, angles=CHSH_ANGLES) -> float:
    """Standard deviation of S over resampled coincidence records.

    A cross-check on the propagated error; resamples that leave a setting
    without counts are skipped.
    """
    if n_resamples < 2:
        raise EstimatorError("need at least two resamples")
    n = len(records)
    if n == 0:
        raise EstimatorError("no coincidences to resample")
    values = []
    for _ in range(n_resamples):
        sample = records[rng.integers(0, n, size=n)]
        settings, _ = counts_from_records(sample, angles1, angles2)
        try:
            values.append(chsh(settings, angles).S)
        except EstimatorError:
            continue
    if len(values) < 2:
        raise EstimatorError("too few usable resamples")
    return float(np.std(values, ddof=1))
