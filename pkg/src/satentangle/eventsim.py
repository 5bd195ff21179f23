"""Monte Carlo time-tag generation for the two ground stations.

Randomness is partitioned by simulation time: slice ``k`` of length
``slice_s`` draws from a Philox stream keyed by ``(seed, k)``, and the
basis schedule of each station draws from blocks of QRNG ticks keyed the
same way. Output is therefore identical for any number of worker threads.

Tag times are integer picoseconds on each station's local clock.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .quantum import AnalyzerSetting, TwoQubitState, measurement_probabilities

PS = 1e12

CH_PLUS, CH_MINUS, CH_SYNC = 0, 1, 2
NOISE_LABEL = -1
SYNC_LABEL = -2

TAG_DTYPE = np.dtype([("time", "<i8"), ("channel", "u1"), ("basis", "u1")])
TRUTH_DTYPE = np.dtype(
    [
        ("pair_id", "<i8"),
        ("t1_ps", "<i8"),
        ("t2_ps", "<i8"),
        ("outcome1", "i1"),
        ("outcome2", "i1"),
        ("basis1", "u1"),
        ("basis2", "u1"),
    ]
)

# substream tags
_SLICE, _BASIS = 1, 2
QRNG_BLOCK = 4096


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.5
    dark_rate: float = 15.0  # Hz
    background_rate: float = 1000.0  # Hz
    time_jitter_sigma: float = 350.0  # ps

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("detector efficiency must lie in (0, 1]")
        if not 0.0 <= self.dark_rate <= 20.0:
            raise ValueError("dark_rate must lie in [0, 20] Hz")
        if not 0.0 <= self.background_rate <= 1e5:
            raise ValueError("background_rate must lie in [0, 1e5] Hz")
        if self.time_jitter_sigma < 0:
            raise ValueError("time_jitter_sigma must be non-negative")


@dataclass(frozen=True)
class QrngParams:
    decision_rate: float = 5e3  # Hz
    output_delay: tuple[float, float] = (200e-9, 200e-9)  # s, [min, max]

    def __post_init__(self):
        if self.decision_rate <= 0:
            raise ValueError("decision_rate must be positive")
        lo, hi = self.output_delay
        if not 0.0 <= lo <= hi:
            raise ValueError("output_delay must satisfy 0 <= min <= max")

    def setting_lead_range(self) -> tuple[float, float]:
        """Range of time (s) between a setting's generation and its use."""
        return self.output_delay[0], 1.0 / self.decision_rate + self.output_delay[1]


@dataclass(frozen=True)
class ClockModel:
    offset: float = 0.0  # ps
    drift: float = 0.0  # ps/s
    sync_pulse_rate: float = 1e5  # Hz
    sync_jitter_sigma: float = 545.0  # ps

    def __post_init__(self):
        if self.sync_pulse_rate <= 0:
            raise ValueError("sync_pulse_rate must be positive")
        if self.sync_jitter_sigma < 0:
            raise ValueError("sync_jitter_sigma must be non-negative")

    def to_local(self, t_ps: np.ndarray) -> np.ndarray:
        t = np.asarray(t_ps, dtype=float)
        return t + self.offset + self.drift * t / PS


@dataclass
class StationStream:
    """Sorted tag stream plus ground-truth labels (pair id, or
    ``NOISE_LABEL`` / ``SYNC_LABEL``). Labels never reach the wire format."""

    tags: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.tags)


@dataclass
class SimulationResult:
    station1: StationStream
    station2: StationStream
    truth: np.ndarray  # TRUTH_DTYPE, one row per pair with at least one detection
    duration: float  # s

    def detected_pairs(self) -> np.ndarray:
        return self.truth[(self.truth["t1_ps"] >= 0) & (self.truth["t2_ps"] >= 0)]


@dataclass(frozen=True)
class StationConfig:
    """Everything one station contributes to the simulation."""

    detectors: tuple[DetectorParams, DetectorParams]  # "+" port, "-" port
    qrng: QrngParams
    angles: tuple[float, ...]
    clock: ClockModel
    delay_ps: float = 0.0  # fixed satellite-to-station propagation placeholder
    handedness_sign: int = 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``seed`` and integer path ``key``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def emit_pairs(rate: float, duration: float, seed: int) -> np.ndarray:
    """Homogeneous Poisson emission times in ps over ``[0, duration)``."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0:
        return np.empty(0, dtype=np.int64)
    rng = substream(seed, 0)
    n = rng.poisson(rate * duration)
    return np.sort(np.floor(rng.uniform(0.0, duration * PS, size=n)).astype(np.int64))


def singles_rate_estimate(rate: float, loss_db: float, det: DetectorParams) -> float:
    return rate * 10.0 ** (-loss_db / 10.0) * det.efficiency + det.dark_rate + det.background_rate


def _basis_block(seed: int, station: int, block: int, qrng: QrngParams, n_bases: int):
    rng = substream(seed, _BASIS, station, block)
    choice = rng.integers(0, n_bases, size=QRNG_BLOCK, dtype=np.uint8)
    lo, hi = qrng.output_delay
    delay = rng.uniform(lo, hi, size=QRNG_BLOCK) if hi > lo else np.full(QRNG_BLOCK, lo)
    return choice, delay


def active_basis(t_s: np.ndarray, seed: int, station: int, qrng: QrngParams, n_bases: int) -> np.ndarray:
    """Basis index in force at true times ``t_s``.

    QRNG tick ``k`` is drawn at ``k / rate`` and takes effect after its own
    output delay; until then tick ``k - 1`` still holds. There is no tick
    before the first, so tick 0 also covers its own output delay.
    """
    t_s = np.asarray(t_s, dtype=float)
    if n_bases == 1 or t_s.size == 0:
        return np.zeros(t_s.shape, dtype=np.uint8)
    k = np.floor(t_s * qrng.decision_rate).astype(np.int64)
    if np.any(k < 0):
        raise ValueError("times must be non-negative")
    k_prev = np.maximum(k - 1, 0)
    blocks = np.unique(np.concatenate([k // QRNG_BLOCK, k_prev // QRNG_BLOCK]))
    tables = {int(b): _basis_block(seed, station, int(b), qrng, n_bases) for b in blocks}

    def lookup(idx):
        choice = np.empty(idx.shape, dtype=np.uint8)
        delay = np.empty(idx.shape)
        for b, (c, d) in tables.items():
            m = idx // QRNG_BLOCK == b
            if np.any(m):
                choice[m] = c[idx[m] % QRNG_BLOCK]
                delay[m] = d[idx[m] % QRNG_BLOCK]
        return choice, delay

    cur, cur_delay = lookup(k)
    prev, _ = lookup(k_prev)
    pending = t_s < k / qrng.decision_rate + cur_delay
    return np.where(pending, prev, cur)


def probability_table(state: TwoQubitState, cfg1: StationConfig, cfg2: StationConfig) -> np.ndarray:
    """Joint outcome probabilities indexed ``[basis1, basis2, (++,+-,-+,--)]``."""
    table = np.empty((len(cfg1.angles), len(cfg2.angles), 4))
    for i, a in enumerate(cfg1.angles):
        for j, b in enumerate(cfg2.angles):
            table[i, j] = measurement_probabilities(
                state,
                AnalyzerSetting(a, cfg1.handedness_sign),
                AnalyzerSetting(b, cfg2.handedness_sign),
            )
    return table


def _detect(
    rng: np.random.Generator,
    seed: int,
    t_emit: np.ndarray,
    surv1: np.ndarray,
    surv2: np.ndarray,
    pair_ids: np.ndarray,
    table: np.ndarray,
    cfgs: tuple[StationConfig, StationConfig],
):
    """Measure and detect photons that survived their channels.

    Joint outcomes are drawn when both photons survive; a lone survivor is
    measured with its marginal distribution. Detection then depends only on
    the efficiency of the port the photon exits.
    """
    n = len(t_emit)
    t_arrive = [t_emit + cfg.delay_ps for cfg in cfgs]
    b1 = active_basis(t_arrive[0] / PS, seed, 1, cfgs[0].qrng, len(cfgs[0].angles))
    b2 = active_basis(t_arrive[1] / PS, seed, 2, cfgs[1].qrng, len(cfgs[1].angles))
    probs = table[b1, b2]  # (n, 4)
    u = rng.random(n)
    both = surv1 & surv2
    joint = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1).clip(0, 3)
    plus1 = np.where(both, joint < 2, u < probs[:, 0] + probs[:, 1])
    plus2 = np.where(both, joint % 2 == 0, u < probs[:, 0] + probs[:, 2])
    out1 = np.where(plus1, 1, -1).astype(np.int8)
    out2 = np.where(plus2, 1, -1).astype(np.int8)

    det = []
    for surv, out, cfg in ((surv1, out1, cfgs[0]), (surv2, out2, cfgs[1])):
        eff = np.where(out > 0, cfg.detectors[0].efficiency, cfg.detectors[1].efficiency)
        det.append(surv & (rng.random(n) < eff))

    tags, labels, times = [], [], []
    for k, (cfg, d, out, basis) in enumerate(zip(cfgs, det, (out1, out2), (b1, b2))):
        ch = np.where(out[d] > 0, CH_PLUS, CH_MINUS).astype(np.uint8)
        sigma = np.array([cfg.detectors[0].time_jitter_sigma, cfg.detectors[1].time_jitter_sigma])[ch]
        t_true = t_arrive[k][d] + rng.normal(0.0, 1.0, size=int(d.sum())) * sigma
        t_loc = np.rint(cfg.clock.to_local(t_true)).astype(np.int64)
        rec = np.empty(len(t_loc), dtype=TAG_DTYPE)
        rec["time"], rec["channel"], rec["basis"] = t_loc, ch, basis[d]
        tags.append(rec)
        labels.append(pair_ids[d])
        full = np.full(n, -1, dtype=np.int64)
        full[d] = t_loc
        times.append(full)

    any_det = det[0] | det[1]
    truth = np.empty(int(any_det.sum()), dtype=TRUTH_DTYPE)
    truth["pair_id"] = pair_ids[any_det]
    truth["t1_ps"] = times[0][any_det]
    truth["t2_ps"] = times[1][any_det]
    truth["outcome1"] = np.where(det[0], out1, 0)[any_det]
    truth["outcome2"] = np.where(det[1], out2, 0)[any_det]
    truth["basis1"] = b1[any_det]
    truth["basis2"] = b2[any_det]
    return tags, labels, truth


def _noise_and_sync(rng, seed, station, cfg: StationConfig, t0: float, t1: float, with_sync: bool):
    """Dark/background tags per detector and sync tags for true-time window [t0, t1) s."""
    tags, labels = [], []
    for ch, det in ((CH_PLUS, cfg.detectors[0]), (CH_MINUS, cfg.detectors[1])):
        rate = det.dark_rate + det.background_rate
        n = rng.poisson(rate * (t1 - t0))
        t_true = rng.uniform(t0, t1, size=n) * PS + cfg.delay_ps
        rec = np.empty(n, dtype=TAG_DTYPE)
        rec["time"] = np.rint(cfg.clock.to_local(t_true)).astype(np.int64)
        rec["channel"] = ch
        rec["basis"] = active_basis(t_true / PS, seed, station, cfg.qrng, len(cfg.angles))
        tags.append(rec)
        labels.append(np.full(n, NOISE_LABEL, dtype=np.int64))
    if with_sync:
        f = cfg.clock.sync_pulse_rate
        first = math.ceil(t0 * f - 1e-9)
        last = math.ceil(t1 * f - 1e-9)
        pulses = np.arange(first, last, dtype=np.int64)
        t_true = pulses * (PS / f) + cfg.delay_ps + rng.normal(0.0, cfg.clock.sync_jitter_sigma, size=len(pulses))
        rec = np.empty(len(pulses), dtype=TAG_DTYPE)
        rec["time"] = np.rint(cfg.clock.to_local(t_true)).astype(np.int64)
        rec["channel"] = CH_SYNC
        rec["basis"] = 0
        tags.append(rec)
        labels.append(np.full(len(pulses), SYNC_LABEL, dtype=np.int64))
    return tags, labels


def _survival_probability(loss_db, eff=1.0) -> np.ndarray:
    return np.clip(10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0) * eff, 0.0, 1.0)


def _assemble(parts: list, duration: float) -> SimulationResult:
    """Concatenate per-slice streams, releasing each slice as it is copied.

    Slices arrive sorted; jitter can still push a tag across a slice edge,
    so a final stable sort runs only when the joined stream needs it.
    """
    streams = []
    for s in range(2):
        tags = np.concatenate([p[0][s] for p in parts]) if parts else np.empty(0, TAG_DTYPE)
        labels = np.concatenate([p[1][s] for p in parts]) if parts else np.empty(0, np.int64)
        for p in parts:
            p[0][s] = p[1][s] = None
        t = tags["time"]
        if len(t) > 1 and not np.all(t[1:] >= t[:-1]):
            order = np.argsort(t, kind="stable")
            tags, labels = tags[order], labels[order]
            del order
        streams.append(StationStream(tags, labels))
    truth = np.concatenate([p[2] for p in parts]) if parts else np.empty(0, TRUTH_DTYPE)
    return SimulationResult(streams[0], streams[1], truth, duration)


def _run_slices(worker: Callable[[int], tuple], n_slices: int, workers: int) -> list:
    if workers <= 1:
        return [worker(k) for k in range(n_slices)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(n_slices)))


def _merge_slice(det_tags, det_labels, extra):
    tags = []
    labels = []
    for s in range(2):
        t = np.concatenate([det_tags[s], *extra[s][0]])
        lab = np.concatenate([det_labels[s], *extra[s][1]])
        order = np.argsort(t["time"], kind="stable")
        tags.append(t[order])
        labels.append(lab[order])
    return tags, labels


def transmit_and_detect(
    emissions,
    state: TwoQubitState,
    loss1_db,
    loss2_db,
    stations: Sequence[StationConfig],
    seed: int,
    duration: float | None = None,
    slice_s: float = 1.0,
    with_sync: bool = True,
    workers: int = 1,
) -> SimulationResult:
    """Send explicit emission times (ps) through both channels.

    ``loss*_db`` exclude detector efficiency and may be scalars or arrays
    aligned with ``emissions``. Noise and sync tags cover ``[0, duration)``
    (default: up to the last emission). Pair ids index ``emissions``.
    """
    emissions = np.asarray(emissions, dtype=np.int64)
    if np.any(np.asarray(loss1_db) < 0) or np.any(np.asarray(loss2_db) < 0):
        raise ValueError("losses must be non-negative")
    if duration is None:
        duration = float(emissions[-1]) / PS + 1e-9 if len(emissions) else 0.0
    p1 = np.broadcast_to(_survival_probability(loss1_db), emissions.shape)
    p2 = np.broadcast_to(_survival_probability(loss2_db), emissions.shape)
    cfgs = (stations[0], stations[1])
    table = probability_table(state, *cfgs)
    n_slices = max(1, math.ceil(duration / slice_s))
    edges = np.searchsorted(emissions, np.arange(n_slices + 1) * slice_s * PS)
    edges[-1] = len(emissions)

    def worker(k):
        rng = substream(seed, _SLICE, k)
        sl = slice(edges[k], edges[k + 1])
        t = emissions[sl]
        surv1 = rng.random(len(t)) < p1[sl]
        surv2 = rng.random(len(t)) < p2[sl]
        keep = surv1 | surv2
        ids = np.arange(edges[k], edges[k + 1], dtype=np.int64)[keep]
        tags, labels, truth = _detect(rng, seed, t[keep], surv1[keep], surv2[keep], ids, table, cfgs)
        t0, t1 = k * slice_s, min((k + 1) * slice_s, duration)
        extra = [_noise_and_sync(rng, seed, s + 1, cfgs[s], t0, t1, with_sync) for s in range(2)]
        tags, labels = _merge_slice(tags, labels, extra)
        return tags, labels, truth

    return _assemble(_run_slices(worker, n_slices, workers), duration)


def simulate_pass(
    pair_rate: float,
    duration: float,
    state: TwoQubitState,
    loss1_db: Callable[[np.ndarray], np.ndarray],
    loss2_db: Callable[[np.ndarray], np.ndarray],
    stations: Sequence[StationConfig],
    seed: int,
    slice_s: float = 1.0,
    with_sync: bool = True,
    workers: int = 1,
    loss_grid: np.ndarray | None = None,
) -> SimulationResult:
    """Full-rate simulation without materialising every emitted pair.

    Emissions in which at least one photon survives its channel form a
    Poisson process of intensity ``rate * P_any(t)``; it is drawn by thinning
    against the per-slice maximum. ``loss*_db`` map true times (s) to
    channel loss excluding detector efficiency. ``loss_grid`` lists times at
    which the loss curves have their extrema (their break points when they
    are piecewise linear); slice endpoints are always included.
    """
    cfgs = (stations[0], stations[1])
    table = probability_table(state, *cfgs)
    n_slices = max(1, math.ceil(duration / slice_s))
    grid = np.asarray(loss_grid if loss_grid is not None else [], dtype=float)

    def worker(k):
        rng = substream(seed, _SLICE, k)
        t0, t1 = k * slice_s, min((k + 1) * slice_s, duration)
        probe = np.concatenate([[t0, t1], grid[(grid > t0) & (grid < t1)]])
        p1max = _survival_probability(loss1_db(probe)).max()
        p2max = _survival_probability(loss2_db(probe)).max()
        bound = 1.0 - (1.0 - p1max) * (1.0 - p2max)
        n = rng.poisson(pair_rate * bound * (t1 - t0))
        t = np.sort(rng.uniform(t0, t1, size=n))
        p1 = _survival_probability(loss1_db(t))
        p2 = _survival_probability(loss2_db(t))
        p_both = p1 * p2
        p_only1 = p1 * (1.0 - p2)
        p_only2 = (1.0 - p1) * p2
        u = rng.random(n) * bound
        surv1 = u < p_both + p_only1
        surv2 = (u < p_both) | ((u >= p_both + p_only1) & (u < p_both + p_only1 + p_only2))
        keep = surv1 | surv2
        ids = (np.int64(k) << 32) + np.flatnonzero(keep).astype(np.int64)
        t_ps = t[keep] * PS
        tags, labels, truth = _detect(rng, seed, t_ps, surv1[keep], surv2[keep], ids, table, cfgs)
        extra = [_noise_and_sync(rng, seed, s + 1, cfgs[s], t0, t1, with_sync) for s in range(2)]
        tags, labels = _merge_slice(tags, labels, extra)
        return tags, labels, truth

    return _assemble(_run_slices(worker, n_slices, workers), duration)


def sample_setting_counts(
    state: TwoQubitState,
    angle_pairs: Sequence[tuple[float, float]],
    n_coincidences: int,
    rng: np.random.Generator,
    handedness_sign: int = 1,
) -> list[tuple[tuple[float, float], np.ndarray]]:
    """Draw ``n_coincidences`` detected pairs with uniformly random settings.

    Returns ``[(angles, [n++, n+-, n-+, n--]), ...]`` in ``angle_pairs`` order.
    """
    per_setting = rng.multinomial(n_coincidences, np.full(len(angle_pairs), 1.0 / len(angle_pairs)))
    out = []
    for (a, b), n in zip(angle_pairs, per_setting):
        p = measurement_probabilities(state, AnalyzerSetting(a), AnalyzerSetting(b, handedness_sign))
        out.append(((a, b), rng.multinomial(n, p)))
    return out
