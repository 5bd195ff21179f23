"""Clock recovery from sync pulses and windowed coincidence matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eventsim import CH_SYNC, PS

COINC_DTYPE = np.dtype(
    [
        ("t1", "<f8"),
        ("t2", "<f8"),
        ("basis1", "u1"),
        ("basis2", "u1"),
        ("outcome1", "i1"),
        ("outcome2", "i1"),
        ("idx1", "<i8"),
        ("idx2", "<i8"),
    ]
)

MIN_SYNC_TAGS = 10


class SyncError(ValueError):
    pass


@dataclass(frozen=True)
class SyncFit:
    """``t2 = t1 + offset + drift * t1[s]`` with times in ps."""

    offset: float = 0.0  # ps
    drift: float = 0.0  # ps/s
    residual_rms: float = 0.0  # ps

    def to_common(self, t2):
        """Map station-2 times onto the station-1 clock."""
        return (np.asarray(t2, dtype=float) - self.offset) / (1.0 + self.drift / PS)

    def inverse(self) -> "SyncFit":
        return SyncFit(-self.offset, -self.drift, self.residual_rms)


def sync_times(tags) -> np.ndarray:
    """Sync-channel times from a tag array, or the array itself if 1-D numeric."""
    tags = np.asarray(tags)
    if tags.dtype.names is not None:
        return tags["time"][tags["channel"] == CH_SYNC]
    return tags


_CHUNK = 1 << 20


def _chunks(n: int):
    for s in range(0, n, _CHUNK):
        yield slice(s, min(s + _CHUNK, n))


def _linfit(n: int, xy) -> tuple[float, float, float, float]:
    """Chunked least-squares line ``y = a + b (x - xm)``.

    ``xy(sl)`` returns float ``(x, y)`` for a slice. Returns ``(a, b, xm, rms)``.
    Sums run over centred values so that long streams keep full precision.
    """
    sx = sy = 0.0
    for sl in _chunks(n):
        x, y = xy(sl)
        sx += float(x.sum())
        sy += float(y.sum())
    xm, ym = sx / n, sy / n
    sxx = sxy = 0.0
    for sl in _chunks(n):
        x, y = xy(sl)
        xc = x - xm
        sxx += float(np.dot(xc, xc))
        sxy += float(np.dot(xc, y - ym))
    b = sxy / sxx if sxx > 0 else 0.0
    ss = 0.0
    for sl in _chunks(n):
        x, y = xy(sl)
        r = y - ym - b * (x - xm)
        ss += float(np.dot(r, r))
    return ym, b, xm, float(np.sqrt(ss / n))


def _pulse_indices(t: np.ndarray, period: float) -> tuple[np.ndarray, float]:
    """Pulse numbers and timing jitter about the best-fit pulse grid."""
    n = len(t)
    t0 = t[0]
    k = np.empty(n, dtype=np.int64)
    k[0] = 0
    # each gap is rounded to whole periods, so the period estimate need not
    # be accurate over the full stream
    for sl in _chunks(n - 1):
        steps = np.rint(np.diff(t[sl.start : sl.stop + 1]).astype(float) / period).astype(np.int64)
        if np.any(steps <= 0):
            raise SyncError("sync pulses cannot be numbered unambiguously")
        k[sl.start + 1 : sl.stop + 1] = k[sl.start] + np.cumsum(steps)

    def xy(sl):
        kk = k[sl].astype(float)
        return kk, (t[sl] - t0).astype(float) - kk * period

    return k, _linfit(n, xy)[3]


def fit_clock(sync1, sync2) -> SyncFit:
    """Least-squares offset/drift between two sync-pulse streams.

    Both streams must start at the same pulse; pulses are numbered by
    rounding to the median spacing (taken over the first million pulses)
    and matched by number.
    """
    t1 = np.asarray(sync_times(sync1))
    t2 = np.asarray(sync_times(sync2))
    if len(t1) < MIN_SYNC_TAGS or len(t2) < MIN_SYNC_TAGS:
        raise SyncError(f"need at least {MIN_SYNC_TAGS} sync tags per stream")
    period = float(np.median(np.diff(t1[: _CHUNK + 1])))
    if period <= 0:
        raise SyncError("sync tags are not increasing")
    k1, j1 = _pulse_indices(t1, period)
    k2, j2 = _pulse_indices(t2, period)
    if period < 4.0 * max(j1, j2):
        raise SyncError(f"pulse spacing {period:.0f} ps is under 4x the jitter {max(j1, j2):.0f} ps")
    # pulse numbers are strictly increasing, so association is a sorted lookup
    pos = np.searchsorted(k2, k1).clip(0, len(k2) - 1)
    i1 = np.flatnonzero(k2[pos] == k1)
    i2 = pos[i1]
    del pos, k1, k2
    if len(i1) < MIN_SYNC_TAGS:
        raise SyncError("too few associated sync pulses")
    # differences in integer arithmetic before converting to float
    base1 = t1[i1[0]]
    d0 = t2[i2[0]] - base1

    def xy(sl):
        a = t1[i1[sl]]
        return (a - base1).astype(float), (t2[i2[sl]] - a - d0).astype(float)

    mean_y, slope, xm, rms = _linfit(len(i1), xy)
    # d = d0 + mean_y + slope (t1 - base1 - xm) = offset + slope t1
    offset = float(d0) + mean_y - slope * (xm + float(base1))
    return SyncFit(float(offset), float(slope * PS), rms)


def _check_sorted(t, name):
    if np.any(np.diff(t) < 0):
        raise ValueError(f"{name} is not sorted by time")


def match_times(t1: np.ndarray, t2: np.ndarray, window: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy nearest-first matching of two sorted time arrays.

    Among all pairs with ``|t2 - t1| <= window``, the closest is taken first,
    both members are retired, and so on. Ties go to the pair whose earlier
    member is earlier, then whose later member is earlier, then by index.
    Work is linear apart from clusters of mutually overlapping windows.
    """
    n1 = len(t1)
    if n1 == 0 or len(t2) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    t = np.concatenate([t1, t2])
    src = np.concatenate([np.zeros(n1, np.int8), np.ones(len(t2), np.int8)])
    idx = np.concatenate([np.arange(n1), np.arange(len(t2))])
    order = np.argsort(t, kind="stable")
    t, src, idx = t[order], src[order], idx[order]
    # windows never straddle a gap wider than the window
    starts = np.flatnonzero(np.concatenate([[True], np.diff(t) > window]))
    sizes = np.diff(np.append(starts, len(t)))
    n_from_2 = np.add.reduceat(src.astype(np.int64), starts)
    mixed = (n_from_2 > 0) & (n_from_2 < sizes)

    out1, out2 = [], []
    simple = starts[mixed & (sizes == 2)]
    first_is_1 = src[simple] == 0
    out1.append(np.where(first_is_1, idx[simple], idx[simple + 1]))
    out2.append(np.where(first_is_1, idx[simple + 1], idx[simple]))

    for s, size in zip(starts[mixed & (sizes > 2)], sizes[mixed & (sizes > 2)]):
        block = slice(s, s + size)
        a = idx[block][src[block] == 0]
        b = idx[block][src[block] == 1]
        ta, tb = t1[a], t2[b]
        dt = np.abs(tb[None, :] - ta[:, None])
        ii, jj = np.nonzero(dt <= window)
        keys = sorted(
            (dt[i, j], min(ta[i], tb[j]), max(ta[i], tb[j]), a[i], b[j]) for i, j in zip(ii, jj)
        )
        used1, used2 = set(), set()
        for *_, i, j in keys:
            if i in used1 or j in used2:
                continue
            used1.add(i)
            used2.add(j)
            out1.append(np.array([i]))
            out2.append(np.array([j]))
    i1 = np.concatenate(out1).astype(np.int64)
    i2 = np.concatenate(out2).astype(np.int64)
    order = np.lexsort((i2, i1))
    return i1[order], i2[order]


def match_coincidences(tags1, tags2, fit: SyncFit, window: float) -> np.ndarray:
    """Pair detection tags of two stations within ``window`` ps.

    Station-2 times are first mapped to station 1's clock with ``fit``.
    Sync tags are ignored. Returns a ``COINC_DTYPE`` array sorted by station-1
    index; ``idx1``/``idx2`` point into the input arrays.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    _check_sorted(tags1["time"], "stream 1")
    _check_sorted(tags2["time"], "stream 2")
    sel1 = np.flatnonzero(tags1["channel"] != CH_SYNC)
    sel2 = np.flatnonzero(tags2["channel"] != CH_SYNC)
    t1 = tags1["time"][sel1].astype(float)
    t2 = fit.to_common(tags2["time"][sel2])
    i, j = match_times(t1, t2, window)
    rec = np.empty(len(i), dtype=COINC_DTYPE)
    rec["t1"] = t1[i]
    rec["t2"] = t2[j]
    rec["idx1"] = sel1[i]
    rec["idx2"] = sel2[j]
    a = tags1[sel1[i]]
    b = tags2[sel2[j]]
    rec["basis1"] = a["basis"]
    rec["basis2"] = b["basis"]
    rec["outcome1"] = np.where(a["channel"] == 0, 1, -1)
    rec["outcome2"] = np.where(b["channel"] == 0, 1, -1)
    return rec


def accidental_rate(singles1: float, singles2: float, window: float) -> float:
    """Chance coincidence rate (Hz) for total acceptance width ``window`` ps.

    A matcher accepting ``|dt| <= w`` has total width ``2 w``.
    """
    return singles1 * singles2 * window / PS


def acceptance_half_width(window: float, convention: str = "plus_minus") -> float:
    """Matcher tolerance for a configured window.

    ``plus_minus`` accepts ``|dt| <= window``; ``full_width`` treats the window
    as the total width and accepts ``|dt| <= window / 2``.
    """
    if convention == "plus_minus":
        return float(window)
    if convention == "full_width":
        return 0.5 * float(window)
    raise ValueError(f"unknown window convention {convention!r}")
