"""Readers and writers for time-tag, ground-truth and coincidence files.

Binary tag file (little-endian)::

    b"ETT1"  u32 record_count
    record_count x { u64 time_ps, u8 channel, u8 basis_index, u16 reserved=0 }
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from ._atomic import atomic_open
from .eventsim import TAG_DTYPE, TRUTH_DTYPE
from .timesync import COINC_DTYPE

MAGIC = b"ETT1"
HEADER = struct.Struct("<4sI")
WIRE_DTYPE = np.dtype([("time", "<u8"), ("channel", "u1"), ("basis", "u1"), ("reserved", "<u2")])
assert WIRE_DTYPE.itemsize == 12

TAG_CSV_HEADER = ["time_ps", "channel", "basis_index"]
TRUTH_CSV_HEADER = ["pair_id", "t1_ps", "t2_ps", "outcome1", "outcome2", "basis1", "basis2"]
COINC_CSV_HEADER = ["t1_ps", "t2_ps", "basis1", "basis2", "outcome1", "outcome2"]


class TagFormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None, path=None):
        where = f"{path}: " if path is not None else ""
        at = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{where}{message}{at}")
        self.offset = offset


def atomic_write_bytes(path, data: bytes) -> None:
    with atomic_open(path, "wb") as fh:
        fh.write(data)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_tags(tags: np.ndarray) -> bytes:
    if len(tags) and tags["time"].min() < 0:
        raise ValueError("negative tag time cannot be written as u64")
    wire = np.zeros(len(tags), dtype=WIRE_DTYPE)
    wire["time"] = tags["time"]
    wire["channel"] = tags["channel"]
    wire["basis"] = tags["basis"]
    return HEADER.pack(MAGIC, len(tags)) + wire.tobytes()


def decode_tags(data: bytes, path=None) -> np.ndarray:
    if len(data) < HEADER.size:
        raise TagFormatError("truncated header", len(data), path)
    magic, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TagFormatError(f"bad magic {magic!r}", 0, path)
    expected = HEADER.size + count * WIRE_DTYPE.itemsize
    if len(data) != expected:
        offset = min(len(data), expected)
        raise TagFormatError(f"header declares {count} records ({expected} bytes), file has {len(data)}", offset, path)
    wire = np.frombuffer(data, dtype=WIRE_DTYPE, offset=HEADER.size, count=count)
    bad = np.flatnonzero(wire["reserved"] != 0)
    if len(bad):
        raise TagFormatError("reserved field not zero", HEADER.size + int(bad[0]) * WIRE_DTYPE.itemsize + 10, path)
    if np.any(wire["time"] > np.iinfo(np.int64).max):
        raise TagFormatError("time exceeds int64 range", None, path)
    tags = np.empty(count, dtype=TAG_DTYPE)
    tags["time"] = wire["time"].astype(np.int64)
    tags["channel"] = wire["channel"]
    tags["basis"] = wire["basis"]
    return tags


def write_tags(path, tags: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        rows = "\n".join(f"{t},{c},{b}" for t, c, b in zip(tags["time"], tags["channel"], tags["basis"]))
        atomic_write_text(path, ",".join(TAG_CSV_HEADER) + "\n" + rows + ("\n" if len(tags) else ""))
    else:
        atomic_write_bytes(path, encode_tags(tags))


def read_tags(path) -> np.ndarray:
    """Load a tag file; the format follows the extension (``.csv`` or binary)."""
    path = Path(path)
    if path.suffix == ".csv":
        return _read_tag_csv(path)
    return decode_tags(path.read_bytes(), path)


def _read_tag_csv(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    if not lines or lines[0].strip().decode("utf-8", "replace").split(",") != TAG_CSV_HEADER:
        raise TagFormatError(f"expected header {','.join(TAG_CSV_HEADER)}", 0, path)
    offset = len(lines[0]) + 1
    out = []
    for line in lines[1:]:
        if line.strip():
            try:
                t, c, b = (int(v) for v in line.decode("utf-8").split(","))
                if t < 0 or not 0 <= c <= 255 or not 0 <= b <= 255:
                    raise ValueError
            except ValueError:
                raise TagFormatError(f"bad record {line[:40]!r}", offset, path) from None
            out.append((t, c, b))
        offset += len(line) + 1
    return np.array(out, dtype=TAG_DTYPE) if out else np.empty(0, TAG_DTYPE)


def write_truth(path, truth: np.ndarray) -> None:
    lines = [",".join(TRUTH_CSV_HEADER)]
    lines += [",".join(str(row[name]) for name in TRUTH_CSV_HEADER) for row in truth]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_truth(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [tuple(int(r[k]) for k in TRUTH_CSV_HEADER) for r in csv.DictReader(fh)]
    return np.array(rows, dtype=TRUTH_DTYPE) if rows else np.empty(0, TRUTH_DTYPE)


def write_coincidences(path, records: np.ndarray) -> None:
    lines = [",".join(COINC_CSV_HEADER)]
    lines += [
        f"{float(r['t1'])!r},{float(r['t2'])!r},{r['basis1']},{r['basis2']},{r['outcome1']},{r['outcome2']}" for r in records
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_coincidences(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    rec = np.zeros(len(rows), dtype=COINC_DTYPE)
    for k, r in enumerate(rows):
        rec[k]["t1"] = float(r["t1_ps"])
        rec[k]["t2"] = float(r["t2_ps"])
        for name in ("basis1", "basis2", "outcome1", "outcome2"):
            rec[k][name] = int(r[name])
    rec["idx1"] = -1
    rec["idx2"] = -1
    return rec
