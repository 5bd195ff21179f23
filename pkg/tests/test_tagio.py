import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satentangle import tagio
from satentangle.eventsim import TAG_DTYPE, TRUTH_DTYPE
from satentangle.tagio import HEADER, WIRE_DTYPE, TagFormatError
from satentangle.timesync import COINC_DTYPE


def make_tags(times, channels=None, bases=None):
    tags = np.zeros(len(times), dtype=TAG_DTYPE)
    tags["time"] = times
    tags["channel"] = channels if channels is not None else 0
    tags["basis"] = bases if bases is not None else 0
    return tags


def test_binary_layout():
    data = tagio.encode_tags(make_tags([5, 2**40], [1, 2], [3, 0]))
    assert data[:4] == b"ETT1"
    assert len(data) == HEADER.size + 2 * 12
    assert int.from_bytes(data[4:8], "little") == 2
    assert int.from_bytes(data[8:16], "little") == 5
    assert data[16] == 1 and data[17] == 3


@given(
    st.lists(
        st.tuples(st.integers(0, 2**62), st.integers(0, 2), st.integers(0, 3)),
        max_size=50,
    )
)
def test_binary_round_trip(rows):
    tags = np.array(rows, dtype=TAG_DTYPE) if rows else np.empty(0, TAG_DTYPE)
    back = tagio.decode_tags(tagio.encode_tags(tags))
    assert back.tobytes() == tags.tobytes()


@pytest.mark.parametrize("suffix", [".ett", ".csv"])
def test_file_round_trip(tmp_path, suffix):
    tags = make_tags([0, 10, 10, 999_999_999_999], [0, 1, 2, 0], [0, 1, 0, 1])
    path = tmp_path / f"tags{suffix}"
    tagio.write_tags(path, tags)
    assert tagio.read_tags(path).tobytes() == tags.tobytes()


def test_empty_files(tmp_path):
    for name in ("e.ett", "e.csv"):
        tagio.write_tags(tmp_path / name, make_tags([]))
        assert len(tagio.read_tags(tmp_path / name)) == 0


def test_bad_magic_reports_offset():
    data = bytearray(tagio.encode_tags(make_tags([1, 2])))
    data[:4] = b"XXXX"
    with pytest.raises(TagFormatError, match="at byte 0") as exc:
        tagio.decode_tags(bytes(data))
    assert exc.value.offset == 0


def test_truncation_reports_offset(tmp_path):
    data = tagio.encode_tags(make_tags([1, 2, 3]))
    path = tmp_path / "cut.ett"
    path.write_bytes(data[:-5])
    with pytest.raises(TagFormatError) as exc:
        tagio.read_tags(path)
    assert exc.value.offset == len(data) - 5
    assert str(path) in str(exc.value)
    with pytest.raises(TagFormatError, match="truncated header"):
        tagio.decode_tags(b"ETT")


def test_reserved_field_must_be_zero():
    data = bytearray(tagio.encode_tags(make_tags([1, 2, 3])))
    pos = HEADER.size + WIRE_DTYPE.itemsize + 10
    data[pos] = 7
    with pytest.raises(TagFormatError) as exc:
        tagio.decode_tags(bytes(data))
    assert exc.value.offset == pos


def test_negative_time_not_writable():
    with pytest.raises(ValueError):
        tagio.encode_tags(make_tags([-1]))


def test_csv_bad_record_offset(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_bytes(b"time_ps,channel,basis_index\n10,0,0\n11,x,0\n")
    with pytest.raises(TagFormatError) as exc:
        tagio.read_tags(path)
    assert exc.value.offset == len(b"time_ps,channel,basis_index\n10,0,0\n")
    path.write_bytes(b"when,what\n")
    with pytest.raises(TagFormatError, match="expected header"):
        tagio.read_tags(path)


def test_truth_round_trip(tmp_path):
    truth = np.zeros(3, dtype=TRUTH_DTYPE)
    truth["pair_id"] = [0, 5, 9]
    truth["t1_ps"] = [100, -1, 300]
    truth["t2_ps"] = [110, 210, -1]
    truth["outcome1"] = [1, 0, -1]
    truth["outcome2"] = [-1, 1, 0]
    truth["basis1"] = [0, 1, 1]
    truth["basis2"] = [1, 0, 1]
    tagio.write_truth(tmp_path / "truth.csv", truth)
    assert tagio.read_truth(tmp_path / "truth.csv").tobytes() == truth.tobytes()


def test_coincidence_round_trip(tmp_path):
    rec = np.zeros(2, dtype=COINC_DTYPE)
    rec["t1"] = [1.5, 1e12 / 3]
    rec["t2"] = [2.25, 1e12 / 7]
    rec["basis1"] = [0, 1]
    rec["outcome1"] = [1, -1]
    rec["outcome2"] = [-1, -1]
    tagio.write_coincidences(tmp_path / "c.csv", rec)
    back = tagio.read_coincidences(tmp_path / "c.csv")
    for name in ("t1", "t2", "basis1", "basis2", "outcome1", "outcome2"):
        assert np.array_equal(back[name], rec[name])
    assert np.all(back["idx1"] == -1)


def test_failed_write_leaves_no_file(tmp_path):
    path = tmp_path / "tags.ett"
    with pytest.raises(ValueError):
        tagio.write_tags(path, make_tags([-5]))
    assert list(tmp_path.iterdir()) == []
