import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import cross_val_score

from mambaspike.events import (
    EVENT_DTYPE, GESTURE_CLASSES, EventStream, FormatError, TruncatedFileError, aer_bytes,
    events_to_frames, make_events, parse_aer, read_aer, read_idx, synth_gesture, write_aer,
    write_idx,
)


def random_stream(r, n, width=40, height=30, max_t=10**6):
    t = np.sort(r.integers(0, max_t, size=n))
    return EventStream(width, height, make_events(t, r.integers(0, width, n),
                                                  r.integers(0, height, n), r.integers(0, 2, n)))


def hand_packed(stream):
    """Record layout written out field by field."""
    out = b"AERS" + struct.pack("<HHHHI", 1, stream.width, stream.height, 0, len(stream))
    for e in stream.events:
        out += struct.pack("<IHHBB", e["t"], e["x"], e["y"], e["p"], 0)
    return out


# -- AER ----------------------------------------------------------------------

def test_empty_stream_is_header_only(tmp_path):
    s = EventStream(8, 8)
    write_aer(s, tmp_path / "e.aer")
    assert (tmp_path / "e.aer").stat().st_size == 16
    assert read_aer(tmp_path / "e.aer").same_records(s)


def test_single_event_round_trips_bit_exactly(tmp_path):
    s = EventStream(4, 4, make_events([5], [1], [2], [1]))
    write_aer(s, tmp_path / "one.aer")
    raw = (tmp_path / "one.aer").read_bytes()
    assert raw == hand_packed(s)
    back = read_aer(tmp_path / "one.aer")
    assert back.events.tolist() == [(5, 1, 2, 1)]


def test_ten_thousand_events_round_trip(tmp_path, rng):
    s = random_stream(rng, 10_000)
    write_aer(s, tmp_path / "big.aer")
    back = read_aer(tmp_path / "big.aer")
    assert back.same_records(s)
    assert aer_bytes(back) == (tmp_path / "big.aer").read_bytes()


@settings(max_examples=200)
@given(st.integers(0, 300), st.integers(1, 500), st.integers(1, 500), st.integers(0, 2**32 - 1))
def test_aer_round_trip_property(n, width, height, seed):
    s = random_stream(np.random.default_rng(seed), n, width, height, max_t=2**32 - 1)
    buf = aer_bytes(s)
    assert buf == hand_packed(s)
    back = parse_aer(buf)
    assert back.same_records(s)
    assert aer_bytes(back) == buf


def test_unsorted_timestamps_rejected_on_read():
    s = EventStream(4, 4, make_events([5, 9], [0, 1], [0, 1], [1, 0]))
    buf = bytearray(aer_bytes(s))
    struct.pack_into("<I", buf, 16, 100)
    with pytest.raises(FormatError, match="sorted"):
        parse_aer(bytes(buf))


def test_out_of_bounds_rejected_on_read():
    s = EventStream(4, 4, make_events([5], [3], [0], [1]))
    buf = bytearray(aer_bytes(s))
    struct.pack_into("<H", buf, 20, 4)
    with pytest.raises(FormatError, match="outside"):
        parse_aer(bytes(buf))


def test_out_of_bounds_rejected_on_write():
    with pytest.raises(FormatError):
        aer_bytes(EventStream(4, 4, make_events([0], [0], [7], [0])))


def test_bad_magic_and_truncation():
    buf = aer_bytes(EventStream(4, 4, make_events([0, 1], [0, 1], [0, 1], [0, 1])))
    with pytest.raises(FormatError, match="magic"):
        parse_aer(b"XXXX" + buf[4:])
    with pytest.raises(TruncatedFileError):
        parse_aer(buf[:-3])
    with pytest.raises(TruncatedFileError):
        parse_aer(buf[:10])


# -- IDX ----------------------------------------------------------------------

def test_idx_golden_file(tmp_path):
    raw = bytes.fromhex("00000803" "00000002" "00000002" "00000002") + bytes([0, 255, 128, 1, 2, 3, 4, 5])
    (tmp_path / "img.idx").write_bytes(raw)
    (tmp_path / "lab.idx").write_bytes(bytes.fromhex("00000801" "00000002") + bytes([3, 7]))
    ims = read_idx(tmp_path / "img.idx", tmp_path / "lab.idx")
    assert ims.images.shape == (2, 2, 2)
    assert ims.images[0, 0, 1] == 1.0
    assert ims.images[0, 1, 0] == pytest.approx(0.50196, abs=1e-5)
    assert ims.labels.tolist() == [3, 7]


def test_idx_gzip_round_trip(tmp_path, rng):
    arr = rng.integers(0, 256, size=(3, 5, 4), dtype=np.uint8)
    write_idx(arr, tmp_path / "a.idx.gz")
    with gzip.open(tmp_path / "a.idx.gz") as fh:
        assert fh.read(4) == bytes.fromhex("00000803")
    np.testing.assert_array_equal(read_idx(tmp_path / "a.idx.gz").images, arr / 255.0)


def test_idx_bad_magic(tmp_path):
    (tmp_path / "bad.idx").write_bytes(bytes.fromhex("00000c03") + b"\0" * 20)
    with pytest.raises(FormatError, match="magic"):
        read_idx(tmp_path / "bad.idx")


def test_idx_truncated_payload(tmp_path):
    raw = bytes.fromhex("00000803" "00000002" "00000002" "00000002") + bytes(5)
    (tmp_path / "short.idx").write_bytes(raw)
    with pytest.raises(TruncatedFileError):
        read_idx(tmp_path / "short.idx")


# -- synthetic gestures ----------------------------------------------------------

def test_gesture_is_deterministic():
    a, b = synth_gesture(2, seed=11), synth_gesture(2, seed=11)
    assert a.same_records(b) and a.label == 2
    assert not a.same_records(synth_gesture(2, seed=12))


def test_static_class_emits_no_events():
    static = GESTURE_CLASSES.index("static")
    for seed in range(5):
        assert len(synth_gesture(static, seed)) == 0


def test_class_id_out_of_range():
    with pytest.raises(ValueError):
        synth_gesture(len(GESTURE_CLASSES), 0)
    with pytest.raises(ValueError):
        synth_gesture(-1, 0)


@settings(max_examples=30)
@given(st.integers(0, len(GESTURE_CLASSES) - 1), st.integers(0, 10**6),
       st.sampled_from([(16, 16), (32, 24)]), st.sampled_from([200.0, 1000.0]))
def test_gesture_streams_sorted_and_in_bounds(cls, seed, size, rate):
    s = synth_gesture(cls, seed, duration_us=100_000, width=size[0], height=size[1], event_rate=rate)
    s.validate()
    assert np.all(np.diff(s.events["t"].astype(np.int64)) >= 0)
    assert np.all(s.events["t"] <= 100_000)


def _count_features(s, bins=4):
    """Per-polarity event counts in a coarse spatial grid and time quarters."""
    ev = s.events
    tb = np.minimum(ev["t"].astype(np.int64) * bins // s.duration, bins - 1)
    xb = ev["x"].astype(np.int64) * bins // s.width
    yb = ev["y"].astype(np.int64) * bins // s.height
    h = np.zeros((bins, 2, bins, bins))
    np.add.at(h, (tb, ev["p"], yb, xb), 1.0)
    return np.log1p(h.ravel())


@pytest.mark.slow
def test_gesture_classes_are_separable():
    per_class = 1000
    X, y = [], []
    for c in range(len(GESTURE_CLASSES)):
        for i in range(per_class):
            s = synth_gesture(c, seed=i, duration_us=100_000, width=16, height=16, event_rate=200.0)
            X.append(_count_features(s))
            y.append(c)
    acc = cross_val_score(LogisticRegression(max_iter=2000), np.array(X), np.array(y), cv=3).mean()
    assert acc > 1.0 / len(GESTURE_CLASSES) + 0.2


# -- voxelization ---------------------------------------------------------------

def brute_force_frames(s, bin_width, T_max):
    T = min(-(-s.duration // bin_width), T_max)
    out = np.zeros((T, 2, s.height, s.width))
    for e in s.events:
        b = int(e["t"]) // bin_width
        if b < T:
            out[b, e["p"], e["y"], e["x"]] += 1
    return (out >= 1).astype(np.float64)


def test_frames_of_empty_stream():
    f = events_to_frames(EventStream(5, 4, duration_us=1000), 100, 50)
    assert f.shape == (10, 2, 4, 5) and not f.any()


def test_single_on_event_at_zero():
    f = events_to_frames(EventStream(5, 4, make_events([0], [3], [2], [1])), 10, 5)
    assert f.sum() == 1 and f[0, 1, 2, 3] == 1


def test_frames_reject_bad_bin_width():
    with pytest.raises(ValueError):
        events_to_frames(EventStream(2, 2), 0, 4)


@settings(max_examples=100)
@given(st.integers(0, 400), st.integers(1, 5000), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_frames_match_brute_force(n, bin_width, T_max, seed):
    s = random_stream(np.random.default_rng(seed), n, 9, 7, max_t=50_000)
    f = events_to_frames(s, bin_width, T_max)
    np.testing.assert_array_equal(f, brute_force_frames(s, bin_width, T_max))
    assert set(np.unique(f)) <= {0.0, 1.0}


def test_event_dtype_widths():
    assert [EVENT_DTYPE[n].itemsize for n in ("t", "x", "y", "p")] == [4, 2, 2, 1]
