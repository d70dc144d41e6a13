"""Event and image data: AER containers, IDX images, synthetic DVS gestures.

Events live in a numpy structured array with fields ``t`` (µs), ``x``,
``y`` and ``p`` (0 = OFF, 1 = ON), sorted by ``t``.
"""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EVENT_DTYPE = np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

AER_MAGIC = b"AERS"
AER_VERSION = 1
# magic, version, width, height, reserved, record count
_AER_HEADER = struct.Struct("<4sHHHHI")
_AER_RECORD = np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1")])

GESTURE_CLASSES = (
    "sweep-right",
    "sweep-down",
    "rotate-cw",
    "expand",
    "sweep-left",
    "sweep-up",
    "rotate-ccw",
    "contract",
    "static",
)


class FormatError(ValueError):
    """A file does not follow its container format."""


class TruncatedFileError(FormatError):
    """A file ended before its declared payload."""


@dataclass
class EventStream:
    width: int
    height: int
    events: np.ndarray = field(default_factory=lambda: np.zeros(0, EVENT_DTYPE))
    label: int | None = None
    duration_us: int | None = None

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=EVENT_DTYPE)

    def __len__(self):
        return len(self.events)

    @property
    def duration(self) -> int:
        if self.duration_us is not None:
            return int(self.duration_us)
        return int(self.events["t"][-1]) + 1 if len(self.events) else 0

    def validate(self) -> None:
        ev = self.events
        if len(ev) == 0:
            return
        if np.any(np.diff(ev["t"].astype(np.int64)) < 0):
            raise FormatError("event timestamps are not sorted")
        if ev["x"].max() >= self.width or ev["y"].max() >= self.height:
            raise FormatError(f"event coordinates outside the {self.width}x{self.height} sensor")
        if ev["p"].max() > 1:
            raise FormatError("polarity must be 0 or 1")

    def same_records(self, other: "EventStream") -> bool:
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.events, other.events))


def make_events(t, x, y, p) -> np.ndarray:
    ev = np.zeros(len(t), EVENT_DTYPE)
    ev["t"], ev["x"], ev["y"], ev["p"] = t, x, y, p
    return ev


# -- AER container ----------------------------------------------------------

def aer_bytes(stream: EventStream) -> bytes:
    stream.validate()
    header = _AER_HEADER.pack(AER_MAGIC, AER_VERSION, stream.width, stream.height, 0,
                              len(stream.events))
    rec = np.zeros(len(stream.events), _AER_RECORD)
    for name in ("t", "x", "y", "p"):
        rec[name] = stream.events[name]
    return header + rec.tobytes()


def parse_aer(buf: bytes) -> EventStream:
    if len(buf) < _AER_HEADER.size:
        raise TruncatedFileError(f"AER header needs {_AER_HEADER.size} bytes, got {len(buf)}")
    magic, version, width, height, _, count = _AER_HEADER.unpack_from(buf)
    if magic != AER_MAGIC:
        raise FormatError(f"bad AER magic {magic!r}")
    if version != AER_VERSION:
        raise FormatError(f"unsupported AER version {version}")
    need = _AER_HEADER.size + count * _AER_RECORD.itemsize
    if len(buf) != need:
        raise TruncatedFileError(f"AER payload is {len(buf)} bytes, header declares {need}")
    rec = np.frombuffer(buf, _AER_RECORD, count=count, offset=_AER_HEADER.size)
    if np.any(rec["pad"] != 0):
        raise FormatError("AER pad byte must be zero")
    stream = EventStream(width, height, make_events(rec["t"], rec["x"], rec["y"], rec["p"]))
    stream.validate()
    return stream


def write_aer(stream: EventStream, path) -> None:
    Path(path).write_bytes(aer_bytes(stream))


def read_aer(path) -> EventStream:
    return parse_aer(Path(path).read_bytes())


# -- IDX images -------------------------------------------------------------

@dataclass
class ImageSet:
    images: np.ndarray          # [N, H, W] in [0, 1]
    labels: np.ndarray | None   # [N] class ids

    def __len__(self):
        return len(self.images)


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_array(path) -> np.ndarray:
    """Raw unsigned-byte IDX payload with its declared shape."""
    with _open(path) as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise TruncatedFileError("IDX file shorter than its magic number")
    zero, dtype_code, ndim = struct.unpack_from(">HBB", buf)
    if zero != 0 or dtype_code != 0x08 or ndim == 0:
        raise FormatError(f"bad IDX magic 0x{int.from_bytes(buf[:4], 'big'):08x}")
    if len(buf) < 4 + 4 * ndim:
        raise TruncatedFileError("IDX header truncated")
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    offset = 4 + 4 * ndim
    count = math.prod(dims)
    if len(buf) - offset < count:
        raise TruncatedFileError(f"IDX payload has {len(buf) - offset} bytes, expected {count}")
    return np.frombuffer(buf, np.uint8, count=count, offset=offset).reshape(dims)


def write_idx(array: np.ndarray, path) -> None:
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, 0x08, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if Path(path).suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def read_idx(path, labels_path=None) -> ImageSet:
    """Load an IDX image file (magic 0x00000803), scaling pixels by 1/255."""
    raw = read_idx_array(path)
    if raw.ndim != 3:
        raise FormatError(f"expected a 3-D image file, got {raw.ndim} dimensions")
    labels = None
    if labels_path is not None:
        labels = read_idx_array(labels_path).astype(np.int64)
        if labels.shape != (raw.shape[0],):
            raise FormatError(f"{len(labels)} labels for {raw.shape[0]} images")
    return ImageSet(raw.astype(np.float64) / 255.0, labels)


# -- synthetic gestures -----------------------------------------------------

def _gesture_intensity(kind: str, t: float, xs, ys, jitter: dict, width: int, height: int):
    cx = (width - 1) / 2 + jitter["dx"]
    cy = (height - 1) / 2 + jitter["dy"]
    w = jitter["thickness"]
    s = t * jitter["speed"]          # progress in [0, ~1.2]
    span = max(width, height)
    if kind in ("sweep-right", "sweep-left"):
        pos = -0.1 * width + 1.2 * width * s
        if kind == "sweep-left":
            pos = width - 1 - pos
        d = xs - pos
    elif kind in ("sweep-down", "sweep-up"):
        pos = -0.1 * height + 1.2 * height * s
        if kind == "sweep-up":
            pos = height - 1 - pos
        d = ys - pos
    elif kind in ("rotate-cw", "rotate-ccw"):
        sign = 1.0 if kind == "rotate-cw" else -1.0
        phi = jitter["phase"] + sign * math.pi * s
        # distance to the line through the center at angle phi (y axis points down)
        d = -(xs - cx) * math.sin(phi) + (ys - cy) * math.cos(phi)
    elif kind in ("expand", "contract"):
        r0, r1 = 0.08 * span, 0.5 * span
        radius = r0 + (r1 - r0) * min(s, 1.0)
        if kind == "contract":
            radius = r1 + r0 - radius
        d = np.hypot(xs - cx, ys - cy) - radius
    else:  # static
        d = np.hypot(xs - cx, ys - cy) - 0.2 * span
    return 0.2 + np.exp(-(d / w) ** 2)


def synth_gesture(class_id: int, seed: int, duration_us: int = 200_000, width: int = 32,
                  height: int = 32, event_rate: float = 1000.0,
                  contrast: float = 0.15, n_classes: int = len(GESTURE_CLASSES)) -> EventStream:
    """Render a moving pattern and emit DVS-style contrast events.

    ``event_rate`` is the sensor sampling rate in Hz: log intensity is
    compared against each pixel's reference that often, and every crossing of
    ``contrast`` emits one event (ON for brighter, OFF for darker).
    """
    if not 0 <= class_id < n_classes:
        raise ValueError(f"class_id {class_id} outside 0..{n_classes - 1}")
    if event_rate <= 0:
        raise ValueError("event_rate must be positive")
    kind = GESTURE_CLASSES[class_id]
    rng = np.random.default_rng([seed, class_id])
    jitter = {
        "dx": rng.uniform(-3, 3),
        "dy": rng.uniform(-3, 3),
        "thickness": rng.uniform(1.5, 3.0),
        "speed": rng.uniform(0.8, 1.2),
        "phase": rng.uniform(0, math.pi),
    }
    thresh = contrast * (1.0 + 0.05 * rng.standard_normal((height, width)))
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    step_us = 1e6 / event_rate
    n_steps = int(duration_us // step_us)

    ref = np.log(_gesture_intensity(kind, 0.0, xs, ys, jitter, width, height))
    chunks = []
    for k in range(1, n_steps + 1):
        t_us = k * step_us
        logi = np.log(_gesture_intensity(kind, t_us / duration_us, xs, ys, jitter, width, height))
        diff = logi - ref
        n = np.floor(np.abs(diff) / thresh).astype(np.int64)
        if not n.any():
            continue
        yy, xx = np.nonzero(n)
        counts = n[yy, xx]
        pol = (diff[yy, xx] > 0).astype(np.uint8)
        ref[yy, xx] += np.where(pol == 1, 1.0, -1.0) * counts * thresh[yy, xx]
        reps = np.repeat(np.arange(len(yy)), counts)
        t_lo = (k - 1) * step_us
        ts = np.floor(t_lo + rng.uniform(0, step_us, size=len(reps))) + 1
        chunks.append(make_events(np.minimum(ts, t_us), xx[reps], yy[reps], pol[reps]))
    ev = np.concatenate(chunks) if chunks else np.zeros(0, EVENT_DTYPE)
    ev = ev[np.argsort(ev["t"], kind="stable")]
    return EventStream(width, height, ev, label=class_id, duration_us=duration_us)


def events_to_frames(stream: EventStream, bin_width_us: int, T_max: int) -> np.ndarray:
    """Binary voxel grid [T, 2, H, W]; channel 0 = OFF, 1 = ON."""
    if bin_width_us <= 0:
        raise ValueError("bin_width_us must be positive")
    T = min(math.ceil(stream.duration / bin_width_us), T_max)
    frames = np.zeros((T, 2, stream.height, stream.width))
    ev = stream.events
    b = ev["t"].astype(np.int64) // bin_width_us
    keep = b < T
    frames[b[keep], ev["p"][keep], ev["y"][keep], ev["x"][keep]] = 1.0
    return frames
