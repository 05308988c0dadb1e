"""Event-camera data: threshold-model synthesis, parsing, binning, bbox filtering.

Wire formats (bit-exact):
  - CSV lines "t,x,y,p" with t in integer microseconds and p in {-1, 1}.
  - Binary records of 13 bytes: little-endian u64 t, u16 x, u16 y, i8 p.
  - Binned-tensor container: magic b"EVTENS1\\0", u32 tensor count, then per
    tensor u64 window_start, u64 window_len, u32 ndim, u32 dims[ndim], and the
    row-major u16 little-endian payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
_TENSOR_MAGIC = b"EVTENS1\x00"
_COUNT_MAX = np.iinfo(np.uint16).max


class EventFormatError(ValueError):
    pass


@dataclass
class Event:
    """A single (t, x, y, p) tuple; t in microseconds, p in {-1, +1}."""

    t: int
    x: int
    y: int
    p: int


@dataclass
class EventStream:
    """Column-wise event arrays plus sensor geometry; t is nondecreasing."""

    t: np.ndarray  # (N,) uint64 microseconds
    x: np.ndarray  # (N,) uint16
    y: np.ndarray  # (N,) uint16
    p: np.ndarray  # (N,) int8 in {-1, +1}
    width: int
    height: int

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.uint64)
        self.x = np.asarray(self.x, dtype=np.uint16)
        self.y = np.asarray(self.y, dtype=np.uint16)
        self.p = np.asarray(self.p, dtype=np.int8)
        n = self.t.shape[0]
        if not (self.x.shape[0] == self.y.shape[0] == self.p.shape[0] == n):
            raise EventFormatError("event columns have mismatched lengths")
        if self.width < 1 or self.height < 1:
            raise EventFormatError("sensor dimensions must be positive")
        if n:
            if np.any(np.diff(self.t.astype(np.int64)) < 0):
                raise EventFormatError("event timestamps must be nondecreasing")
            if np.any(self.x >= self.width) or np.any(self.y >= self.height):
                raise EventFormatError("event coordinates out of sensor bounds")
            if np.any((self.p != 1) & (self.p != -1)):
                raise EventFormatError("event polarity must be -1 or +1")

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )


@dataclass
class BinnedTensor:
    """Stacked histogram: u16 counts with shape (2 polarities, T bins, H, W)."""

    counts: np.ndarray
    window_start: int  # microseconds
    window_len: int  # microseconds


@dataclass
class BBox:
    x: float
    y: float
    w: float
    h: float
    cls: int = 0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("bbox sides must be positive")


@dataclass
class FilterProfile:
    min_side: float
    min_diag: float


FILTER_PROFILES = {
    "gen1": FilterProfile(min_side=10.0, min_diag=30.0),
    "mpx1": FilterProfile(min_side=20.0, min_diag=60.0),
}


def synthesize_events(log_intensity, times_us, threshold: float) -> EventStream:
    """Emit events from a sampled log-intensity field via the +/-C threshold model.

    log_intensity has shape (T, H, W) on a strictly increasing time grid. Per
    pixel, whenever the change since the last event reference reaches +/-C the
    pixel fires (multiple events per step when |change| >= 2C); the reference
    moves by +/-C per event and crossing times snap to the grid.
    """
    field = np.asarray(log_intensity, dtype=np.float64)
    times = np.asarray(times_us, dtype=np.uint64)
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    if field.ndim != 3 or field.shape[0] != times.shape[0]:
        raise ValueError("log_intensity must be (T, H, W) matching the time grid")
    if times.shape[0] and np.any(np.diff(times.astype(np.int64)) <= 0):
        raise ValueError("time grid must be strictly increasing")
    height, width = field.shape[1], field.shape[2]
    ref = field[0].copy()
    ts, xs, ys, ps = [], [], [], []
    for k in range(1, field.shape[0]):
        delta = field[k] - ref
        n_signed = np.zeros(delta.shape, dtype=np.int64)
        pos = delta >= threshold
        neg = delta <= -threshold
        n_signed[pos] = np.floor(delta[pos] / threshold).astype(np.int64)
        n_signed[neg] = -np.floor(-delta[neg] / threshold).astype(np.int64)
        iy, ix = np.nonzero(n_signed)
        if iy.size == 0:
            continue
        counts = np.abs(n_signed[iy, ix])
        pol = np.sign(n_signed[iy, ix]).astype(np.int8)
        ref[iy, ix] += n_signed[iy, ix] * threshold
        reps = counts.astype(np.int64)
        xs.append(np.repeat(ix.astype(np.uint16), reps))
        ys.append(np.repeat(iy.astype(np.uint16), reps))
        ps.append(np.repeat(pol, reps))
        ts.append(np.full(int(reps.sum()), times[k], dtype=np.uint64))
    if ts:
        cat = lambda parts, dt: np.concatenate(parts).astype(dt)
        return EventStream(cat(ts, np.uint64), cat(xs, np.uint16), cat(ys, np.uint16), cat(ps, np.int8), width, height)
    empty = lambda dt: np.empty(0, dtype=dt)
    return EventStream(empty(np.uint64), empty(np.uint16), empty(np.uint16), empty(np.int8), width, height)


def serialize_events(stream: EventStream, fmt: str = "binary") -> bytes:
    """Canonical byte serialization in either wire format."""
    if fmt == "csv":
        lines = [f"{int(t)},{int(x)},{int(y)},{int(p)}\n" for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p)]
        return "".join(lines).encode("ascii")
    if fmt == "binary":
        rec = np.empty(len(stream), dtype=EVENT_DTYPE)
        rec["t"] = stream.t
        rec["x"] = stream.x
        rec["y"] = stream.y
        rec["p"] = stream.p
        return rec.tobytes()
    raise EventFormatError(f"unknown event format '{fmt}'")


def parse_events(
    data: bytes,
    fmt: str,
    width: int,
    height: int,
    polarity_zero_one: bool = False,
) -> EventStream:
    """Parse CSV or 13-byte binary event records into a validated stream.

    Files encoding polarity as {0, 1} are only accepted with
    polarity_zero_one=True, which remaps 0 -> -1.
    """
    if fmt == "csv":
        t, x, y, p = [], [], [], []
        for lineno, raw in enumerate(data.decode("ascii").splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise EventFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                vals = [int(v) for v in parts]
            except ValueError as exc:
                raise EventFormatError(f"line {lineno}: non-integer field ({exc})") from exc
            t.append(vals[0])
            x.append(vals[1])
            y.append(vals[2])
            p.append(vals[3])
        t = np.asarray(t, dtype=np.uint64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        p = np.asarray(p, dtype=np.int64)
    elif fmt == "binary":
        if len(data) % EVENT_DTYPE.itemsize != 0:
            raise EventFormatError(
                f"binary payload of {len(data)} bytes is not a multiple of {EVENT_DTYPE.itemsize}"
            )
        rec = np.frombuffer(data, dtype=EVENT_DTYPE)
        t = rec["t"].copy()
        x = rec["x"].astype(np.int64)
        y = rec["y"].astype(np.int64)
        p = rec["p"].astype(np.int64)
    else:
        raise EventFormatError(f"unknown event format '{fmt}'")

    if polarity_zero_one:
        bad = ~np.isin(p, (0, 1))
        if np.any(bad):
            raise EventFormatError(f"record {int(np.nonzero(bad)[0][0])}: polarity not in {{0, 1}}")
        p = np.where(p == 0, -1, 1)
    else:
        bad = ~np.isin(p, (-1, 1))
        if np.any(bad):
            raise EventFormatError(
                f"record {int(np.nonzero(bad)[0][0])}: polarity must be -1 or +1 "
                "(use polarity_zero_one for {0, 1} files)"
            )
    if np.any(x < 0) or np.any(x >= width) or np.any(y < 0) or np.any(y >= height):
        raise EventFormatError("coordinate out of sensor bounds")
    if t.shape[0] and np.any(np.diff(t.astype(np.int64)) < 0):
        raise EventFormatError("timestamps are not nondecreasing")
    return EventStream(t, x.astype(np.uint16), y.astype(np.uint16), p.astype(np.int8), width, height)


def bin_events(stream: EventStream, window_us: int = 50_000, t_bins: int = 10) -> list[BinnedTensor]:
    """Stacked histograms over half-open windows [k*w, (k+1)*w).

    Bin index is floor(T * (t - window_start) / window_len); polarity channel 0
    holds -1 events and channel 1 holds +1. Counts saturate at u16 max.
    """
    if window_us < 1 or t_bins < 1:
        raise ValueError("window and bin count must be positive")
    if window_us % t_bins != 0:
        raise ValueError(f"window of {window_us} us is not divisible into {t_bins} bins")
    out: list[BinnedTensor] = []
    if len(stream) == 0:
        return out
    h, w = stream.height, stream.width
    t = stream.t.astype(np.int64)
    k0 = int(t[0]) // window_us
    k1 = int(t[-1]) // window_us
    for k in range(k0, k1 + 1):
        start = k * window_us
        lo = np.searchsorted(t, start, side="left")
        hi = np.searchsorted(t, start + window_us, side="left")
        counts = np.zeros((2, t_bins, h, w), dtype=np.uint16)
        if hi > lo:
            rel = t[lo:hi] - start
            bi = rel * t_bins // window_us
            ch = ((stream.p[lo:hi].astype(np.int64)) + 1) // 2
            flat = ((ch * t_bins + bi) * h + stream.y[lo:hi]) * w + stream.x[lo:hi]
            binned = np.bincount(flat, minlength=2 * t_bins * h * w)
            counts = np.minimum(binned, _COUNT_MAX).astype(np.uint16).reshape(2, t_bins, h, w)
        out.append(BinnedTensor(counts=counts, window_start=start, window_len=window_us))
    return out


def filter_bboxes(boxes, profile="gen1") -> list[BBox]:
    """Keep boxes with min side >= min_side and diagonal >= min_diag."""
    if isinstance(profile, str):
        if profile not in FILTER_PROFILES:
            raise ValueError(f"unknown filter profile '{profile}'")
        profile = FILTER_PROFILES[profile]
    kept = []
    for b in boxes:
        if min(b.w, b.h) >= profile.min_side and np.hypot(b.w, b.h) >= profile.min_diag:
            kept.append(b)
    return kept


def save_binned(path, tensors: list[BinnedTensor]) -> None:
    """Write binned tensors in the flat container format documented above."""
    with open(path, "wb") as fh:
        fh.write(_TENSOR_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for tsr in tensors:
            counts = np.ascontiguousarray(tsr.counts, dtype="<u2")
            fh.write(struct.pack("<QQI", tsr.window_start, tsr.window_len, counts.ndim))
            fh.write(struct.pack(f"<{counts.ndim}I", *counts.shape))
            fh.write(counts.tobytes())


def load_binned(path) -> list[BinnedTensor]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(_TENSOR_MAGIC)] != _TENSOR_MAGIC:
        raise EventFormatError("bad tensor container magic")
    off = len(_TENSOR_MAGIC)
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    out = []
    for _ in range(count):
        start, wlen, ndim = struct.unpack_from("<QQI", data, off)
        off += 20
        dims = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        n = int(np.prod(dims, dtype=np.int64))
        counts = np.frombuffer(data, dtype="<u2", count=n, offset=off).reshape(dims).copy()
        off += 2 * n
        out.append(BinnedTensor(counts=counts, window_start=start, window_len=wlen))
    if off != len(data):
        raise EventFormatError("trailing bytes in tensor container")
    return out


def make_scene(name: str, steps: int | None = None, dt_us: int | None = None):
    """Analytic log-intensity scenes for the synthesizer.

    Returns (field (T, H, W), times_us (T,)). Scenes:
      ramp        constant-slope brightening (0.1 per step) on an 8x8 sensor
      blink       global square-wave flashing, alternating polarity bursts
      moving-bar  bright vertical bar sweeping across a 32x24 sensor
    """
    if name == "ramp":
        steps = 12 if steps is None else steps
        dt_us = 1 if dt_us is None else dt_us
        times = np.arange(steps, dtype=np.uint64) * np.uint64(dt_us)
        k = np.arange(steps, dtype=np.float64)
        field = np.broadcast_to(0.1 * k[:, None, None], (steps, 8, 8)).copy()
        return field, times
    if name == "blink":
        steps = 64 if steps is None else steps
        dt_us = 1000 if dt_us is None else dt_us
        times = np.arange(steps, dtype=np.uint64) * np.uint64(dt_us)
        k = np.arange(steps, dtype=np.float64)
        level = 0.8 * ((k // 8) % 2)  # 8-step on/off plateaus
        field = np.broadcast_to(level[:, None, None], (steps, 16, 16)).copy()
        return field, times
    if name == "moving-bar":
        steps = 64 if steps is None else steps
        dt_us = 1000 if dt_us is None else dt_us
        w, h = 32, 24
        times = np.arange(steps, dtype=np.uint64) * np.uint64(dt_us)
        field = np.zeros((steps, h, w))
        cols = np.arange(w)
        for k in range(steps):
            center = (k * w) / steps
            field[k] = 1.5 * np.exp(-0.5 * ((cols - center) / 1.5) ** 2)[None, :]
        return field, times
    raise ValueError(f"unknown scene '{name}'")
