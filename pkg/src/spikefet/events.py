"""Event streams: text I/O, temporal binning, and a log-intensity simulator."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels


class EventFileError(ValueError):
    pass


@dataclass
class EventStream:
    """Time-ordered events. ``t`` is int64 microseconds, ``p`` is +1/-1."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls, height, width):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, height, width)

    def validate(self):
        if not (len(self.t) == len(self.x) == len(self.y) == len(self.p)):
            raise EventFileError("event fields have different lengths")
        if len(self.t) and np.any(np.diff(self.t) < 0):
            raise EventFileError("timestamps are not sorted")
        if np.any((self.x < 0) | (self.x >= self.width) | (self.y < 0) | (self.y >= self.height)):
            raise EventFileError("event coordinates outside the sensor")
        if np.any((self.p != 1) & (self.p != -1)):
            raise EventFileError("polarity must be 1 or -1")
        return self

    def __eq__(self, other):
        return (
            isinstance(other, EventStream)
            and (self.height, self.width) == (other.height, other.width)
            and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in "txyp")
        )

    @staticmethod
    def concat(streams):
        h, w = streams[0].height, streams[0].width
        parts = [np.concatenate([getattr(s, f) for s in streams]) for f in "txyp"]
        order = np.argsort(parts[0], kind="stable")
        return EventStream(*(a[order] for a in parts), h, w)


def events_to_frames(stream, t0, t1, bins, height=None, width=None):
    """Bin events in ``[t0, t1)`` into a ``[bins, 2, H, W]`` count array.

    Channel 0 holds positive events, channel 1 negative ones.
    """
    if t1 <= t0:
        raise ValueError(f"empty or negative time window [{t0}, {t1})")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    height = stream.height if height is None else height
    width = stream.width if width is None else width
    return kernels.bin_events(stream.t, stream.x, stream.y, stream.p, int(t0), int(t1), int(bins), height, width)


def normalize_frames(frames, q=99.0):
    """Scale by the q-th percentile of the nonzero cells and clip to [0, 1]."""
    nz = frames[frames > 0]
    if nz.size == 0:
        return np.zeros_like(frames)
    scale = np.percentile(nz, q)
    return np.clip(frames / scale, 0.0, 1.0)


def event_image(stream, t0, t1, bins=3, height=None, width=None):
    """Normalised ``[2*bins, H, W]`` event-branch input for one interval."""
    fr = events_to_frames(stream, t0, t1, bins, height, width)
    return normalize_frames(fr).reshape(2 * bins, fr.shape[2], fr.shape[3])


def log_intensity(img):
    return np.log(np.asarray(img, dtype=np.float64) + 1.0)


def synthesize_events(frame_a, frame_b, threshold, t0=0, t1=1000, rng=None):
    """Emit ``floor(|dlog| / threshold)`` events per pixel between two frames.

    Timestamps of a pixel's k events sit at ``t0 + (i + 1) * (t1 - t0) / (k + 1)``
    (integer microseconds); ``rng`` is accepted for API symmetry but the
    placement is deterministic.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    a, b = np.asarray(frame_a), np.asarray(frame_b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    d = log_intensity(b) - log_intensity(a)
    k = np.floor(np.abs(d) / threshold).astype(np.int64)
    ys, xs = np.nonzero(k)
    if ys.size == 0:
        return EventStream.empty(h, w)
    counts = k[ys, xs]
    sign = np.sign(d[ys, xs]).astype(np.int64)
    rep_y, rep_x = np.repeat(ys, counts), np.repeat(xs, counts)
    rep_p = np.repeat(sign, counts)
    rep_k = np.repeat(counts, counts)
    # index of each event within its pixel's run
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    idx = np.arange(rep_k.size) - starts
    ts = t0 + ((idx + 1) * (t1 - t0)) // (rep_k + 1)
    order = np.lexsort((rep_x, rep_y, ts))
    return EventStream(ts[order], rep_x[order], rep_y[order], rep_p[order], h, w)


def replay_log_image(frame_a, stream, threshold):
    """Apply each event's ±threshold step to frame_a's log image."""
    out = log_intensity(frame_a).copy()
    np.add.at(out, (stream.y, stream.x), stream.p * threshold)
    return out


def write_event_file(path, stream):
    stream.validate()
    lines = [f"# {stream.height} {stream.width}"]
    lines += [f"{t} {x} {y} {p}" for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_event_file(path, height=None, width=None):
    """Parse ``t_us x y p`` lines with a ``# H W`` header.

    An empty file yields an empty stream (dimensions from the arguments,
    else 0 x 0).
    """
    text = Path(path).read_text()
    rows = []
    h, w = height, width
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            parts = s[1:].split()
            if len(parts) != 2:
                raise EventFileError(f"line {lineno}: header must be '# H W'")
            try:
                h, w = int(parts[0]), int(parts[1])
            except ValueError:
                raise EventFileError(f"line {lineno}: malformed header {s!r}") from None
            continue
        parts = s.split()
        if len(parts) != 4:
            raise EventFileError(f"line {lineno}: expected 't x y p', got {s!r}")
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise EventFileError(f"line {lineno}: non-integer field in {s!r}") from None
        if p not in (1, -1):
            raise EventFileError(f"line {lineno}: polarity must be 1 or -1")
        if rows and t < rows[-1][0]:
            raise EventFileError(f"line {lineno}: timestamp {t} precedes {rows[-1][0]}")
        rows.append((t, x, y, p))
    if h is None or w is None:
        if rows:
            raise EventFileError("missing '# H W' header")
        h, w = 0, 0
    if not rows:
        return EventStream.empty(h, w)
    arr = np.array(rows, dtype=np.int64)
    return EventStream(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], h, w).validate()
