"""Synthetic frame + event tracking sequences and crop sampling."""
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .events import EventStream, event_image, read_event_file, synthesize_events, write_event_file

CORRUPTIONS = ("none", "low_light", "overexposure", "blur")
FRAME_INTERVAL_US = 10_000


@dataclass(frozen=True)
class SequenceSpec:
    length: int = 40
    height: int = 192
    width: int = 256
    target_size: tuple = (20, 36)  # min/max side in pixels
    speed: tuple = (2.0, 4.0)  # px per frame
    target_shape: str = "square"  # square | disc
    appearance: tuple = (170, 240)  # target base intensity range
    distractors: int = 0
    corruption: str = "none"
    threshold: float = 0.2

    def __post_init__(self):
        if self.corruption not in CORRUPTIONS:
            raise ValueError(f"corruption must be one of {CORRUPTIONS}")
        if self.target_shape not in ("square", "disc"):
            raise ValueError("target_shape must be square or disc")
        if max(self.target_size) * 2 > min(self.height, self.width):
            raise ValueError("target too large for the canvas")


def easy_spec(**kw):
    return SequenceSpec(**kw)


@dataclass
class Sequence:
    name: str
    frames: np.ndarray  # [L, H, W] uint8
    events: EventStream
    boxes: np.ndarray  # [L, 4] (left, top, w, h) pixels

    def __len__(self):
        return len(self.frames)

    def frame_image(self, k):
        return self.frames[k].astype(np.float64)[None] / 255.0

    def event_image(self, k, bins=3):
        """Events in the interval ending at frame k, as [2*bins, H, W]."""
        h, w = self.frames.shape[1:]
        return event_image(self.events, k * FRAME_INTERVAL_US, (k + 1) * FRAME_INTERVAL_US, bins, h, w)


# ----------------------------------------------------------------- rendering


def _background(rng, h, w):
    noise = ndimage.gaussian_filter(rng.normal(0, 1, (h, w)), sigma=12)
    noise /= np.abs(noise).max() + 1e-12
    return 70.0 + 20.0 * noise


def _sprite(rng, size, shape, base):
    sh, sw = size
    tex = ndimage.gaussian_filter(rng.normal(0, 1, (sh, sw)), sigma=1.5)
    tex /= np.abs(tex).max() + 1e-12
    img = base + 35.0 * tex
    mask = np.ones((sh, sw), dtype=bool)
    if shape == "disc":
        yy, xx = np.mgrid[0:sh, 0:sw]
        mask = ((yy - (sh - 1) / 2) / (sh / 2)) ** 2 + ((xx - (sw - 1) / 2) / (sw / 2)) ** 2 <= 1.0
    return np.clip(img, 0, 255), mask


class _Mover:
    def __init__(self, rng, spec, shape):
        lo, hi = spec.target_size
        self.h, self.w = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
        self.sprite, self.mask = _sprite(rng, (self.h, self.w), shape, rng.uniform(*spec.appearance))
        self.x = rng.uniform(0, spec.width - self.w)
        self.y = rng.uniform(0, spec.height - self.h)
        ang = rng.uniform(0, 2 * math.pi)
        sp = rng.uniform(*spec.speed)
        self.vx, self.vy = sp * math.cos(ang), sp * math.sin(ang)
        self.spec = spec

    def step(self):
        s = self.spec
        self.x += self.vx
        self.y += self.vy
        if self.x < 0 or self.x > s.width - self.w:
            self.vx = -self.vx
            self.x = min(max(self.x, 0), s.width - self.w)
        if self.y < 0 or self.y > s.height - self.h:
            self.vy = -self.vy
            self.y = min(max(self.y, 0), s.height - self.h)

    def paint(self, img):
        x0, y0 = int(round(self.x)), int(round(self.y))
        view = img[y0 : y0 + self.h, x0 : x0 + self.w]
        view[self.mask] = self.sprite[self.mask]

    def box(self):
        return (int(round(self.x)), int(round(self.y)), self.w, self.h)


def _corrupt(frame, kind):
    if kind == "low_light":
        return frame * 0.1
    if kind == "overexposure":
        return np.clip(frame * 3.0 + 60.0, 0, 255)
    if kind == "blur":
        return ndimage.gaussian_filter(frame, sigma=2.5)
    return frame


def generate_sequence(spec, rng, name="seq"):
    """Render ``spec.length`` frames plus one pre-roll frame whose events feed
    frame 0. Events always come from the clean rendering; the corruption only
    touches the stored frames."""
    bg = _background(rng, spec.height, spec.width)
    target = _Mover(rng, spec, spec.target_shape)
    distract = [_Mover(rng, spec, "disc" if spec.target_shape == "square" else "square") for _ in range(spec.distractors)]
    clean, boxes = [], []
    for k in range(spec.length + 1):
        img = bg.copy()
        for d in distract:
            d.paint(img)
        target.paint(img)
        clean.append(np.clip(np.round(img), 0, 255))
        boxes.append(target.box())
        target.step()
        for d in distract:
            d.step()
    streams = [
        synthesize_events(clean[k], clean[k + 1], spec.threshold, k * FRAME_INTERVAL_US, (k + 1) * FRAME_INTERVAL_US)
        for k in range(spec.length)
    ]
    events = EventStream.concat(streams) if streams else EventStream.empty(spec.height, spec.width)
    frames = np.stack([np.clip(np.round(_corrupt(f, spec.corruption)), 0, 255) for f in clean[1:]]).astype(np.uint8)
    return Sequence(name, frames, events, np.array(boxes[1:], dtype=np.float64))


# ----------------------------------------------------------------- disk layout


def write_sequence(seq, root):
    d = Path(root) / seq.name
    (d / "frames").mkdir(parents=True, exist_ok=True)
    for k, f in enumerate(seq.frames):
        Image.fromarray(f).save(d / "frames" / f"{k:06d}.png")
    write_event_file(d / "events.txt", seq.events)
    lines = [",".join(f"{v:g}" for v in b) for b in seq.boxes]
    (d / "groundtruth.txt").write_text("\n".join(lines) + "\n")
    return d


def read_sequence(path):
    d = Path(path)
    files = sorted((d / "frames").glob("*.png"))
    frames = np.stack([np.asarray(Image.open(f).convert("L")) for f in files])
    h, w = frames.shape[1:]
    events = read_event_file(d / "events.txt", h, w)
    boxes = np.array(
        [[float(v) for v in line.split(",")] for line in (d / "groundtruth.txt").read_text().splitlines() if line.strip()]
    )
    if len(boxes) != len(frames):
        raise ValueError(f"{d}: {len(frames)} frames but {len(boxes)} boxes")
    return Sequence(d.name, frames, events, boxes)


def gen_dataset(spec, n_sequences, seed, root=None, prefix="seq"):
    """Deterministic per seed. Writes to ``root`` when given."""
    rng = np.random.default_rng(seed)
    seqs = [generate_sequence(spec, rng, f"{prefix}{i:03d}") for i in range(n_sequences)]
    if root is not None:
        Path(root).mkdir(parents=True, exist_ok=True)
        for s in seqs:
            write_sequence(s, root)
    return seqs


def load_dataset(root):
    dirs = sorted(p for p in Path(root).iterdir() if (p / "groundtruth.txt").exists())
    if not dirs:
        raise FileNotFoundError(f"no sequences under {root}")
    return [read_sequence(p) for p in dirs]


# ----------------------------------------------------------------- crops


def crop_resize(img, cx, cy, side, out):
    """Bilinear crop of a ``side``-pixel square centred on (cx, cy), resized
    to ``out`` x ``out``. ``img`` is [C, H, W]; outside pixels are zero."""
    c = np.arange(out, dtype=np.float64)
    src = (c + 0.5) * (side / out) - side / 2 - 0.5
    ys, xs = np.meshgrid(cy + src, cx + src, indexing="ij")
    return np.stack([ndimage.map_coordinates(ch, [ys, xs], order=1, mode="constant", cval=0.0) for ch in img])


def box_center(box):
    x, y, w, h = box
    return x + w / 2, y + h / 2


def crop_side(box, factor):
    return math.sqrt(max(box[2] * box[3], 1.0)) * factor


def box_in_crop(box, cx, cy, side):
    """Pixel (left, top, w, h) -> normalised (cx, cy, w, h) within a crop."""
    bx, by = box_center(box)
    return np.array([(bx - cx) / side + 0.5, (by - cy) / side + 0.5, box[2] / side, box[3] / side])


def crop_box_to_image(nbox, cx, cy, side):
    """Inverse of :func:`box_in_crop`."""
    ncx, ncy, nw, nh = nbox
    w, h = nw * side, nh * side
    return np.array([cx + (ncx - 0.5) * side - w / 2, cy + (ncy - 0.5) * side - h / 2, w, h])


@dataclass
class Sample:
    frames: tuple  # (Z1, Z2, X) each [C, H, W]
    events: tuple
    search_box: np.ndarray  # normalised (cx, cy, w, h)


def make_sample(seq, i, j, k, cfg, rng=None, jitter=True, bins=3):
    """Templates from frames i and j, search from frame k."""
    tz, tx = cfg.template_size, cfg.search_size
    crops_f, crops_e = [], []
    for idx in (i, j):
        b = seq.boxes[idx]
        cx, cy = box_center(b)
        side = crop_side(b, cfg.template_factor)
        crops_f.append(crop_resize(seq.frame_image(idx), cx, cy, side, tz))
        crops_e.append(crop_resize(seq.event_image(idx, bins), cx, cy, side, tz))
    b = seq.boxes[k]
    cx, cy = box_center(b)
    side = crop_side(b, cfg.search_factor)
    if jitter and rng is not None:
        side *= math.exp(rng.uniform(-cfg.scale_jitter, cfg.scale_jitter))
        shift = cfg.center_jitter * math.sqrt(b[2] * b[3])
        cx += rng.uniform(-shift, shift)
        cy += rng.uniform(-shift, shift)
    crops_f.append(crop_resize(seq.frame_image(k), cx, cy, side, tx))
    crops_e.append(crop_resize(seq.event_image(k, bins), cx, cy, side, tx))
    return Sample(tuple(crops_f), tuple(crops_e), box_in_crop(b, cx, cy, side))


def collate(samples):
    frames = tuple(np.stack([s.frames[m] for s in samples]) for m in range(3))
    events = tuple(np.stack([s.events[m] for s in samples]) for m in range(3))
    return frames, events, np.stack([s.search_box for s in samples])
