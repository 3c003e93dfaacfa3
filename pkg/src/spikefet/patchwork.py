"""Random patchwork: tile two templates and a search image into one canvas.

Coordinates are (row, col, height, width). The templates are stacked along
the axis orthogonal to the concatenation, Z1 first, and together span the
search image's side.
"""
from dataclasses import dataclass

import numpy as np

from .tensor import concat, getitem

LAYOUTS = (
    ("horizontal", "left"),
    ("horizontal", "right"),
    ("vertical", "top"),
    ("vertical", "bottom"),
)
TYPE_IDS = {"Z1": 0, "Z2": 1, "X": 2}


@dataclass(frozen=True)
class Rect:
    name: str
    row: int
    col: int
    h: int
    w: int

    def scaled(self, stride):
        return Rect(self.name, self.row // stride, self.col // stride, self.h // stride, self.w // stride)

    @property
    def slices(self):
        return slice(self.row, self.row + self.h), slice(self.col, self.col + self.w)


@dataclass(frozen=True)
class PatchLayout:
    direction: str
    search_side: str
    template_size: int
    search_size: int

    def __post_init__(self):
        if (self.direction, self.search_side) not in LAYOUTS:
            raise ValueError(f"invalid layout {self.direction}/{self.search_side}")

    @property
    def canvas_shape(self):
        z, x = self.template_size, self.search_size
        return (x, z + x) if self.direction == "horizontal" else (z + x, x)

    @property
    def rects(self):
        z, x = self.template_size, self.search_size
        side = self.search_side
        if self.direction == "horizontal":
            zc, xc = (x, 0) if side == "left" else (0, z)
            return (Rect("Z1", 0, zc, z, z), Rect("Z2", z, zc, z, z), Rect("X", 0, xc, x, x))
        zr, xr = (x, 0) if side == "top" else (0, z)
        return (Rect("Z1", zr, 0, z, z), Rect("Z2", zr, z, z, z), Rect("X", xr, 0, x, x))

    def rect(self, name):
        return next(r for r in self.rects if r.name == name)


def sample_layout(rng, template_size=128, search_size=256):
    d, s = LAYOUTS[int(rng.integers(len(LAYOUTS)))]
    return PatchLayout(d, s, template_size, search_size)


def default_layout(template_size=128, search_size=256):
    return PatchLayout("horizontal", "right", template_size, search_size)


def _check_shapes(z1, z2, x):
    hz, wz = z1.shape[-2:]
    hx, wx = x.shape[-2:]
    if z2.shape != z1.shape:
        raise ValueError(f"template shapes differ: {z1.shape} vs {z2.shape}")
    if not (hx == wx == 2 * hz == 2 * wz):
        raise ValueError(f"need square search of twice the template side, got template {hz}x{wz}, search {hx}x{wx}")
    if z1.shape[:-2] != x.shape[:-2]:
        raise ValueError("leading axes of templates and search differ")
    return hz, hx


def compose(z1, z2, x, layout):
    """Place arrays of shape [..., H, W] onto the layout's canvas."""
    hz, hx = _check_shapes(z1, z2, x)
    if (hz, hx) != (layout.template_size, layout.search_size):
        raise ValueError("image sizes do not match the layout")
    canvas = np.zeros(x.shape[:-2] + layout.canvas_shape, dtype=np.result_type(z1, x))
    for r, img in zip(layout.rects, (z1, z2, x)):
        canvas[(Ellipsis,) + r.slices] = img
    return canvas


def patchwork(z1, z2, x, rng=None, layout=None):
    """Random canvas for one modality. Pass ``layout`` to reuse another
    modality's draw; otherwise one is sampled from ``rng``."""
    hz, hx = _check_shapes(z1, z2, x)
    if layout is None:
        if rng is None:
            raise ValueError("need rng or layout")
        layout = sample_layout(rng, hz, hx)
    return compose(z1, z2, x, layout), layout


def type_map(layout, stride):
    """Feature-resolution grid of type ids (0: Z1, 1: Z2, 2: X)."""
    for r in layout.rects:
        if r.h % stride or r.w % stride or r.row % stride or r.col % stride:
            raise ValueError(f"stride {stride} does not divide patch {r}")
    h, w = layout.canvas_shape
    ids = np.full((h // stride, w // stride), -1, dtype=np.int64)
    for r in layout.rects:
        ids[r.scaled(stride).slices] = TYPE_IDS[r.name]
    return ids


def _feature_rects(F_shape, layout, stride):
    h, w = layout.canvas_shape
    if F_shape[-2:] != (h // stride, w // stride) or h % stride or w % stride:
        raise ValueError(f"feature extent {F_shape[-2:]} != canvas {h}x{w} / stride {stride}")
    return [r.scaled(stride) for r in layout.rects]


def split_features(F, layout, stride):
    """Crop a [..., h, w] feature map (array or Tensor) into (Z1, Z2, X) parts."""
    rects = _feature_rects(F.shape, layout, stride)
    take = getitem if hasattr(F, "requires_grad") else (lambda a, idx: a[idx])
    return tuple(take(F, (Ellipsis,) + r.slices) for r in rects)


def reassemble(parts, layout, stride):
    """Inverse of :func:`split_features` for raw arrays."""
    z1 = parts[0]
    h, w = layout.canvas_shape
    out = np.zeros(z1.shape[:-2] + (h // stride, w // stride), dtype=z1.dtype)
    for r, p in zip([r.scaled(stride) for r in layout.rects], parts):
        out[(Ellipsis,) + r.slices] = p
    return out


def place_tensor(parts, layout, stride):
    """Differentiable reassembly of (Z1, Z2, X) Tensors onto the canvas grid."""
    z1, z2, xs = parts
    if layout.direction == "horizontal":
        tmpl = concat([z1, z2], axis=-2)
        pieces = [xs, tmpl] if layout.search_side == "left" else [tmpl, xs]
        return concat(pieces, axis=-1)
    tmpl = concat([z1, z2], axis=-1)
    pieces = [xs, tmpl] if layout.search_side == "top" else [tmpl, xs]
    return concat(pieces, axis=-2)
