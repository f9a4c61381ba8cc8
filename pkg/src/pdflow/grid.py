"""Image grids, derivative stencils, warping, pyramids and flow filtering.

Grids are plain 2-D ``float64`` numpy arrays indexed ``[y, x]`` (row-major,
``height`` rows by ``width`` columns).  A flow field is a pair of such grids.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_PYRAMID_SIZE = 8


def as_grid(a, name: str = "grid") -> np.ndarray:
    """Validate ``a`` as a scalar grid and return it as a float64 array."""
    g = np.asarray(a, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {g.shape}")
    if g.shape[0] < 2 or g.shape[1] < 2:
        raise ValueError(f"{name} must be at least 2x2, got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError(f"{name} contains non-finite values")
    return g


def _same_shape(a: np.ndarray, b: np.ndarray, what: str = "grids") -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch between {what}: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class FlowField:
    """Displacement field ``(u1, u2)`` in pixels/frame (horizontal, vertical)."""

    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        u1 = as_grid(self.u1, "u1")
        u2 = as_grid(self.u2, "u2")
        _same_shape(u1, u2, "u1 and u2")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @classmethod
    def zeros(cls, shape) -> "FlowField":
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_array(cls, a) -> "FlowField":
        """Build from an ``(H, W, 2)`` array as stored in ``.flo`` files."""
        a = np.asarray(a)
        return cls(a[..., 0], a[..., 1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.u1.shape

    def to_array(self) -> np.ndarray:
        return np.stack([self.u1, self.u2], axis=-1)

    def __add__(self, other: "FlowField") -> "FlowField":
        return FlowField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other: "FlowField") -> "FlowField":
        return FlowField(self.u1 - other.u1, self.u2 - other.u2)

    def scaled(self, s: float) -> "FlowField":
        return FlowField(s * self.u1, s * self.u2)


@dataclass(frozen=True)
class PyramidParams:
    scale_factor: float = 0.5
    levels: int = 3
    warps_per_level: int = 10
    blend_ratio: float = 0.5
    median_filter: bool = True

    def __post_init__(self):
        if not 0.0 < self.scale_factor < 1.0:
            raise ValueError("scale_factor must lie in (0, 1)")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.warps_per_level < 1:
            raise ValueError("warps_per_level must be >= 1")
        if not 0.0 <= self.blend_ratio <= 1.0:
            raise ValueError("blend_ratio must lie in [0, 1]")


def temporal_derivative(f1, f2_warped) -> np.ndarray:
    """Forward difference in time: ``f2_warped - f1``."""
    f1 = as_grid(f1, "f1")
    f2 = as_grid(f2_warped, "f2_warped")
    _same_shape(f1, f2, "frames")
    return f2 - f1


def central_differences(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with replicated edge samples."""
    p = np.pad(g, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def blend(f1, f2_warped, blend_ratio: float) -> np.ndarray:
    return (1.0 - blend_ratio) * f1 + blend_ratio * f2_warped


def spatial_derivatives(f1, f2_warped, blend_ratio: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient of the blended image ``(1-r) f1 + r f2_warped``."""
    f1 = as_grid(f1, "f1")
    f2 = as_grid(f2_warped, "f2_warped")
    _same_shape(f1, f2, "frames")
    if not 0.0 <= blend_ratio <= 1.0:
        raise ValueError("blend_ratio must lie in [0, 1]")
    return central_differences(blend(f1, f2, blend_ratio))


def _catmull_rom_weights(t: np.ndarray) -> tuple[np.ndarray, ...]:
    # Keys cubic with a = -0.5, taps at offsets -1, 0, 1, 2.
    t2 = t * t
    t3 = t2 * t
    w0 = -0.5 * t3 + t2 - 0.5 * t
    w1 = 1.5 * t3 - 2.5 * t2 + 1.0
    w2 = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w3 = 0.5 * t3 - 0.5 * t2
    return w0, w1, w2, w3


def sample_bicubic(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Catmull-Rom sample of ``image`` at real coordinates, clamped to the domain."""
    h, w = image.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    wx = _catmull_rom_weights(xs - x0)
    wy = _catmull_rom_weights(ys - y0)
    out = np.zeros(xs.shape)
    for j in range(4):
        yi = np.clip(y0 + j - 1, 0, h - 1)
        row = np.zeros(xs.shape)
        for i in range(4):
            xi = np.clip(x0 + i - 1, 0, w - 1)
            row += wx[i] * image[yi, xi]
        out += wy[j] * row
    return out


def warp_bicubic(image, flow: FlowField) -> np.ndarray:
    """Sample ``image`` at ``(x + u1, y + u2)`` for every pixel."""
    image = as_grid(image, "image")
    _same_shape(image, flow.u1, "image and flow")
    h, w = image.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return sample_bicubic(image, xx + flow.u1, yy + flow.u2)


def resize_bilinear(g: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample on pixel centres (edge-clamped)."""
    h, w = g.shape
    ys = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0.0, w - 1.0)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 2)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    a = g[np.ix_(y0, x0)]
    b = g[np.ix_(y0, x0 + 1)]
    c = g[np.ix_(y0 + 1, x0)]
    d = g[np.ix_(y0 + 1, x0 + 1)]
    return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d)


def _binomial_smooth(g: np.ndarray) -> np.ndarray:
    p = np.pad(g, 2, mode="edge")
    # [1 4 6 4 1] / 16 along x then y
    s = (p[:, :-4] + 4 * p[:, 1:-3] + 6 * p[:, 2:-2] + 4 * p[:, 3:-1] + p[:, 4:]) / 16.0
    return (s[:-4] + 4 * s[1:-3] + 6 * s[2:-2] + 4 * s[3:-1] + s[4:]) / 16.0


def build_pyramid(image, params: PyramidParams) -> list[np.ndarray]:
    """Finest-first list of progressively smoothed and downsampled images.

    Levels whose smaller side would drop below 8 pixels are not produced.
    """
    image = as_grid(image, "image")
    levels = [image]
    h, w = image.shape
    for k in range(1, params.levels):
        nh = int(round(h * params.scale_factor**k))
        nw = int(round(w * params.scale_factor**k))
        if min(nh, nw) < MIN_PYRAMID_SIZE:
            break
        levels.append(resize_bilinear(_binomial_smooth(levels[-1]), nh, nw))
    return levels


def upsample_flow(flow: FlowField, new_width: int, new_height: int) -> FlowField:
    """Bilinear resize of both components, rescaling vectors by the size ratio."""
    h, w = flow.shape
    if new_width < w or new_height < h:
        raise ValueError(f"cannot upsample {w}x{h} flow to smaller size {new_width}x{new_height}")
    sx = new_width / w
    sy = new_height / h
    return FlowField(
        sx * resize_bilinear(flow.u1, new_height, new_width),
        sy * resize_bilinear(flow.u2, new_height, new_width),
    )


def _median_5x5(g: np.ndarray) -> np.ndarray:
    p = np.pad(g, 2, mode="constant", constant_values=np.nan)
    win = np.lib.stride_tricks.sliding_window_view(p, (5, 5)).reshape(*g.shape, 25)
    win = np.sort(win, axis=-1)  # NaN padding sorts last
    n = np.count_nonzero(~np.isnan(win), axis=-1)
    # lower median for even-sized clipped windows keeps the result an input sample
    idx = (n - 1) // 2
    return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]


def median_filter_5x5(flow: FlowField) -> FlowField:
    """Per-component 5x5 median; border windows are clipped to the grid."""
    h, w = flow.shape
    if h < 5 or w < 5:
        raise ValueError(f"median filter needs at least 5x5 grid, got {w}x{h}")
    return FlowField(_median_5x5(flow.u1), _median_5x5(flow.u2))
