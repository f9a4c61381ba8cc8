"""Image and ``.flo`` file I/O and Middlebury flow colour coding."""
from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image

from .grid import FlowField, as_grid

FLO_MAGIC = 202021.25
FLO_TAG = struct.pack("<f", FLO_MAGIC)  # b"PIEH"
UNKNOWN_FLOW = 1e9


class FlowFormatError(ValueError):
    pass


def read_image(path) -> np.ndarray:
    """Load a PGM (P2/P5) or PNG as a grayscale grid normalised to [0, 1].

    RGB input is reduced with the luminance weights 0.299, 0.587, 0.114.
    """
    path = os.fspath(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            a = np.asarray(im)
    except FileNotFoundError:
        raise FileNotFoundError(f"{path}: no such file") from None
    except Exception as exc:  # PIL raises several unrelated types
        raise ValueError(f"{path}: unreadable image ({exc})") from exc
    if mode in ("RGB", "RGBA"):
        a = a[..., :3].astype(np.float64)
        g = (0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]) / 255.0
    elif mode in ("L", "LA", "P"):
        if mode == "P":
            with Image.open(path) as im:
                a = np.asarray(im.convert("L"))
        g = a[..., 0] / 255.0 if a.ndim == 3 else a / 255.0
    elif mode.startswith("I;16") or mode == "I":
        g = a.astype(np.float64) / 65535.0
    elif mode == "F":
        g = a.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported image mode {mode}")
    return as_grid(np.clip(g, 0.0, 1.0), path)


def write_image(grid, path) -> None:
    """Quantise a [0, 1] grid to 8 bits and save (format from the extension)."""
    g = np.clip(np.asarray(grid, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray(np.rint(g * 255.0).astype(np.uint8), mode="L")
    ext = os.path.splitext(os.fspath(path))[1].lower()
    img.save(path, format="PPM" if ext in (".pgm", ".ppm", ".pnm") else None)


def write_flo(flow: FlowField, path) -> None:
    h, w = flow.shape
    data = np.stack([flow.u1, flow.u2], axis=-1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(FLO_TAG)
        fh.write(struct.pack("<ii", w, h))
        fh.write(data.tobytes())


def parse_flo(buf: bytes, name: str = "<buffer>") -> FlowField:
    if len(buf) < 12 or buf[:4] != FLO_TAG:
        raise FlowFormatError(f"{name}: not a flow file (bad magic)")
    w, h = struct.unpack("<ii", buf[4:12])
    if w <= 0 or h <= 0:
        raise FlowFormatError(f"{name}: invalid dimensions {w}x{h}")
    n = 2 * w * h
    if len(buf) < 12 + 4 * n:
        raise FlowFormatError(f"{name}: truncated payload ({len(buf) - 12} of {4 * n} bytes)")
    a = np.frombuffer(buf, dtype="<f4", count=n, offset=12).reshape(h, w, 2)
    a = a.astype(np.float64)
    # NaN holes are folded into the >1e9 unknown convention
    a[~np.isfinite(a)] = 1e10
    return FlowField(a[..., 0], a[..., 1])


def read_flo(path) -> FlowField:
    """Read a Middlebury ``.flo`` file; entries with magnitude > 1e9 mark unknown flow."""
    with open(path, "rb") as fh:
        return parse_flo(fh.read(), os.fspath(path))


def unknown_mask(flow: FlowField) -> np.ndarray:
    return (np.abs(flow.u1) > UNKNOWN_FLOW) | (np.abs(flow.u2) > UNKNOWN_FLOW)


def make_colorwheel() -> np.ndarray:
    """The 55-entry Middlebury colour wheel (RY, YG, GC, CB, BM, MR segments)."""
    segments = [(15, (255, 0, 0), (255, 255, 0)), (6, (255, 255, 0), (0, 255, 0)),
                (4, (0, 255, 0), (0, 255, 255)), (11, (0, 255, 255), (0, 0, 255)),
                (13, (0, 0, 255), (255, 0, 255)), (6, (255, 0, 255), (255, 0, 0))]
    rows = []
    for n, start, end in segments:
        t = np.arange(n) / n
        s = np.array(start, float)
        e = np.array(end, float)
        rows.append(np.floor(s + np.outer(t, e - s) + 1e-9))
    return np.vstack(rows)


def flow_to_color(flow: FlowField, max_magnitude: float | None = None) -> np.ndarray:
    """Middlebury colour coding as an ``(H, W, 3)`` uint8 image.

    Hue encodes direction, saturation the magnitude relative to
    ``max_magnitude`` (99th percentile of known magnitudes when omitted).
    Unknown pixels are black.
    """
    unknown = unknown_mask(flow)
    u = np.where(unknown, 0.0, flow.u1)
    v = np.where(unknown, 0.0, flow.u2)
    rad = np.hypot(u, v)
    if max_magnitude is None:
        known = rad[~unknown]
        max_magnitude = float(np.percentile(known, 99)) if known.size else 0.0
    if max_magnitude <= 0:
        max_magnitude = 1.0
    u = u / max_magnitude
    v = v / max_magnitude
    rad = rad / max_magnitude
    wheel = make_colorwheel()
    ncols = wheel.shape[0]
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = ((1 - f) * wheel[k0] + f * wheel[k1]) / 255.0
    r = rad[..., None]
    inside = r <= 1
    col = np.where(inside, 1 - r * (1 - col), col * 0.75)
    img = np.floor(255 * col).astype(np.uint8)
    img[unknown] = 0
    return img


def write_color(flow: FlowField, path, max_magnitude: float | None = None) -> None:
    Image.fromarray(flow_to_color(flow, max_magnitude), mode="RGB").save(path)
