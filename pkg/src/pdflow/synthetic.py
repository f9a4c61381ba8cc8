"""Analytic ground-truth flows and frame-pair synthesis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FlowField, as_grid, warp_bicubic


@dataclass(frozen=True)
class VortexSpec:
    center: tuple[float, float]
    circulation: float
    core_radius: float

    def __post_init__(self):
        if self.core_radius <= 0:
            raise ValueError("core_radius must be positive")


def oseen_field(specs, width: int, height: int) -> FlowField:
    """Superposed Oseen (Lamb-Oseen) vortices.

    Tangential speed ``G/(2 pi r) (1 - exp(-r^2/rc^2))``, counter-clockwise in
    image coordinates for positive circulation; zero at each centre.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one vortex")
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    u1 = np.zeros((height, width))
    u2 = np.zeros((height, width))
    for s in specs:
        cx, cy = s.center
        if not (0 <= cx <= width - 1 and 0 <= cy <= height - 1):
            raise ValueError(f"vortex centre {s.center} outside the {width}x{height} domain")
        dx = xx - cx
        dy = yy - cy
        r2 = dx * dx + dy * dy
        # v_theta / r, with the removable singularity at r = 0 set to 0
        with np.errstate(divide="ignore", invalid="ignore"):
            k = s.circulation / (2 * np.pi * r2) * -np.expm1(-r2 / s.core_radius**2)
        k[r2 == 0] = 0.0
        u1 -= k * dy
        u2 += k * dx
    return FlowField(u1, u2)


def default_oseen_pair(width: int = 128, height: int = 128) -> list[VortexSpec]:
    sx = width / 128.0
    sy = height / 128.0
    return [
        VortexSpec((44 * sx, 64 * sy), 300.0, 12.0),
        VortexSpec((84 * sx, 64 * sy), -300.0, 12.0),
    ]


def rotation_field(center, omega: float, width: int, height: int) -> FlowField:
    """Rigid rotation ``u = (-omega (y - cy), omega (x - cx))``."""
    cx, cy = center
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    return FlowField(-omega * (yy - cy), omega * (xx - cx))


def translation_field(shift, width: int, height: int) -> FlowField:
    return FlowField(np.full((height, width), float(shift[0])), np.full((height, width), float(shift[1])))


def band_limited_texture(width: int, height: int, n_waves: int = 20, seed: int = 0,
                         min_period: float = 10.0, max_period: float = 40.0) -> np.ndarray:
    """Sum of random low-frequency sinusoids rescaled to [0.1, 0.9]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    g = np.zeros((height, width))
    for _ in range(n_waves):
        period = rng.uniform(min_period, max_period)
        ang = rng.uniform(0, 2 * np.pi)
        kx, ky = 2 * np.pi / period * np.cos(ang), 2 * np.pi / period * np.sin(ang)
        g += rng.uniform(0.5, 1.0) * np.sin(kx * xx + ky * yy + rng.uniform(0, 2 * np.pi))
    g -= g.min()
    g /= g.max()
    return 0.1 + 0.8 * g


def synthesize_pair(texture, flow: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """``f1 = texture`` and ``f2(x) = texture(x - u(x))`` so ``flow`` is the forward motion."""
    texture = as_grid(texture, "texture")
    f2 = warp_bicubic(texture, flow.scaled(-1.0))
    return texture, f2


@dataclass
class SyntheticCase:
    name: str
    f1: np.ndarray
    f2: np.ndarray
    truth: FlowField


def oseen_case(size: int = 128, seed: int = 0) -> SyntheticCase:
    gt = oseen_field(default_oseen_pair(size, size), size, size)
    f1, f2 = synthesize_pair(band_limited_texture(size, size, seed=seed), gt)
    return SyntheticCase("oseen", f1, f2, gt)


def rotation_case(size: int = 128, omega: float = 0.02, seed: int = 1) -> SyntheticCase:
    c = ((size - 1) / 2.0, (size - 1) / 2.0)
    gt = rotation_field(c, omega, size, size)
    f1, f2 = synthesize_pair(band_limited_texture(size, size, seed=seed), gt)
    return SyntheticCase("rotation", f1, f2, gt)


def translation_case(size: int = 128, shift=(0.6, -0.4), seed: int = 2) -> SyntheticCase:
    gt = translation_field(shift, size, size)
    f1, f2 = synthesize_pair(band_limited_texture(size, size, seed=seed), gt)
    return SyntheticCase("translation", f1, f2, gt)


def synthetic_set(size: int = 128) -> list[SyntheticCase]:
    return [oseen_case(size), rotation_case(size), translation_case(size)]
