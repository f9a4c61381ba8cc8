"""Discrete linear operators K, K* for the divergence (M1) and curl (M2) models.

``K u = (grad u1, grad u2, phi * c(u))`` where ``c(u)`` is the divergence
``(u1)_x + (u2)_y`` for M1 and the curl ``(u1)_y - (u2)_x`` for M2.  All
derivatives use the forward-difference gradient below, and ``apply_Kstar`` is
its exact transpose, so the saddle-point iteration sees a true adjoint pair.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .grid import FlowField, as_grid, central_differences


class Model(str, enum.Enum):
    HS = "hs"
    M1 = "m1"
    M2 = "m2"


def weight_m1(f) -> np.ndarray:
    """Divergence weight ``f**2``."""
    f = as_grid(f, "f")
    return f * f


def weight_m2(f, lam: float = 0.1) -> np.ndarray:
    """Curl weight ``lam**2 / (|grad f|**2 + lam**2)`` with central differences."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    f = as_grid(f, "f")
    fx, fy = central_differences(f)
    l2 = lam * lam
    return l2 / (fx * fx + fy * fy + l2)


def gradient(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences; the last column (x) and last row (y) are zero."""
    ux = np.zeros_like(u)
    uy = np.zeros_like(u)
    ux[:, :-1] = u[:, 1:] - u[:, :-1]
    uy[:-1, :] = u[1:, :] - u[:-1, :]
    return ux, uy


def _div_x(px: np.ndarray) -> np.ndarray:
    d = np.zeros_like(px)
    d[:, 0] = px[:, 0]
    d[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    d[:, -1] = -px[:, -2]
    return d


def _div_y(py: np.ndarray) -> np.ndarray:
    d = np.zeros_like(py)
    d[0, :] = py[0, :]
    d[1:-1, :] = py[1:-1, :] - py[:-2, :]
    d[-1, :] = -py[-2, :]
    return d


def divergence_adjoint(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Discrete divergence, the negative transpose of :func:`gradient`."""
    return _div_x(px) + _div_y(py)


@dataclass
class DualState:
    """Dual variables: ``d1``/``d2`` are ``(2, H, W)`` (x, y parts), ``d3`` is ``(H, W)``."""

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "DualState":
        h, w = shape
        return cls(np.zeros((2, h, w)), np.zeros((2, h, w)), np.zeros((h, w)))

    def __sub__(self, other: "DualState") -> "DualState":
        return DualState(self.d1 - other.d1, self.d2 - other.d2, self.d3 - other.d3)

    def copy(self) -> "DualState":
        return DualState(self.d1.copy(), self.d2.copy(), self.d3.copy())

    def inner(self, other: "DualState") -> float:
        return float(np.sum(self.d1 * other.d1) + np.sum(self.d2 * other.d2) + np.sum(self.d3 * other.d3))

    def l1(self) -> float:
        return float(np.abs(self.d1).sum() + np.abs(self.d2).sum() + np.abs(self.d3).sum())


def _check(model, u: FlowField, phi: np.ndarray) -> Model:
    model = Model(model)
    if phi.shape != u.shape:
        raise ValueError(f"dimension mismatch: weight {phi.shape} vs flow {u.shape}")
    return model


def constraint_term(model, u: FlowField) -> np.ndarray:
    """Unweighted divergence (M1) or curl (M2) with the gradient stencils."""
    u1x, u1y = gradient(u.u1)
    u2x, u2y = gradient(u.u2)
    if Model(model) is Model.M2:
        return u1y - u2x
    return u1x + u2y


def k_arrays(model: Model, u1, u2, phi):
    """Array-level ``K``: returns ``(d1, d2, d3)`` without validation."""
    u1x, u1y = gradient(u1)
    u2x, u2y = gradient(u2)
    if model is Model.M2:
        c = u1y - u2x
    else:
        c = u1x + u2y
    return np.stack([u1x, u1y]), np.stack([u2x, u2y]), phi * c


def kstar_arrays(model: Model, d1, d2, d3, phi):
    """Array-level ``K*``: returns ``(v1, v2)`` without validation."""
    q = phi * d3
    v1 = -divergence_adjoint(d1[0], d1[1])
    v2 = -divergence_adjoint(d2[0], d2[1])
    if model is Model.M2:
        # transpose of (phi Dy, -phi Dx)
        v1 -= _div_y(q)
        v2 += _div_x(q)
    else:
        v1 -= _div_x(q)
        v2 -= _div_y(q)
    return v1, v2


def apply_K(model, u: FlowField, phi: np.ndarray) -> DualState:
    model = _check(model, u, phi)
    return DualState(*k_arrays(model, u.u1, u.u2, phi))


def apply_Kstar(model, d: DualState, phi: np.ndarray) -> FlowField:
    h, w = d.d3.shape
    if phi.shape != (h, w) or d.d1.shape != (2, h, w) or d.d2.shape != (2, h, w):
        raise ValueError("dimension mismatch between dual state and weight")
    return FlowField(*kstar_arrays(Model(model), d.d1, d.d2, d.d3, phi))


def operator_norm_estimate(model, phi, iterations: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of ``||K||`` via ``K* K``.

    The estimate ``||K x_k||`` for normalised iterates ``x_k`` is nondecreasing in
    ``iterations`` (log-convexity of the moments of a PSD operator).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    phi = as_grid(phi, "phi")
    model = Model(model)
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(phi.shape)
    x2 = rng.standard_normal(phi.shape)
    est = 0.0
    for _ in range(iterations):
        nrm = np.sqrt(np.sum(x1 * x1) + np.sum(x2 * x2))
        if nrm == 0:
            return 0.0
        x1, x2 = x1 / nrm, x2 / nrm
        k1, k2, k3 = k_arrays(model, x1, x2, phi)
        est = np.sqrt(np.sum(k1 * k1) + np.sum(k2 * k2) + np.sum(k3 * k3))
        x1, x2 = kstar_arrays(model, k1, k2, k3, phi)
    return float(est)
