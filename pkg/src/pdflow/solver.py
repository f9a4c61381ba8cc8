"""Chambolle-Pock iterations for Horn-Schunck, M1 and M2 and the pyramid driver.

Iteration order per step (dual first):

    d~ = d + sigma K u_bar
    d1, d2 <- clamp to [-alpha, alpha]        (alpha/(alpha+sigma) scaling for HS)
    d3     <- beta/(beta+sigma) d~3
    u~ = u - tau K* d
    u  <- u~ (M1) or pointwise 2x2 data solve (M2, HS)
    u_bar = u + theta (u - u_old)
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    FlowField,
    PyramidParams,
    as_grid,
    blend,
    build_pyramid,
    median_filter_5x5,
    spatial_derivatives,
    temporal_derivative,
    upsample_flow,
    warp_bicubic,
)
from .operators import (
    DualState,
    Model,
    k_arrays,
    kstar_arrays,
    operator_norm_estimate,
    weight_m1,
    weight_m2,
)

log = logging.getLogger(__name__)

DEFAULT_STEP = 1.0 / math.sqrt(8.0)


class StepSizeWarning(UserWarning):
    pass


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverParams:
    alpha: float = 0.1
    beta: float = 0.01
    lam: float = 0.1
    # None: 1/sqrt(8 (1 + max phi^2)), a guaranteed bound on 1/||K|| (1/sqrt(8) when phi = 0)
    tau: float | None = None
    sigma: float | None = None
    theta: float = 1.0
    epsilon: float = 0.01
    max_iter: int = 200_000
    model: Model = Model.M2
    # Horn-Schunck (phase 1 of M1, optional M2 warm start)
    hs_alpha: float = 100.0
    hs_epsilon: float = 0.01
    hs_max_iter: int = 200_000
    hs_init: bool = False
    # data term evaluated on intensities * data_scale (255: 8-bit units); weights use [0, 1]
    data_scale: float = 255.0
    strict_stepsize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        for name in ("alpha", "lam", "tau", "sigma", "epsilon", "hs_alpha", "hs_epsilon", "data_scale"):
            if getattr(self, name) is None and name in ("tau", "sigma"):
                continue
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.max_iter < 1 or self.hs_max_iter < 1:
            raise ValueError("max_iter and hs_max_iter must be >= 1")


@dataclass(frozen=True)
class Problem:
    """Linearised data for one solve: image derivatives and the constraint weight.

    ``ft`` may already include the linearisation offset ``-grad f . u_ref``.
    """

    model: Model
    fx: np.ndarray
    fy: np.ndarray
    ft: np.ndarray
    phi: np.ndarray

    @property
    def shape(self):
        return self.ft.shape


@dataclass
class SolverState:
    u: FlowField
    u_bar: FlowField
    d: DualState
    iteration: int = 0
    last_residual: float = math.inf

    @classmethod
    def initial(cls, u0: FlowField) -> "SolverState":
        return cls(u0, u0, DualState.zeros(u0.shape))


@dataclass
class SolveResult:
    flow: FlowField
    iterations: int
    trace: np.ndarray  # rows of (iteration, p_res, d_res, e)
    converged: bool
    dual: DualState | None = None

    def first_crossing(self, eps: float) -> int | None:
        """First iteration with ``e < eps`` in the recorded trace, if any."""
        hit = np.flatnonzero(self.trace[:, 3] < eps)
        return int(self.trace[hit[0], 0]) if hit.size else None


# -- proximal maps -------------------------------------------------------------

def prox_dual_tv(d_tilde: np.ndarray, alpha: float) -> np.ndarray:
    """Projection onto the anisotropic dual ball: clamp every entry to [-alpha, alpha]."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return np.clip(d_tilde, -alpha, alpha)


def prox_dual_quadratic(d3_tilde: np.ndarray, beta: float, sigma: float) -> np.ndarray:
    if beta < 0 or sigma <= 0:
        raise ValueError("beta must be >= 0 and sigma > 0")
    return (beta / (beta + sigma)) * d3_tilde


def _solve_primal(u1t, u2t, fx, fy, ft, tau):
    c1 = 1.0 + tau * fx * fx
    c2 = tau * fx * fy
    c3 = 1.0 + tau * fy * fy
    b1 = u1t - tau * fx * ft
    b2 = u2t - tau * fy * ft
    det = c1 * c3 - c2 * c2
    return (b1 * c3 - c2 * b2) / det, (b2 * c1 - c2 * b1) / det


def solve_primal_m2(u_tilde: FlowField, fx, fy, ft, tau: float) -> FlowField:
    """Pointwise minimiser of ``|u - u~|^2/2 + tau/2 (ft + fx u1 + fy u2)^2``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    for name, g in (("fx", fx), ("fy", fy), ("ft", ft)):
        if np.shape(g) != u_tilde.shape:
            raise ValueError(f"dimension mismatch: {name} {np.shape(g)} vs flow {u_tilde.shape}")
    return FlowField(*_solve_primal(u_tilde.u1, u_tilde.u2, fx, fy, ft, tau))


# -- one iteration -------------------------------------------------------------

def operator_norm_bound(model, phi) -> float:
    """Upper bound on ``||K||``: ``||grad||^2 <= 8`` and ``||phi D||^2 <= 8 max phi^2``."""
    if Model(model) is Model.HS:
        return math.sqrt(8.0)
    m = float(np.max(np.abs(phi))) if np.size(phi) else 0.0
    return math.sqrt(8.0 * (1.0 + m * m))


def resolve_steps(params: SolverParams, problem: Problem) -> SolverParams:
    """Fill in automatic step sizes for ``problem``."""
    if params.tau is not None and params.sigma is not None:
        return params
    step = 1.0 / operator_norm_bound(problem.model, problem.phi)
    return replace(params, tau=params.tau or step, sigma=params.sigma or step)


def _step(problem: Problem, params: SolverParams, u1, u2, ub1, ub2, d1, d2, d3):
    model = problem.model
    kmodel = Model.M1 if model is Model.HS else model
    sigma, tau = params.sigma, params.tau
    k1, k2, k3 = k_arrays(kmodel, ub1, ub2, problem.phi)
    d1 = d1 + sigma * k1
    d2 = d2 + sigma * k2
    if model is Model.HS:
        s = params.hs_alpha / (params.hs_alpha + sigma)
        d1 = s * d1
        d2 = s * d2
        d3 = np.zeros_like(d3)
    else:
        np.clip(d1, -params.alpha, params.alpha, out=d1)
        np.clip(d2, -params.alpha, params.alpha, out=d2)
        d3 = (params.beta / (params.beta + sigma)) * (d3 + sigma * k3)
    v1, v2 = kstar_arrays(kmodel, d1, d2, d3, problem.phi)
    n1 = u1 - tau * v1
    n2 = u2 - tau * v2
    if model is not Model.M1:
        n1, n2 = _solve_primal(n1, n2, problem.fx, problem.fy, problem.ft, tau)
    th = params.theta
    return n1, n2, n1 + th * (n1 - u1), n2 + th * (n2 - u2), d1, d2, d3, v1, v2


def cp_step(state: SolverState, params: SolverParams, problem: Problem) -> SolverState:
    """Advance one Chambolle-Pock iteration."""
    if state.u.shape != problem.shape:
        raise ValueError("state and problem dimensions differ")
    params = resolve_steps(params, problem)
    d = state.d
    n1, n2, b1, b2, d1, d2, d3, *_ = _step(
        problem, params, state.u.u1, state.u.u2, state.u_bar.u1, state.u_bar.u2, d.d1, d.d2, d.d3
    )
    nxt = SolverState(FlowField(n1, n2), FlowField(b1, b2), DualState(d1, d2, d3), state.iteration + 1)
    _, _, e = residuals(state, nxt, params, problem.model, problem.phi)
    nxt.last_residual = e
    return nxt


def residuals(prev: SolverState, nxt: SolverState, params: SolverParams, model, phi) -> tuple[float, float, float]:
    """Primal/dual residues (grid L1 sums) and their per-pixel normalised sum ``e``."""
    model = Model(model)
    kmodel = Model.M1 if model is Model.HS else model
    if params.tau is None or params.sigma is None:
        params = resolve_steps(params, Problem(model, phi, phi, phi, phi))
    du1 = prev.u.u1 - nxt.u.u1
    du2 = prev.u.u2 - nxt.u.u2
    dd = prev.d - nxt.d
    v1, v2 = kstar_arrays(kmodel, dd.d1, dd.d2, dd.d3, phi)
    k1, k2, k3 = k_arrays(kmodel, du1, du2, phi)
    p_res = np.abs(du1 / params.tau - v1).sum() + np.abs(du2 / params.tau - v2).sum()
    d_res = (
        np.abs(dd.d1 / params.sigma - k1).sum()
        + np.abs(dd.d2 / params.sigma - k2).sum()
        + np.abs(dd.d3 / params.sigma - k3).sum()
    )
    return float(p_res), float(d_res), float((p_res + d_res) / du1.size)


# -- drivers -------------------------------------------------------------------

def check_stepsize(params: SolverParams, model, phi, iterations: int = 100) -> float:
    """Return ``tau*sigma*||K||^2``; warn (or raise when strict) if it is not < 1."""
    kmodel = Model.M1 if Model(model) is Model.HS else Model(model)
    if Model(model) is Model.HS:
        phi = np.zeros_like(phi)
    norm = operator_norm_estimate(kmodel, phi, iterations)
    params = resolve_steps(params, Problem(Model(model), phi, phi, phi, phi))
    val = params.tau * params.sigma * norm * norm
    if val >= 1.0:
        msg = f"step-size condition violated: tau*sigma*||K||^2 = {val:.4f} >= 1 ({Model(model).value})"
        if params.strict_stepsize:
            raise StepSizeError(msg)
        warnings.warn(msg, StepSizeWarning, stacklevel=2)
    return val


def solve(problem: Problem, params: SolverParams, u0: FlowField | None = None,
          d0: DualState | None = None, epsilon: float | None = None,
          max_iter: int | None = None) -> SolveResult:
    """Iterate until ``e < epsilon`` or ``max_iter``; the trace has one row per step."""
    params = resolve_steps(params, problem)
    eps = params.epsilon if epsilon is None else epsilon
    n_max = params.max_iter if max_iter is None else max_iter
    model = problem.model
    kmodel = Model.M1 if model is Model.HS else model
    phi = problem.phi
    tau, sigma = params.tau, params.sigma
    u0 = FlowField.zeros(problem.shape) if u0 is None else u0
    d = DualState.zeros(problem.shape) if d0 is None else d0.copy()
    u1, u2 = u0.u1.copy(), u0.u2.copy()
    ub1, ub2 = u1.copy(), u2.copy()
    d1, d2, d3 = d.d1, d.d2, d.d3
    kt1, kt2 = kstar_arrays(kmodel, d1, d2, d3, phi)
    npix = u1.size
    trace = np.empty((n_max, 4))
    converged = False
    k = 0
    while k < n_max:
        n1, n2, ub1, ub2, e1, e2, e3, v1, v2 = _step(problem, params, u1, u2, ub1, ub2, d1, d2, d3)
        du1 = u1 - n1
        du2 = u2 - n2
        g1, g2, g3 = k_arrays(kmodel, du1, du2, phi)
        p_res = np.abs(du1 / tau - (kt1 - v1)).sum() + np.abs(du2 / tau - (kt2 - v2)).sum()
        d_res = (
            np.abs((d1 - e1) / sigma - g1).sum()
            + np.abs((d2 - e2) / sigma - g2).sum()
            + np.abs((d3 - e3) / sigma - g3).sum()
        )
        e = (p_res + d_res) / npix
        trace[k] = (k + 1, p_res, d_res, e)
        k += 1
        u1, u2, d1, d2, d3, kt1, kt2 = n1, n2, e1, e2, e3, v1, v2
        if not np.isfinite(e):
            log.warning("%s solve diverged at iteration %d", model.value, k)
            break
        if e < eps:
            converged = True
            break
    if not converged:
        log.info("%s solve stopped at max_iter=%d without reaching e < %g", model.value, k, eps)
    return SolveResult(FlowField(u1, u2), k, trace[:k].copy(), converged, DualState(d1, d2, d3))


def linearize(model, f1, f2_warped, u_ref: FlowField | None, params: SolverParams,
              blend_ratio: float = 0.5) -> Problem:
    """Derivatives and weight for the pair, with the data term linearised at ``u_ref``."""
    model = Model(model)
    fx, fy = spatial_derivatives(f1, f2_warped, blend_ratio)
    ft = temporal_derivative(f1, f2_warped)
    if u_ref is not None:
        ft = ft - fx * u_ref.u1 - fy * u_ref.u2
    if params.data_scale != 1.0:
        fx, fy, ft = (params.data_scale * a for a in (fx, fy, ft))
    g = blend(f1, f2_warped, blend_ratio)
    if model is Model.M1:
        phi = weight_m1(g)
    elif model is Model.M2:
        phi = weight_m2(g, params.lam)
    else:
        phi = np.zeros_like(g)
    return Problem(model, fx, fy, ft, phi)


def run_horn_schunck(f1, f2, params: SolverParams, blend_ratio: float = 0.5,
                     u0: FlowField | None = None, u_ref: FlowField | None = None) -> SolveResult:
    """Quadratic-smoothness flow solved with the same primal-dual machinery."""
    prob = linearize(Model.HS, f1, f2, u_ref, params, blend_ratio)
    return solve(prob, params, u0, epsilon=params.hs_epsilon, max_iter=params.hs_max_iter)


def run_model(f1, f2, u0: FlowField | None, params: SolverParams, blend_ratio: float = 0.5,
              u_ref: FlowField | None = None, check: bool = False) -> SolveResult:
    """Run the configured model from ``u0``.

    For M1 this is the refinement phase only: ``u0`` must be the phase-1
    (Horn-Schunck) flow and the data term does not enter the iteration.
    """
    f1 = as_grid(f1, "f1")
    f2 = as_grid(f2, "f2")
    model = params.model
    if model is Model.M1 and u0 is None:
        raise ValueError("M1 refinement needs the phase-1 flow u0")
    prob = linearize(model, f1, f2, u_ref, params, blend_ratio)
    if check:
        check_stepsize(params, model, prob.phi)
    if model is Model.HS:
        return solve(prob, params, u0, epsilon=params.hs_epsilon, max_iter=params.hs_max_iter)
    return solve(prob, params, u0)


def estimate(f1, f2, params: SolverParams, blend_ratio: float = 0.5,
             u_ref: FlowField | None = None, check: bool = False) -> tuple[SolveResult, SolveResult | None]:
    """Full single-level estimate: ``(final, phase1)``.

    M1 runs Horn-Schunck then the refinement; M2 starts from zero (or from
    Horn-Schunck when ``params.hs_init``); HS is a single phase.
    """
    model = params.model
    u_start = u_ref if u_ref is not None else FlowField.zeros(np.shape(f1))
    if model is Model.HS:
        return run_model(f1, f2, u_start, params, blend_ratio, u_ref, check), None
    phase1 = None
    if model is Model.M1 or params.hs_init:
        phase1 = run_horn_schunck(f1, f2, params, blend_ratio, u_start, u_ref)
        u_start = phase1.flow
    return run_model(f1, f2, u_start, params, blend_ratio, u_ref, check), phase1


@dataclass
class PyramidResult:
    flow: FlowField
    solves: list = field(default_factory=list)  # (level, warp, SolveResult)

    @property
    def converged(self) -> bool:
        return all(r.converged for _, _, r in self.solves)

    @property
    def trace(self) -> np.ndarray:
        """Residual trace of the final solve at the finest level."""
        return self.solves[-1][2].trace if self.solves else np.empty((0, 4))


def run_pyramidal(f1, f2, params: SolverParams, pyr: PyramidParams = PyramidParams()) -> PyramidResult:
    """Coarse-to-fine estimation with warping, blended derivatives and median filtering."""
    f1 = as_grid(f1, "f1")
    f2 = as_grid(f2, "f2")
    if f1.shape != f2.shape:
        raise ValueError(f"frames differ in size: {f1.shape} vs {f2.shape}")
    p1 = build_pyramid(f1, pyr)
    p2 = build_pyramid(f2, pyr)
    if params.model is not Model.HS:
        kind = params.model
        g = blend(f1, f2, pyr.blend_ratio)
        phi = weight_m1(g) if kind is Model.M1 else weight_m2(g, params.lam)
        check_stepsize(params, kind, phi)
    out = PyramidResult(FlowField.zeros(p1[-1].shape))
    u = out.flow
    for level in range(len(p1) - 1, -1, -1):
        a, b = p1[level], p2[level]
        if u.shape != a.shape:
            u = upsample_flow(u, a.shape[1], a.shape[0])
        for w in range(pyr.warps_per_level):
            b_warped = warp_bicubic(b, u)
            res, _ = estimate(a, b_warped, params, pyr.blend_ratio, u_ref=u)
            u = res.flow
            if pyr.median_filter:
                u = median_filter_5x5(u)
            out.solves.append((level, w, res))
            log.debug("level %d warp %d: %d iterations, converged=%s", level, w, res.iterations, res.converged)
    out.flow = u
    return out


def write_trace_csv(trace: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "p_res", "d_res", "e"])
        for it, p, d, e in trace:
            wr.writerow([int(it), repr(float(p)), repr(float(d)), repr(float(e))])
