"""Flow accuracy metrics, constraint energies and the convergence benchmark."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import FlowField
from .operators import Model, constraint_term
from .solver import SolverParams, estimate
from .synthetic import synthetic_set

log = logging.getLogger(__name__)

UNKNOWN_FLOW_THRESHOLD = 1e9
DEFAULT_THRESHOLDS = (0.1, 0.05, 0.02, 0.01)


def valid_mask(flow: FlowField) -> np.ndarray:
    return (np.abs(flow.u1) <= UNKNOWN_FLOW_THRESHOLD) & (np.abs(flow.u2) <= UNKNOWN_FLOW_THRESHOLD)


def _mask(est: FlowField, gt: FlowField, mask) -> np.ndarray:
    if est.shape != gt.shape:
        raise ValueError(f"dimension mismatch: {est.shape} vs {gt.shape}")
    m = valid_mask(gt) & valid_mask(est)
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("mask selects no pixels")
    return m


def angular_errors(est: FlowField, gt: FlowField) -> np.ndarray:
    """Per-pixel space-time angle between ``(u, v, 1)`` vectors, in degrees.

    Equal to ``arccos(a.b / |a||b|)``; the ``atan2`` form stays accurate near 0.
    """
    dot = est.u1 * gt.u1 + est.u2 * gt.u2 + 1.0
    # a x b for a = (u, v, 1), b = (p, q, 1)
    cx = est.u2 - gt.u2
    cy = gt.u1 - est.u1
    cz = est.u1 * gt.u2 - est.u2 * gt.u1
    return np.degrees(np.arctan2(np.sqrt(cx * cx + cy * cy + cz * cz), dot))


def average_angular_error(est: FlowField, gt: FlowField, mask=None) -> float:
    m = _mask(est, gt, mask)
    return float(angular_errors(est, gt)[m].mean())


def endpoint_error(est: FlowField, gt: FlowField, mask=None) -> float:
    m = _mask(est, gt, mask)
    return float(np.hypot(est.u1 - gt.u1, est.u2 - gt.u2)[m].mean())


def interior_mask(shape) -> np.ndarray:
    """Pixels where both forward differences are defined (all but the last row/column)."""
    m = np.zeros(shape, dtype=bool)
    m[:-1, :-1] = True
    return m


def div_curl_energy(u: FlowField, phi=None) -> tuple[float, float]:
    """``sum phi * div^2`` and ``sum phi * curl^2`` over the interior pixels."""
    phi = np.ones(u.shape) if phi is None else np.asarray(phi)
    if phi.shape != u.shape:
        raise ValueError("dimension mismatch between weight and flow")
    m = interior_mask(u.shape)
    div = constraint_term(Model.M1, u)
    curl = constraint_term(Model.M2, u)
    return float((phi * div**2)[m].sum()), float((phi * curl**2)[m].sum())


# -- convergence benchmark ------------------------------------------------------

@dataclass
class ConvergenceReport:
    model: Model
    sequence: str
    thresholds: tuple
    iterations: dict  # eps -> first crossing (None if never reached)
    residual_trace: np.ndarray
    fitted_order: float
    converged: bool

    def rows(self):
        for eps in self.thresholds:
            n = self.iterations[eps]
            yield {
                "sequence": self.sequence,
                "model": self.model.value,
                "epsilon": eps,
                "iterations": "" if n is None else n,
                "converged": n is not None,
                "fitted_order": f"{self.fitted_order:.4f}",
            }


def first_crossings(trace: np.ndarray, thresholds) -> dict:
    """First iteration at which ``e < eps`` for each threshold."""
    out = {}
    for eps in thresholds:
        hit = np.flatnonzero(trace[:, 3] < eps)
        out[eps] = int(trace[hit[0], 0]) if hit.size else None
    return out


def fit_order(iterations: dict) -> float:
    """Least-squares slope of ``log N`` against ``log(1/eps)``."""
    pts = [(math.log(1.0 / e), math.log(n)) for e, n in iterations.items() if n]
    if len(pts) < 2:
        return math.nan
    x, y = np.array(pts).T
    if np.ptp(x) == 0:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class BenchProblem:
    name: str
    f1: np.ndarray
    f2: np.ndarray
    alpha: float
    beta: float


# (alpha, beta) per bundled sequence
BENCH_WEIGHTS = {"oseen": (0.1, 0.01), "rotation": (1.0, 0.1), "translation": (1.0, 0.1)}


def bench_problems(size: int = 128) -> list[BenchProblem]:
    """The bundled synthetic set with its per-sequence weights."""
    return [BenchProblem(c.name, c.f1, c.f2, *BENCH_WEIGHTS[c.name]) for c in synthetic_set(size)]


def _bench_one(problem: BenchProblem, params: SolverParams, thresholds) -> ConvergenceReport:
    p = replace(params, alpha=problem.alpha, beta=problem.beta, epsilon=min(thresholds))
    res, _ = estimate(problem.f1, problem.f2, p)
    its = first_crossings(res.trace, thresholds)
    log.info("bench %s %s: %s", problem.name, p.model.value, its)
    return ConvergenceReport(p.model, problem.name, tuple(thresholds), its, res.trace,
                             fit_order(its), res.converged)


def bench_convergence(problems, params: SolverParams, thresholds=DEFAULT_THRESHOLDS,
                      models=(Model.M1, Model.M2), workers: int | None = None) -> list[ConvergenceReport]:
    """Run every model on every problem once and read all thresholds off one trace.

    Problems run independently; ``workers`` (default: ``PDFLOW_THREADS`` or 1)
    caps the process pool.
    """
    thresholds = tuple(thresholds)
    if list(thresholds) != sorted(thresholds, reverse=True):
        raise ValueError("thresholds must be given in descending order")
    if workers is None:
        workers = int(os.environ.get("PDFLOW_THREADS", "1") or 1)
    jobs = [(pb, replace(params, model=Model(m)), thresholds) for pb in problems for m in models]
    if workers <= 1:
        return [_bench_one(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_bench_one, *zip(*jobs)))


def format_table(reports) -> str:
    """Rows = sequences, columns = model x epsilon."""
    models = sorted({r.model.value for r in reports})
    thresholds = reports[0].thresholds if reports else ()
    cols = [(eps, m) for eps in thresholds for m in models]
    head = f"{'sequence':<14}" + "".join(f"{m.upper() + ' e=' + format(eps, 'g'):>14}" for eps, m in cols)
    lines = [head]
    by_seq: dict = {}
    for r in reports:
        by_seq.setdefault(r.sequence, {})[r.model.value] = r
    for seq, rs in by_seq.items():
        cells = []
        for eps, m in cols:
            n = rs[m].iterations[eps] if m in rs else None
            cells.append(f"{'-' if n is None else n:>14}")
        lines.append(f"{seq:<14}" + "".join(cells))
    orders = "  ".join(f"{r.sequence}/{r.model.value}: {r.fitted_order:.2f}" for r in reports)
    lines.append("fitted order " + orders)
    return "\n".join(lines)


def write_reports_csv(reports, path) -> None:
    fields = ["sequence", "model", "epsilon", "iterations", "converged", "fitted_order"]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields)
        wr.writeheader()
        for r in reports:
            for row in r.rows():
                wr.writerow(row)
