"""Command-line interface: ``pdflow {flow,refine,synth,metrics,bench}``.

Configuration precedence is built-in defaults < ``--config`` file (``key=value``
lines) < command-line flags.  ``--dump-config`` prints the resolved values.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import io, synthetic
from .grid import PyramidParams
from .metrics import (
    DEFAULT_THRESHOLDS,
    average_angular_error,
    bench_convergence,
    bench_problems,
    endpoint_error,
    format_table,
    write_reports_csv,
)
from .operators import Model
from .solver import SolverParams, run_pyramidal, write_trace_csv

log = logging.getLogger("pdflow")

EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3


@dataclass
class RunConfig:
    model: str = "m2"
    alpha: float = 0.1
    beta: float = 0.01
    lam: float = 0.1
    epsilon: float = 0.01
    max_iter: int = 200_000
    tau: float | None = None
    sigma: float | None = None
    theta: float = 1.0
    hs_alpha: float = 100.0
    hs_epsilon: float = 0.01
    hs_max_iter: int = 200_000
    hs_init: bool = False
    data_scale: float = 255.0
    levels: int = 3
    scale: float = 0.5
    warps: int = 10
    blend: float = 0.5
    median: bool = True
    deterministic: bool = False
    strict_stepsize: bool = False
    strict: bool = False
    trace: str | None = None
    out: str | None = None
    color: str | None = None

    def solver_params(self) -> SolverParams:
        return SolverParams(
            alpha=self.alpha, beta=self.beta, lam=self.lam, tau=self.tau, sigma=self.sigma,
            theta=self.theta, epsilon=self.epsilon, max_iter=self.max_iter, model=Model(self.model),
            hs_alpha=self.hs_alpha, hs_epsilon=self.hs_epsilon, hs_max_iter=self.hs_max_iter,
            hs_init=self.hs_init, data_scale=self.data_scale, strict_stepsize=self.strict_stepsize,
        )

    def pyramid_params(self) -> PyramidParams:
        return PyramidParams(self.scale, self.levels, self.warps, self.blend, self.median)

    def dump(self) -> str:
        return "\n".join(f"{f.name}={'' if getattr(self, f.name) is None else getattr(self, f.name)}"
                         for f in fields(self))


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    if raw == "" or raw.lower() == "none":
        if "None" in str(ftype):
            return None
        raise ValueError(f"{name} requires a value")
    if "bool" in str(ftype):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if "int" in str(ftype):
        return int(raw)
    if "float" in str(ftype):
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "lambda":
            key = "lam"
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def _add_config_flags(p: argparse.ArgumentParser, model_choices=None) -> None:
    S = argparse.SUPPRESS
    if model_choices:
        p.add_argument("--model", choices=model_choices, default=S)
    p.add_argument("--config", default=S, help="key=value configuration file")
    p.add_argument("--dump-config", action="store_true", default=S, help="print resolved configuration")
    p.add_argument("--alpha", type=float, default=S, help="TV weight")
    p.add_argument("--beta", type=float, default=S, help="divergence/curl constraint weight")
    p.add_argument("--lambda", dest="lam", type=float, default=S, help="M2 weight parameter")
    p.add_argument("--epsilon", type=float, default=S, help="stopping threshold on the normalised residual")
    p.add_argument("--max-iter", type=int, default=S)
    p.add_argument("--tau", type=float, default=S, help="primal step (default: automatic)")
    p.add_argument("--sigma", type=float, default=S, help="dual step (default: automatic)")
    p.add_argument("--theta", type=float, default=S)
    p.add_argument("--hs-alpha", type=float, default=S, help="Horn-Schunck smoothness weight")
    p.add_argument("--hs-epsilon", type=float, default=S)
    p.add_argument("--hs-max-iter", type=int, default=S)
    p.add_argument("--hs-init", action="store_const", const=True, default=S,
                   help="warm-start M2 from Horn-Schunck")
    p.add_argument("--data-scale", type=float, default=S, help="intensity scale of the data term")
    p.add_argument("--levels", type=int, default=S)
    p.add_argument("--scale", type=float, default=S, help="pyramid scale factor")
    p.add_argument("--warps", type=int, default=S, help="warps per pyramid level")
    p.add_argument("--blend", type=float, default=S, help="blending ratio for spatial derivatives")
    p.add_argument("--no-median", dest="median", action="store_const", const=False, default=S)
    p.add_argument("--deterministic", action="store_const", const=True, default=S)
    p.add_argument("--strict-stepsize", action="store_const", const=True, default=S)
    p.add_argument("--strict", action="store_const", const=True, default=S,
                   help="exit 3 when a solve stops at max_iter")
    p.add_argument("--trace", default=S, metavar="CSV", help="residual trace output")
    p.add_argument("--out", default=S, metavar="FLO", help="flow output (.flo)")
    p.add_argument("--color", default=S, metavar="PNG", help="colour-coded flow output")


def resolve_config(ns: argparse.Namespace, **forced) -> RunConfig:
    values = {}
    if getattr(ns, "config", None):
        values.update(read_config_file(ns.config))
    known = {f.name for f in fields(RunConfig)}
    for k, v in vars(ns).items():
        if k in known:
            values[k] = v
    values.update(forced)
    cfg = RunConfig(**values)
    # eager range validation
    cfg.solver_params()
    cfg.pyramid_params()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="estimate flow (M2 by default, or HS; m1 runs the two-phase pipeline)")
    p.add_argument("frame1")
    p.add_argument("frame2")
    _add_config_flags(p, model_choices=["hs", "m1", "m2"])

    p = sub.add_parser("refine", help="two-phase M1 pipeline (Horn-Schunck, then refinement)")
    p.add_argument("frame1")
    p.add_argument("frame2")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="write a synthetic frame pair and its ground truth")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--oseen", dest="kind", action="store_const", const="oseen")
    g.add_argument("--rotation", dest="kind", action="store_const", const="rotation")
    g.add_argument("--translation", dest="kind", action="store_const", const="translation")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--omega", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=["png", "pgm"], default="png")
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("metrics", help="AAE/EPE of an estimate against ground truth")
    p.add_argument("estimate")
    p.add_argument("truth")

    p = sub.add_parser("bench", help="convergence benchmark on the synthetic set")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--thresholds", default=",".join(str(t) for t in DEFAULT_THRESHOLDS))
    p.add_argument("--csv", default=None, help="write reports as CSV")
    p.add_argument("--trace-dir", default=None, help="write one residual trace CSV per run")
    _add_config_flags(p)
    return ap


class UsageError(Exception):
    pass


def _need_file(path) -> None:
    if not os.path.isfile(path):
        raise UsageError(f"input not found: {path}")


def _run_estimation(ns, cfg: RunConfig) -> int:
    _need_file(ns.frame1)
    _need_file(ns.frame2)
    f1 = io.read_image(ns.frame1)
    f2 = io.read_image(ns.frame2)
    if f1.shape != f2.shape:
        raise UsageError(f"frames differ in size: {f1.shape} vs {f2.shape}")
    res = run_pyramidal(f1, f2, cfg.solver_params(), cfg.pyramid_params())
    if cfg.out:
        io.write_flo(res.flow, cfg.out)
    if cfg.color:
        io.write_color(res.flow, cfg.color)
    if cfg.trace:
        write_trace_csv(res.trace, cfg.trace)
    total = sum(r.iterations for _, _, r in res.solves)
    print(f"{cfg.model}: {len(res.solves)} solves, {total} iterations, converged={res.converged}")
    if cfg.strict and not res.converged:
        print("error: solver did not converge within max_iter", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return 0


def _cmd_synth(ns) -> int:
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = ns.kind or "oseen"
    kw = {} if ns.seed is None else {"seed": ns.seed}
    if kind == "oseen":
        case = synthetic.oseen_case(ns.size, **kw)
    elif kind == "rotation":
        case = synthetic.rotation_case(ns.size, ns.omega, **kw)
    else:
        case = synthetic.translation_case(ns.size, **kw)
    ext = ns.format
    io.write_image(case.f1, out / f"frame1.{ext}")
    io.write_image(case.f2, out / f"frame2.{ext}")
    io.write_flo(case.truth, out / "truth.flo")
    io.write_color(case.truth, out / "truth.png")
    print(f"wrote {kind} pair ({ns.size}x{ns.size}) to {out}")
    return 0


def _cmd_metrics(ns) -> int:
    _need_file(ns.estimate)
    _need_file(ns.truth)
    est = io.read_flo(ns.estimate)
    gt = io.read_flo(ns.truth)
    if est.shape != gt.shape:
        raise UsageError(f"flow sizes differ: {est.shape} vs {gt.shape}")
    print(f"AAE {average_angular_error(est, gt):.3f}")
    print(f"EPE {endpoint_error(est, gt):.3f}")
    return 0


def _cmd_bench(ns, cfg: RunConfig) -> int:
    try:
        thresholds = tuple(float(t) for t in ns.thresholds.split(","))
    except ValueError:
        raise UsageError(f"bad --thresholds {ns.thresholds!r}") from None
    workers = 1 if cfg.deterministic else None
    reports = bench_convergence(bench_problems(ns.size), cfg.solver_params(), thresholds, workers=workers)
    print(format_table(reports))
    if ns.csv:
        write_reports_csv(reports, ns.csv)
    if ns.trace_dir:
        Path(ns.trace_dir).mkdir(parents=True, exist_ok=True)
        for r in reports:
            write_trace_csv(r.residual_trace, Path(ns.trace_dir) / f"{r.sequence}_{r.model.value}.csv")
    if cfg.strict and not all(r.converged for r in reports):
        return EXIT_NOT_CONVERGED
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * ns.verbose, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        if ns.command == "synth":
            return _cmd_synth(ns)
        if ns.command == "metrics":
            return _cmd_metrics(ns)
        forced = {"model": "m1"} if ns.command == "refine" else {}
        cfg = resolve_config(ns, **forced)
        if getattr(ns, "dump_config", False):
            print(cfg.dump())
        if ns.command == "bench":
            return _cmd_bench(ns, cfg)
        return _run_estimation(ns, cfg)
    except (UsageError, FileNotFoundError, ValueError) as exc:
        # ValueError covers range checks, StepSizeError and malformed inputs
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
