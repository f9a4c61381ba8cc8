import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pdflow.grid import FlowField
from pdflow.metrics import (
    BenchProblem,
    average_angular_error,
    bench_convergence,
    div_curl_energy,
    endpoint_error,
    first_crossings,
    fit_order,
    format_table,
    write_reports_csv,
)
from pdflow.operators import Model
from pdflow.solver import SolverParams
from pdflow.synthetic import rotation_field, translation_case

fields = arrays(np.float64, (2, 5, 6), elements=st.floats(-20, 20))


def ff(a):
    return FlowField(a[0], a[1])


def test_aae_trivial():
    u = FlowField(np.ones((3, 3)), np.zeros((3, 3)))
    v = FlowField(np.zeros((3, 3)), np.ones((3, 3)))
    assert average_angular_error(u, u) == 0.0
    assert average_angular_error(u, v) == pytest.approx(60.0, abs=1e-12)


def test_aae_loop_oracle(rng):
    a = FlowField(rng.standard_normal((6, 7)), rng.standard_normal((6, 7)))
    b = FlowField(rng.standard_normal((6, 7)), rng.standard_normal((6, 7)))
    total = 0.0
    for y in range(6):
        for x in range(7):
            u, v, p, q = a.u1[y, x], a.u2[y, x], b.u1[y, x], b.u2[y, x]
            c = (u * p + v * q + 1) / (math.sqrt(u * u + v * v + 1) * math.sqrt(p * p + q * q + 1))
            total += math.degrees(math.acos(max(-1.0, min(1.0, c))))
    assert average_angular_error(a, b) == pytest.approx(total / 42, rel=1e-12)


def test_epe_trivial_and_oracle(rng):
    z = FlowField.zeros((4, 4))
    assert endpoint_error(z, z) == 0
    assert endpoint_error(FlowField(np.ones((4, 4)), np.zeros((4, 4))), z) == 1.0
    a = FlowField(rng.standard_normal((5, 5)), rng.standard_normal((5, 5)))
    b = FlowField(rng.standard_normal((5, 5)), rng.standard_normal((5, 5)))
    total = sum(math.hypot(a.u1[y, x] - b.u1[y, x], a.u2[y, x] - b.u2[y, x]) for y in range(5) for x in range(5))
    assert endpoint_error(a, b) == pytest.approx(total / 25, rel=1e-12)


def test_unknown_flow_masked():
    gt = FlowField(np.zeros((3, 3)), np.zeros((3, 3)))
    gt.u1[0, 0] = 1e10
    est = FlowField(np.zeros((3, 3)), np.zeros((3, 3)))
    assert endpoint_error(est, gt) == 0.0
    with pytest.raises(ValueError):
        endpoint_error(est, gt, mask=np.zeros((3, 3), bool))
    with pytest.raises(ValueError):
        endpoint_error(est, FlowField.zeros((3, 4)))


@given(fields, fields)
def test_metrics_symmetric_nonnegative(a, b):
    a, b = ff(a), ff(b)
    for m in (average_angular_error, endpoint_error):
        assert m(a, b) == pytest.approx(m(b, a), rel=1e-12, abs=1e-12)
        assert m(a, b) >= 0
    assert endpoint_error(a, a) == 0


@given(fields, fields, st.randoms())
def test_metrics_permutation_invariant(a, b, rnd):
    perm = list(range(30))
    rnd.shuffle(perm)
    p = lambda x: FlowField(x.u1.ravel()[perm].reshape(5, 6), x.u2.ravel()[perm].reshape(5, 6))  # noqa: E731
    a, b = ff(a), ff(b)
    assert average_angular_error(p(a), p(b)) == pytest.approx(average_angular_error(a, b), rel=1e-12, abs=1e-9)


def test_div_curl_energy():
    c = FlowField(np.full((5, 5), 2.0), np.full((5, 5), 1.0))
    assert div_curl_energy(c) == (0.0, 0.0)
    om = 0.03
    u = rotation_field((4, 5), om, 12, 10)
    div, curl = div_curl_energy(u)
    assert abs(div) <= 1e-10
    assert curl == pytest.approx(4 * om * om * 11 * 9, rel=1e-12)
    yy, xx = np.mgrid[0:6, 0:6].astype(float)
    div, curl = div_curl_energy(FlowField(xx, yy))
    assert div == pytest.approx(4 * 25) and curl == 0


def test_first_crossings_and_monotone():
    e = np.array([0.5, 0.2, 0.08, 0.06, 0.03, 0.015, 0.009])
    tr = np.column_stack([np.arange(1, 8), e, e, e])
    its = first_crossings(tr, (0.1, 0.05, 0.02, 0.01))
    assert its == {0.1: 3, 0.05: 5, 0.02: 6, 0.01: 7}
    assert first_crossings(tr, (1e-6,)) == {1e-6: None}


@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(1e-4, 10)),
       st.lists(st.floats(1e-4, 10), min_size=2, max_size=5, unique=True))
def test_first_crossing_monotone_property(e, eps):
    eps = sorted(eps, reverse=True)
    tr = np.column_stack([np.arange(1, e.size + 1), e, e, e])
    its = first_crossings(tr, eps)
    seen = [its[x] for x in eps]
    big = e.size + 1
    vals = [big if v is None else v for v in seen]
    assert vals == sorted(vals)


def test_fit_order_known_slopes():
    assert fit_order({0.1: 10, 0.01: 100}) == pytest.approx(1.0)
    assert fit_order({0.1: 10, 0.05: 40, 0.02: 250, 0.01: 1000}) == pytest.approx(2.0)
    assert math.isnan(fit_order({0.1: 5}))


def test_bench_trivial_threshold(tmp_path):
    c = translation_case(24)
    pb = [BenchProblem("t", c.f1, c.f2, 1.0, 0.1)]
    reps = bench_convergence(pb, SolverParams(), thresholds=(1e9,), workers=1)
    assert all(r.iterations[1e9] == 1 for r in reps)
    with pytest.raises(ValueError):
        bench_convergence(pb, SolverParams(), thresholds=(0.01, 0.1))


def test_bench_report_outputs(tmp_path):
    c = translation_case(24)
    pb = [BenchProblem("translation", c.f1, c.f2, 1.0, 0.1)]
    reps = bench_convergence(pb, SolverParams(), thresholds=(0.1, 0.05), workers=1)
    assert {r.model for r in reps} == {Model.M1, Model.M2}
    table = format_table(reps)
    assert table.splitlines()[0].startswith("sequence") and "M1 e=0.1" in table
    out = tmp_path / "b.csv"
    write_reports_csv(reps, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "sequence,model,epsilon,iterations,converged,fitted_order"
    assert len(lines) == 1 + 4


def test_bench_worker_cap_env(monkeypatch):
    c = translation_case(16)
    pb = [BenchProblem("t", c.f1, c.f2, 1.0, 0.1)]
    monkeypatch.setenv("PDFLOW_THREADS", "2")
    par = bench_convergence(pb, SolverParams(), thresholds=(0.1,))
    seq = bench_convergence(pb, SolverParams(), thresholds=(0.1,), workers=1)
    assert [r.iterations for r in par] == [r.iterations for r in seq]
    assert par[0].residual_trace.tobytes() == seq[0].residual_trace.tobytes()
