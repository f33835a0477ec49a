import csv
import json

import numpy as np
import pytest

from pcsn import order_estimate, record, secant_newton, tangent_linearize, tangent_newton
from pcsn import analysis as an
from pcsn import tape as tp
from pcsn.linearize import estimate_gamma
from pcsn.newton import OrderEstimateError, order_from_errors
from pcsn.plsolve import residual_tol
from pcsn.tape import evaluate_outputs

from fixtures import counterexample_tape, nested_tape, nonsmooth_tape, order_tape, quadratic_tape


def classical_newton(x, steps):
    out = [x]
    for _ in range(steps):
        x = x - (x * x - 1.0) / (2.0 * x)
        out.append(x)
    return out


def test_quadratic_tangent_matches_classical():
    trace = tangent_newton(quadratic_tape(), [2.0])
    assert trace.converged
    ref = classical_newton(2.0, len(trace.iterates) - 1)
    got = [x[0] for x in trace.iterates]
    np.testing.assert_allclose(got, ref, rtol=1e-12)
    np.testing.assert_allclose(got[1:4], [1.25, 1.025, 1.0003048780487804], rtol=1e-15)


def test_counterexample_converges():
    trace = tangent_newton(counterexample_tape(), [0.3, 0.4])
    assert trace.converged
    np.testing.assert_allclose(trace.x, [0.0, 0.0], atol=1e-12)


def test_pl_tape_one_step():
    for x0 in np.random.default_rng(2).standard_normal((10, 2)):
        trace = tangent_newton(nested_tape(), x0)
        assert trace.converged and trace.newton_steps == 1
        trace = secant_newton(nested_tape(), x0, x0 + 0.1)
        assert trace.converged and trace.newton_steps == 1


def test_secant_first_step():
    trace = secant_newton(quadratic_tape(), [2.0], [1.5])
    assert trace.iterates[2][0] == pytest.approx(8.0 / 7.0, rel=1e-15)


def test_coincident_secant_equals_tangent():
    t = nonsmooth_tape()
    x0 = np.array([0.2, -0.1])
    a = secant_newton(t, x0, x0, max_iters=1)
    b = tangent_newton(t, x0, max_iters=1)
    assert a.iterates[2].tobytes() == b.iterates[1].tobytes()


def test_order_from_exact_squares():
    assert order_from_errors([1e-1, 1e-2, 1e-4, 1e-8]) == pytest.approx(2.0)


def test_order_errors():
    with pytest.raises(OrderEstimateError):
        order_from_errors([1e-1, 1e-2])
    with pytest.raises(OrderEstimateError):
        order_from_errors([1e-1, 1e-2, 1e-2, 1e-3])


def test_order_finite_termination():
    assert order_from_errors([0.5, 0.1, 0.0]) == float("inf")
    assert order_from_errors([0.36, 1e-17]) == float("inf")
    with pytest.raises(OrderEstimateError):
        order_from_errors([1e-8, 1e-15])


@pytest.mark.parametrize("tape_fn, x0, x1", [(quadratic_tape, [2.0], [1.9]),
                                              (order_tape, [0.2, -0.25], [0.18, -0.22])])
def test_orders(tape_fn, x0, x1):
    t = tape_fn()
    q_t = order_estimate(tangent_newton(t, x0), t)
    q_s = order_estimate(secant_newton(t, x0, x1), t)
    assert 1.7 <= q_t <= 2.3
    assert 1.3 <= q_s <= 1.9


def test_order_bias_of_small_constant():
    # e_{k+1} ~ 0.24 e_k^2 here, so log ratios sit above 2 before the tail
    t = nonsmooth_tape()
    assert order_estimate(tangent_newton(t, [0.3, -0.2]), t) > 2.3


def test_status_step_undefined():
    trace = tangent_newton(record(1, lambda x: abs(x) + 1.0), [0.5])
    assert trace.status == "step-undefined" and "undefined" in trace.message


def test_status_domain_error():
    trace = tangent_newton(record(1, lambda x: tp.log(x) + 5.0), [3.0])
    assert trace.status == "domain-error"


def test_status_max_iters():
    assert tangent_newton(quadratic_tape(), [2.0], max_iters=1).status == "max-iters"


def test_status_stalled():
    # tol below attainable accuracy; the iteration stops once steps vanish
    trace = tangent_newton(quadratic_tape(), [2.0], tol=1e-300)
    assert trace.status in ("stalled", "converged")
    assert abs(trace.x[0] - 1.0) < 1e-15


def test_rectangular_rejected():
    with pytest.raises(ValueError):
        tangent_newton(record(2, lambda x, y: x + y), [0.0, 0.0])


def test_model_residual_vanishes_each_step():
    t = nonsmooth_tape()
    trace = tangent_newton(t, [0.3, -0.2])
    for a, b in zip(trace.iterates, trace.iterates[1:]):
        anf = tangent_linearize(t, a)
        assert np.linalg.norm(anf(b)) <= residual_tol(anf) * 10


def test_runs_are_bit_identical():
    t = nonsmooth_tape()
    a = tangent_newton(t, [0.3, -0.2])
    b = tangent_newton(t, [0.3, -0.2])
    assert [x.tobytes() for x in a.iterates] == [x.tobytes() for x in b.iterates]


def test_contractivity_inside_radius():
    t = nonsmooth_tape()
    root = np.zeros(2)
    anf = tangent_linearize(t, root)
    assert an.stable_bijectivity(anf).stable
    rho = 0.5
    rng = np.random.default_rng(7)
    # the ball of radius rho only contains bijective linearizations
    for p in rng.uniform(-rho, rho, (50, 2)):
        assert an.stable_bijectivity(tangent_linearize(t, p)).stable
    c = max(an.metric_regularity_constant(tangent_linearize(t, p)) for p in rng.uniform(-rho, rho, (50, 2)))
    gamma = estimate_gamma(t, [-rho, -rho], [rho, rho], samples=32)
    R = an.convergence_radius(c, gamma, rho=rho, mode="stable_bijective").R
    assert R > 0
    for _ in range(20):
        d = rng.standard_normal(2)
        x0 = root + R * rng.uniform() * d / np.linalg.norm(d)
        trace = tangent_newton(t, x0)
        assert trace.converged
        dist = [np.linalg.norm(x - root) for x in trace.iterates]
        for k in range(2, len(dist)):
            assert dist[k] <= max(dist[k - 1], dist[k - 2]) + 1e-15


def test_trace_export(tmp_path):
    trace = tangent_newton(nonsmooth_tape(), [0.3, -0.2])
    trace.write_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["iter", "x0", "x1", "residual", "kinks"]
    assert len(rows) == len(trace.iterates) + 1
    assert float(rows[1][1]) == 0.3
    trace.write_json(tmp_path / "t.json")
    data = json.load(open(tmp_path / "t.json"))
    assert data["status"] == "converged"
    assert np.array(data["iterates"][-1]).tobytes() == trace.x.tobytes()


def test_secant_trace_csv_has_two_seeds(tmp_path):
    trace = secant_newton(quadratic_tape(), [2.0], [1.5])
    trace.write_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert len(rows) == len(trace.iterates) + 1


def test_residuals_match_tape():
    t = nonsmooth_tape()
    trace = tangent_newton(t, [0.3, -0.2])
    for x, r in zip(trace.iterates, trace.residuals):
        assert r == np.linalg.norm(evaluate_outputs(t, x))
