import math

import numpy as np
import pytest

from quasitrust.errors import ConfigError, OuterConvergenceError, StagnationError
from quasitrust.ivanov import (
    SolverOptions, Tolerances, check_posdef, closed_form_multiplier, initial_radius, inner_solve,
    kkt_residual, newton_radius_update, outer_solve,
)
from quasitrust.model import ResidualFunctional
from quasitrust.problems import CubicVolterra, example_1d


# -- tolerances ---------------------------------------------------------------------


def test_tolerance_interval():
    tol = Tolerances(delta=2.0, tau=3.0, eta=0.1, eta_lower=0.5, eta_upper=0.25)
    assert tol.lower == 2.5
    assert tol.upper == 6.25
    assert tol.target == pytest.approx(0.5 * (4 * 2.0 + 0.25 + 0.5))


@pytest.mark.parametrize("kwargs", [
    dict(delta=0.0),
    dict(delta=1.0, tau=1.0),
    dict(delta=1.0, eta=-0.1),
    dict(delta=1.0, tau=2.0, eta_lower=1.0),          # violates eta_lower < (tau-1) delta + eta_upper
    dict(delta=1.0, eta=2.0, eta_lower=0.5),          # violates delta + eta_lower - eta > 0
])
def test_tolerance_invariants(kwargs):
    with pytest.raises(ConfigError):
        Tolerances(**kwargs)


def test_newton_update_fixed_point():
    assert newton_radius_update(0.3, 1.7, 1.7, 2.0) == 0.3
    assert newton_radius_update(0.3, 2.7, 1.7, 2.0) == pytest.approx(1.3)


# -- inner solve ----------------------------------------------------------------------


def test_inner_linear_problem_exact_after_first_model():
    p = CubicVolterra(50, cubic=0.0)
    rng = np.random.default_rng(31)
    rf = ResidualFunctional(p, p.eval(rng.standard_normal(50)))
    iterates = []
    st = inner_solve(rf, 0.2, np.zeros(50), on_iterate=lambda k, x, lam, r, s: iterates.append(x))
    assert st.converged
    # the first model step already lands on the solution; the second only confirms it
    assert st.k == 2
    assert (iterates[0] - iterates[1]).norm() <= 1e-12
    assert st.kkt <= 1e-8


def test_inner_benchmark_kkt(bench1):
    rho = 0.5 * bench1.rho_true
    st = inner_solve(bench1.rf, rho, np.zeros(100))
    assert st.converged
    assert st.x_k.norm_sq() <= rho * (1 + 1e-10)
    assert st.lambda_k >= 0
    assert kkt_residual(bench1.rf, st.x_k, st.lambda_k, rho) <= 1e-6
    assert st.lambda_k == pytest.approx(closed_form_multiplier(bench1.rf, st.x_k, rho), rel=1e-6)
    assert st.n_nonconvex >= 1


def test_inner_rejects_infeasible_start(bench1):
    with pytest.raises(ValueError):
        inner_solve(bench1.rf, 1e-4, np.ones(100))
    with pytest.raises(ValueError):
        inner_solve(bench1.rf, 0.0, np.zeros(100))


def test_inner_respects_max_inner(bench3):
    st = inner_solve(bench3.rf, 0.8 * bench3.rho_true, np.zeros(100), SolverOptions(max_inner=2))
    assert st.k == 2 and not st.converged


def test_inner_stagnation_raises(bench3):
    opts = SolverOptions(max_rejections=0, accept_ratio=1e6)
    with pytest.raises(StagnationError) as info:
        inner_solve(bench3.rf, 0.8 * bench3.rho_true, np.zeros(100), opts)
    assert info.value.rho == pytest.approx(0.8 * bench3.rho_true)


def test_inner_one_dimensional_example():
    ex = example_1d(0.2, 60.0, 1.0)
    st = inner_solve(ex, 0.25, np.zeros(1))
    assert st.converged
    assert st.x_k.coeffs[0] == pytest.approx(0.5, abs=1e-12)
    # closed form: lambda = -r'(x) x / rho
    assert st.lambda_k == pytest.approx(-ex.derivative(0.5) * 0.5 / 0.25, rel=1e-10)


# -- positivity check -----------------------------------------------------------------------


def test_check_posdef_one_dimensional():
    ex = example_1d(0.2, 60.0, 1.0)
    lam, min_eig = check_posdef(ex, np.array([0.5]), 0.25)
    assert lam == pytest.approx(0.8)
    assert min_eig == pytest.approx(1 - 12 * 0.2 * 0.25 + 0.8)


def test_check_posdef_interior_reports_zero_multiplier():
    ex = example_1d(0.2, 60.0, 1.0)
    res = check_posdef(ex, np.array([1.0]), 4.0)
    assert not res.on_boundary and res.lambda_rho == 0.0
    assert res.min_eig == pytest.approx(1.0)


def test_check_posdef_convex_case():
    p = CubicVolterra(30, cubic=0.0)
    rf = ResidualFunctional(p, p.eval(np.ones(30)))
    x = np.full(30, 0.5)
    res = check_posdef(rf, x, float(np.sum(p.weights * x**2)))
    assert res.min_eig > 0


# -- outer solve ---------------------------------------------------------------------------


def test_outer_returns_immediately_for_small_data():
    p = CubicVolterra(30)
    rf = ResidualFunctional(p, np.full(30, 1e-3))
    tol = Tolerances(delta=rf.value(np.zeros(30)))
    st = outer_solve(rf, tol, rho1=0.1)
    assert st.l == 0 and st.x_hat.norm() == 0.0
    assert st.history == []


def test_outer_benchmark_one_percent(bench1):
    tol = Tolerances(bench1.setup.delta_abs)
    records = []
    st = outer_solve(bench1.rf, tol, x_true=bench1.x_true, on_record=records.append)
    assert tol.lower < st.residual <= tol.upper
    assert st.residual == pytest.approx(bench1.rf.value(st.x_hat.coeffs), rel=1e-14)
    assert all(b > a for a, b in zip(st.radii, st.radii[1:]))
    assert all(b <= a for a, b in zip(st.residuals, st.residuals[1:]))
    assert records == st.history
    counts = [r.n_trs_solves for r in records]
    assert counts == sorted(counts)
    assert all(r.residual >= 0 for r in records)
    assert st.termination == "discrepancy satisfied"


def test_outer_max_outer(bench1):
    with pytest.raises(OuterConvergenceError) as info:
        outer_solve(bench1.rf, Tolerances(bench1.setup.delta_abs), rho1=1e-6, opts=SolverOptions(max_outer=1))
    assert info.value.state.l == 1


def test_outer_rejects_bad_rho1(bench1):
    with pytest.raises(ConfigError):
        outer_solve(bench1.rf, Tolerances(bench1.setup.delta_abs), rho1=-1.0)


def test_initial_radius_scale(bench1):
    rho1 = initial_radius(bench1.rf)
    assert 0 < rho1 < bench1.rho_true
    # deterministic
    assert initial_radius(bench1.rf) == rho1


def test_initial_radius_needs_forward_problem():
    with pytest.raises(ConfigError):
        initial_radius(example_1d())


def test_outer_explicit_rho1(bench3):
    tol = Tolerances(bench3.setup.delta_abs)
    st = outer_solve(bench3.rf, tol, rho1=0.2 * bench3.rho_true)
    assert tol.lower < st.residual <= tol.upper
    assert math.isclose(st.radii[0], 0.2 * bench3.rho_true)
