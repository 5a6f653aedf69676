import csv
import io

import numpy as np
import pytest

from oracles import dense_scan_exit, simpson
from slowfast.blowup import affine_pipeline
from slowfast.entryexit import (
    EntryConditionError,
    ExitNotFoundError,
    convergence_study,
    exit_derivative,
    numerical_return,
    theoretical_exit,
)
from slowfast.integrate import EscapeError, Tolerances
from slowfast.system import DegenerateSystemError, Domain, SlowFastSystem, builtin


def one(x, z):
    return 1.0 + 0.0 * x


def sin3(x, z):
    return np.sin(3.0 * np.asarray(x, dtype=float)) + 0.0 * z


def skew(x, z):
    return x + 0.3 * x * x + 0.0 * z


@pytest.mark.parametrize("x0,p0", [(-1.0, 1.0), (-0.5, 0.5), (-1.7, 1.7)])
def test_symmetric_exit(x0, p0):
    sol = theoretical_exit(builtin("symmetric_quadratic"), x0)
    assert sol.p0 == pytest.approx(p0, abs=1e-12)
    assert sol.x0 < sol.p0
    assert sol.bracket[0] <= sol.p0 <= sol.bracket[1]


def test_multi_turning_matches_dense_scan():
    sys = builtin("multi_turning")
    sol = theoretical_exit(sys, -1.0)
    ref = dense_scan_exit(lambda x: sys.h(x, 0.0), -1.0, sys.domain.x_max)
    assert abs(sol.p0 - ref) <= 1e-8
    assert sys.g(sol.p0, 0.0) > 0


def test_leftmost_balance_is_selected():
    sys = SlowFastSystem(one, sin3, 2, Domain(-1.0, 3.0, 0.2))
    sol = theoretical_exit(sys, -0.5)
    # int_{-1/2}^p sin 3x vanishes at p = 1/2 and again (rising) near 2.59
    assert sol.p0 == pytest.approx(0.5, abs=1e-12)
    assert sol.leftmost


@pytest.mark.parametrize(
    "name,x0",
    [("symmetric_quadratic", -1.0), ("multi_turning", -1.0), ("example5", -0.3),
     ("flat_perturbed", -1.2)],
)
def test_residual_with_independent_simpson(name, x0):
    sys = builtin(name)
    sol = theoretical_exit(sys, x0)
    assert abs(sol.integral_residual) <= 1e-12
    assert abs(simpson(lambda x: sys.h(x, 0.0), x0, sol.p0)) <= 1e-8


def test_entry_condition_violated():
    with pytest.raises(EntryConditionError):
        theoretical_exit(builtin("symmetric_quadratic"), 0.5)


def test_no_balance_carries_minimum():
    sys = builtin("symmetric_quadratic", domain=Domain(-2.0, 0.5, 0.2))
    with pytest.raises(ExitNotFoundError) as info:
        theoretical_exit(sys, -1.0)
    # int_{-1}^{x} s ds is smallest at x = 0, value -1/2
    assert info.value.phi_min == pytest.approx(-0.5, abs=1e-9)


def test_plateau_is_degenerate():
    g = lambda x, z: np.where(np.abs(x) < 0.3, 0.0, x) + 0.0 * z  # noqa: E731
    with pytest.raises(DegenerateSystemError):
        theoretical_exit(SlowFastSystem(one, g, 2, Domain(-2, 2, 0.2)), -1.0)


def test_tangential_touch_is_degenerate():
    # Phi(x) = -(x + 1)(x - 1)^2 touches 0 at x = 1 without crossing
    g = lambda x, z: -(x - 1.0) * (3.0 * x + 1.0) + 0.0 * z  # noqa: E731
    with pytest.raises(DegenerateSystemError):
        theoretical_exit(SlowFastSystem(one, g, 2, Domain(-1.5, 2.0, 0.2)), -1.0)


@pytest.mark.parametrize("x0", [-1.0, -0.5])
def test_exit_derivative_symmetric(x0):
    assert exit_derivative(builtin("symmetric_quadratic"), x0) == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize(
    "sys,x0",
    [(builtin("multi_turning"), -1.0), (builtin("multi_turning"), -0.9),
     (SlowFastSystem(one, skew, 2, Domain(-2, 3, 0.2)), -1.0)],
)
def test_exit_derivative_finite_difference(sys, x0):
    d = 1e-6
    fd = (theoretical_exit(sys, x0 + d).p0 - theoretical_exit(sys, x0 - d).p0) / (2 * d)
    assert exit_derivative(sys, x0) == pytest.approx(fd, rel=1e-6)


def test_exit_monotone_classical():
    sys = SlowFastSystem(one, skew, 2, Domain(-2, 3, 0.2))
    xs = np.linspace(-1.5, -0.1, 15)
    ps = [theoretical_exit(sys, x).p0 for x in xs]
    assert np.all(np.diff(ps) < 0)
    assert all(exit_derivative(sys, x) < 0 for x in xs)


@pytest.mark.parametrize("x0,eps", [(-1.0, 1e-3), (-0.7, 1e-2)])
def test_exact_family_return(x0, eps):
    s = numerical_return(builtin("example5"), x0, 1.0, eps)
    assert s.p_eps == pytest.approx(-x0, abs=1e-6)
    assert s.z_event == pytest.approx(1.0, abs=1e-12)
    assert s.steps > 0


def test_symmetric_return_near_p0():
    for eps in (1e-2, 1e-3, 1e-4):
        s = numerical_return(builtin("symmetric_quadratic"), -1.0, 0.1, eps)
        assert abs(s.p_eps - 1.0) <= 5e-3


def test_multi_turning_return_goes_to_leftmost():
    sys = builtin("multi_turning")
    p0 = theoretical_exit(sys, -1.0).p0
    for eps in (1e-2, 1e-3):
        p = numerical_return(sys, -1.0, 0.1, eps).p_eps
        assert abs(p - p0) <= 1e-6


def test_direct_return_equals_affine_pipeline():
    sys = builtin("example5", alpha=0.1)
    tol = Tolerances()
    for eps in (1e-2, 3e-3, 1e-3):
        direct = numerical_return(sys, -1.0, 0.1, eps, tol).p_eps
        chart = affine_pipeline(sys, -1.0, 0.1, eps, 0.2, tol).x3
        assert abs(direct - chart) <= 10 * (tol.abs + tol.rel * abs(direct))


def test_escape_reports_face():
    with pytest.raises(EscapeError) as info:
        numerical_return(builtin("symmetric_quadratic"), 0.5, 0.1, 1e-3)
    assert info.value.face == "z_max"


def test_return_preconditions():
    sys = builtin("symmetric_quadratic")
    with pytest.raises(ValueError):
        numerical_return(sys, -1.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        numerical_return(sys, -1.0, 1.0, 1e-3)  # z0 above z_max


def test_convergence_study_exact_family():
    table = convergence_study(builtin("example5"), -1.0, 1.0, [1e-2, 1e-3, 1e-4])
    assert [r[0] for r in table.rows] == [1e-2, 1e-3, 1e-4]
    assert max(abs(e) for e in table.errors) <= 1e-6


def test_convergence_study_symmetric_tracks_p0():
    # for g = x and f = 1 the exact return is p0 for every eps; only
    # integration error is left
    table = convergence_study(builtin("symmetric_quadratic"), -1.0, 0.1, [1e-2, 1e-3])
    assert max(abs(e) for e in table.errors) <= 1e-8


def test_convergence_study_empty_and_invalid():
    table = convergence_study(builtin("symmetric_quadratic"), -1.0, 0.1, [])
    assert table.rows == [] and table.to_csv() == "eps,p_eps,p0,err\n"
    with pytest.raises(ValueError):
        convergence_study(builtin("symmetric_quadratic"), -1.0, 0.1, [1e-3, 1e-2])
    with pytest.raises(ValueError):
        convergence_study(builtin("symmetric_quadratic"), -1.0, 0.1, [1e-2, -1e-3])


def test_convergence_study_escape_is_data():
    table = convergence_study(builtin("linear_case"), -1.0, 0.1, [1e-2, 3e-4])
    assert len(table.rows) == 1
    assert table.escaped == [(3e-4, "z_underflow")]


def test_convergence_csv_format():
    table = convergence_study(builtin("example5"), -1.0, 1.0, [1e-2])
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert rows[0] == ["eps", "p_eps", "p0", "err"]
    assert float(rows[1][1]) == table.rows[0][1]
