import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowfast.blowup import affine_field
from slowfast.entryexit import numerical_return, return_field
from slowfast.integrate import (
    EscapeError,
    EventNotFoundError,
    EventSpec,
    MaxStepsError,
    StepUnderflowError,
    Tolerances,
    integrate,
    write_csv,
)
from slowfast.system import builtin


def decay(y):
    return np.array([0.0, -y[1]])


def test_linear_decay():
    traj = integrate(decay, (0.0, 1.0), (0.0, 1.0))
    assert traj.final_state[1] == pytest.approx(math.exp(-1.0), rel=1e-9)
    assert traj.final_state[0] == 0.0
    assert np.all(np.diff(traj.t) > 0)


def test_affine_chart_conserves_product():
    fld = affine_field(builtin("symmetric_quadratic"))
    traj = integrate(fld, (-1.0, 1.0, 0.01), (0.0, 1e4),
                     event=EventSpec(lambda y: y[2] - 0.2, "rising"))
    prod = traj.y[:, 1] * traj.y[:, 2]
    assert np.max(np.abs(prod - 0.01)) / 0.01 <= 1e-9
    assert abs(traj.event_state[2] - 0.2) <= 1e-12


def test_exact_family_event():
    fld = return_field(builtin("example5"), 1e-2)
    traj = integrate(fld, (-1.0, 1.0), (0.0, 1e3),
                     event=EventSpec(lambda y: y[1] - 1.0, "rising", skip_initial=True))
    assert traj.event_state[0] == pytest.approx(1.0, abs=1e-6)
    assert abs(traj.event_state[1] - 1.0) <= 1e-12


def test_event_direction_filter():
    # sin(t) crosses 0 falling at pi, rising at 2 pi
    osc = lambda y: np.array([y[1], -y[0]])  # noqa: E731
    y0 = (0.0, 1.0)
    fall = integrate(osc, y0, (0, 10), event=EventSpec(lambda y: y[0], "falling", True))
    rise = integrate(osc, y0, (0, 10), event=EventSpec(lambda y: y[0], "rising", True))
    assert fall.event_t == pytest.approx(math.pi, abs=1e-9)
    assert rise.event_t == pytest.approx(2 * math.pi, abs=1e-9)
    second = integrate(osc, y0, (0, 10),
                       event=EventSpec(lambda y: y[0], "any", True, count=2))
    assert second.event_t == pytest.approx(2 * math.pi, abs=1e-9)


def test_skip_initial_guard():
    osc = lambda y: np.array([y[1], -y[0]])  # noqa: E731
    # starts on the surface; the first reported rising crossing is at 2 pi
    traj = integrate(osc, (0.0, 1.0), (0, 10),
                     event=EventSpec(lambda y: y[0], "rising", skip_initial=True))
    assert traj.event_t > 6.0


def test_distinct_errors():
    with pytest.raises(EventNotFoundError):
        integrate(decay, (0.0, 1.0), (0.0, 1.0), event=EventSpec(lambda y: y[1] - 2.0))
    with pytest.raises(MaxStepsError):
        integrate(decay, (0.0, 1.0), (0.0, 1e3), tol=Tolerances(max_steps=5))
    blowup_ode = lambda y: np.array([y[0] ** 2])  # noqa: E731
    with pytest.raises(StepUnderflowError):
        integrate(blowup_ode, (1.0,), (0.0, 2.0), tol=Tolerances(h_min=1e-6))
    with pytest.raises(EscapeError) as info:
        integrate(lambda y: np.array([1.0]), (0.0,), (0.0, 5.0),
                  stop_if=lambda y: "right" if y[0] > 1 else None)
    assert info.value.face == "right"


def test_tolerances_validation():
    with pytest.raises(ValueError):
        Tolerances(rel=0.0)
    with pytest.raises(ValueError):
        Tolerances(h_min=1.0, h_max=0.5)
    with pytest.raises(ValueError):
        Tolerances(max_steps=0)
    with pytest.raises(ValueError):
        EventSpec(lambda y: y[0], count=0)
    with pytest.raises(ValueError):
        EventSpec(lambda y: y[0], direction="up")


def test_backward_integration():
    traj = integrate(decay, (0.0, math.exp(-1.0)), (1.0, 0.0))
    assert traj.final_state[1] == pytest.approx(1.0, rel=1e-9)
    assert np.all(np.diff(traj.t) < 0)
    assert traj(0.5)[1] == pytest.approx(math.exp(-0.5), rel=1e-9)


def _within(tol: Tolerances, delta, ref):
    return np.abs(delta) <= tol.abs + tol.rel * np.abs(ref)


@pytest.mark.parametrize(
    "name,params,x0,z0,eps",
    [
        ("example5", {"alpha": 0.1}, -1.0, 0.1, 1e-2),
        ("example5", {"alpha": 0.1}, -1.0, 0.1, 1e-3),
        ("example5", {}, -0.7, 1.0, 1e-2),
        ("symmetric_quadratic", {}, -1.0, 0.1, 1e-2),
        ("symmetric_quadratic", {}, -1.0, 0.1, 1e-3),
        ("multi_turning", {}, -1.0, 0.1, 1e-3),
    ],
)
def test_tolerance_ladder(name, params, x0, z0, eps):
    sys = builtin(name, params)
    coarse = Tolerances()
    a = numerical_return(sys, x0, z0, eps, coarse)
    b = numerical_return(sys, x0, z0, eps, coarse.scaled(0.5))
    assert _within(coarse, a.p_eps - b.p_eps, a.p_eps)
    assert _within(coarse, a.z_event - b.z_event, a.z_event)


def test_tolerance_ladder_on_affine_leg():
    fld = affine_field(builtin("example5", alpha=0.1))
    ev = EventSpec(lambda y: y[2] - 0.2, "rising")
    coarse = Tolerances()
    a = integrate(fld, (-1.0, 0.1, 0.01), (0, 1e4), coarse, ev).event_state
    b = integrate(fld, (-1.0, 0.1, 0.01), (0, 1e4), coarse.scaled(0.5), ev).event_state
    assert np.all(_within(coarse, a - b, a))


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_forward_backward_reversibility(eps):
    fld = return_field(builtin("example5", alpha=0.1), eps)
    tol = Tolerances()
    fwd = integrate(fld, (-1.0, 1.0), (0.0, 1e3), tol,
                    EventSpec(lambda y: y[1] - 1.0, "rising", skip_initial=True))
    back = integrate(fld, fwd.event_state, (fwd.event_t, 0.0), tol)
    y0 = np.array([-1.0, 1.0])
    assert np.all(np.abs(back.final_state - y0) <= 10 * (tol.abs + tol.rel * np.abs(y0)))


def test_dense_output_matches_reintegration():
    fld = return_field(builtin("example5", alpha=0.1), 0.1)
    tol = Tolerances()
    y0 = (-1.0, 1.0)
    traj = integrate(fld, y0, (0.0, 20.0), tol)
    rng = np.random.default_rng(12345)
    for t in rng.uniform(0.0, 20.0, 20):
        ref = integrate(fld, y0, (0.0, t), tol.scaled(0.5)).final_state
        assert np.all(np.abs(traj(t) - ref) <= 10 * tol.rel * np.maximum(1.0, np.abs(ref)))


def test_dense_output_reproduces_nodes():
    fld = return_field(builtin("symmetric_quadratic"), 1e-2)
    traj = integrate(fld, (-1.0, 0.1), (0.0, 100.0))
    for t, y in zip(traj.t[1:], traj.y[1:]):
        assert np.all(np.abs(traj(t) - y) <= 1e-12)
    with pytest.raises(ValueError):
        traj(200.0)


def test_write_csv(tmp_path):
    traj = integrate(decay, (0.0, 1.0), (0.0, 1.0))
    path = tmp_path / "traj.csv"
    write_csv(traj, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "x", "z"]
    assert len(rows) == len(traj.t) + 1
    assert float(rows[-1][2]) == traj.final_state[1]


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3.0, 3.0), T=st.floats(0.1, 2.0))
def test_scalar_linear_ode(a, T):
    traj = integrate(lambda y: np.array([a * y[0]]), (1.0,), (0.0, T))
    assert traj.final_state[0] == pytest.approx(math.exp(a * T), rel=1e-8)
