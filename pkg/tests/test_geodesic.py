import math

import numpy as np
import pytest

from finsler import (
    DomainError,
    NumericError,
    PhaseState,
    PreconditionError,
    Trajectory,
    flag_curvature,
    geodesic_accel,
    integrate_geodesic,
    liouville_volume_check,
    scenario,
    wrap,
    zermelo_geodesic,
)
from finsler.geodesic import el_residual, estimate_jacobi_operator, speed_drift


# closed form of the horizontal unit geodesic of the sin-wind scene
def fig_x(t):
    return np.column_stack([t, 0 * t, 3 * t / 8 - np.sin(2 * t) / 16])


def fig_v(t):
    return np.column_stack([np.ones_like(t), 0 * t, 3 / 8 - np.cos(2 * t) / 8])


def fig_a(t):
    return np.column_stack([0 * t, 0 * t, np.sin(2 * t) / 4])


FIG_V0 = [1.0, 0.0, 0.25]


def test_phase_state_rejects_zero_velocity():
    with pytest.raises(DomainError):
        PhaseState([0, 0], [0, 0])


@pytest.mark.parametrize("name", ["euclidean", "cone_r2"])
def test_straight_lines_on_constant_scenes(name, rng):
    s = scenario(name)
    for x, v in zip(rng.normal(size=(5, 2)), rng.normal(size=(5, 2))):
        assert np.abs(geodesic_accel(s, x, v)).max() <= 1e-8


def test_sin_wind_lift_residual():
    t = np.linspace(0, 2 * math.pi, 1001)
    assert el_residual(scenario("sin_wind_r3"), fig_x, fig_v, fig_a, t) <= 1e-6


def test_accel_errors():
    with pytest.raises(DomainError):
        geodesic_accel(scenario("cone_r2"), [0, 0], [0, 0])
    with pytest.raises(DomainError):
        geodesic_accel(scenario("sphere2"), [0.01, 0], [1, 0])


def test_euclidean_endpoint():
    tr = integrate_geodesic(scenario("euclidean", dim=2), PhaseState([0, 0], [1, 0]), 2.0)
    np.testing.assert_allclose(tr.x[-1], [2, 0], atol=1e-14)
    np.testing.assert_allclose(tr.v[-1], [1, 0], atol=1e-14)
    assert tr.times[-1] == 2.0 and len(tr) == 2001


def test_cone_control_field_geodesic():
    tr = integrate_geodesic(scenario("cone_r2"), PhaseState([0, 0], [1, 0.5]), 1.0)
    np.testing.assert_allclose(tr.x[-1], [1, 0.5], atol=1e-14)
    np.testing.assert_allclose(tr.speeds(), 1.0, atol=1e-14)


def test_sin_wind_lift_integration():
    s = scenario("sin_wind_r3")
    tr = integrate_geodesic(s, PhaseState([0, 0, 0], FIG_V0), math.pi)
    np.testing.assert_allclose(tr.x[-1], fig_x(np.array([math.pi]))[0], atol=1e-5)
    full = integrate_geodesic(s, PhaseState([0, 0, 0], FIG_V0), 2 * math.pi)
    assert np.abs(full.x - fig_x(full.times)).max() <= 1e-5


def test_backward_flow_retraces():
    s = scenario("sin_wind_r3")
    fwd = integrate_geodesic(s, PhaseState([0, 0, 0], FIG_V0), 1.0)
    back = integrate_geodesic(s, fwd.end, -1.0)
    assert back.times[-1] == -1.0
    np.testing.assert_allclose(back.x[-1], [0, 0, 0], atol=1e-10)


@pytest.mark.parametrize(
    "name, x, v",
    [
        ("euclidean", [0.1, 0.2], [0.3, -1.0]),
        ("cone_r2", [0.0, 0.0], [0.7, -0.4]),
        ("torus", [0.5, 0.5], [-1.0, 0.2]),
        ("sin_wind_r3", [0.3, 0.0, 0.0], [0.2, 0.9, -0.3]),
        ("sphere2", [1.2, 0.0], [0.3, 0.9]),
    ],
)
def test_speed_is_conserved(name, x, v):
    tr = integrate_geodesic(scenario(name), PhaseState(x, v), 10.0)
    assert not tr.truncated
    assert speed_drift(tr) <= 1e-6


def test_rk4_order():
    s = scenario("sin_wind_r3")

    def end(h):
        return integrate_geodesic(s, PhaseState([0, 0, 0], [1, 0.3, 0.25]), 2.0, h).x[-1]

    a, b, c = end(0.1), end(0.05), end(0.025)
    assert math.log2(np.abs(a - b).max() / np.abs(b - c).max()) >= 3.5


def test_chart_exit_truncates():
    tr = integrate_geodesic(scenario("sphere2"), PhaseState([0.3, 0.0], [-1.0, 0.0]), 3.0)
    assert tr.truncated
    assert tr.times[-1] < 3.0
    assert np.all(tr.x[:, 0] > 0.1)


def test_blowup_is_numeric_error():
    s = scenario("sin_wind_r3")
    with pytest.raises(NumericError):
        integrate_geodesic(s, PhaseState([0, 0, 0], [1e200, 0, 0]), 1.0, 0.5)


def test_zermelo_cone_is_wind_shifted_line():
    tr = zermelo_geodesic(scenario("cone_r2"), PhaseState([0, 0], [1, 0.5]), 3.0)
    np.testing.assert_allclose(tr.x, np.column_stack([tr.times, tr.times / 2]), atol=1e-14)


def test_zermelo_euclidean_straight():
    tr = zermelo_geodesic(scenario("euclidean", dim=2), PhaseState([1, 1], [0.6, 0.8]), 2.0)
    np.testing.assert_allclose(tr.x[-1], [2.2, 2.6], atol=1e-14)


def test_zermelo_torus_wraps_cover_geodesic():
    s = scenario("torus")
    tr = zermelo_geodesic(s, PhaseState([0, 0], [1, 0.5]), 2.3)
    t = tr.times
    np.testing.assert_allclose(tr.wrapped(), wrap(s, np.column_stack([t, t / 2])), atol=1e-12)


@pytest.mark.parametrize(
    "name, x, v",
    [
        ("cone_r2", [0.0, 0.0], [0.3, 0.9]),
        ("torus", [0.2, 0.1], [-0.4, 0.1]),
        ("sphere2", [1.2, 0.3], [0.3, 0.9]),
    ],
)
def test_zermelo_agrees_with_euler_lagrange(name, x, v):
    s = scenario(name)
    a = zermelo_geodesic(s, PhaseState(x, v), 10.0)
    b = integrate_geodesic(s, PhaseState(x, v), 10.0)
    assert np.abs(a.x - b.x).max() <= 1e-6


def test_zermelo_requires_killing_wind():
    with pytest.raises(PreconditionError):
        zermelo_geodesic(scenario("sin_wind_r3"), PhaseState([0, 0, 0], FIG_V0), 1.0)


def test_jacobi_operator_flat_cases():
    assert np.abs(estimate_jacobi_operator(scenario("euclidean", dim=2), PhaseState([0, 0], [1, 0]), [0, 1])).max() <= 1e-5
    assert np.abs(estimate_jacobi_operator(scenario("cone_r2"), PhaseState([0, 0], [1, 0.5]), [0, 1])).max() <= 1e-4


def test_jacobi_operator_on_the_sphere():
    # meridian through the equator; the variation direction is along the equator
    R = estimate_jacobi_operator(scenario("sphere2"), PhaseState([math.pi / 2, 0], [1.0, 0.0]), [0.0, 1.0])
    np.testing.assert_allclose(R, [0.0, 1.0], atol=1e-2)


def test_flag_curvature_values():
    assert abs(flag_curvature(scenario("euclidean", dim=2), PhaseState([0, 0], [1, 0]), [0, 1])) <= 1e-6
    assert abs(flag_curvature(scenario("sphere2"), PhaseState([math.pi / 2, 0], [0, 1]), [1, 0]) - 1) <= 1e-2
    assert abs(flag_curvature(scenario("cone_r2"), PhaseState([0, 0], [1, 0.5]), [0, 1])) <= 1e-3


def test_flag_curvature_later_on_the_curve():
    K = flag_curvature(scenario("sphere2"), PhaseState([1.0, 0.0], [0.0, 1.0]), [1.0, 0.0], t=0.5)
    assert abs(K - 1) <= 1e-2


def test_degenerate_flag():
    with pytest.raises(DomainError):
        flag_curvature(scenario("cone_r2"), PhaseState([0, 0], [1, 0.5]), [2, 1])


@pytest.mark.parametrize(
    "name, x, v, tol",
    [
        ("euclidean", [0.3, -0.2], [0.6, 0.8], 1e-6),
        ("cone_r2", [0.0, 0.0], [0.7, 0.4], 1e-4),
        ("sphere2", [math.pi / 2, 0.0], [0.3, 0.9], 1e-4),
    ],
)
def test_liouville_volume(name, x, v, tol):
    assert abs(liouville_volume_check(scenario(name), PhaseState(x, v), 5.0) - 1) <= tol


def test_liouville_sin_wind_two_steps():
    s = scenario("sin_wind_r3")
    a = liouville_volume_check(s, PhaseState([0, 0, 0], FIG_V0), 2.0, eps=1e-5)
    b = liouville_volume_check(s, PhaseState([0, 0, 0], FIG_V0), 2.0, eps=2e-5)
    assert abs(a - 1) <= 1e-4 and abs(b - 1) <= 1e-4


def test_csv_round_trip(tmp_path):
    s = scenario("sin_wind_r3")
    tr = integrate_geodesic(s, PhaseState([0, 0, 0], FIG_V0), 0.5, 0.01)
    p = tmp_path / "traj.csv"
    tr.to_csv(p)
    assert p.read_text().splitlines()[0] == "t,x1,x2,x3,v1,v2,v3"
    back = Trajectory.from_csv(p, s)
    np.testing.assert_array_equal(back.times, tr.times)
    np.testing.assert_array_equal(back.x, tr.x)
    np.testing.assert_array_equal(back.v, tr.v)
    q = tmp_path / "again.csv"
    back.to_csv(q)
    assert q.read_bytes() == p.read_bytes()


def test_trajectory_times_must_be_monotone():
    with pytest.raises(DomainError):
        Trajectory([0, 1, 1], np.zeros((3, 2)), np.ones((3, 2)))
