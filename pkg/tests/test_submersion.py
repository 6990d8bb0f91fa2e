import math

import numpy as np
import pytest

from finsler import (
    DomainError,
    PhaseState,
    PreconditionError,
    horizontal_lift_geodesic,
    horizontal_lift_vector,
    integrate_geodesic,
    is_horizontal,
    scenario,
    submersion_ball_check,
    zermelo_geodesic,
)
from finsler.geodesic import Trajectory
from finsler.scene import random_points
from finsler.submersion import base_norm

F1 = np.array([1.0, 0.5])
F2 = np.array([-1.0, 0.5])


def base_line(direction, T=2.0, step=1e-3):
    direction = np.asarray(direction, float)
    t = np.linspace(0.0, T, round(T / step) + 1)
    return Trajectory(t, t[:, None] * direction, np.broadcast_to(direction, (t.size, direction.size)))


def test_control_fields_are_horizontal(rng):
    s = scenario("cone_r2")
    for x in rng.normal(size=(5, 2)):
        assert is_horizontal(s, PhaseState(x, F1))
        assert is_horizontal(s, PhaseState(x, F2))


def test_vertical_vector_is_not_horizontal():
    assert not is_horizontal(scenario("cone_r2"), PhaseState([0, 0], [0, 1]))


def test_horizontal_cone_is_not_a_subspace():
    s = scenario("cone_r2")
    assert is_horizontal(s, PhaseState([0, 0], F1))
    assert not is_horizontal(s, PhaseState([0, 0], -F1))


def test_zero_wind_reduces_to_orthogonality(rng):
    s = scenario("euclidean", dim=3)
    for v in rng.normal(size=(10, 3)):
        assert not is_horizontal(s, PhaseState([0, 0, 0], v))
        v[2] = 0.0
        assert is_horizontal(s, PhaseState([0, 0, 0], v))


def test_horizontality_needs_a_submersion():
    with pytest.raises(PreconditionError):
        is_horizontal(scenario("sphere2"), PhaseState([1, 0], [1, 0]))


@pytest.mark.parametrize("b, expected", [(1.0, F1), (-1.0, F2)])
def test_cone_lifts_are_control_fields(b, expected):
    np.testing.assert_allclose(horizontal_lift_vector(scenario("cone_r2"), [0.3, -2.0], [b]), expected, atol=1e-13)


def test_zero_wind_lift_is_orthogonal():
    v = horizontal_lift_vector(scenario("euclidean", dim=3), [0, 0, 0], [0.3, -0.4])
    np.testing.assert_allclose(v, [0.3, -0.4, 0.0], atol=1e-15)


def test_lift_errors():
    s = scenario("cone_r2")
    with pytest.raises(DomainError):
        horizontal_lift_vector(s, [0, 0], [0.0])
    with pytest.raises(DomainError):
        horizontal_lift_vector(s, [0, 0], [1.0, 2.0])


@pytest.mark.parametrize("name", ["cone_r2", "torus", "sin_wind_r3", "euclidean"])
def test_lift_round_trip(name, rng):
    s = scenario(name)
    k = s.submersion.base_dim
    for x in random_points(s, 20, rng):
        b = rng.normal(size=k)
        v = horizontal_lift_vector(s, x, b)
        np.testing.assert_allclose(v[:k], b, atol=1e-12)
        assert float(s.norm(x, v)) == pytest.approx(base_norm(s, x, b), rel=1e-9)
        assert is_horizontal(s, PhaseState(x, v), tol=1e-10)


def test_lift_of_base_line_in_the_cone():
    s = scenario("cone_r2")
    tr = horizontal_lift_geodesic(s, [0.0, 0.0], base_line([1.0]))
    ref = zermelo_geodesic(s, PhaseState([0, 0], F1), 2.0)
    np.testing.assert_allclose(tr.x, ref.x, atol=1e-12)
    np.testing.assert_allclose(tr.x[-1], [2.0, 1.0], atol=1e-12)


def test_lift_of_base_line_is_sin_wind_lift_curve():
    s = scenario("sin_wind_r3")
    tr = horizontal_lift_geodesic(s, [0, 0, 0], base_line([1.0, 0.0], T=2 * math.pi))
    t = tr.times
    expect = np.column_stack([t, 0 * t, 3 * t / 8 - np.sin(2 * t) / 16])
    assert np.abs(tr.x - expect).max() <= 1e-5
    assert all(is_horizontal(s, PhaseState(x, v), tol=1e-6) for x, v in zip(tr.x[::50], tr.v[::50]))


def test_lift_in_zero_wind_product():
    s = scenario("euclidean", dim=2)
    tr = horizontal_lift_geodesic(s, [0.0, 0.7], base_line([2.0], T=1.0))
    np.testing.assert_allclose(tr.x[-1], [2.0, 0.7], atol=1e-14)


def test_lift_must_start_over_the_base_curve():
    with pytest.raises(DomainError):
        horizontal_lift_geodesic(scenario("cone_r2"), [0.5, 0.0], base_line([1.0]))


def test_horizontality_preserved_along_lift():
    s = scenario("sin_wind_r3")
    v0 = horizontal_lift_vector(s, [0.4, 0.0, 0.0], [0.6, 0.8])
    tr = integrate_geodesic(s, PhaseState([0.4, 0, 0], v0), 5.0)
    assert all(is_horizontal(s, PhaseState(x, v), tol=1e-6) for x, v in zip(tr.x[::100], tr.v[::100]))


@pytest.mark.parametrize(
    "name, x, tol",
    [("cone_r2", [0.2, 0.9], 1e-3), ("sin_wind_r3", [0.0, 0.0, 0.0], 1e-3), ("euclidean", [0.0, 0.0], 1e-6)],
)
def test_unit_balls_project_onto_base_ball(name, x, tol):
    assert submersion_ball_check(scenario(name), x, 256) <= tol


def test_ball_check_detects_a_wrong_base():
    # a base wind that is not rho-related breaks the ball condition
    s = scenario("cone_r2", wind=0.5)
    from dataclasses import replace

    from finsler.scene import SubmersionSpec, _constant_matrix, _constant_vector

    bad = replace(s, submersion=SubmersionSpec(1, _constant_matrix(np.eye(1)), _constant_vector([0.3])))
    assert submersion_ball_check(bad, [0, 0]) > 0.1


def test_ball_check_sample_floor():
    with pytest.raises(DomainError):
        submersion_ball_check(scenario("cone_r2"), [0, 0], 8)
