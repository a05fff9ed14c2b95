import math

import numpy as np
import pytest
import torch
from hypothesis import example, given, settings, strategies as st

from locs import geometry as geo

angles = st.floats(-10, 10, allow_nan=False)


def t(x):
    return torch.as_tensor(x, dtype=torch.float64)


def test_rot2d_basics():
    assert torch.equal(geo.rot2d(0.0), torch.eye(2, dtype=torch.float64))
    v = geo.rot2d(math.pi / 2) @ t([1.0, 0.0])
    assert torch.allclose(v, t([0.0, 1.0]), atol=1e-15)


def test_rot2d_composition():
    rng = np.random.default_rng(0)
    a, b = t(rng.uniform(-4, 4, 100)), t(rng.uniform(-4, 4, 100))
    assert (geo.rot2d(a) @ geo.rot2d(b) - geo.rot2d(a + b)).abs().max() < 1e-12


def test_rot3d_basics():
    assert torch.allclose(geo.rot3d([0.0, 0.0, 0.0]), torch.eye(3, dtype=torch.float64))
    assert torch.equal(geo.rot3d([math.pi / 2, 0.0, 0.0]), geo.rot_z(math.pi / 2))


def test_rot3d_matches_closed_form():
    rng = np.random.default_rng(1)
    for th, ph, ps in rng.uniform(-math.pi, math.pi, (50, 3)):
        ct, st_, cp, sp, cs, ss = (math.cos(th), math.sin(th), math.cos(ph), math.sin(ph),
                                   math.cos(ps), math.sin(ps))
        closed = t([[ct * cp, ct * sp * ss - st_ * cs, ct * sp * cs + st_ * ss],
                    [st_ * cp, st_ * sp * ss + ct * cs, st_ * sp * cs - ct * ss],
                    [-sp, cp * ss, cp * cs]])
        assert (geo.rot3d([th, ph, ps]) - closed).abs().max() < 1e-12


def test_rotation_needs_3_components():
    with pytest.raises(ValueError):
        geo.rot3d([0.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(angles, angles, angles)
def test_rotations_orthonormal(a, b, c):
    for q in (geo.rot2d(a), geo.rot3d([a, b, c])):
        d = q.shape[-1]
        assert (q.T @ q - torch.eye(d, dtype=torch.float64)).abs().max() < 1e-10
        assert abs(torch.linalg.det(q) - 1) < 1e-10


def test_euler_identity():
    assert torch.equal(geo.euler_from_matrix(torch.eye(3, dtype=torch.float64)), torch.zeros(3, dtype=torch.float64))


def test_euler_round_trip_off_gimbal():
    rng = np.random.default_rng(2)
    om = np.stack([rng.uniform(-math.pi, math.pi, 1000),
                   rng.uniform(-math.pi / 2 + 0.01, math.pi / 2 - 0.01, 1000),
                   rng.uniform(-math.pi, math.pi, 1000)], -1)
    back = geo.euler_from_matrix(geo.rot3d(om))
    assert geo.wrap_angle(back - t(om)).abs().max() < 1e-9


@pytest.mark.parametrize("pitch", [math.pi / 2, -math.pi / 2])
def test_euler_gimbal_convention(pitch):
    q = geo.rot3d([0.7, pitch, -0.4])
    w = geo.euler_from_matrix(q)
    assert w[2] == 0.0
    assert (geo.rot3d(w) - q).abs().max() < 1e-9


def test_euler_rejects_non_rotation():
    with pytest.raises(ValueError):
        geo.euler_from_matrix(2 * torch.eye(3, dtype=torch.float64))
    with pytest.raises(ValueError):
        geo.euler_from_matrix(torch.diag(t([1.0, 1.0, -1.0])))


@pytest.mark.parametrize("a,expected", [(3 * math.pi / 2, -math.pi / 2), (-math.pi, -math.pi),
                                        (math.pi, -math.pi), (0.0, 0.0)])
def test_wrap_angle_examples(a, expected):
    assert geo.wrap_angle(a).item() == pytest.approx(expected, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_wrap_angle_range_and_congruence(a):
    w = geo.wrap_angle(a).item()
    assert -math.pi <= w < math.pi
    k = (a - w) / (2 * math.pi)
    assert abs(k - round(k)) < 1e-9
    assert -1 <= geo.normalize_angle(a).item() < 1


def test_wrap_tiny_negative_stays_in_range():
    w = geo.wrap_angle(-1e-300).item()
    assert -math.pi <= w < math.pi


def test_2d_simplified_path_matches_matrix_path():
    rng = np.random.default_rng(3)
    ti, tj = t(rng.uniform(-10, 10, 200)), t(rng.uniform(-10, 10, 200))
    rel = geo.rot2d(-ti) @ geo.rot2d(tj)
    extracted = geo.angles_from_matrix(rel, 2)[..., 0]
    assert (geo.wrap_angle(extracted - geo.wrap_angle(tj - ti))).abs().max() < 1e-12


@pytest.mark.parametrize("u,expected", [((0, 0, 1), (1, 0, 0)), ((1, 0, 0), (1, 0, math.pi / 2)),
                                        ((0, 0, 0), (0, 0, math.pi / 2))])
def test_cart_to_spherical_examples(u, expected):
    # the 1e-8 regulariser leaves a polar bias of about sqrt(2e-8) at the poles
    assert torch.allclose(geo.cart_to_spherical(t(u)), t(expected), atol=2e-4)
    assert torch.allclose(geo.cart_to_spherical(t(u), eps=0.0), t(expected), atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=3))
@example([0.0, 1.192092896e-07, 5.0])  # near the pole, where acos loses half the digits
def test_spherical_round_trip(u):
    u = t(u)
    if torch.linalg.vector_norm(u) <= 1e-6:
        return
    back = geo.spherical_to_cart(geo.cart_to_spherical(u, eps=0.0))
    assert (back - u).abs().max() < 1e-9 * max(1.0, float(u.abs().max()))


def test_spherical_regulariser_bias_is_small_away_from_poles():
    u = t([0.6, -0.8, 0.5])
    back = geo.spherical_to_cart(geo.cart_to_spherical(u))
    assert (back - u).abs().max() < 1e-7


def test_orientation_from_velocity_examples():
    assert geo.orientation_from_velocity(t([0.0, 1.0]), 2).item() == pytest.approx(math.pi / 2)
    assert torch.allclose(geo.orientation_from_velocity(t([0.0, 0.0, 1.0]), 3), t([0.0, 0.0, 0.0]), atol=2e-4)
    assert geo.orientation_from_velocity(t([0.0, 0.0]), 2).item() == 0.0
    assert geo.orientation_from_velocity(t([-0.0, -0.0]), 2).item() == 0.0
    assert torch.equal(geo.orientation_from_velocity(t([0.0, 0.0, 0.0]), 3), torch.zeros(3, dtype=torch.float64))


def test_orientation_3d_rotation_has_no_roll():
    w = geo.orientation_from_velocity(t([0.3, -1.2, 0.8]), 3)
    assert w[2] == 0.0
    assert w[0].item() == pytest.approx(math.atan2(-1.2, 0.3))


def test_block_rot():
    q = geo.rot2d(0.3)
    assert torch.equal(geo.block_rot(q, 1), q)
    assert torch.equal(geo.block_rot(torch.eye(2, dtype=torch.float64), 2), torch.eye(4, dtype=torch.float64))
    r = geo.rot3d([0.1, 0.2, 0.3])
    assert (geo.block_rot(r, 3) @ geo.block_rot(r.T, 3) - torch.eye(9, dtype=torch.float64)).abs().max() < 1e-12
    with pytest.raises(ValueError):
        geo.block_rot(q, 0)


def test_check_rotation():
    geo.check_rotation(geo.rot3d([1.0, 0.5, -2.0]))
    with pytest.raises(ValueError):
        geo.check_rotation(t([[1.0, 0.1], [0.0, 1.0]]))
