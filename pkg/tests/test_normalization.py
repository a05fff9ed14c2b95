import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from locs.normalization import (MinMaxNormalizer, NormSpec, SpeedNormalizer, denormalize, fit_norm,
                                normalize)
from locs.props import anisotropic_scene, pipeline_equivariance_error

finite = st.floats(-50, 50, allow_nan=False)
# values whose scaled copies stay clear of the subnormal range
normal = st.floats(-50, 50, allow_subnormal=False).filter(lambda v: v == 0 or abs(v) > 1e-290)


def test_speed_worked_example():
    spec = NormSpec("speed", 2, s_max=2.0)
    out = normalize(np.array([[2.0, 4.0, 2.0, 4.0]]), spec)
    np.testing.assert_array_equal(out, [[1.0, 2.0, 1.0, 2.0]])


def test_fit_speed_uses_max_velocity_norm():
    x = np.zeros((1, 2, 2, 4))
    x[0, 0, 0, 2:] = [3.0, 4.0]
    x[0, 1, 1, :2] = [100.0, 0.0]  # positions do not enter s_max
    assert fit_norm(x, 2).s_max == 5.0


@given(arrays(np.float64, (3, 2, 6), elements=normal), st.integers(-6, 6))
def test_round_trip_bit_exact_for_power_of_two(x, k):
    spec = NormSpec("speed", 2, s_max=2.0 ** k)
    np.testing.assert_array_equal(denormalize(normalize(x, spec), spec), x)


@given(arrays(np.float64, (3, 2, 4), elements=finite), st.floats(0.01, 100))
def test_round_trip_speed(x, s):
    spec = NormSpec("speed", 2, s_max=s)
    np.testing.assert_allclose(denormalize(normalize(x, spec), spec), x, rtol=1e-12, atol=1e-12)


@settings(deadline=None)
@given(arrays(np.float64, (4, 3, 6), elements=finite))
def test_round_trip_minmax(x):
    x[0, 0, :6] = -60.0
    x[1, 1, :6] = 60.0
    spec = fit_norm(x, 3, "minmax")
    np.testing.assert_allclose(denormalize(normalize(x, spec), spec), x, atol=1e-12)
    y = normalize(x, spec)[..., :6]
    assert y.min() >= -1 - 1e-15 and y.max() <= 1 + 1e-15


def test_orientation_channels_untouched():
    x = np.random.default_rng(0).normal(size=(2, 3, 4, 5))
    for mode in ("speed", "minmax"):
        spec = fit_norm(x, 2, mode)
        np.testing.assert_array_equal(normalize(x, spec)[..., 4:], x[..., 4:])


def test_torch_and_numpy_agree():
    x = np.random.default_rng(0).normal(size=(2, 3, 4, 4))
    for mode in ("speed", "minmax"):
        spec = fit_norm(x, 2, mode)
        np.testing.assert_array_equal(normalize(torch.as_tensor(x), spec).numpy(), normalize(x, spec))


@given(arrays(np.float64, (5, 2), elements=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3)))
def test_speed_preserves_velocity_direction(u):
    x = np.concatenate([np.zeros_like(u), u], -1)
    spec = NormSpec("speed", 2, s_max=3.7)
    v = normalize(x, spec)[:, 2:]
    np.testing.assert_array_equal(np.sign(v), np.sign(u))
    np.testing.assert_allclose(v * 3.7, u, rtol=1e-15)


def test_minmax_distorts_direction():
    x = np.zeros((1, 2, 2, 4))
    x[0, :, 0, 2:] = [[1.0, 1.0], [-1.0, -1.0]]
    x[0, :, 1, 2:] = [[4.0, 0.5], [0.0, 0.0]]
    x[0, 1, :, :2] = [[1.0, 1.0], [2.0, 3.0]]
    spec = fit_norm(x, 2, "minmax")
    u = np.array([1.0, 1.0])
    v = normalize(np.concatenate([[0.0, 0.0], u]), spec)[2:]
    cos = v @ u / np.linalg.norm(v) / np.linalg.norm(u)
    assert cos < 1 - 1e-3


def test_spec_validation_and_serialisation():
    with pytest.raises(ValueError):
        NormSpec("speed", 2, s_max=0.0)
    with pytest.raises(ValueError):
        NormSpec("minmax", 2, mins=(0, 0, 0, 0), maxs=(1, 0, 1, 1))
    with pytest.raises(ValueError):
        NormSpec("zscore", 2)
    spec = fit_norm(np.random.default_rng(0).normal(size=(2, 3, 2, 4)), 2, "minmax")
    assert NormSpec.from_dict(spec.to_dict()) == spec


def test_transformers():
    x = np.random.default_rng(0).normal(size=(2, 3, 4, 4))
    sn = SpeedNormalizer(dim=2).fit(x)
    np.testing.assert_allclose(sn.inverse_transform(sn.transform(x)), x, atol=1e-12)
    assert MinMaxNormalizer(dim=2).fit_transform(x)[..., :4].max() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SpeedNormalizer(dim=2).fit(x[..., :3])


# ---------------------------------------------------------------------- pipeline equivariance

def test_pipeline_equivariant_with_speed_normalisation():
    assert pipeline_equivariance_error("speed") < 1e-8


def test_pipeline_not_equivariant_with_minmax_normalisation():
    assert pipeline_equivariance_error("minmax") > 1e-3


def test_anisotropic_fixture_is_anisotropic():
    x = anisotropic_scene()
    span = x[..., :2].max((0, 1, 2)) - x[..., :2].min((0, 1, 2))
    assert span[0] > 4 * span[1]
