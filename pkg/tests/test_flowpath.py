import numpy as np
import pytest

from tabvfm.flowpath import cond_velocity, interpolate, marginal_velocity


def test_interpolate_endpoints_and_value():
    rng = np.random.default_rng(0)
    x0, x1 = rng.normal(size=5), rng.normal(size=5)
    np.testing.assert_array_equal(interpolate(x0, x1, 0.0), x0)
    np.testing.assert_array_equal(interpolate(x0, x1, 1.0), x1)
    assert interpolate(0.0, 2.0, 0.25) == 0.5


def test_interpolate_linear_in_endpoint():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x0, a, b = rng.normal(size=(3, 4))
        alpha, t = rng.random(2)
        lhs = interpolate(x0, alpha * a + (1 - alpha) * b, t)
        rhs = alpha * interpolate(x0, a, t) + (1 - alpha) * interpolate(x0, b, t)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_interpolate_batched_times():
    rng = np.random.default_rng(2)
    x0, x1 = rng.normal(size=(2, 6, 3))
    t = rng.random(6)
    out = interpolate(x0, x1, t)
    for i in range(6):
        np.testing.assert_allclose(out[i], (1 - t[i]) * x0[i] + t[i] * x1[i])


def test_cond_velocity_values():
    x1 = np.array([0.3, -1.0])
    np.testing.assert_array_equal(cond_velocity(x1, x1, 0.4), [0.0, 0.0])
    assert cond_velocity(0.0, 1.0, 0.0) == 1.0
    assert cond_velocity(0.5, 1.0, 0.5) == 1.0
    with pytest.raises(ValueError):
        cond_velocity(0.0, 1.0, 1.0)


def test_path_solves_its_ode():
    # d/dt interpolate(x0, x1, t) matches the conditional velocity at x_t
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(200):
        x0, x1 = rng.normal(size=(2, 3))
        t = rng.uniform(0.01, 0.98)
        fd = (interpolate(x0, x1, t + h) - interpolate(x0, x1, t - h)) / (2 * h)
        np.testing.assert_allclose(fd, cond_velocity(interpolate(x0, x1, t), x1, t), atol=1e-6)


def test_marginal_velocity():
    rng = np.random.default_rng(4)
    x, mu = rng.normal(size=(2, 5))
    np.testing.assert_array_equal(marginal_velocity(x, 0.3, x), np.zeros(5))
    np.testing.assert_array_equal(marginal_velocity(x, 0.3, mu), cond_velocity(x, mu, 0.3))
    # linear in mu
    mu2 = rng.normal(size=5)
    np.testing.assert_allclose(
        marginal_velocity(x, 0.3, 2 * mu - mu2) + marginal_velocity(x, 0.3, mu2),
        2 * marginal_velocity(x, 0.3, mu), atol=1e-12)


@pytest.mark.parametrize("t", [0.0, 0.5, 0.9, 0.96])
def test_full_step_lands_on_mean(t):
    rng = np.random.default_rng(5)
    x, mu = rng.normal(size=(2, 7))
    landed = x + (1 - t) * marginal_velocity(x, t, mu)
    np.testing.assert_allclose(landed, mu, atol=1e-12)
