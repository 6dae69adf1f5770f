"""Linear (optimal-transport) probability path between noise and data."""

import numpy as np


def interpolate(x0, x1, t):
    """x_t = (1 - t) x0 + t x1; ``t`` broadcasts against the trailing axis."""
    x0 = np.asarray(x0)
    x1 = np.asarray(x1)
    t = np.asarray(t, dtype=x1.dtype)
    if t.ndim == 1 and x1.ndim == 2:
        t = t[:, None]
    return (1 - t) * x0 + t * x1


def cond_velocity(x, x1, t):
    """Velocity carrying ``x`` to the endpoint ``x1`` by time 1."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= 1.0):
        raise ValueError("conditional velocity is undefined at t >= 1")
    x = np.asarray(x)
    if t.ndim == 1 and x.ndim == 2:
        t = t[:, None]
    return (np.asarray(x1) - x) / (1.0 - t)


def marginal_velocity(x, t, mu):
    """Marginal velocity from the posterior mean of the endpoint.

    Because the conditional velocity is linear in the endpoint, the
    expectation over endpoints is the conditional velocity at the mean.
    """
    return cond_velocity(x, mu, t)
