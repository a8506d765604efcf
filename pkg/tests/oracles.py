"""Hand-rolled reference implementations used only by the test suite."""

import numpy as np


class ReferenceAdam:
    """Textbook Adam (b1=0.9, b2=0.999, eps=1e-8) with the exponentially
    decayed learning rate lr0 * rate^(k/step), written without any
    shared code so trainer trajectories have an independent baseline."""

    def __init__(self, n, lr, decay_rate=1.0, decay_step=1):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.lr = lr
        self.decay_rate = decay_rate
        self.decay_step = decay_step

    def step(self, values, g, k):
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * g
        self.v = 0.999 * self.v + 0.001 * g * g
        mh = self.m / (1.0 - 0.9 ** self.t)
        vh = self.v / (1.0 - 0.999 ** self.t)
        values -= (self.lr * self.decay_rate ** (k / self.decay_step)
                   * mh / (np.sqrt(vh) + 1e-8))


def cole_hopf_burgers(x, t, nu, *, half_width=3.0, n_quad=200001):
    """Cole-Hopf quadrature for Burgers with initial state sin(2 pi x).

    The heat potential of that initial condition is
    G(y) = (1 - cos(2 pi y)) / (2 pi), and the exact solution is a ratio
    of Gaussian-weighted integrals over the real line, truncated here to
    |x - y| <= half_width; the neglected tail carries weight of order
    exp(-half_width^2 / (4 nu t)). Log-sum-exp keeps the weights finite
    at small nu.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        y = np.linspace(xi - half_width, xi + half_width, n_quad)
        expo = (-((xi - y) ** 2) / (4.0 * nu * t)
                - (1.0 - np.cos(2.0 * np.pi * y)) / (2.0 * np.pi * 2.0 * nu))
        expo -= expo.max()
        w = np.exp(expo)
        out[i] = (np.trapezoid(((xi - y) / t) * w, y)
                  / np.trapezoid(w, y))
    return out
