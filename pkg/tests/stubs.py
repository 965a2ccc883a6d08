"""Analytic stand-in targets and proposals for exercising the samplers.

Each target exposes the posterior protocol the samplers expect
(log_prior / log_likelihood / initial) with closed-form truth, so chain
output can be checked against known moments instead of another sampler.
"""
from __future__ import annotations

import numpy as np


class GaussianTarget:
    """Correlated bivariate normal with known mean and covariance."""

    def __init__(self, mean=(0.0, 0.0), cov=((1.0, 0.5), (0.5, 1.0))):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self._prec = np.linalg.inv(self.cov)

    def log_prior(self, theta: np.ndarray) -> float:
        return 0.0

    def log_likelihood(self, theta: np.ndarray) -> float:
        d = np.asarray(theta, dtype=float) - self.mean
        return -0.5 * float(d @ self._prec @ d)

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + rng.normal(0.0, 1.0, size=self.mean.size)


class MixtureTarget:
    """Equal-weight two-mode normal mixture in one dimension.

    With well separated modes a cold random walk sticks to whichever mode
    it finds first, which is exactly the failure tempering must fix.
    """

    def __init__(self, centers=(-5.0, 5.0), sigma=0.5, box=10.0):
        self.centers = tuple(float(c) for c in centers)
        self.sigma = float(sigma)
        self.box = float(box)

    def log_prior(self, theta: np.ndarray) -> float:
        x = float(np.asarray(theta, dtype=float)[0])
        return 0.0 if -self.box <= x <= self.box else -np.inf

    def log_likelihood(self, theta: np.ndarray) -> float:
        x = float(np.asarray(theta, dtype=float)[0])
        a = -0.5 * ((x - self.centers[0]) / self.sigma) ** 2
        b = -0.5 * ((x - self.centers[1]) / self.sigma) ** 2
        return float(np.logaddexp(a, b))

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-self.box, self.box, size=1)

    def mode_fraction(self, samples: np.ndarray) -> float:
        """Fraction of draws attributed to the negative mode."""
        x = np.asarray(samples, dtype=float).reshape(-1)
        return float(np.mean(x < 0.0))


class DiscreteTarget:
    """Five-state chain with weights 1:2:3:2:1, for detailed-balance checks."""

    weights = np.array([1.0, 2.0, 3.0, 2.0, 1.0])

    def __init__(self):
        self.pi = self.weights / self.weights.sum()

    def log_prior(self, theta: np.ndarray) -> float:
        return 0.0

    def log_likelihood(self, theta: np.ndarray) -> float:
        s = int(round(float(np.asarray(theta, dtype=float)[0])))
        if 0 <= s < self.weights.size:
            return float(np.log(self.weights[s]))
        return -np.inf

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([float(rng.integers(0, self.weights.size))])


class NeighborProposal:
    """Symmetric +/-1 move on the integer lattice."""

    def propose(self, theta, rng, history=None) -> np.ndarray:
        step = 2.0 * float(rng.integers(0, 2)) - 1.0
        return np.asarray(theta, dtype=float) + step


class RandomWalkProposal:
    """Isotropic Gaussian random walk with fixed scale."""

    def __init__(self, sigma: float):
        self.sigma = float(sigma)

    def propose(self, theta, rng, history=None) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return theta + self.sigma * rng.standard_normal(theta.shape)


class RejectAllTarget:
    """Finite prior but impossible likelihood everywhere."""

    def log_prior(self, theta: np.ndarray) -> float:
        return 0.0

    def log_likelihood(self, theta: np.ndarray) -> float:
        return -np.inf

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, 1.0, size=2)


class QueuedNormals:
    """Generator stand-in that returns pre-committed "normal" draws.

    Lets proposal tests inject exact noise vectors; any other generator
    method is intentionally absent so unexpected use fails loudly.
    """

    def __init__(self, *draws):
        self._queue = [np.asarray(d, dtype=float) for d in draws]

    def normal(self, loc, scale, size=None):
        out = self._queue.pop(0)
        if size is not None and np.shape(out) != tuple(np.atleast_1d(size)):
            raise AssertionError("queued draw has wrong shape")
        return out.copy()

    def standard_normal(self, size=None):
        return self.normal(0.0, 1.0, size=size)
