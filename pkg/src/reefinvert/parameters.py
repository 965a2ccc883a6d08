"""Parameter vectors, priors, and random-walk proposal kernels.

The sampled vector stacks three growth/interaction coefficients followed
by a four-point flow threshold block and a four-point sediment threshold
block per assemblage: 3 + 8K coordinates for K assemblages.  Threshold
blocks are constrained both by box bounds and by the ordering
f1 <= f2 <= f3 <= f4; proposals enforce the box by reverting individual
coordinates and the ordering by sorting each block afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf, lgamma, log

import numpy as np

__all__ = [
    "GLV_NAMES",
    "ParameterSpace",
    "StepSizes",
    "log_prior",
    "sample_prior",
    "propose_constrained",
    "propose_adaptive_glv",
    "AdaptiveWalk",
    "ConstrainedWalk",
]

GLV_NAMES = ("epsilon", "alpha_m", "alpha_s")
LOG_24 = lgamma(5.0)  # log 4!, the ordered-block density correction


@dataclass
class ParameterSpace:
    """Coordinate layout, bounds, and free/fixed split for the sampler.

    ``free`` lists sampled coordinates by name: any of the three growth
    coefficients individually, and threshold blocks atomically as
    "flow:<assemblage>" or "sed:<assemblage>" (a block's four points sort
    together, so they are free or fixed as a unit).
    """

    assemblage_names: tuple[str, ...]
    free: tuple[str, ...]
    epsilon_bounds: tuple[float, float] = (0.0, 0.15)
    alpha_bounds: tuple[float, float] = (-0.15, 0.0)
    flow_bounds: tuple[float, float] = (0.0, 0.3)
    sed_bounds: tuple[float, float] = (0.0, 0.005)

    def __post_init__(self) -> None:
        self.assemblage_names = tuple(self.assemblage_names)
        self.free = tuple(self.free)
        for lo, hi in (
            self.epsilon_bounds,
            self.alpha_bounds,
            self.flow_bounds,
            self.sed_bounds,
        ):
            if not lo < hi:
                raise ValueError(f"empty bounds ({lo}, {hi})")
        valid = set(GLV_NAMES)
        for kind in ("flow", "sed"):
            valid.update(f"{kind}:{name}" for name in self.assemblage_names)
        unknown = [name for name in self.free if name not in valid]
        if unknown:
            raise ValueError(f"unknown free parameters {unknown}; valid: {sorted(valid)}")
        if len(set(self.free)) != len(self.free):
            raise ValueError("duplicate names in free list")

    @property
    def k(self) -> int:
        return len(self.assemblage_names)

    @property
    def dim(self) -> int:
        return 3 + 8 * self.k

    def names(self) -> list[str]:
        """Flat coordinate names in vector order."""
        out = list(GLV_NAMES)
        for kind in ("flow", "sed"):
            for name in self.assemblage_names:
                out.extend(f"{kind}:{name}:{j}" for j in range(1, 5))
        return out

    def block_slice(self, kind: str, assemblage: str) -> slice:
        i = self.assemblage_names.index(assemblage)
        base = 3 + (0 if kind == "flow" else 4 * self.k) + 4 * i
        return slice(base, base + 4)

    def free_blocks(self) -> list[slice]:
        """Slices of free threshold blocks, in vector order."""
        out = []
        for kind in ("flow", "sed"):
            for name in self.assemblage_names:
                if f"{kind}:{name}" in self.free:
                    out.append(self.block_slice(kind, name))
        return out

    def free_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for j, name in enumerate(GLV_NAMES):
            if name in self.free:
                mask[j] = True
        for sl in self.free_blocks():
            mask[sl] = True
        return mask

    def free_names(self) -> list[str]:
        names = self.names()
        return [names[j] for j in np.nonzero(self.free_mask())[0]]

    def lower(self) -> np.ndarray:
        lo = np.empty(self.dim)
        lo[0] = self.epsilon_bounds[0]
        lo[1] = lo[2] = self.alpha_bounds[0]
        lo[3 : 3 + 4 * self.k] = self.flow_bounds[0]
        lo[3 + 4 * self.k :] = self.sed_bounds[0]
        return lo

    def upper(self) -> np.ndarray:
        hi = np.empty(self.dim)
        hi[0] = self.epsilon_bounds[1]
        hi[1] = hi[2] = self.alpha_bounds[1]
        hi[3 : 3 + 4 * self.k] = self.flow_bounds[1]
        hi[3 + 4 * self.k :] = self.sed_bounds[1]
        return hi

    def _all_blocks(self) -> list[slice]:
        return [
            self.block_slice(kind, name)
            for kind in ("flow", "sed")
            for name in self.assemblage_names
        ]

    def admissible(self, theta: np.ndarray) -> bool:
        if theta.shape != (self.dim,) or not np.all(np.isfinite(theta)):
            return False
        if np.any(theta < self.lower()) or np.any(theta > self.upper()):
            return False
        return all(not np.any(np.diff(theta[sl]) < 0) for sl in self._all_blocks())


def log_prior(theta: np.ndarray, space: ParameterSpace) -> float:
    """Log-density of the uniform prior over the admissible region.

    Growth coefficients are uniform on their boxes; each free threshold
    block is four points drawn uniformly then ordered, hence the 4!
    density factor.  Fixed coordinates contribute nothing.  Returns -inf
    off the admissible region (including ordering violations anywhere).
    """
    if not space.admissible(theta):
        return -inf
    total = 0.0
    widths = {
        "epsilon": space.epsilon_bounds,
        "alpha_m": space.alpha_bounds,
        "alpha_s": space.alpha_bounds,
    }
    for name in GLV_NAMES:
        if name in space.free:
            lo, hi = widths[name]
            total -= log(hi - lo)
    for kind, bounds in (("flow", space.flow_bounds), ("sed", space.sed_bounds)):
        width = bounds[1] - bounds[0]
        for name in space.assemblage_names:
            if f"{kind}:{name}" in space.free:
                total += LOG_24 - 4.0 * log(width)
    return total


def sample_prior(space: ParameterSpace, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw free coordinates from the prior; fixed ones keep ``base`` values."""
    theta = np.asarray(base, dtype=float).copy()
    if theta.shape != (space.dim,):
        raise ValueError(f"base must have shape ({space.dim},)")
    for j, name in enumerate(GLV_NAMES):
        if name in space.free:
            lo, hi = space.epsilon_bounds if j == 0 else space.alpha_bounds
            theta[j] = rng.uniform(lo, hi)
    for kind, bounds in (("flow", space.flow_bounds), ("sed", space.sed_bounds)):
        for name in space.assemblage_names:
            if f"{kind}:{name}" in space.free:
                sl = space.block_slice(kind, name)
                theta[sl] = np.sort(rng.uniform(bounds[0], bounds[1], size=4))
    return theta


@dataclass
class StepSizes:
    """Per-coordinate proposal scales and adaptive floors.

    ``sigma`` follows the vector layout of the space; ``lam`` floors the
    adaptive covariance so it can never collapse.
    """

    sigma: np.ndarray
    lam: np.ndarray

    def __post_init__(self) -> None:
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        if np.any(self.sigma <= 0) or np.any(self.lam <= 0):
            raise ValueError("step sizes and floors must be positive")

    @classmethod
    def defaults(cls, space: ParameterSpace, fraction: float = 0.01, lam_fraction: float = 0.1):
        """Scales as a fraction of each prior width (default 1 percent)."""
        width = space.upper() - space.lower()
        sigma = fraction * width
        return cls(sigma=sigma, lam=lam_fraction * sigma)


def _revert_out_of_bounds(
    candidate: np.ndarray, previous: np.ndarray, space: ParameterSpace
) -> None:
    lo, hi = space.lower(), space.upper()
    bad = (candidate < lo) | (candidate > hi)
    candidate[bad] = previous[bad]


def propose_constrained(
    theta: np.ndarray,
    space: ParameterSpace,
    steps: StepSizes,
    rng: np.random.Generator,
) -> np.ndarray:
    """Gaussian random-walk step honouring bounds and block ordering.

    Every free coordinate is perturbed independently; any coordinate
    leaving its box reverts alone to its previous value, then each free
    threshold block is sorted.  Fixed coordinates never move.
    """
    mask = space.free_mask()
    noise = rng.normal(0.0, steps.sigma)
    noise[~mask] = 0.0
    candidate = theta + noise
    _revert_out_of_bounds(candidate, theta, space)
    for sl in space.free_blocks():
        candidate[sl] = np.sort(candidate[sl])
    return candidate


def propose_adaptive_glv(
    history: np.ndarray,
    theta: np.ndarray,
    space: ParameterSpace,
    steps: StepSizes,
    rng: np.random.Generator,
    adapt_start: int = 500,
    chol: np.ndarray | None = None,
) -> np.ndarray:
    """Random-walk step whose growth-coefficient block learns its shape.

    Before ``adapt_start`` history rows (or with an empty history) this
    reduces exactly to :func:`propose_constrained`.  Afterwards the three
    growth coefficients move jointly with covariance ``cov(history) +
    diag(lam**2)``; the floor keeps every covariance eigenvalue at or
    above ``min(lam**2)``.  Threshold blocks always take the constrained
    diagonal step.  ``chol`` short-circuits the factorisation for callers
    that cache it.
    """
    n = 0 if history is None else np.asarray(history).shape[0]
    if n < max(adapt_start, 2):  # covariance needs at least two rows
        return propose_constrained(theta, space, steps, rng)
    if chol is None:
        chol = glv_proposal_cholesky(history, steps)
    mask = space.free_mask()
    noise = np.zeros(space.dim)
    noise[:3] = chol @ rng.standard_normal(3)
    noise[3:] = rng.normal(0.0, steps.sigma[3:])
    noise[~mask] = 0.0
    candidate = theta + noise
    _revert_out_of_bounds(candidate, theta, space)
    for sl in space.free_blocks():
        candidate[sl] = np.sort(candidate[sl])
    return candidate


def glv_proposal_cholesky(history: np.ndarray, steps: StepSizes) -> np.ndarray:
    """Cholesky factor of the floored growth-block sample covariance."""
    glv = np.asarray(history, dtype=float)[:, :3]
    cov = np.cov(glv, rowvar=False)
    cov = np.atleast_2d(cov) + np.diag(steps.lam[:3] ** 2)
    return np.linalg.cholesky(cov)


@dataclass
class ConstrainedWalk:
    """Stateless constrained random walk, the default proposal."""

    space: ParameterSpace
    steps: StepSizes

    def propose(self, theta, rng, history=None) -> np.ndarray:
        return propose_constrained(theta, self.space, self.steps, rng)


@dataclass
class AdaptiveWalk:
    """Constrained walk with a periodically refreshed growth-block shape.

    The covariance is refactorised every ``update_interval`` history rows
    past ``adapt_start`` rather than per proposal.
    """

    space: ParameterSpace
    steps: StepSizes
    adapt_start: int = 500
    update_interval: int = 50
    _chol: np.ndarray | None = field(default=None, repr=False)
    _rows_at_update: int = field(default=-1, repr=False)

    def propose(self, theta, rng, history=None) -> np.ndarray:
        n = 0 if history is None else np.asarray(history).shape[0]
        if n < max(self.adapt_start, 2):
            return propose_constrained(theta, self.space, self.steps, rng)
        if self._chol is None or n - self._rows_at_update >= self.update_interval:
            self._chol = glv_proposal_cholesky(history, self.steps)
            self._rows_at_update = n
        return propose_adaptive_glv(
            history, theta, self.space, self.steps, rng,
            adapt_start=self.adapt_start, chol=self._chol,
        )
