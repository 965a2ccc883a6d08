"""Metropolis-Hastings samplers: single chain and parallel tempering.

Targets are duck-typed: anything with ``log_prior(theta)`` and
``log_likelihood(theta)`` returning floats (-inf allowed) and an
``initial(rng)`` draw works.  Proposals expose ``propose(theta, rng,
history)`` where ``history`` is a read-only view of the iterates so far,
which adaptive kernels may use.

Tempering flattens only the likelihood: a replica at temperature beta
targets ``log_lik / beta + log_prior``.  Replica state lives with its
temperature slot; swaps exchange parameter vectors together with their
cached likelihood and prior values.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import exp, inf, isfinite

import numpy as np

__all__ = [
    "AllProposalsInvalid",
    "ChainState",
    "SampleRun",
    "TemperatureLadder",
    "PTRun",
    "mh_accept_prob",
    "swap_accept_prob",
    "run_single_chain",
    "run_parallel_tempering",
]

INIT_ATTEMPTS = 1000


class AllProposalsInvalid(Exception):
    """No valid starting state could be drawn from the target."""


@dataclass
class ChainState:
    """Current position of one chain with cached target values."""

    theta: np.ndarray
    loglik: float
    logprior: float
    beta: float = 1.0
    n_steps: int = 0
    n_accepted: int = 0


def mh_accept_prob(
    state: ChainState,
    prop_loglik: float,
    prop_logprior: float,
    log_q_ratio: float = 0.0,
) -> float:
    """Metropolis-Hastings acceptance probability at the state's temperature."""
    if prop_logprior == -inf or prop_loglik == -inf or not (
        isfinite(prop_logprior) and isfinite(prop_loglik)
    ):
        return 0.0
    delta = (
        (prop_loglik - state.loglik) / state.beta
        + (prop_logprior - state.logprior)
        + log_q_ratio
    )
    return 1.0 if delta >= 0.0 else exp(delta)


def swap_accept_prob(state_i: ChainState, state_j: ChainState) -> float:
    """Acceptance probability for exchanging two replicas' states."""
    delta = (1.0 / state_i.beta - 1.0 / state_j.beta) * (state_j.loglik - state_i.loglik)
    return 1.0 if delta >= 0.0 else exp(delta)


@dataclass
class SampleRun:
    """Recorded chain output with the burn-in split point."""

    iterates: np.ndarray
    logliks: np.ndarray
    logpriors: np.ndarray
    accepted: np.ndarray
    burn_in: int

    @property
    def posterior(self) -> np.ndarray:
        return self.iterates[self.burn_in :]

    @property
    def acceptance_rate(self) -> float:
        post = self.accepted[self.burn_in :]
        return float(post.mean()) if post.size else 0.0


def _draw_initial(target, rng, init=None) -> ChainState:
    for attempt in range(INIT_ATTEMPTS):
        theta = np.asarray(init if init is not None else target.initial(rng), dtype=float)
        lp = target.log_prior(theta)
        ll = target.log_likelihood(theta) if isfinite(lp) else -inf
        if isfinite(lp) and isfinite(ll):
            return ChainState(theta=theta.copy(), loglik=ll, logprior=lp)
        if init is not None:
            raise AllProposalsInvalid("supplied initial state has zero posterior density")
    raise AllProposalsInvalid(f"no valid initial state in {INIT_ATTEMPTS} draws")


def _mh_step(target, proposal, state: ChainState, rng, history) -> bool:
    """One in-place Metropolis step; returns whether the move was accepted."""
    candidate = proposal.propose(state.theta, rng, history)
    lp = target.log_prior(candidate)
    ll = target.log_likelihood(candidate) if isfinite(lp) else -inf
    p = mh_accept_prob(state, ll, lp)
    accepted = p > 0.0 and rng.uniform() < p
    if accepted:
        state.theta = np.asarray(candidate, dtype=float)
        state.loglik = ll
        state.logprior = lp
        state.n_accepted += 1
    state.n_steps += 1
    return accepted


def run_single_chain(
    target,
    proposal,
    n_samples: int,
    rng: np.random.Generator,
    burn_in: float = 0.15,
    init: np.ndarray | None = None,
) -> SampleRun:
    """Run one Metropolis-Hastings chain for ``n_samples`` iterations.

    ``burn_in`` is the fraction of iterations discarded by downstream
    consumers; all iterates are still recorded.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must be in [0, 1)")
    state = _draw_initial(target, rng, init)
    dim = state.theta.size
    iterates = np.empty((n_samples, dim))
    logliks = np.empty(n_samples)
    logpriors = np.empty(n_samples)
    accepted = np.zeros(n_samples, dtype=bool)
    for i in range(n_samples):
        accepted[i] = _mh_step(target, proposal, state, rng, iterates[:i])
        iterates[i] = state.theta
        logliks[i] = state.loglik
        logpriors[i] = state.logprior
    return SampleRun(
        iterates=iterates,
        logliks=logliks,
        logpriors=logpriors,
        accepted=accepted,
        burn_in=int(round(burn_in * n_samples)),
    )


@dataclass
class TemperatureLadder:
    """Temperature ladder: beta values from the cold chain (1) upward."""

    betas: tuple[float, ...]

    def __post_init__(self) -> None:
        self.betas = tuple(float(b) for b in self.betas)
        if not self.betas or self.betas[0] != 1.0:
            raise ValueError("ladder must start at beta = 1")
        if any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:])):
            raise ValueError("ladder must be strictly increasing")

    def __len__(self) -> int:
        return len(self.betas)

    @classmethod
    def geometric(cls, n: int, beta_max: float = 10.0) -> "TemperatureLadder":
        """Geometric spacing from 1 to ``beta_max`` over ``n`` rungs."""
        if n < 1:
            raise ValueError("need at least one rung")
        if n == 1:
            return cls(betas=(1.0,))
        if beta_max <= 1.0:
            raise ValueError("beta_max must exceed 1")
        return cls(betas=tuple(beta_max ** (i / (n - 1)) for i in range(n)))


@dataclass
class PTRun:
    """Parallel-tempering output: per-slot runs plus swap statistics."""

    replicas: list[SampleRun]
    swap_attempts: np.ndarray
    swap_accepts: np.ndarray

    @property
    def cold(self) -> SampleRun:
        return self.replicas[0]

    @property
    def swap_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(
                self.swap_attempts > 0, self.swap_accepts / self.swap_attempts, np.nan
            )


def run_parallel_tempering(
    target,
    make_proposal,
    ladder: TemperatureLadder,
    n_samples: int,
    rng: np.random.Generator,
    burn_in: float = 0.5,
    budget: str = "total",
    n_workers: int = 1,
) -> PTRun:
    """Replica-exchange sampling over a temperature ladder.

    ``make_proposal(slot)`` builds one proposal per temperature slot.
    ``budget`` selects how ``n_samples`` is spent: "total" divides it
    across replicas (sweeps = n_samples // len(ladder)), "per_replica"
    runs that many sweeps outright.  Each replica consumes its own
    spawned random stream, so results are identical whether replica steps
    run sequentially or on threads; swaps always use the parent-order
    stream and run between sweep barriers.
    """
    m = len(ladder)
    if budget == "total":
        sweeps = n_samples // m
    elif budget == "per_replica":
        sweeps = n_samples
    else:
        raise ValueError("budget must be 'total' or 'per_replica'")
    if sweeps < 1:
        raise ValueError("budget too small for the ladder size")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must be in [0, 1)")

    streams = rng.spawn(m + 1)
    swap_rng, replica_rngs = streams[0], streams[1:]
    proposals = [make_proposal(i) for i in range(m)]
    states = []
    for i in range(m):
        state = _draw_initial(target, replica_rngs[i])
        state.beta = ladder.betas[i]
        states.append(state)

    dim = states[0].theta.size
    iterates = np.empty((m, sweeps, dim))
    logliks = np.empty((m, sweeps))
    logpriors = np.empty((m, sweeps))
    accepted = np.zeros((m, sweeps), dtype=bool)
    swap_attempts = np.zeros(m - 1, dtype=int) if m > 1 else np.zeros(0, dtype=int)
    swap_accepts = np.zeros_like(swap_attempts)

    def step_one(i, sweep):
        accepted[i, sweep] = _mh_step(
            target, proposals[i], states[i], replica_rngs[i], iterates[i, :sweep]
        )

    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        for sweep in range(sweeps):
            if pool is None:
                for i in range(m):
                    step_one(i, sweep)
            else:
                list(pool.map(lambda i: step_one(i, sweep), range(m)))
            for i in range(m - 1):
                a, b = states[i], states[i + 1]
                swap_attempts[i] += 1
                if swap_rng.uniform() < swap_accept_prob(a, b):
                    swap_accepts[i] += 1
                    a.theta, b.theta = b.theta, a.theta
                    a.loglik, b.loglik = b.loglik, a.loglik
                    a.logprior, b.logprior = b.logprior, a.logprior
            for i in range(m):
                iterates[i, sweep] = states[i].theta
                logliks[i, sweep] = states[i].loglik
                logpriors[i, sweep] = states[i].logprior
    finally:
        if pool is not None:
            pool.shutdown()

    burn = int(round(burn_in * sweeps))
    replicas = [
        SampleRun(
            iterates=iterates[i],
            logliks=logliks[i],
            logpriors=logpriors[i],
            accepted=accepted[i],
            burn_in=burn,
        )
        for i in range(m)
    ]
    return PTRun(replicas=replicas, swap_attempts=swap_attempts, swap_accepts=swap_accepts)
