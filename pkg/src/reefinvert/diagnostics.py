"""Convergence diagnostics, posterior summaries, and likelihood surfaces."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import inf, isfinite, sqrt

import numpy as np

__all__ = [
    "DegenerateChains",
    "psrf",
    "psrf_table",
    "histogram_mode",
    "PosteriorSummary",
    "summarize",
    "Envelope",
    "prediction_envelope",
    "SurfaceGrid",
    "likelihood_surface",
    "top_region",
    "is_connected",
]


class DegenerateChains(Exception):
    """All chains have zero within-chain variance; the ratio is undefined."""


def psrf(chains) -> float:
    """Potential scale reduction factor for one scalar parameter.

    Takes two or more equal-length chains and compares the pooled
    within-chain variance against the between-chain spread; values near
    one indicate the chains are sampling the same distribution.
    """
    arrays = [np.asarray(c, dtype=float).ravel() for c in chains]
    m = len(arrays)
    if m < 2:
        raise ValueError("need at least two chains")
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("chains must have equal length")
    if n < 10:
        raise ValueError("chains too short for a meaningful ratio")
    w = float(np.mean([a.var(ddof=1) for a in arrays]))
    if w == 0.0:
        raise DegenerateChains("zero within-chain variance in every chain")
    b_over_n = float(np.var([a.mean() for a in arrays], ddof=1))
    var_plus = (n - 1) / n * w + b_over_n
    return sqrt(var_plus / w)


def psrf_table(chains_2d) -> np.ndarray:
    """PSRF per column across a list of (n, d) chains."""
    stacked = [np.atleast_2d(np.asarray(c, dtype=float)) for c in chains_2d]
    d = stacked[0].shape[1]
    return np.array([psrf([c[:, j] for c in stacked]) for j in range(d)])


def histogram_mode(x: np.ndarray) -> float:
    """Peak of a Freedman-Diaconis histogram; the value itself if degenerate."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if np.ptp(x) == 0.0:
        return float(x[0])
    counts, edges = np.histogram(x, bins="fd")
    j = int(np.argmax(counts))
    return float(0.5 * (edges[j] + edges[j + 1]))


@dataclass
class PosteriorSummary:
    """Per-parameter location and interval estimates plus fit quality."""

    names: tuple[str, ...]
    mean: np.ndarray
    mode: np.ndarray
    p5: np.ndarray
    p95: np.ndarray
    acceptance_rate: float
    n_samples: int
    mc_mean: float = float("nan")
    mc_std: float = float("nan")

    def as_dict(self) -> dict:
        out = {
            "parameters": {
                name: {
                    "mean": float(self.mean[j]),
                    "mode": float(self.mode[j]),
                    "p5": float(self.p5[j]),
                    "p95": float(self.p95[j]),
                }
                for j, name in enumerate(self.names)
            },
            "acceptance_rate": self.acceptance_rate,
            "n_samples": self.n_samples,
        }
        if isfinite(self.mc_mean):
            out["misclassification"] = {"mean": self.mc_mean, "std": self.mc_std}
        return out


def summarize(
    iterates: np.ndarray,
    names,
    acceptance_rate: float,
    mc_fn=None,
    thin_to: int = 500,
) -> PosteriorSummary:
    """Summarise post-burn-in iterates column by column.

    ``mc_fn(theta) -> int`` scores one parameter vector against the
    observed core; when given, it runs on at most ``thin_to`` evenly
    spaced iterates and its failures (invalid vectors) are skipped.
    """
    x = np.atleast_2d(np.asarray(iterates, dtype=float))
    if x.shape[0] < 1:
        raise ValueError("no iterates to summarise")
    names = tuple(names)
    if len(names) != x.shape[1]:
        raise ValueError("one name per column required")
    mc_mean = mc_std = float("nan")
    if mc_fn is not None:
        idx = np.unique(np.linspace(0, x.shape[0] - 1, min(thin_to, x.shape[0])).astype(int))
        scores = []
        for i in idx:
            try:
                scores.append(mc_fn(x[i]))
            except Exception:
                continue
        if scores:
            mc_mean = float(np.mean(scores))
            mc_std = float(np.std(scores))
    return PosteriorSummary(
        names=names,
        mean=x.mean(axis=0),
        mode=np.array([histogram_mode(x[:, j]) for j in range(x.shape[1])]),
        p5=np.percentile(x, 5, axis=0),
        p95=np.percentile(x, 95, axis=0),
        acceptance_rate=float(acceptance_rate),
        n_samples=int(x.shape[0]),
        mc_mean=mc_mean,
        mc_std=mc_std,
    )


@dataclass
class Envelope:
    """Per-index category frequencies and dominant-code percentile band."""

    categories: tuple[str, ...]
    frequencies: np.ndarray
    code_mean: np.ndarray
    code_p5: np.ndarray
    code_p95: np.ndarray
    n_used: int
    n_failed: int

    def contains(self, labels: np.ndarray) -> np.ndarray:
        """Whether each label falls inside the 5th-95th code band."""
        labels = np.asarray(labels)
        return (labels >= self.code_p5) & (labels <= self.code_p95)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["index"]
                + [f"freq_{c}" for c in self.categories]
                + ["code_mean", "code_p5", "code_p95"]
            )
            for i in range(self.frequencies.shape[0]):
                w.writerow(
                    [i]
                    + [f"{v:.9g}" for v in self.frequencies[i]]
                    + [
                        f"{self.code_mean[i]:.9g}",
                        f"{self.code_p5[i]:.9g}",
                        f"{self.code_p95[i]:.9g}",
                    ]
                )


def prediction_envelope(
    iterates: np.ndarray,
    predict_fn,
    categories,
    thin_to: int = 200,
) -> Envelope:
    """Distribution of predicted label sequences over posterior iterates.

    ``predict_fn(theta) -> int array`` maps a parameter vector to a label
    sequence.  Iterates whose prediction fails or whose length disagrees
    with the first successful one are counted and skipped.
    """
    x = np.atleast_2d(np.asarray(iterates, dtype=float))
    idx = np.unique(np.linspace(0, x.shape[0] - 1, min(thin_to, x.shape[0])).astype(int))
    sequences = []
    failed = 0
    for i in idx:
        try:
            labels = np.asarray(predict_fn(x[i]), dtype=int)
        except Exception:
            failed += 1
            continue
        if sequences and labels.shape != sequences[0].shape:
            failed += 1
            continue
        sequences.append(labels)
    if not sequences:
        raise ValueError("no usable predictions for the envelope")
    stack = np.stack(sequences)
    k = len(categories)
    freqs = np.stack([(stack == c).mean(axis=0) for c in range(k)], axis=1)
    return Envelope(
        categories=tuple(categories),
        frequencies=freqs,
        code_mean=stack.mean(axis=0),
        code_p5=np.percentile(stack, 5, axis=0),
        code_p95=np.percentile(stack, 95, axis=0),
        n_used=len(sequences),
        n_failed=failed,
    )


@dataclass
class SurfaceGrid:
    """Log-likelihood over a two-parameter grid; -inf marks inadmissible nodes."""

    name_a: str
    name_b: str
    values_a: np.ndarray
    values_b: np.ndarray
    loglik: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"{self.name_a}\\{self.name_b}"] + [f"{b:.9g}" for b in self.values_b])
            for i, a in enumerate(self.values_a):
                w.writerow([f"{a:.9g}"] + [f"{v:.9g}" for v in self.loglik[i]])


def _surface_row(args):
    space, loglik_fn, base, ja, a, name_b_idx, values_b = args
    row = np.full(len(values_b), -inf)
    theta = np.asarray(base, dtype=float).copy()
    theta[ja] = a
    for j, b in enumerate(values_b):
        theta[name_b_idx] = b
        if isfinite(_space_log_prior(space, theta)):
            row[j] = loglik_fn(theta)
    return row


def _space_log_prior(space, theta) -> float:
    from .parameters import log_prior

    return log_prior(theta, space)


def likelihood_surface(
    space,
    loglik_fn,
    base: np.ndarray,
    name_a: str,
    values_a,
    name_b: str,
    values_b,
    workers: int = 1,
) -> SurfaceGrid:
    """Evaluate the log-likelihood over a grid in two named coordinates.

    All other coordinates stay at ``base``.  Nodes violating bounds or
    block ordering are marked -inf without running the forward model.
    Rows fan out over processes when ``workers`` exceeds one.
    """
    names = space.names()
    ja, jb = names.index(name_a), names.index(name_b)
    values_a = np.asarray(values_a, dtype=float)
    values_b = np.asarray(values_b, dtype=float)
    tasks = [(space, loglik_fn, base, ja, a, jb, values_b) for a in values_a]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_surface_row, tasks))
    else:
        rows = [_surface_row(t) for t in tasks]
    return SurfaceGrid(
        name_a=name_a,
        name_b=name_b,
        values_a=values_a,
        values_b=values_b,
        loglik=np.stack(rows),
    )


def top_region(surface: SurfaceGrid, fraction: float = 0.01) -> np.ndarray:
    """Nodes within ``fraction`` of the finite log-likelihood range of the top."""
    grid = surface.loglik
    finite = np.isfinite(grid)
    if not np.any(finite):
        raise ValueError("surface has no finite nodes")
    top = grid[finite].max()
    bottom = grid[finite].min()
    if top == bottom:
        return finite.copy()
    return finite & (grid >= top - fraction * (top - bottom))


def is_connected(mask: np.ndarray) -> bool:
    """Whether the true cells form one 8-connected component.

    Diagonal adjacency counts: a ridge one node wide stays a single
    region even where it steps between grid columns.
    """
    mask = np.asarray(mask, dtype=bool)
    total = int(mask.sum())
    if total == 0:
        return False
    seen = np.zeros_like(mask)
    start = tuple(np.argwhere(mask)[0])
    stack = [start]
    seen[start] = True
    count = 0
    while stack:
        i, j = stack.pop()
        count += 1
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                a, b = i + di, j + dj
                if 0 <= a < mask.shape[0] and 0 <= b < mask.shape[1]:
                    if mask[a, b] and not seen[a, b]:
                        seen[a, b] = True
                        stack.append((a, b))
    return count == total
