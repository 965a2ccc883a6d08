"""Observed cores and their comparison against simulated ones.

An observed core is a sequence of category labels over either the time
axis (one label per simulation slice) or the depth axis (one label per
depth bin, ordered base upward).  The likelihood treats each label as a
draw from the simulated composition of the matching slice or bin, with a
small floor so a zero predicted proportion stays finitely penalised
rather than fatal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .forward import CoreRecord

__all__ = [
    "UNKNOWN",
    "CategoryMismatch",
    "LengthMismatch",
    "ObservedCore",
    "LogLikelihoodValue",
    "floored_proportions",
    "log_likelihood",
    "misclassification_score",
    "read_labels_csv",
    "read_intervals_csv",
]

UNKNOWN = -1


class CategoryMismatch(Exception):
    """Observed labels are not drawn from the simulated category set."""


class LengthMismatch(Exception):
    """Observed and simulated cores disagree in bin count or bin size."""


@dataclass
class ObservedCore:
    """Label sequence with its axis, bin size, and category vocabulary.

    ``labels`` holds indices into ``categories``; ``UNKNOWN`` marks gaps
    that are excluded from the likelihood and from misclassification
    counts.  ``structure`` is "time" or "depth".  For time cores
    ``bin_size`` is the slice length in years; for depth cores it is the
    bin height in metres and labels run from the core base upward.
    """

    labels: np.ndarray
    structure: str
    bin_size: float
    categories: tuple[str, ...]

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=int)
        if self.structure not in ("time", "depth"):
            raise ValueError(f"structure must be 'time' or 'depth', got {self.structure!r}")
        if self.bin_size <= 0:
            raise ValueError("bin_size must be positive")
        k = len(self.categories)
        if k < 2:
            raise ValueError("need at least two categories")
        bad = (self.labels < UNKNOWN) | (self.labels >= k)
        if np.any(bad):
            raise CategoryMismatch(f"label codes out of range at indices {np.where(bad)[0][:5]}")

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def known(self) -> np.ndarray:
        return self.labels != UNKNOWN


@dataclass
class LogLikelihoodValue:
    """Log-likelihood with a validity flag for forward-model failures."""

    value: float
    valid: bool = True


def floored_proportions(proportions: np.ndarray, kappa: float) -> np.ndarray:
    """Mix a uniform floor into composition rows; rows still sum to one."""
    k = proportions.shape[-1]
    return (proportions + kappa) / (1.0 + k * kappa)


def _aligned_proportions(obs: ObservedCore, core: CoreRecord) -> np.ndarray:
    """Simulated composition rows matching the observed axis, or raise."""
    if obs.categories != core.categories:
        raise CategoryMismatch(
            f"observed categories {obs.categories} != simulated {core.categories}"
        )
    if obs.structure == "time":
        if abs(obs.bin_size - core.layer_interval) > 1e-9:
            raise LengthMismatch(
                f"time bin {obs.bin_size} yr != layer interval {core.layer_interval} yr"
            )
        pi = core.proportions
    else:
        comp = core.depth_composition(obs.bin_size)
        # the observed core fixes the depth grid: bins the simulation never
        # fills keep zero rows (the probability floor prices them in), and
        # material above the observed top is not part of the data
        if comp.shape[0] != len(obs):
            conformed = np.zeros((len(obs), comp.shape[1]))
            n = min(len(obs), comp.shape[0])
            conformed[:n] = comp[:n]
            comp = conformed
        total = comp.sum(axis=1, keepdims=True)
        pi = np.divide(comp, total, out=np.zeros_like(comp), where=total > 0)
    if pi.shape[0] != len(obs):
        raise LengthMismatch(
            f"{obs.structure} structure has {pi.shape[0]} simulated bins, observed {len(obs)}"
        )
    return pi


def log_likelihood(obs: ObservedCore, core: CoreRecord, kappa: float = 1e-6) -> LogLikelihoodValue:
    """Multinomial log-likelihood of the observed labels given a simulation.

    Each known label contributes ``log`` of the floored simulated
    proportion for its category in the matching bin; unknown labels
    contribute nothing.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    pi = floored_proportions(_aligned_proportions(obs, core), kappa)
    known = obs.known
    idx = np.nonzero(known)[0]
    value = float(np.sum(np.log(pi[idx, obs.labels[idx]])))
    return LogLikelihoodValue(value=value, valid=True)


def misclassification_score(obs: ObservedCore, core: CoreRecord) -> int:
    """Number of known bins whose dominant simulated category differs."""
    pi = _aligned_proportions(obs, core)
    pred = pi.argmax(axis=1)
    empty = pi.sum(axis=1) <= 0.0  # bins the simulation never reached
    known = obs.known
    return int(np.sum((pred[known] != obs.labels[known]) | empty[known]))


def _codes(names, categories, path) -> np.ndarray:
    lookup = {name: i for i, name in enumerate(categories)}
    codes = np.empty(len(names), dtype=int)
    for i, name in enumerate(names):
        if name == "unknown" or name == "":
            codes[i] = UNKNOWN
        elif name in lookup:
            codes[i] = lookup[name]
        else:
            raise CategoryMismatch(f"{path}: unknown category {name!r}")
    return codes


def read_labels_csv(path, structure: str, bin_size: float, categories) -> ObservedCore:
    """Read a one-label-per-bin CSV with a ``category`` column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "category" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a header with a 'category' column")
        names = [row["category"].strip() for row in reader]
    if not names:
        raise ValueError(f"{path}: no label rows")
    return ObservedCore(
        labels=_codes(names, tuple(categories), path),
        structure=structure,
        bin_size=float(bin_size),
        categories=tuple(categories),
    )


def read_intervals_csv(path, bin_size: float, categories) -> ObservedCore:
    """Read a logged-interval CSV and re-bin it onto a regular depth grid.

    The file needs ``top_depth_m``, ``bottom_depth_m``, and ``category``
    columns, with depths measured downward from the core top.  Intervals
    must not overlap; gaps become unknown bins.  Each output bin takes the
    category with the most logged thickness inside it; the grid runs from
    the deepest logged point upward, so labels are ordered base up.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"top_depth_m", "bottom_depth_m", "category"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(need)}")
        rows = [
            (float(r["top_depth_m"]), float(r["bottom_depth_m"]), r["category"].strip())
            for r in reader
        ]
    if not rows:
        raise ValueError(f"{path}: no intervals")
    for top, bottom, name in rows:
        if not bottom > top:
            raise ValueError(f"{path}: interval ({top}, {bottom}) has no extent")
        if top < 0:
            raise ValueError(f"{path}: negative depth {top}")
    rows.sort(key=lambda r: r[0])
    for (_, prev_bottom, _), (top, _, _) in zip(rows, rows[1:]):
        if top < prev_bottom - 1e-9:
            raise ValueError(f"{path}: overlapping intervals at depth {top}")

    categories = tuple(categories)
    codes = _codes([name for _, _, name in rows], categories, path)
    span = max(bottom for _, bottom, _ in rows)
    n_bins = int(round(span / bin_size))
    if n_bins < 1:
        raise ValueError(f"{path}: span {span} smaller than one bin")
    k = len(categories)
    cover = np.zeros((n_bins, k))
    for (top, bottom, _), code in zip(rows, codes):
        if code == UNKNOWN:
            continue
        # Convert drill depths to height above the core base.
        lo, hi = span - bottom, span - top
        j0 = max(0, min(int(lo / bin_size), n_bins - 1))
        for j in range(j0, n_bins):
            b_lo = j * bin_size
            b_hi = (j + 1) * bin_size if j < n_bins - 1 else max(span, hi)
            overlap = min(hi, b_hi) - max(lo, b_lo)
            if overlap > 0:
                cover[j, code] += overlap
            if b_hi >= hi:
                break
    # rounding in span - depth can leave ulp-scale slivers in adjacent bins;
    # require real coverage before labelling
    tiny = 1e-9 * bin_size
    labels = np.where(cover.sum(axis=1) > tiny, cover.argmax(axis=1), UNKNOWN)
    return ObservedCore(
        labels=labels, structure="depth", bin_size=float(bin_size), categories=categories
    )
