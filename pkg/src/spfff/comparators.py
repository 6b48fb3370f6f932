"""Comparison designs: uniform random, Latin hypercube, maximin Latin hypercube."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .core import (STREAM_LHS, STREAM_RANDOM_DESIGN, Design, make_rng, read_design,
                   sample_uniform)


@dataclass(frozen=True)
class LhsConfig:
    n: int
    d: int
    seed: int = 0
    improve_iters: Optional[int] = None  # None -> 10 * n * d
    jitter: bool = True

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise ValueError(f"LHS needs n >= 2 and d >= 1, got n={self.n}, d={self.d}")
        if self.improve_iters is not None and self.improve_iters < 0:
            raise ValueError("improve_iters must be >= 0")

    @property
    def iterations(self) -> int:
        return 10 * self.n * self.d if self.improve_iters is None else self.improve_iters


def _singletons(points: np.ndarray, seed, kind: str) -> Design:
    n = len(points)
    return Design(points=points, wp_id=np.arange(1, n + 1), d_wp=0, seed=seed, kind=kind)


def _lhs_points(config: LhsConfig, rng: np.random.Generator) -> np.ndarray:
    n, d = config.n, config.d
    offset = rng.uniform(size=(n, d)) if config.jitter else np.full((n, d), 0.5)
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    pts = -1.0 + 2.0 * (strata + offset) / n
    return np.clip(pts, -1.0, 1.0)


def random_lhs(config: LhsConfig) -> Design:
    """Latin hypercube on [-1, 1]^d, one run per stratum in every column."""
    rng = make_rng(config.seed, STREAM_LHS)
    return _singletons(_lhs_points(config, rng), config.seed, "random_lhs")


def maximin_lhs(config: LhsConfig, return_trace: bool = False):
    """Latin hypercube improved by accept-if-better column swaps.

    Each proposal swaps the values of two random runs in one random column;
    it is kept only when the minimum pairwise distance strictly increases.
    With ``return_trace=True`` also returns the maximin value after every
    proposal.
    """
    rng = make_rng(config.seed, STREAM_LHS)
    pts = _lhs_points(config, rng)
    n, d = pts.shape
    D2 = squareform(pdist(pts, "sqeuclidean"))
    np.fill_diagonal(D2, np.inf)
    best = D2.min()
    trace: List[float] = []
    for _ in range(config.iterations):
        col = int(rng.integers(d))
        i, j = (int(v) for v in rng.choice(n, size=2, replace=False))
        # Only rows i and j of the distance matrix change.
        cand = pts.copy()
        cand[i, col], cand[j, col] = pts[j, col], pts[i, col]
        new_i = np.sum((cand - cand[i]) ** 2, axis=1)
        new_j = np.sum((cand - cand[j]) ** 2, axis=1)
        new_i[i] = new_j[j] = np.inf
        mask = np.ones(n, dtype=bool)
        mask[[i, j]] = False
        rest = D2[np.ix_(mask, mask)].min() if n > 2 else np.inf
        value = min(rest, new_i.min(), new_j.min())
        if value > best:
            pts = cand
            D2[i], D2[:, i] = new_i, new_i
            D2[j], D2[:, j] = new_j, new_j
            best = value
        trace.append(float(np.sqrt(best)))
    design = _singletons(pts, config.seed, "maximin_lhs")
    if return_trace:
        return design, trace
    return design


def random_design(n: int, d: int, seed: int = 0) -> Design:
    """Independent uniform runs on [-1, 1]^d."""
    return _singletons(sample_uniform(n, d, seed, STREAM_RANDOM_DESIGN), seed, "random")


def ingest_external_design(csv_path, metadata_path=None) -> Design:
    """Load a design built elsewhere, e.g. an I-optimal split-plot design.

    The files must follow the ``run,wp_id,x1..xd`` CSV layout with a JSON
    sidecar declaring ``d_wp``. Range and whole-plot constancy are checked.
    """
    return read_design(csv_path, metadata_path)
