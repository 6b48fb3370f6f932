"""Ward agglomerative clustering and the (split-plot) fast flexible filling generators.

The clustering engine uses the nearest-neighbor chain algorithm, which is
exact for Ward linkage because it is reducible: it builds the full
hierarchy in O(n^2) time and O(n) extra memory. The greedy merge order is
then recovered by replaying the hierarchy merges cheapest-first, subject to
children merging before their parents.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (Design, DesignSpec, relabel_first_appearance, sample_uniform,
                   validate_spec)

ORACLE_MAX_POINTS = 12
_FAR = 1e150


@dataclass(frozen=True, eq=False)
class ClusterState:
    """Clusters left after agglomeration.

    Rows of ``centroids`` and ``sizes`` are ordered by cluster id; the id of a
    cluster is the smallest initial-cluster index it contains.
    ``membership[i]`` is the row of the cluster holding original point ``i``.
    """

    centroids: np.ndarray
    sizes: np.ndarray
    membership: np.ndarray
    ids: np.ndarray

    @property
    def active_count(self) -> int:
        return len(self.sizes)

    def partition(self) -> frozenset:
        groups: dict = {}
        for i, m in enumerate(self.membership.tolist()):
            groups.setdefault(m, []).append(i)
        return frozenset(frozenset(g) for g in groups.values())


@dataclass(frozen=True)
class MergeRecord:
    step: int
    merged_pair: Tuple[int, int]
    ward_cost: float


def ward_distance(centroid_a, size_a, centroid_b, size_b) -> float:
    """Ward merge cost ``||a - b||^2 / (1/N_a + 1/N_b)``."""
    a = np.asarray(centroid_a, dtype=float)
    b = np.asarray(centroid_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"centroid dimensions differ: {a.shape} vs {b.shape}")
    if size_a < 1 or size_b < 1:
        raise ValueError("cluster sizes must be >= 1")
    diff = a - b
    return float(np.dot(diff, diff) / (1.0 / size_a + 1.0 / size_b))


def _initial_clusters(points: np.ndarray, initial_membership):
    n = points.shape[0]
    if initial_membership is None:
        return np.arange(n), n
    lab = relabel_first_appearance(np.asarray(initial_membership)) - 1
    if lab.shape != (n,):
        raise ValueError("initial_membership must have one entry per point")
    return lab, int(lab.max()) + 1


def _state_from_leaves(points, leaf_of_point, root_of_leaf) -> ClusterState:
    roots = root_of_leaf[leaf_of_point]
    ids = np.unique(roots)
    row = np.searchsorted(ids, roots)
    sizes = np.bincount(row, minlength=len(ids))
    sums = np.zeros((len(ids), points.shape[1]))
    np.add.at(sums, row, points)
    centroids = sums / sizes[:, None]
    return ClusterState(centroids=centroids, sizes=sizes, membership=row, ids=ids)


def _nn_chain(cent: np.ndarray, size: np.ndarray):
    """Full Ward hierarchy over ``m`` initial clusters.

    Returns a list of ``(node_a, node_b, lo_id, hi_id, cost)``; leaves are
    nodes ``0..m-1`` and the j-th merge creates node ``m + j``.
    """
    m = len(size)
    q = cent.shape[1]
    # Compacted working set: position p holds cluster ids[p]. Dead slots are
    # parked far outside the cube (cnt 0) and pruned once half the set is dead.
    ids = np.arange(m)
    cols = [np.ascontiguousarray(cent[:, c], dtype=float) for c in range(q)]
    inv = 1.0 / size.astype(float)
    cnt = size.astype(float).copy()
    node = np.arange(m)
    n_dead = 0
    merges = []
    chain: List[int] = []  # positions into the working set
    remaining = m
    sq = np.empty(m)
    tmp = np.empty(m)
    while remaining > 1:
        if not chain:
            chain.append(int(np.flatnonzero(cnt > 0)[0]))
        pa = chain[-1]
        pprev = chain[-2] if len(chain) > 1 else -1
        w = len(ids)
        s, t = sq[:w], tmp[:w]
        np.subtract(cols[0], cols[0][pa], out=s)
        np.multiply(s, s, out=s)
        for col in cols[1:]:
            np.subtract(col, col[pa], out=t)
            np.multiply(t, t, out=t)
            s += t
        np.add(inv, inv[pa], out=t)
        np.divide(s, t, out=s)
        s[pa] = np.inf
        pb = int(np.argmin(s))
        if pprev >= 0 and pb != pprev and s[pprev] <= s[pb]:
            pb = pprev
        if pb != pprev:
            chain.append(pb)
            continue
        cost = float(s[pb])
        chain.pop()
        chain.pop()
        plo, phi = (pa, pb) if ids[pa] < ids[pb] else (pb, pa)
        lo, hi = int(ids[plo]), int(ids[phi])
        merges.append((int(node[lo]), int(node[hi]), lo, hi, cost))
        na, nb = cnt[plo], cnt[phi]
        for col in cols:
            col[plo] = (na * col[plo] + nb * col[phi]) / (na + nb)
        cnt[plo] = na + nb
        inv[plo] = 1.0 / (na + nb)
        cnt[phi] = 0.0
        inv[phi] = 0.0
        for col in cols:
            col[phi] = _FAR
        node[lo] = m + len(merges) - 1
        remaining -= 1
        n_dead += 1
        if n_dead * 2 > w and remaining > 1:
            keep = cnt > 0
            newpos = np.cumsum(keep) - 1
            chain = [int(newpos[p]) for p in chain]
            ids, inv, cnt = ids[keep], inv[keep], cnt[keep]
            cols = [np.ascontiguousarray(col[keep]) for col in cols]
            n_dead = 0
    return merges


def _replay(merges, m: int, n_merges: int):
    """Execute the cheapest ``n_merges`` hierarchy merges in dependency order."""
    pending = [0] * len(merges)
    waiting: dict = {}
    heap = []
    for j, (na, nb, lo, hi, cost) in enumerate(merges):
        for c in (na, nb):
            if c >= m:
                pending[j] += 1
                waiting.setdefault(c - m, []).append(j)
        if pending[j] == 0:
            heapq.heappush(heap, (cost, lo, hi, j))

    root = np.arange(m)
    records = []
    for step in range(n_merges):
        cost, lo, hi, j = heapq.heappop(heap)
        root[root == hi] = lo
        records.append(MergeRecord(step=step, merged_pair=(int(lo), int(hi)), ward_cost=cost))
        for parent in waiting.get(j, ()):
            pending[parent] -= 1
            if pending[parent] == 0:
                _, _, plo, phi, pcost = merges[parent]
                heapq.heappush(heap, (pcost, plo, phi, parent))
    return root, records


def cluster_until(points, k: int, columns: Optional[Sequence[int]] = None,
                  initial_membership=None) -> Tuple[ClusterState, List[MergeRecord]]:
    """Greedy Ward agglomeration down to ``k`` clusters.

    Parameters
    ----------
    points : array_like, shape (n, d)
    k : int
        Number of clusters to keep.
    columns : sequence of int, optional
        0-based columns entering the merge cost; the rest are carried along
        in the centroids only. Defaults to all columns.
    initial_membership : array_like, optional
        Starting partition (labels per point). Defaults to singletons.

    Returns
    -------
    state : ClusterState
    history : list of MergeRecord
        Executed merges in order; ids follow the keep-smaller-id rule.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array")
    n, d = points.shape
    cols = list(range(d)) if columns is None else [int(c) for c in columns]
    if not cols or min(cols) < 0 or max(cols) >= d:
        raise ValueError(f"columns must be a non-empty subset of 0..{d - 1}")
    leaf_of_point, m = _initial_clusters(points, initial_membership)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > m:
        raise ValueError(f"k={k} exceeds the {m} initial clusters")

    sub = points[:, cols]
    size = np.bincount(leaf_of_point, minlength=m).astype(float)
    cent = np.zeros((m, len(cols)))
    np.add.at(cent, leaf_of_point, sub)
    cent /= size[:, None]

    merges = _nn_chain(cent, size) if m > k else []
    root, records = _replay(merges, m, m - k)
    return _state_from_leaves(points, leaf_of_point, root), records


def brute_force_ward_oracle(points, k: int, columns: Optional[Sequence[int]] = None) -> ClusterState:
    """Reference greedy Ward clustering, recomputing every pair from scratch.

    Only for small inputs (n <= 12); used to check :func:`cluster_until`.
    """
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    if n > ORACLE_MAX_POINTS:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_POINTS}, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    cols = list(range(d)) if columns is None else list(columns)
    clusters = {i: [i] for i in range(n)}
    while len(clusters) > k:
        best = None
        ids = sorted(clusters)
        for ia, a in enumerate(ids):
            ma = points[clusters[a]][:, cols].mean(axis=0)
            for b in ids[ia + 1:]:
                mb = points[clusters[b]][:, cols].mean(axis=0)
                c = ward_distance(ma, len(clusters[a]), mb, len(clusters[b]))
                if best is None or c < best[0]:
                    best = (c, a, b)
        _, a, b = best
        clusters[a] = clusters[a] + clusters.pop(b)
    ids = np.array(sorted(clusters))
    membership = np.empty(n, dtype=np.int64)
    for r, cid in enumerate(ids):
        membership[clusters[cid]] = r
    sizes = np.array([len(clusters[c]) for c in ids])
    centroids = np.array([points[clusters[c]].mean(axis=0) for c in ids])
    return ClusterState(centroids=centroids, sizes=sizes, membership=membership, ids=ids)


def _stage_one(spec: DesignSpec):
    x = sample_uniform(spec.n_sim, spec.d, spec.seed)
    state, history = cluster_until(x, spec.n_overall)
    return np.clip(state.centroids, -1.0, 1.0), history


def fff_design(spec: DesignSpec) -> Design:
    """Plain fast flexible filling design: Ward centroids of a uniform sample.

    ``n_wp`` and ``d_wp`` of the spec are ignored; every run is its own
    whole plot.
    """
    validate_spec(spec, split_plot=False)
    runs, _ = _stage_one(spec)
    return Design(points=runs, wp_id=np.arange(1, spec.n_overall + 1), d_wp=0,
                  seed=spec.seed, kind="fff")


def form_whole_plots(runs: np.ndarray, n_wp: int, d_wp: int, seed=None):
    """Second stage: group runs into ``n_wp`` whole plots by Ward on the first ``d_wp`` columns.

    Runs restart as unit-weight singletons. Returns the split-plot Design
    (runs grouped by whole plot, whole-plot columns replaced by the whole
    plot average) and the merge history.
    """
    wp_cols = list(range(d_wp))
    stage2, history = cluster_until(runs, n_wp, columns=wp_cols)
    pts = np.array(runs, dtype=float, copy=True)
    pts[:, wp_cols] = stage2.centroids[stage2.membership][:, wp_cols]
    order = np.argsort(stage2.membership, kind="stable")
    pts = np.clip(pts[order], -1.0, 1.0)
    wp_id = relabel_first_appearance(stage2.membership[order])
    return Design(points=pts, wp_id=wp_id, d_wp=d_wp, seed=seed, kind="spfff"), history


def spfff_design(spec: DesignSpec, return_history: bool = False):
    """Split-plot fast flexible filling design.

    Stage one clusters ``n_sim`` uniform points into ``n_overall`` Ward
    clusters on all factors. Stage two restarts from the ``n_overall``
    centroids as unit-weight singletons and clusters them on the whole-plot
    columns only, down to ``n_wp`` whole plots. Each run keeps its stage-one
    subplot coordinates and takes its whole plot's average whole-plot
    coordinates. Runs are grouped by whole plot.

    With ``return_history=True`` also returns the two merge histories.
    """
    validate_spec(spec)
    runs, hist1 = _stage_one(spec)
    design, hist2 = form_whole_plots(runs, spec.n_wp, spec.d_wp, spec.seed)
    if return_history:
        return design, hist1, hist2
    return design


def write_merge_history(records: Sequence[MergeRecord], path) -> Path:
    path = Path(path)
    lines = ["step,id_a,id_b,ward_cost"]
    lines += [f"{r.step},{r.merged_pair[0]},{r.merged_pair[1]},{r.ward_cost:.16e}" for r in records]
    path.write_text("\n".join(lines) + "\n")
    return path
