"""Domain types, spec validation, seeded sampling and boundary scaling.

All designs live in the coded cube [-1, 1]^d. Whole-plot (hard-to-change)
factors always occupy the leading ``d_wp`` columns.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

# Independent sub-streams of one seed, one per purpose.
STREAM_POINTS = 0
STREAM_MC = 1
STREAM_LHS = 2
STREAM_VALIDATION = 3
STREAM_RANDOM_DESIGN = 4

WHOLE_PLOT = "whole_plot"
SUBPLOT = "subplot"


class SpecError(ValueError):
    """A DesignSpec violates one of the generator preconditions."""


class DesignError(ValueError):
    """A design matrix or design file violates a Design invariant."""


class ScalingWarning(UserWarning):
    pass


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """PCG64 generator for one purpose-specific sub-stream of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class DesignSpec:
    n_sim: int
    n_overall: int
    n_wp: int
    d: int
    d_wp: int
    d_sp: int
    seed: int = 0

    @classmethod
    def make(cls, n_overall: int, n_wp: int, d: int, d_wp: int,
             seed: int = 0, n_sim: Optional[int] = None) -> "DesignSpec":
        """Convenience constructor; ``n_sim`` defaults to 50 * n_overall."""
        if n_sim is None:
            n_sim = default_n_sim(n_overall)
        return cls(n_sim=n_sim, n_overall=n_overall, n_wp=n_wp, d=d,
                   d_wp=d_wp, d_sp=d - d_wp, seed=seed)


def default_n_sim(n_overall: int) -> int:
    return 50 * int(n_overall)


def validate_spec(spec: DesignSpec, split_plot: bool = True) -> DesignSpec:
    """Check the generator preconditions and return ``spec`` unchanged.

    Raises
    ------
    SpecError
        Naming the first violated inequality.
    """
    for name in ("n_sim", "n_overall", "n_wp", "d", "d_wp", "d_sp", "seed"):
        value = getattr(spec, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise SpecError(f"{name} must be an integer, got {value!r}")
    if spec.d < 1:
        raise SpecError(f"d >= 1 required, got d={spec.d}")
    if spec.d_wp < 0 or spec.d_sp < 0:
        raise SpecError(f"d_wp >= 0 and d_sp >= 0 required, got d_wp={spec.d_wp}, d_sp={spec.d_sp}")
    if spec.d != spec.d_wp + spec.d_sp:
        raise SpecError(f"d = d_wp + d_sp violated: {spec.d} != {spec.d_wp} + {spec.d_sp}")
    if split_plot:
        if spec.d_wp < 1:
            raise SpecError("d_wp >= 1 required for a split-plot design")
        if spec.n_wp < 1:
            raise SpecError(f"n_wp > 0 violated: n_wp={spec.n_wp}")
        # n_wp == n_overall is the degenerate one-run-per-whole-plot design.
        if spec.n_overall < spec.n_wp:
            raise SpecError(
                f"n_overall >= n_wp violated: n_overall={spec.n_overall} < n_wp={spec.n_wp}")
    if spec.n_overall < 1:
        raise SpecError(f"n_overall > 0 violated: n_overall={spec.n_overall}")
    if spec.n_sim <= spec.n_overall:
        raise SpecError(f"n_sim > n_overall violated: n_sim={spec.n_sim} <= n_overall={spec.n_overall}")
    if not 0 <= spec.seed < 2**64:
        raise SpecError(f"seed must be a 64-bit unsigned integer, got {spec.seed}")
    return spec


def sample_uniform(n: int, d: int, seed: int, stream: int = STREAM_POINTS) -> np.ndarray:
    """``n`` i.i.d. uniform points on [-1, 1]^d."""
    if n < 1 or d < 1:
        raise ValueError(f"n >= 1 and d >= 1 required, got n={n}, d={d}")
    rng = make_rng(seed, stream)
    return rng.uniform(-1.0, 1.0, size=(n, d))


def relabel_first_appearance(labels: Sequence) -> np.ndarray:
    """Map arbitrary labels to 1..k in order of first appearance."""
    mapping: dict = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        lab = lab.item() if hasattr(lab, "item") else lab
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[i] = mapping[lab]
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Design:
    """Run-by-factor matrix plus whole-plot assignment.

    ``points`` has shape (n, d); the first ``d_wp`` columns are whole-plot
    factors. ``wp_id`` holds labels 1..n_wp in order of first appearance.
    """

    points: np.ndarray
    wp_id: np.ndarray
    d_wp: int
    scaled: bool = False
    seed: Optional[int] = None
    kind: str = "design"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise DesignError(f"points must be 2-d, got shape {pts.shape}")
        wp = np.asarray(self.wp_id, dtype=np.int64)
        if wp.shape != (pts.shape[0],):
            raise DesignError(f"wp_id length {wp.shape} does not match {pts.shape[0]} runs")
        if not 0 <= self.d_wp <= pts.shape[1]:
            raise DesignError(f"d_wp={self.d_wp} outside 0..{pts.shape[1]}")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "wp_id", _frozen(wp))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def d_sp(self) -> int:
        return self.d - self.d_wp

    @property
    def n_wp(self) -> int:
        return len(np.unique(self.wp_id))

    @property
    def column_roles(self) -> tuple:
        return tuple(WHOLE_PLOT if j < self.d_wp else SUBPLOT for j in range(self.d))

    def check(self, atol: float = 0.0) -> "Design":
        """Raise DesignError on the first violated invariant; return self."""
        bad = np.argwhere(~np.isfinite(self.points) | (np.abs(self.points) > 1.0 + atol))
        if len(bad):
            i, j = bad[0]
            raise DesignError(
                f"row {i + 1}, column x{j + 1}: value {self.points[i, j]!r} outside [-1, 1]")
        if np.any(self.wp_id < 1):
            i = int(np.flatnonzero(self.wp_id < 1)[0])
            raise DesignError(f"row {i + 1}: wp_id must be >= 1, got {self.wp_id[i]}")
        first: dict = {}
        for i, w in enumerate(self.wp_id.tolist()):
            if w not in first:
                first[w] = i
                continue
            ref = first[w]
            for j in range(self.d_wp):
                if self.points[i, j] != self.points[ref, j]:
                    raise DesignError(
                        f"row {i + 1}, column x{j + 1}: whole-plot factor differs within "
                        f"wp_id={w} ({self.points[i, j]!r} vs {self.points[ref, j]!r} in row {ref + 1})")
        return self

    def with_points(self, points: np.ndarray, **changes) -> "Design":
        kw = dict(points=points, wp_id=self.wp_id, d_wp=self.d_wp, scaled=self.scaled,
                  seed=self.seed, kind=self.kind, meta=dict(self.meta))
        kw.update(changes)
        return Design(**kw)


@dataclass(frozen=True)
class CriteriaReport:
    """Criterion values for one design. ``None`` marks a singular information matrix."""

    maximin: float
    phi_p: float
    minimax_mc: float
    i_opt_iid: Optional[float]
    i_opt_sp: Optional[float]
    p: float = 2.0
    mc_samples: int = 100_000
    variance_ratio: float = 1.0


def scale_to_boundary(design: Design) -> Design:
    """Affinely stretch every column so its minimum is -1 and maximum is +1.

    Constant columns are mapped to 0 with a :class:`ScalingWarning`.
    """
    pts = design.points
    out = np.empty_like(pts)
    for j in range(pts.shape[1]):
        col = pts[:, j]
        lo, hi = col.min(), col.max()
        if hi == lo:
            warnings.warn(f"column x{j + 1} is constant; mapped to 0", ScalingWarning, stacklevel=2)
            out[:, j] = 0.0
            continue
        v = 2.0 * (col - lo) / (hi - lo) - 1.0
        v = np.clip(v, -1.0, 1.0)
        v[col == lo] = -1.0
        v[col == hi] = 1.0
        out[:, j] = v
    return design.with_points(out, scaled=True)


# --- Design CSV + JSON sidecar -------------------------------------------------

def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_design(design: Design, csv_path, metadata_path=None) -> tuple:
    """Write ``run,wp_id,x1..xd`` CSV and the metadata sidecar.

    Returns the two paths written.
    """
    csv_path = Path(csv_path)
    metadata_path = Path(metadata_path) if metadata_path else sidecar_path(csv_path)
    header = ["run", "wp_id"] + [f"x{j + 1}" for j in range(design.d)]
    lines = [",".join(header)]
    for i in range(design.n):
        row = [str(i + 1), str(int(design.wp_id[i]))] + [_fmt(v) for v in design.points[i]]
        lines.append(",".join(row))
    csv_path.write_text("\n".join(lines) + "\n")
    meta = {"d_wp": design.d_wp, "d_sp": design.d_sp, "scaled": bool(design.scaled),
            "seed": design.seed}
    if design.kind != "design":
        meta["type"] = design.kind
    metadata_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, metadata_path


def read_design(csv_path, metadata_path=None) -> Design:
    """Parse a design CSV and its sidecar, validating every Design invariant.

    Raises
    ------
    DesignError
        On malformed files or invariant violations; messages name the row
        and column.
    """
    csv_path = Path(csv_path)
    metadata_path = Path(metadata_path) if metadata_path else sidecar_path(csv_path)
    try:
        meta = json.loads(metadata_path.read_text())
    except json.JSONDecodeError as exc:
        raise DesignError(f"{metadata_path}: invalid JSON ({exc})") from exc
    if "d_wp" not in meta:
        raise DesignError(f"{metadata_path}: missing 'd_wp'")

    lines = [ln for ln in csv_path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DesignError(f"{csv_path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    d = len(header) - 2
    expected = ["run", "wp_id"] + [f"x{j + 1}" for j in range(d)]
    if d < 1 or header != expected:
        raise DesignError(f"{csv_path}: header must be {','.join(expected) if d >= 1 else 'run,wp_id,x1,...'}")
    pts = np.empty((len(lines) - 1, d))
    wp = np.empty(len(lines) - 1, dtype=np.int64)
    for i, ln in enumerate(lines[1:]):
        cells = ln.split(",")
        if len(cells) != d + 2:
            raise DesignError(f"{csv_path}: row {i + 1} has {len(cells)} cells, expected {d + 2}")
        try:
            wp[i] = int(cells[1])
        except ValueError:
            raise DesignError(f"{csv_path}: row {i + 1}, column wp_id: not an integer: {cells[1]!r}") from None
        for j in range(d):
            try:
                v = float(cells[j + 2])
            except ValueError:
                raise DesignError(
                    f"{csv_path}: row {i + 1}, column x{j + 1}: not a number: {cells[j + 2]!r}") from None
            if not (math.isfinite(v) and -1.0 <= v <= 1.0):
                raise DesignError(f"{csv_path}: row {i + 1}, column x{j + 1}: value {v!r} outside [-1, 1]")
            pts[i, j] = v
    d_wp = int(meta["d_wp"])
    if "d_sp" in meta and int(meta["d_sp"]) + d_wp != d:
        raise DesignError(f"{metadata_path}: d_wp + d_sp = {d_wp + int(meta['d_sp'])} but CSV has {d} factors")
    try:
        design = Design(points=pts, wp_id=wp, d_wp=d_wp, scaled=bool(meta.get("scaled", False)),
                        seed=meta.get("seed"), kind=meta.get("type", "external"))
        design.check()
    except DesignError as exc:
        raise DesignError(f"{csv_path}: {exc}") from None
    return design
