"""Design criteria: maximin, phi_p, Monte Carlo minimax and I-optimality.

I-optimality is the average prediction variance of the full quadratic
response surface model over [-1, 1]^d,

    trace((X' V^-1 X)^-1 B),   B = 2^-d * integral of f(x) f(x)' dx,

with V = I + eta * Z Z' for whole-plot indicator matrix Z. ``eta = 0`` gives
the independent-errors criterion.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .core import STREAM_MC, CriteriaReport, Design, make_rng

DEFAULT_MC_SAMPLES = 100_000
DEFAULT_VARIANCE_RATIO = 1.0
PIVOT_RTOL = 1e-10
_MC_CHUNK = 20_000


class SingularDesignError(np.linalg.LinAlgError):
    """The information matrix X' V^-1 X is numerically singular."""


def _points(design) -> np.ndarray:
    pts = design.points if isinstance(design, Design) else design
    pts = np.asarray(pts, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def maximin(design) -> float:
    """Smallest pairwise Euclidean distance between runs (larger is better)."""
    pts = _points(design)
    if len(pts) < 2:
        raise ValueError("maximin needs at least 2 runs")
    return float(pdist(pts).min())


def phi_p(design, p: float = 2.0) -> float:
    """Sum of inverse p-th powers of all pairwise distances (smaller is better).

    Returns ``inf`` when two runs coincide.
    """
    pts = _points(design)
    if len(pts) < 2:
        raise ValueError("phi_p needs at least 2 runs")
    if p <= 0:
        raise ValueError("p must be positive")
    sq = pdist(pts, "sqeuclidean")
    if np.any(sq == 0.0):
        return math.inf
    return float(np.sum(sq ** (-0.5 * p)))


def minimax_mc(design, mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
               d: Optional[int] = None) -> float:
    """Monte Carlo estimate of the coverage radius max_x min_j ||x - x_j||.

    The estimate never exceeds the true value since only finitely many
    locations are probed.
    """
    pts = _points(design)
    if len(pts) < 1 or mc_samples < 1:
        raise ValueError("need at least one run and one MC sample")
    d = pts.shape[1] if d is None else d
    rng = make_rng(seed, STREAM_MC)
    probe = rng.uniform(-1.0, 1.0, size=(int(mc_samples), d))
    worst = 0.0
    for start in range(0, len(probe), _MC_CHUNK):
        sq = cdist(probe[start:start + _MC_CHUNK], pts, "sqeuclidean").min(axis=1)
        worst = max(worst, float(sq.max()))
    return math.sqrt(worst)


# --- quadratic response surface ------------------------------------------------

@dataclass(frozen=True)
class RsmBasis:
    """Full quadratic model terms in fixed order.

    Terms are tuples of factor indices: ``()`` intercept, ``(i,)`` linear,
    ``(i, j)`` with i < j interaction, ``(i, i)`` pure quadratic.
    """

    d: int
    quadratic: bool = True

    @property
    def terms(self) -> List[Tuple[int, ...]]:
        out: List[Tuple[int, ...]] = [()]
        out += [(i,) for i in range(self.d)]
        out += list(itertools.combinations(range(self.d), 2))
        if self.quadratic:
            out += [(i, i) for i in range(self.d)]
        return out

    @property
    def p(self) -> int:
        return len(self.terms)

    def names(self) -> List[str]:
        def name(t):
            if not t:
                return "1"
            if len(t) == 2 and t[0] == t[1]:
                return f"x{t[0] + 1}^2"
            return "*".join(f"x{i + 1}" for i in t)
        return [name(t) for t in self.terms]

    def expand(self, x) -> np.ndarray:
        """Model matrix for an (m, d) array, or a basis vector for one point."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.d:
            raise ValueError(f"expected {self.d} factors, got {x2.shape[1]}")
        cols = [np.ones(len(x2))]
        for t in self.terms[1:]:
            col = x2[:, t[0]].copy()
            for i in t[1:]:
                col = col * x2[:, i]
            cols.append(col)
        f = np.column_stack(cols)
        return f[0] if single else f


def rsm_expand(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return RsmBasis(x.shape[-1]).expand(x)


def _uniform_moment(power: int) -> float:
    # E[u^k] for u ~ U(-1, 1)
    return 0.0 if power % 2 else 1.0 / (power + 1)


@lru_cache(maxsize=None)
def _moment_matrix(d: int, quadratic: bool) -> np.ndarray:
    terms = RsmBasis(d, quadratic).terms
    p = len(terms)
    B = np.empty((p, p))
    for a in range(p):
        for b in range(a, p):
            powers = np.bincount(np.array(terms[a] + terms[b], dtype=int), minlength=d)
            B[a, b] = B[b, a] = math.prod(_uniform_moment(int(k)) for k in powers)
    B.setflags(write=False)
    return B


def moment_matrix(d: int, quadratic: bool = True) -> np.ndarray:
    """Analytic ``2^-d * integral f f'`` over [-1, 1]^d for the RSM basis."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return _moment_matrix(int(d), bool(quadratic))


# --- split-plot covariance and I-optimality ------------------------------------

@dataclass(frozen=True, eq=False)
class SplitPlotCovariance:
    """V = I + eta * Z Z' for the whole-plot labels ``wp_id``."""

    wp_id: np.ndarray
    variance_ratio: float = DEFAULT_VARIANCE_RATIO

    def __post_init__(self):
        if self.variance_ratio < 0:
            raise ValueError("variance_ratio must be >= 0")
        object.__setattr__(self, "wp_id", np.asarray(self.wp_id))

    @property
    def indicator(self) -> np.ndarray:
        labels, inv = np.unique(self.wp_id, return_inverse=True)
        Z = np.zeros((len(self.wp_id), len(labels)))
        Z[np.arange(len(self.wp_id)), inv] = 1.0
        return Z

    @property
    def matrix(self) -> np.ndarray:
        Z = self.indicator
        return np.eye(len(self.wp_id)) + self.variance_ratio * Z @ Z.T

    def information(self, X: np.ndarray) -> np.ndarray:
        """X' V^-1 X through the Woodbury identity.

        V^-1 = I - Z diag(eta / (1 + eta m_j)) Z', m_j the whole-plot sizes.
        """
        M = X.T @ X
        eta = self.variance_ratio
        if eta == 0:
            return M
        _, inv, sizes = np.unique(self.wp_id, return_inverse=True, return_counts=True)
        S = np.zeros((len(sizes), X.shape[1]))
        np.add.at(S, inv, X)
        shrink = eta / (1.0 + eta * sizes)
        return M - S.T @ (shrink[:, None] * S)


def _spd_factor(M: np.ndarray):
    """Cholesky of a Jacobi-scaled SPD matrix; SingularDesignError on tiny pivots."""
    diag = np.diag(M)
    if np.any(diag <= 0):
        raise SingularDesignError("information matrix has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(diag)
    Ms = M * s[:, None] * s[None, :]
    try:
        L = np.linalg.cholesky(Ms)
    except np.linalg.LinAlgError:
        raise SingularDesignError("information matrix is not positive definite") from None
    if np.min(np.diag(L)) ** 2 < PIVOT_RTOL:
        raise SingularDesignError("information matrix is numerically singular")
    return L, s


def information_inverse(M: np.ndarray) -> np.ndarray:
    L, s = _spd_factor(M)
    Linv = np.linalg.inv(L)
    return (Linv.T @ Linv) * s[:, None] * s[None, :]


def i_optimality(design, covariance: Optional[SplitPlotCovariance] = None,
                 quadratic: bool = True) -> float:
    """Average prediction variance of the RSM fit over [-1, 1]^d.

    ``covariance=None`` means independent errors (V = I).

    Raises
    ------
    SingularDesignError
        If X' V^-1 X is singular, e.g. fewer runs than model terms.
    """
    pts = _points(design)
    basis = RsmBasis(pts.shape[1], quadratic)
    X = basis.expand(pts)
    if len(X) < basis.p:
        raise SingularDesignError(f"{len(X)} runs cannot support {basis.p} model terms")
    if covariance is None:
        M = X.T @ X
    else:
        if len(covariance.wp_id) != len(X):
            raise ValueError("covariance wp_id length does not match the design")
        M = covariance.information(X)
    Minv = information_inverse(M)
    return float(np.sum(Minv * moment_matrix(pts.shape[1], quadratic)))


def evaluate_design(design: Design, mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                    variance_ratio: float = DEFAULT_VARIANCE_RATIO, p: float = 2.0) -> CriteriaReport:
    """All five criteria; singular I-criteria become ``None``."""
    def iopt(cov):
        try:
            return i_optimality(design, cov)
        except SingularDesignError:
            return None

    return CriteriaReport(
        maximin=maximin(design),
        phi_p=phi_p(design, p),
        minimax_mc=minimax_mc(design, mc_samples, seed),
        i_opt_iid=iopt(None),
        i_opt_sp=iopt(SplitPlotCovariance(design.wp_id, variance_ratio)),
        p=p,
        mc_samples=mc_samples,
        variance_ratio=variance_ratio,
    )


REPORT_COLUMNS = ["design_id", "n", "d", "n_wp", "maximin", "phi_2", "minimax_mc",
                  "mc_samples", "i_opt_iid", "i_opt_sp", "variance_ratio"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_row(design_id: str, design: Design, report: CriteriaReport) -> dict:
    return {
        "design_id": design_id, "n": design.n, "d": design.d, "n_wp": design.n_wp,
        "maximin": report.maximin, "phi_2": report.phi_p, "minimax_mc": report.minimax_mc,
        "mc_samples": report.mc_samples, "i_opt_iid": report.i_opt_iid,
        "i_opt_sp": report.i_opt_sp, "variance_ratio": report.variance_ratio,
    }


def format_row(row: dict, columns) -> str:
    return ",".join(_cell(row[c]) for c in columns)
