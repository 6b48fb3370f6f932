"""Cantilever beam test function and the quadratic/logistic prediction study.

Inputs are coded on [-1, 1]^4 in the order (R, E, X, Y). R is listed with
the input ranges but does not enter the displacement formula, so it acts
as an inert factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .core import STREAM_VALIDATION, Design, make_rng
from .criteria import RsmBasis

LENGTH = 100.0
WIDTH = 4.0
THICKNESS = 2.0
D0 = 2.2535  # listed with the constants; not used by either response
PASS_THRESHOLD = 4.3

RANGES = {
    "R": (36000.0, 44000.0),
    "E": (2.61e7, 3.19e7),
    "X": (300.0, 700.0),
    "Y": (800.0, 1200.0),
}
FACTORS = ("R", "E", "X", "Y")

CONVERGED = "converged"
ITERATION_CAPPED = "iteration-capped"
SEPARABLE = "separable-detected"
LEAST_SQUARES = "least-squares"
LOGISTIC = "logistic"


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CantileverPoint:
    R: float
    E: float
    X: float
    Y: float

    def __post_init__(self):
        for name in FACTORS:
            lo, hi = RANGES[name]
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")


def to_physical_array(u) -> np.ndarray:
    """Map coded (m, 4) inputs to physical (R, E, X, Y) columns."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != 4:
        raise ValueError(f"expected 4 coded inputs, got {u.shape[1]}")
    if np.any(np.abs(u) > 1.0):
        raise ValueError("coded inputs must lie in [-1, 1]")
    lo = np.array([RANGES[f][0] for f in FACTORS])
    hi = np.array([RANGES[f][1] for f in FACTORS])
    return lo + (u + 1.0) / 2.0 * (hi - lo)


def to_physical(u) -> CantileverPoint:
    return CantileverPoint(*to_physical_array(u)[0])


def displacement(E, X, Y) -> np.ndarray:
    """Vectorized tip displacement ``4 L^3/(E w t) * sqrt((Y/t^2)^2 + (X/w^2)^2)``."""
    E, X, Y = (np.asarray(a, dtype=float) for a in (E, X, Y))
    return 4.0 * LENGTH ** 3 / (E * WIDTH * THICKNESS) * np.hypot(Y / THICKNESS ** 2, X / WIDTH ** 2)


def cantilever_displacement(pt: CantileverPoint) -> float:
    return float(displacement(pt.E, pt.X, pt.Y))


def passfail_from_displacement(D) -> np.ndarray:
    """Sigmoid of (D - 4.3) rounded half-up, i.e. 1 iff D >= 4.3."""
    z = np.asarray(D, dtype=float) - PASS_THRESHOLD
    prob = 0.5 * (1.0 + np.tanh(0.5 * z))
    return np.floor(prob + 0.5).astype(int)


def cantilever_passfail(pt: CantileverPoint) -> int:
    return int(passfail_from_displacement(cantilever_displacement(pt)))


def coded_displacement(u) -> np.ndarray:
    phys = to_physical_array(u)
    return displacement(phys[:, 1], phys[:, 2], phys[:, 3])


def coded_passfail(u) -> np.ndarray:
    return passfail_from_displacement(coded_displacement(u))


# --- model fitting -------------------------------------------------------------

@dataclass
class FitResult:
    coefficients: np.ndarray
    model_kind: str
    convergence: str
    basis: RsmBasis
    train_design_id: str = ""
    iterations: int = 0
    deviance_trace: list = field(default_factory=list)

    def linear_predictor(self, x) -> np.ndarray:
        return self.basis.expand(np.atleast_2d(x)) @ self.coefficients

    def predict(self, x) -> np.ndarray:
        eta = self.linear_predictor(x)
        if self.model_kind == LOGISTIC:
            return _expit(eta)
        return eta


def _expit(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


def _points(design) -> np.ndarray:
    pts = design.points if isinstance(design, Design) else design
    pts = np.asarray(pts, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def _check_rank(X: np.ndarray, basis: RsmBasis):
    n, p = X.shape
    if n < p:
        raise RankDeficientError(f"{n} runs cannot identify {p} model terms")
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps * 1e3
    rank = int(np.sum(diag > tol))
    if rank < p:
        names = basis.names()
        dropped = [names[k] for k in sorted(piv[rank:])]
        raise RankDeficientError(
            f"model matrix has rank {rank} < {p}; collinear terms: {', '.join(dropped)}")


def fit_ols_quadratic(design, responses, quadratic: bool = True, design_id: str = "") -> FitResult:
    """Least-squares fit of the response surface model.

    Raises
    ------
    RankDeficientError
        Naming the terms that cannot be separated from the rest.
    """
    pts = _points(design)
    basis = RsmBasis(pts.shape[1], quadratic)
    X = basis.expand(pts)
    _check_rank(X, basis)
    beta, *_ = np.linalg.lstsq(X, np.asarray(responses, dtype=float), rcond=None)
    return FitResult(beta, LEAST_SQUARES, CONVERGED, basis, design_id)


def _deviance(X, y, beta) -> float:
    eta = X @ beta
    # -2 log-likelihood, stable for large |eta|
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))


def fit_logistic_irls(design, labels, quadratic: bool = True, design_id: str = "",
                      max_iter: int = 100, tol: float = 1e-8,
                      separation_bound: float = 30.0) -> FitResult:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Newton steps are halved until the deviance does not increase. The fit
    stops when the gradient max-norm drops to ``tol``, after ``max_iter``
    iterations, or once a coefficient exceeds ``separation_bound`` in
    magnitude while the deviance is still falling (perfect separation).
    """
    pts = _points(design)
    y = np.asarray(labels, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise ValueError("all labels are identical; logistic fit is undefined")
    basis = RsmBasis(pts.shape[1], quadratic)
    X = basis.expand(pts)
    _check_rank(X, basis)

    beta = np.zeros(basis.p)
    dev = _deviance(X, y, beta)
    trace = [dev]
    status = ITERATION_CAPPED
    it = 0
    for it in range(1, max_iter + 1):
        mu = _expit(X @ beta)
        grad = X.T @ (y - mu)
        if np.max(np.abs(grad)) <= tol:
            status = CONVERGED
            it -= 1
            break
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        step, *_ = np.linalg.lstsq(X * np.sqrt(w)[:, None], (y - mu) / np.sqrt(w), rcond=None)
        t = 1.0
        while True:
            cand = beta + t * step
            new_dev = _deviance(X, y, cand)
            if new_dev <= dev or t < 1e-10:
                break
            t *= 0.5
        if new_dev > dev:
            status = CONVERGED  # no descent direction left at machine precision
            break
        decreasing = new_dev < dev
        beta, dev = cand, new_dev
        trace.append(dev)
        if decreasing and np.max(np.abs(beta)) > separation_bound:
            status = SEPARABLE
            break
    return FitResult(beta, LOGISTIC, status, basis, design_id, iterations=it, deviance_trace=trace)


def logistic_standard_errors(fit: FitResult, design) -> np.ndarray:
    X = fit.basis.expand(_points(design))
    mu = _expit(X @ fit.coefficients)
    H = X.T @ (X * (mu * (1 - mu))[:, None])
    return np.sqrt(np.diag(np.linalg.inv(H)))


# --- validation ----------------------------------------------------------------

def validation_set(m: int, d: int = 4, seed: int = 0) -> np.ndarray:
    """``m`` uniform coded points on a dedicated sub-stream of ``seed``."""
    return make_rng(seed, STREAM_VALIDATION).uniform(-1.0, 1.0, size=(int(m), d))


def evaluate_predictions(fit: FitResult, validation, truth_fn: Optional[Callable] = None) -> dict:
    """Score a fit on validation points.

    Least-squares fits get the RMSE against ``truth_fn`` (default: coded
    cantilever displacement); logistic fits get the accuracy at probability
    threshold 0.5 against ``truth_fn`` (default: coded pass/fail).
    """
    v = np.atleast_2d(np.asarray(validation, dtype=float))
    if fit.model_kind == LEAST_SQUARES:
        truth = (truth_fn or coded_displacement)(v)
        err = fit.predict(v) - truth
        return {"rmse": float(math.sqrt(np.mean(err ** 2))), "validation_m": len(v)}
    truth = (truth_fn or coded_passfail)(v)
    pred = (fit.linear_predictor(v) >= 0.0).astype(int)
    return {"accuracy": float(np.mean(pred == truth)), "validation_m": len(v)}
