"""Weighted linear and logistic regression on dummy-coded categorical designs."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.special import expit

from .data import Dataset
from .errors import (
    DegenerateOutcomeError,
    DesignMismatchError,
    SeparationError,
    SingularDesignError,
    WeightError,
)

MAX_ITER = 100
TOL = 1e-8
SEPARATION_BOUND = 30.0


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple
    reference_levels: dict
    interactions: bool = False

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray
    family: str
    converged: bool
    iterations: int
    final_gradient_norm: float
    column_names: tuple = ()
    interactions: bool = False

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])


def _dummy_blocks(dataset: Dataset):
    blocks = []
    for j, (name, levels) in enumerate(dataset.schema.variables):
        codes = dataset.codes[:, j]
        for k in range(1, len(levels)):
            blocks.append((f"{name}[{levels[k]}]", j, (codes == k).astype(float)))
    return blocks


def encode_design(dataset: Dataset, interactions: bool = False) -> DesignMatrix:
    """Intercept plus treatment-coded dummies (first level dropped).

    With ``interactions`` all pairwise products of dummies from different
    variables are appended, named ``a[x]:b[y]``.
    """
    blocks = _dummy_blocks(dataset)
    names = ["(Intercept)"] + [b[0] for b in blocks]
    cols = [np.ones(dataset.n)] + [b[2] for b in blocks]
    if interactions:
        for (n1, v1, c1), (n2, v2, c2) in combinations(blocks, 2):
            if v1 != v2:
                names.append(f"{n1}:{n2}")
                cols.append(c1 * c2)
    values = np.column_stack(cols) if dataset.n else np.zeros((0, len(cols)))
    refs = {name: levels[0] for name, levels in dataset.schema.variables}
    return DesignMatrix(values, tuple(names), refs, interactions)


def _check_weights(w, n):
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise WeightError(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise WeightError("weights must be finite and strictly positive")
    return w


def _check_rank(X: DesignMatrix, w):
    A = X.values * np.sqrt(w)[:, None]
    _, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        raise SingularDesignError(X.column_names)
    tol = max(A.shape) * np.finfo(float).eps * diag[0]
    rank = int(np.sum(diag > tol))
    if rank < A.shape[1]:
        raise SingularDesignError([X.column_names[i] for i in piv[rank:]])


def fit_wls(X: DesignMatrix, y, w=None) -> FitResult:
    """Weighted least squares: minimise sum w (y - X b)^2."""
    y = np.asarray(y, dtype=float)
    n, k = X.values.shape
    if y.shape != (n,):
        raise DesignMismatchError(f"y has shape {y.shape}, design has {n} rows")
    w = np.ones(n) if w is None else _check_weights(w, n)
    _check_rank(X, w)
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X.values * sw[:, None], y * sw, rcond=None)
    grad = X.values.T @ (w * (y - X.values @ beta))
    return FitResult(beta, "linear", True, 1, float(np.linalg.norm(grad)),
                     X.column_names, X.interactions)


def logistic_loglik(beta, X, s, w) -> float:
    """Weighted Bernoulli log-likelihood."""
    eta = np.asarray(X) @ beta
    return float(np.sum(w * (s * eta - np.logaddexp(0.0, eta))))


def logistic_score(beta, X, s, w) -> np.ndarray:
    X = np.asarray(X)
    return X.T @ (w * (s - expit(X @ beta)))


def fit_weighted_logistic(X: DesignMatrix, s, w=None, max_iter: int = MAX_ITER, tol: float = TOL,
                          separation_bound: float = SEPARATION_BOUND) -> FitResult:
    """Maximise the weighted Bernoulli likelihood by IRLS (Newton) with step-halving.

    Stops when the largest coefficient change or the weighted score norm
    drops below ``tol``; in the latter case the pending Newton step is
    still applied. Raises :class:`SeparationError` once any
    coefficient exceeds ``separation_bound`` in absolute value.
    """
    A = X.values
    s = np.asarray(s, dtype=float)
    n, k = A.shape
    if s.shape != (n,):
        raise DesignMismatchError(f"outcome has shape {s.shape}, design has {n} rows")
    if not np.all((s == 0) | (s == 1)):
        raise DegenerateOutcomeError("logistic outcome must be 0/1")
    if s.min(initial=1) == s.max(initial=0):
        raise DegenerateOutcomeError("logistic outcome contains a single class")
    w = np.ones(n) if w is None else _check_weights(w, n)
    _check_rank(X, w)

    beta = np.zeros(k)
    ll = logistic_loglik(beta, A, s, w)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(A @ beta)
        grad = A.T @ (w * (s - p))
        # a small score still gets this last Newton step, which is nearly free
        small_score = np.linalg.norm(grad) < tol
        H = (A * (w * p * (1 - p))[:, None]).T @ A
        try:
            step = scipy.linalg.solve(H, grad, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            raise SeparationError("information matrix became singular; fitted probabilities at 0 or 1") from None
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            ll_new = logistic_loglik(cand, A, s, w)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        delta = np.max(np.abs(cand - beta))
        beta, ll = cand, ll_new
        if np.max(np.abs(beta)) > separation_bound:
            worst = X.column_names[int(np.argmax(np.abs(beta)))]
            raise SeparationError(
                f"coefficient {worst!r} exceeded {separation_bound} in magnitude; the classes are (quasi-)separated"
            )
        if small_score or delta < tol:
            converged = True
            break
    gnorm = float(np.linalg.norm(logistic_score(beta, A, s, w)))
    return FitResult(beta, "logistic", converged, it, gnorm, X.column_names, X.interactions)


def predict(fit: FitResult, X: DesignMatrix, scale: str = "response") -> np.ndarray:
    if tuple(X.column_names) != tuple(fit.column_names):
        raise DesignMismatchError(
            f"design columns {list(X.column_names)} do not match fitted columns {list(fit.column_names)}"
        )
    eta = X.values @ fit.coefficients
    if scale == "link" or fit.family == "linear":
        return eta
    if scale == "response":
        return expit(eta)
    raise ValueError(f"unknown scale {scale!r}")


def fit_outcome_model(sample: Dataset, model: str = "main", family: Optional[str] = None) -> FitResult:
    """Regress the target on the covariates.

    ``model`` is ``intercept``, ``main`` (main effects) or ``interactions``
    (main effects plus pairwise interactions). ``family`` defaults to
    logistic for 0/1 targets and linear otherwise.
    """
    y = sample.require_target()
    family = family or ("logistic" if sample.is_binary else "linear")
    X = encode_design(sample, interactions=(model == "interactions"))
    if model == "intercept":
        X = DesignMatrix(X.values[:, :1], X.column_names[:1], X.reference_levels, False)
    elif model not in ("main", "interactions"):
        raise ValueError(f"unknown outcome model {model!r}")
    if family == "logistic":
        return fit_weighted_logistic(X, y)
    return fit_wls(X, y)


def design_like(fit: FitResult, dataset: Dataset) -> DesignMatrix:
    """Encode ``dataset`` with the same column layout as ``fit``."""
    X = encode_design(dataset, interactions=fit.interactions)
    if len(fit.column_names) == 1 and fit.column_names[0] == "(Intercept)":
        X = DesignMatrix(X.values[:, :1], X.column_names[:1], X.reference_levels, False)
    return X
