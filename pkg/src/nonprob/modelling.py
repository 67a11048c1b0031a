"""Model-based estimation: post-stratification and cell-level partial pooling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, PopulationCells, assign_cells
from .errors import BetweenCellVarianceError, SchemaMismatchError
from .glm import FitResult, design_like, fit_outcome_model, predict
from .weighting import Estimate


@dataclass(frozen=True)
class CellEstimate:
    cell_id: int
    mu_c: float
    n_c: int
    sigma2_c: float
    N_c: int


@dataclass(frozen=True, eq=False)
class ShrinkageFactors:
    delta_c: np.ndarray
    sigma2_Y: float
    grand_mean: float
    sigma2_pooled: float = 0.0


def cell_predictions(fit: FitResult, cells: PopulationCells, scale: str = "response") -> np.ndarray:
    """Model prediction for every cell's covariate profile."""
    return predict(fit, design_like(fit, cells.index.as_dataset()), scale)


def poststratify(fit: FitResult, cells: PopulationCells, scale: str = "response") -> Estimate:
    """sum_c (N_c / N) * yhat_c.

    ``scale="link"`` applies the linear predictor without the inverse link,
    which for a logistic model is not a probability.
    """
    if cells.N < 1:
        raise ValueError("population cells are empty")
    yhat = cell_predictions(fit, cells, scale)
    value = float(np.sum(cells.counts * yhat) / cells.N)
    return Estimate(value, "poststrat", 0, {"scale": scale})


def cell_summaries(sample: Dataset, cells: PopulationCells, between: str = "population",
                   singleton: str = "pooled", grand: str = "population",
                   cell_means: Optional[np.ndarray] = None):
    """Per-cell means, variances and shrinkage factors.

    Parameters
    ----------
    between : {"population", "unweighted"}
        Weighting of cells in the between-cell variance of the cell means.
    singleton : {"pooled", "zero"}
        Within-cell variance used for cells with a single row when forming
        ``delta_c``: the pooled within-cell variance, or zero (no shrinkage).
    grand : {"population", "sample"}
        Pooling target: the N_c-weighted mean of observed cell means, or the
        plain sample mean.
    cell_means : array, optional
        Replacement for the raw cell means (e.g. model predictions per cell).

    Returns
    -------
    list of CellEstimate, ShrinkageFactors
    """
    if sample.schema != cells.schema:
        raise SchemaMismatchError(sample.schema.diff(cells.schema))
    y = sample.require_target()
    C = len(cells.index)
    cid = assign_cells(sample, cells.index)
    n_c = np.bincount(cid, minlength=C)
    sums = np.bincount(cid, weights=y, minlength=C)
    seen = n_c > 0
    if seen.sum() < 2:
        raise BetweenCellVarianceError(
            f"between-cell variance needs at least 2 populated cells, sample covers {int(seen.sum())}"
        )
    mu = np.divide(sums, n_c, out=np.full(C, np.nan), where=seen)
    if cell_means is not None:
        mu = np.where(seen, np.asarray(cell_means, dtype=float), np.nan)
    raw_mu = np.divide(sums, n_c, out=np.zeros(C), where=seen)
    ss = np.bincount(cid, weights=(y - raw_mu[cid]) ** 2, minlength=C)
    multi = n_c > 1
    s2 = np.divide(ss, n_c - 1, out=np.zeros(C), where=multi)
    dof = np.sum(n_c[multi] - 1)
    s2_pooled = float(ss[multi].sum() / dof) if dof > 0 else 0.0

    if between == "population":
        bw = cells.counts[seen].astype(float)
        if bw.sum() == 0:
            bw = np.ones(seen.sum())
    elif between == "unweighted":
        bw = np.ones(seen.sum())
    else:
        raise ValueError(f"unknown between-cell weighting {between!r}")
    Nw = cells.counts[seen].astype(float)
    if grand == "population":
        gm = float(np.sum(Nw * mu[seen]) / Nw.sum()) if Nw.sum() > 0 else float(np.mean(mu[seen]))
    elif grand == "sample":
        gm = float(np.mean(y))
    else:
        raise ValueError(f"unknown grand mean {grand!r}")
    bmean = float(np.sum(bw * mu[seen]) / bw.sum())
    s2_between = float(np.sum(bw * (mu[seen] - bmean) ** 2) / bw.sum())

    if singleton == "pooled":
        s2_eff = np.where(n_c <= 1, s2_pooled, s2)
    elif singleton == "zero":
        s2_eff = s2
    else:
        raise ValueError(f"unknown singleton rule {singleton!r}")
    delta = np.full(C, np.inf)
    if s2_between > 0:
        delta[seen] = s2_eff[seen] / (n_c[seen] * s2_between)
    else:
        delta[seen] = 0.0

    est = [
        CellEstimate(i, float(mu[i]) if seen[i] else float("nan"), int(n_c[i]), float(s2[i]), int(cells.counts[i]))
        for i in range(C)
    ]
    return est, ShrinkageFactors(delta, s2_between, gm, s2_pooled)


def pooled_cell_values(mu, delta, grand_mean) -> np.ndarray:
    """(mu_c + delta_c * grand) / (1 + delta_c); infinite delta gives the grand mean."""
    mu = np.asarray(mu, dtype=float)
    delta = np.asarray(delta, dtype=float)
    inf = np.isinf(delta)
    safe_mu = np.where(inf, 0.0, mu)
    safe_d = np.where(inf, 0.0, delta)
    return np.where(inf, grand_mean, (safe_mu + safe_d * grand_mean) / (1.0 + safe_d))


def mrp_estimate(sample: Dataset, cells: PopulationCells, between: str = "population",
                 singleton: str = "pooled", grand: str = "population", cell_model: str = "means") -> Estimate:
    """Population-weighted sum of cell means shrunk toward the grand mean.

    ``cell_model="means"`` uses raw sample cell means; ``"main"`` or
    ``"interactions"`` replace them by predictions of an outcome model.
    """
    cm = None
    if cell_model != "means":
        cm = cell_predictions(fit_outcome_model(sample, cell_model), cells)
    est, sh = cell_summaries(sample, cells, between, singleton, grand, cm)
    mu = np.array([e.mu_c for e in est])
    pooled = pooled_cell_values(mu, sh.delta_c, sh.grand_mean)
    value = float(np.sum(cells.counts * pooled) / cells.N)
    return Estimate(value, "mrp", sample.n, {
        "grand_mean": sh.grand_mean,
        "sigma2_between": sh.sigma2_Y,
        "empty_cells": int(np.sum([e.n_c == 0 and e.N_c > 0 for e in est])),
    })
