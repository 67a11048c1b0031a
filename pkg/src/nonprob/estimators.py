"""Sample matching, inverse sampling and doubly-robust post-stratification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, PopulationCells, ReferenceSample, assign_cells, stack_with_indicator, synthesize_reference
from .errors import InsufficientDonorsError, SampleSizeError, SchemaMismatchError, WeightError
from .glm import design_like, fit_outcome_model, predict
from .modelling import poststratify
from .weighting import Estimate, PropensityScores, estimate_propensity, ipw_weights


@dataclass(frozen=True)
class MatchedSet:
    pairs: list
    unmatched_sample_rows: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class Subsample:
    rows: np.ndarray
    draw_probs: np.ndarray


def one_hot(dataset: Dataset) -> np.ndarray:
    """Full one-hot encoding (every level gets a column)."""
    blocks = [np.eye(size)[dataset.codes[:, j]] for j, size in enumerate(dataset.schema.sizes)]
    return np.hstack(blocks) if blocks else np.zeros((dataset.n, 0))


def match_sample(nonprob: Dataset, reference: ReferenceSample):
    """Greedy sequential nearest-neighbour matching without replacement.

    Reference rows are visited in order; each takes the closest sample row
    not yet used (Euclidean distance on one-hot covariates, ties to the
    lowest sample index). Unpaired sample rows are discarded and the estimate
    is the mean target of the matched rows.
    """
    ref = reference.dataset
    if nonprob.schema != ref.schema:
        raise SchemaMismatchError(nonprob.schema.diff(ref.schema))
    y = nonprob.require_target()
    if ref.n > nonprob.n:
        raise InsufficientDonorsError(f"reference has {ref.n} rows but the sample only {nonprob.n} donors")
    A = one_hot(nonprob)
    B = one_hot(ref)
    used = np.zeros(nonprob.n, dtype=bool)
    pairs = []
    for i in range(ref.n):
        d2 = np.sum((A - B[i]) ** 2, axis=1)
        d2[used] = np.inf
        j = int(np.argmin(d2))
        used[j] = True
        pairs.append((i, j, float(np.sqrt(d2[j]))))
    matched = np.array([p[1] for p in pairs], dtype=np.int64)
    value = float(np.mean(y[matched])) if len(matched) else float("nan")
    ms = MatchedSet(pairs, [int(k) for k in np.flatnonzero(~used)])
    dist = [p[2] for p in pairs]
    return ms, Estimate(value, "match", len(pairs), {"mean_distance": float(np.mean(dist)) if dist else 0.0,
                                                     "exact_matches": int(np.sum(np.array(dist) == 0))})


def cell_share_importance(sample: Dataset, cells: PopulationCells) -> np.ndarray:
    """Per-row ratio of population cell share to sample cell share."""
    cid = assign_cells(sample, cells.index)
    n_c = np.bincount(cid, minlength=len(cells.index))
    ratio = (cells.counts[cid] / cells.N) / (n_c[cid] / sample.n)
    return ratio


def inverse_sample(big: Dataset, importance, m: int, seed: int):
    """Draw ``m`` rows without replacement, each draw proportional to importance.

    Returns the :class:`Subsample` and the unweighted mean of its targets.
    """
    y = big.require_target()
    imp = np.asarray(importance, dtype=float)
    if imp.shape != (big.n,):
        raise WeightError(f"{imp.shape[0] if imp.ndim else 0} importance weights for {big.n} rows")
    if not np.all(np.isfinite(imp)) or np.any(imp <= 0):
        raise WeightError("importance weights must be finite and strictly positive")
    if not 1 <= m <= big.n:
        raise SampleSizeError(f"subsample size m={m} must lie in 1..{big.n}")
    p = imp / imp.sum()
    rng = np.random.default_rng(seed)
    rows = rng.choice(big.n, size=m, replace=False, p=p)
    sub = Subsample(rows, p[rows])
    return sub, Estimate(float(np.mean(y[rows])), "inverse", m)


def drp_estimate(nonprob: Dataset, cells: PopulationCells, reference: Optional[ReferenceSample] = None,
                 outcome_model: str = "main", propensity_model: str = "main",
                 reference_weighting: str = "calibrated", propensity_scale: str = "odds",
                 reference_scale: float = 1.0, scores: Optional[PropensityScores] = None) -> Estimate:
    """Doubly-robust post-stratification.

    Hajek-normalised inverse-propensity mean of the outcome-model residuals
    plus the post-stratified outcome-model prediction. When no reference is
    given one is synthesised from ``cells``.
    """
    y = nonprob.require_target()
    if scores is None:
        if reference is None:
            reference = synthesize_reference(cells, reference_scale)
        frame = stack_with_indicator(nonprob, reference)
        scores = estimate_propensity(frame, reference_weighting, propensity_scale,
                                     interactions=(propensity_model == "interactions"))
    inv = ipw_weights(scores)
    fit = fit_outcome_model(nonprob, outcome_model)
    yhat = predict(fit, design_like(fit, nonprob))
    correction = float(np.sum(inv * (y - yhat)) / np.sum(inv))
    ps_term = poststratify(fit, cells).value
    return Estimate(correction + ps_term, "drp", nonprob.n,
                    {"correction": correction, "poststrat": ps_term})
