"""Calibration (raking) weights and propensity-score weighting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import CombinedFrame, Dataset, PopulationMargins
from .errors import (
    ConvergenceError,
    DegenerateOutcomeError,
    InfeasibleMarginsError,
    SchemaMismatchError,
    TrimInfeasibleError,
    UnstablePropensityError,
    WeightError,
)
from .glm import FitResult, encode_design, fit_weighted_logistic, predict

PROPENSITY_FLOOR = 1e-6
DEFAULT_TRIM = (0.2, 5.0)


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray
    normalized: bool = True
    iterations: int = 0
    margin_error: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if np.any(~(w > 0)):
            raise WeightError("weights must be strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class PropensityScores:
    scores: np.ndarray
    model: Optional[FitResult] = None
    scale: str = "odds"


@dataclass(frozen=True)
class Estimate:
    value: float
    method: str
    n_used: int
    diagnostics: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class RakingOptions:
    max_iter: int = 1000
    tol: float = 1e-10
    trim_bounds: Optional[tuple] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.trim_bounds is not None:
            low, high = self.trim_bounds
            if not 0 < low <= high:
                raise ValueError(f"trim bounds must satisfy 0 < low <= high, got {self.trim_bounds}")


def _raking_targets(sample: Dataset, margins: PopulationMargins):
    if sample.schema != margins.schema:
        raise SchemaMismatchError(sample.schema.diff(margins.schema))
    n = sample.n
    if n == 0:
        raise InfeasibleMarginsError("cannot rake an empty sample")
    targets = []
    for j, (name, levels) in enumerate(sample.schema.variables):
        t = margins.totals[j] / margins.N * n
        counts = np.bincount(sample.codes[:, j], minlength=len(levels))
        for k, lv in enumerate(levels):
            if t[k] > 0 and counts[k] == 0:
                raise InfeasibleMarginsError(
                    f"level {name}={lv} has population total {margins.totals[j][k]:g} but no sample rows"
                )
            if t[k] == 0 and counts[k] > 0:
                raise InfeasibleMarginsError(
                    f"level {name}={lv} has zero population total but {counts[k]} sample rows"
                )
        targets.append(t)
    return targets


def _margin_error(codes, w, targets) -> float:
    err = 0.0
    for j, t in enumerate(targets):
        sums = np.bincount(codes[:, j], weights=w, minlength=len(t))
        pos = t > 0
        err = max(err, float(np.max(np.abs(sums[pos] - t[pos]) / t[pos])))
    return err


def rake(sample: Dataset, margins: PopulationMargins, opts: Optional[RakingOptions] = None,
         initial=None) -> WeightVector:
    """Iterative proportional fitting to population margins.

    Each level's weighted count is matched to its population share times n,
    so the returned weights sum to n. Variables are adjusted in schema order.
    If ``opts.trim_bounds`` is set the raked weights are then trimmed.
    """
    opts = opts or RakingOptions()
    targets = _raking_targets(sample, margins)
    codes = sample.codes
    w = np.ones(sample.n) if initial is None else np.array(initial, dtype=float)
    err = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        for j, t in enumerate(targets):
            sums = np.bincount(codes[:, j], weights=w, minlength=len(t))
            ratio = np.divide(t, sums, out=np.ones_like(t), where=sums > 0)
            w = w * ratio[codes[:, j]]
        err = _margin_error(codes, w, targets)
        if err <= opts.tol:
            break
    else:
        raise ConvergenceError(
            f"raking did not converge in {opts.max_iter} iterations (max relative margin error {err:.3g})",
            final_error=err,
        )
    w = w * (sample.n / w.sum())
    out = WeightVector(w, True, it, err)
    if opts.trim_bounds is not None:
        out = trim_weights(out, *opts.trim_bounds, sample, margins, RakingOptions(opts.max_iter, opts.tol))
    return out


def trim_weights(w: WeightVector, low: float, high: float, sample: Dataset, margins: PopulationMargins,
                 opts: Optional[RakingOptions] = None, max_rounds: int = 500, rtol: float = 1e-6) -> WeightVector:
    """Alternate clamping to ``[low, high]`` and re-raking until nothing is clamped.

    The result is calibrated to the margins and lies inside the bounds up to
    a relative slack of ``rtol``.
    """
    if not 0 < low <= high:
        raise ValueError(f"trim bounds must satisfy 0 < low <= high, got ({low}, {high})")
    opts = opts or RakingOptions()
    cur = np.asarray(w.weights, dtype=float)
    iters, err = w.iterations, w.margin_error
    for _ in range(max_rounds):
        if cur.min() >= low * (1 - rtol) and cur.max() <= high * (1 + rtol):
            return WeightVector(cur, True, iters, err)
        clamped = np.clip(cur, low, high)
        try:
            raked = rake(sample, margins, RakingOptions(opts.max_iter, opts.tol), initial=clamped)
        except ConvergenceError as exc:
            raise TrimInfeasibleError(f"re-raking failed while trimming: {exc}") from exc
        cur, iters, err = np.asarray(raked.weights), raked.iterations, raked.margin_error
    raise TrimInfeasibleError(
        f"weights could not be calibrated inside [{low}, {high}] after {max_rounds} trimming rounds "
        f"(range {cur.min():.4g}..{cur.max():.4g})"
    )


def weighted_mean(sample: Dataset, w: WeightVector, method: str = "raking") -> Estimate:
    """(1/n) * sum(y_j w_j)."""
    y = sample.require_target()
    ww = np.asarray(w.weights)
    if ww.shape != y.shape:
        raise WeightError(f"{len(ww)} weights for {len(y)} rows")
    return Estimate(float(np.sum(y * ww) / sample.n), method, sample.n)


def estimate_propensity(frame: CombinedFrame, reference_weighting: str = "calibrated", scale: str = "odds",
                        interactions: bool = False) -> PropensityScores:
    """Weighted logistic regression of membership S on the covariates.

    Returns scores for the S=1 rows. With ``scale="probability"`` the score
    is the fitted P(S=1|x). With ``scale="odds"`` it is the fitted odds
    P(S=1|x)/P(S=0|x): when the reference stands for the whole population
    (sampled units included) that odds is the inclusion probability itself.
    Scores are clipped to ``[1e-6, 1 - 1e-6]``.
    """
    if frame.S.min(initial=1) == frame.S.max(initial=0):
        raise DegenerateOutcomeError("stacked frame needs both sample (S=1) and reference (S=0) rows")
    X = encode_design(frame.dataset, interactions=interactions)
    w = frame.regression_weights(reference_weighting)
    fit = fit_weighted_logistic(X, frame.S, w)
    eta = predict(fit, X, "link")[frame.S == 1]
    if scale == "probability":
        p = 1.0 / (1.0 + np.exp(-eta))
    elif scale == "odds":
        p = np.exp(np.minimum(eta, 0.0))
    else:
        raise ValueError(f"unknown propensity scale {scale!r}")
    p = np.clip(p, PROPENSITY_FLOOR, 1 - PROPENSITY_FLOOR)
    return PropensityScores(p, fit, scale)


def ipw_weights(ps: PropensityScores) -> np.ndarray:
    p = np.asarray(ps.scores, dtype=float)
    if np.any(~(p > PROPENSITY_FLOOR)):
        raise UnstablePropensityError(
            f"{int(np.sum(~(p > PROPENSITY_FLOOR)))} propensity scores at or below {PROPENSITY_FLOOR}"
        )
    if np.any(p >= 1):
        raise UnstablePropensityError("propensity scores must be below 1")
    return 1.0 / p


def psipw_estimate(sample: Dataset, ps: PropensityScores, normalization: str = "hajek") -> Estimate:
    """Inverse-propensity weighted mean.

    ``paper``: (1/n) sum y/pi. ``hajek``: sum(y/pi) / sum(1/pi).
    """
    y = sample.require_target()
    inv = ipw_weights(ps)
    if inv.shape != y.shape:
        raise WeightError(f"{len(inv)} propensity scores for {len(y)} rows")
    paper = float(np.sum(y * inv) / sample.n)
    hajek = float(np.sum(y * inv) / np.sum(inv))
    if normalization == "hajek":
        value = hajek
    elif normalization == "paper":
        value = paper
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return Estimate(value, "psipw", sample.n, {"hajek": hajek, "paper": paper,
                                                "propensity_min": float(np.min(ps.scores)),
                                                "propensity_max": float(np.max(ps.scores))})
