"""Estimator dispatch plus bootstrap and jackknife uncertainty."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import (
    Dataset,
    PopulationCells,
    PopulationMargins,
    ReferenceSample,
    margins_from_cells,
    stack_with_indicator,
    synthesize_reference,
)
from .errors import ConfigError, NonprobError, ReplicateFailure, UnstableResamplingError
from .estimators import cell_share_importance, drp_estimate, inverse_sample, match_sample
from .glm import fit_outcome_model
from .modelling import mrp_estimate, poststratify
from .weighting import (
    DEFAULT_TRIM,
    Estimate,
    RakingOptions,
    estimate_propensity,
    psipw_estimate,
    rake,
    weighted_mean,
)

METHODS = ("mean", "raking", "psipw", "poststrat", "mrp", "match", "inverse", "drp")

# option name -> default, per method
DEFAULT_OPTIONS = {
    "mean": {},
    "raking": {"trim": None, "max_iter": 1000, "tol": 1e-10},
    "psipw": {"normalization": "hajek", "propensity_model": "main", "reference_weighting": "calibrated",
              "propensity_scale": "odds", "reference_scale": 1.0},
    "poststrat": {"outcome_model": "main", "scale": "response"},
    "mrp": {"between": "population", "singleton": "pooled", "grand": "population", "cell_model": "means"},
    "match": {"match_fraction": 0.5},
    "inverse": {"fraction": 0.5},
    "drp": {"outcome_model": "main", "propensity_model": "main", "reference_weighting": "calibrated",
            "propensity_scale": "odds", "reference_scale": 1.0},
}

# allowed values for string-valued options
CHOICES = {
    "normalization": ("hajek", "paper"),
    "propensity_model": ("main", "interactions"),
    "outcome_model": ("intercept", "main", "interactions"),
    "reference_weighting": ("calibrated", "inverse", "literal"),
    "propensity_scale": ("odds", "probability"),
    "scale": ("response", "link"),
    "between": ("population", "unweighted"),
    "singleton": ("pooled", "zero"),
    "grand": ("population", "sample"),
    "cell_model": ("means", "main", "interactions"),
}

FAILURE_LIMIT = 0.2


@dataclass(frozen=True)
class EstimatorSpec:
    method: str
    options: dict = field(default_factory=dict)
    seed: int = 0
    label: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        unknown = set(self.options) - set(DEFAULT_OPTIONS[self.method])
        if unknown:
            raise ConfigError(f"unknown option(s) for {self.method}: {', '.join(sorted(unknown))}")
        for key, value in self.options.items():
            if key in CHOICES and value not in CHOICES[key]:
                raise ConfigError(f"option {key}={value!r}; choose from {', '.join(CHOICES[key])}")
        o = self.effective_options()
        for key in ("reference_scale", "match_fraction", "fraction"):
            if key in o and not (isinstance(o[key], (int, float)) and 0 < o[key] <= 1):
                raise ConfigError(f"option {key} must lie in (0, 1], got {o[key]!r}")
        trim = o.get("trim")
        if trim not in (None, True, False):
            try:
                low, high = (float(v) for v in trim)
            except (TypeError, ValueError):
                raise ConfigError(f"option trim must be a (low, high) pair, got {trim!r}") from None
            if not 0 < low <= high:
                raise ConfigError(f"option trim needs 0 < low <= high, got {trim!r}")

    @property
    def name(self) -> str:
        return self.label or self.method

    def effective_options(self) -> dict:
        opts = dict(DEFAULT_OPTIONS[self.method])
        opts.update(self.options)
        return opts


@dataclass(frozen=True)
class Auxiliary:
    """Census-side inputs, held fixed across resamples."""

    cells: Optional[PopulationCells] = None
    margins: Optional[PopulationMargins] = None
    reference: Optional[ReferenceSample] = None

    def get_margins(self) -> PopulationMargins:
        if self.margins is not None:
            return self.margins
        if self.cells is not None:
            return margins_from_cells(self.cells)
        raise ConfigError("raking needs population margins or cells")

    def require_cells(self, method) -> PopulationCells:
        if self.cells is None:
            raise ConfigError(f"{method} needs population cells")
        return self.cells

    def get_reference(self, method, scale) -> ReferenceSample:
        if self.reference is not None:
            return self.reference
        if self.cells is not None:
            return synthesize_reference(self.cells, scale)
        raise ConfigError(f"{method} needs population cells or a reference sample")


@dataclass(frozen=True)
class UncertaintyEstimate:
    point: float
    se: float
    ci_low: float
    ci_high: float
    replicates: tuple
    method: str
    B: int
    failures: int = 0


def run_estimator(spec: EstimatorSpec, sample: Dataset, aux: Auxiliary, seed: Optional[int] = None) -> Estimate:
    """Run one estimator end to end on ``sample``."""
    o = spec.effective_options()
    seed = spec.seed if seed is None else seed
    m = spec.method
    if m == "mean":
        y = sample.require_target()
        return Estimate(float(np.mean(y)), "mean", sample.n)
    if m == "raking":
        trim = o["trim"]
        if trim is True:
            trim = DEFAULT_TRIM
        w = rake(sample, aux.get_margins(), RakingOptions(o["max_iter"], o["tol"], tuple(trim) if trim else None))
        est = weighted_mean(sample, w)
        return Estimate(est.value, "raking", sample.n, {
            "margin_error": w.margin_error, "iterations": w.iterations,
            "weight_min": float(w.weights.min()), "weight_max": float(w.weights.max()),
        })
    if m == "psipw":
        ref = aux.get_reference(m, o["reference_scale"])
        frame = stack_with_indicator(sample, ref)
        ps = estimate_propensity(frame, o["reference_weighting"], o["propensity_scale"],
                                 interactions=o["propensity_model"] == "interactions")
        return psipw_estimate(sample, ps, o["normalization"])
    if m == "poststrat":
        fit = fit_outcome_model(sample, o["outcome_model"])
        est = poststratify(fit, aux.require_cells(m), o["scale"])
        return Estimate(est.value, "poststrat", sample.n, est.diagnostics)
    if m == "mrp":
        return mrp_estimate(sample, aux.require_cells(m), o["between"], o["singleton"], o["grand"], o["cell_model"])
    if m == "match":
        if aux.reference is not None:
            ref = aux.reference
        else:
            cells = aux.require_cells(m)
            ref = synthesize_reference(cells, min(1.0, o["match_fraction"] * sample.n / cells.N))
        _, est = match_sample(sample, ref)
        return est
    if m == "inverse":
        cells = aux.require_cells(m)
        size = max(1, int(round(o["fraction"] * sample.n)))
        _, est = inverse_sample(sample, cell_share_importance(sample, cells), size, seed)
        return est
    if m == "drp":
        cells = aux.require_cells(m)
        return drp_estimate(sample, cells, aux.reference, o["outcome_model"], o["propensity_model"],
                            o["reference_weighting"], o["propensity_scale"], o["reference_scale"])
    raise ConfigError(f"unknown method {m!r}")


def _replicate_seed(seed: int, b: int) -> int:
    return int(np.random.SeedSequence([seed, b]).generate_state(1)[0])


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def bootstrap(spec: EstimatorSpec, sample: Dataset, aux: Auxiliary, B: int = 1000, seed: int = 42,
              n_jobs: int = 1) -> UncertaintyEstimate:
    """Nonparametric row bootstrap with percentile intervals.

    Replicate ``b`` resamples rows with a generator seeded by ``(seed, b)``,
    so results do not depend on ``n_jobs``. Failed replicates are dropped and
    counted; more than 20% failures raise :class:`UnstableResamplingError`.
    """
    if B < 2:
        raise ConfigError("bootstrap needs B >= 2")
    point = run_estimator(spec, sample, aux).value
    n = sample.n

    def one(b):
        rng = np.random.default_rng([seed, b])
        idx = rng.integers(0, n, size=n)
        try:
            return run_estimator(spec, sample.take(idx), aux, seed=_replicate_seed(spec.seed, b)).value
        except NonprobError:
            return None

    reps = _map(one, range(B), n_jobs)
    ok = np.array([r for r in reps if r is not None], dtype=float)
    failures = B - len(ok)
    if failures > FAILURE_LIMIT * B:
        raise UnstableResamplingError(
            f"{failures} of {B} bootstrap replicates failed for {spec.name}", failures, B
        )
    se = float(np.std(ok, ddof=1)) if len(ok) > 1 else 0.0
    lo, hi = np.percentile(ok, [2.5, 97.5])
    return UncertaintyEstimate(point, se, float(lo), float(hi), tuple(ok.tolist()), "bootstrap", B, failures)


def jackknife(spec: EstimatorSpec, sample: Dataset, aux: Auxiliary, n_jobs: int = 1) -> UncertaintyEstimate:
    """Delete-one jackknife with a normal-approximation 95% interval."""
    n = sample.n
    if n < 2:
        raise ConfigError("jackknife needs n >= 2")
    point = run_estimator(spec, sample, aux).value
    keep = np.arange(n)

    def one(i):
        try:
            return run_estimator(spec, sample.take(np.delete(keep, i)), aux, seed=_replicate_seed(spec.seed, i)).value
        except NonprobError as exc:
            raise ReplicateFailure(i, exc) from exc

    reps = np.array(_map(one, range(n), n_jobs), dtype=float)
    se = float(np.sqrt((n - 1) / n * np.sum((reps - reps.mean()) ** 2)))
    return UncertaintyEstimate(point, se, point - 1.96 * se, point + 1.96 * se, tuple(reps.tolist()),
                               "jackknife", n, 0)
