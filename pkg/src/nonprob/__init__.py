"""Selection-bias correction for non-probability samples."""

from .data import (
    CellIndex,
    CombinedFrame,
    CovariateSchema,
    Dataset,
    PopulationCells,
    PopulationMargins,
    ReferenceSample,
    assign_cells,
    build_cell_index,
    common_support_report,
    margins_from_cells,
    stack_with_indicator,
    synthesize_reference,
)
from .estimators import drp_estimate, inverse_sample, match_sample
from .glm import encode_design, fit_weighted_logistic, fit_wls, predict
from .modelling import cell_summaries, mrp_estimate, poststratify
from .uncertainty import Auxiliary, EstimatorSpec, bootstrap, jackknife, run_estimator
from .weighting import (
    Estimate,
    RakingOptions,
    WeightVector,
    estimate_propensity,
    psipw_estimate,
    rake,
    trim_weights,
    weighted_mean,
)

__version__ = "0.1.0"
