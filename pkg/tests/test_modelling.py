import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonprob.data import CovariateSchema, Dataset, PopulationCells, assign_cells, build_cell_index
from nonprob.errors import BetweenCellVarianceError
from nonprob.glm import FitResult, fit_outcome_model
from nonprob.modelling import cell_summaries, mrp_estimate, pooled_cell_values, poststratify

from conftest import make_dataset

S1 = CovariateSchema([("c", ["a", "b"])])
S2 = CovariateSchema([("g", ["m", "f"]), ("a", ["y", "m", "o"])])


def intercept_fit(b0, family="linear", names=("(Intercept)", "c[b]"), b1=0.0):
    return FitResult(np.array([b0, b1]), family, True, 0, 0.0, names)


# post-stratification ----------------------------------------------------------

def test_poststrat_single_cell():
    cells = PopulationCells.from_mapping(S1, {("b",): 900})
    fit = intercept_fit(0.1, b1=0.25)
    assert poststratify(fit, cells).value == pytest.approx(0.35, abs=1e-15)


def test_poststrat_two_equal_cells():
    cells = PopulationCells.from_mapping(S1, {("a",): 50, ("b",): 50})
    assert poststratify(intercept_fit(0.2, b1=0.4), cells).value == pytest.approx(0.4, abs=1e-15)


@given(st.floats(-5, 5), st.lists(st.integers(0, 1000), min_size=2, max_size=2).filter(lambda c: sum(c) > 0))
def test_poststrat_constant_predictions(c, counts):
    cells = PopulationCells(build_cell_index(S1), counts)
    assert poststratify(intercept_fit(c), cells).value == pytest.approx(c, abs=1e-12)


def test_poststrat_link_scale_is_literal_linear_predictor():
    cells = PopulationCells.from_mapping(S1, {("a",): 50, ("b",): 50})
    fit = intercept_fit(0.0, "logistic", b1=2.0)
    assert poststratify(fit, cells, "link").value == pytest.approx(1.0)
    assert poststratify(fit, cells).value == pytest.approx((0.5 + 1 / (1 + np.exp(-2))) / 2)


@given(st.integers(0, 2**32 - 1))
def test_poststrat_saturated_proportional_cells_gives_sample_mean(seed):
    rng = np.random.default_rng(seed)
    d = make_dataset(S2, rng, 120, target="real")
    counts = np.bincount(assign_cells(d, build_cell_index(S2)), minlength=6)
    if np.any(counts == 0):
        return
    cells = PopulationCells(build_cell_index(S2), 7 * counts)
    fit = fit_outcome_model(d, "interactions")
    assert poststratify(fit, cells).value == pytest.approx(d.target.mean(), abs=1e-10)


# cell summaries ---------------------------------------------------------------

def test_identical_y_gives_zero_variance_and_delta():
    d = Dataset.from_rows(S1, [("a",), ("a",), ("b",), ("b",)], [1.0, 1.0, 1.0, 1.0])
    est, sh = cell_summaries(d, PopulationCells.from_mapping(S1, {("a",): 5, ("b",): 5}))
    assert [e.sigma2_c for e in est] == [0.0, 0.0]
    assert sh.sigma2_Y == 0
    assert np.all(sh.delta_c == 0)


def test_singleton_cell_conventions():
    d = Dataset.from_rows(S1, [("a",), ("a",), ("a",), ("b",)], [0.0, 1.0, 1.0, 0.0])
    cells = PopulationCells.from_mapping(S1, {("a",): 5, ("b",): 5})
    est, zero = cell_summaries(d, cells, singleton="zero")
    assert est[1].n_c == 1 and est[1].sigma2_c == 0.0
    assert zero.delta_c[1] == 0.0
    _, pooled = cell_summaries(d, cells)
    # pooled within-cell variance comes from cell a alone: 1/3
    assert pooled.sigma2_pooled == pytest.approx(1 / 3)
    assert pooled.delta_c[1] == pytest.approx((1 / 3) / (1 * pooled.sigma2_Y))


def test_delta_substitution():
    c = np.sqrt(3) / 2
    m1, m2 = np.sqrt(2), 0.0
    y = np.r_[m1 + c * np.array([-1, -1, 1, 1]), m2 - 1, m2 + 1]
    d = Dataset.from_rows(S1, [("a",)] * 4 + [("b",)] * 2, y)
    est, sh = cell_summaries(d, PopulationCells.from_mapping(S1, {("a",): 10, ("b",): 10}))
    assert est[0].sigma2_c == pytest.approx(1.0, abs=1e-14)
    assert sh.sigma2_Y == pytest.approx(0.5, abs=1e-14)
    assert sh.delta_c[0] == pytest.approx(0.5, abs=1e-14)


def test_between_weighting_options():
    d = Dataset.from_rows(S1, [("a",), ("a",), ("b",), ("b",)], [0.0, 0.0, 1.0, 1.0])
    cells = PopulationCells.from_mapping(S1, {("a",): 10, ("b",): 30})
    _, pop = cell_summaries(d, cells)
    _, unw = cell_summaries(d, cells, between="unweighted")
    assert pop.sigma2_Y == pytest.approx(0.25 * 0.75)
    assert unw.sigma2_Y == pytest.approx(0.25)
    assert pop.grand_mean == pytest.approx(0.75)


def test_needs_two_populated_cells():
    d = Dataset.from_rows(S1, [("a",), ("a",)], [0.0, 1.0])
    with pytest.raises(BetweenCellVarianceError):
        cell_summaries(d, PopulationCells.from_mapping(S1, {("a",): 5, ("b",): 5}))


@given(st.integers(0, 2**32 - 1))
def test_delta_formula(seed):
    rng = np.random.default_rng(seed)
    d = make_dataset(S2, rng, int(rng.integers(10, 80)), target="real")
    cells = PopulationCells(build_cell_index(S2), rng.integers(1, 100, 6))
    try:
        est, sh = cell_summaries(d, cells, singleton="zero")
    except BetweenCellVarianceError:
        return
    for e, dl in zip(est, sh.delta_c):
        if e.n_c > 0:
            assert dl == pytest.approx(e.sigma2_c / (e.n_c * sh.sigma2_Y), rel=1e-12)
        else:
            assert np.isinf(dl)


# pooling ----------------------------------------------------------------------

def test_hand_substitution():
    v = pooled_cell_values([0.6], [0.5], 0.4)
    assert abs(v[0] - 0.8 / 1.5) <= 1e-12
    assert abs(v[0] - 0.5333333333333333) <= 1e-12


def test_pooling_limits():
    mu = np.array([0.2, 0.9, 0.5])
    assert np.array_equal(pooled_cell_values(mu, np.zeros(3), 0.4), mu)
    far = pooled_cell_values(mu, np.full(3, 1e12), 0.4)
    assert np.allclose(far, 0.4, atol=1e-11)
    assert pooled_cell_values([np.nan], [np.inf], 0.4)[0] == 0.4


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1e6), st.floats(0, 1e6))
def test_convex_and_monotone(mu, g, d1, d2):
    lo, hi = sorted((d1, d2))
    a, b = pooled_cell_values([mu, mu], [lo, hi], g)
    assert min(mu, g) - 1e-15 <= a <= max(mu, g) + 1e-15
    assert abs(b - g) <= abs(a - g) + 1e-15


@given(st.integers(0, 2**32 - 1))
def test_mrp_inside_pooled_range(seed):
    rng = np.random.default_rng(seed)
    d = make_dataset(S2, rng, int(rng.integers(6, 60)))
    cells = PopulationCells(build_cell_index(S2), rng.integers(1, 100, 6))
    try:
        est, sh = cell_summaries(d, cells)
    except BetweenCellVarianceError:
        return
    mu = np.array([e.mu_c for e in est])
    pooled = pooled_cell_values(mu, sh.delta_c, sh.grand_mean)
    value = mrp_estimate(d, cells).value
    assert pooled.min() - 1e-12 <= value <= pooled.max() + 1e-12


def test_no_pooling_limit_matches_cell_mean_poststrat(rng):
    # constant outcome within each cell makes every delta exactly 0
    index = build_cell_index(S2)
    levels = rng.normal(size=6)
    cid = np.r_[np.arange(6), rng.integers(0, 6, 40)]
    d = Dataset(S2, index.codes[cid], levels[cid])
    cells = PopulationCells(index, rng.integers(10, 500, 6))
    ps = float(np.sum(cells.counts * levels) / cells.N)
    assert mrp_estimate(d, cells).value == pytest.approx(ps, abs=1e-12)
    saturated = poststratify(fit_outcome_model(d, "interactions"), cells).value
    assert mrp_estimate(d, cells).value == pytest.approx(saturated, abs=1e-9)


def test_large_cells_approach_saturated_poststrat(rng):
    index = build_cell_index(S2)
    means = rng.normal(size=6)
    cid = np.repeat(np.arange(6), 2000)
    d = Dataset(S2, index.codes[cid], means[cid] + 1e-4 * rng.standard_normal(cid.size))
    cells = PopulationCells(index, rng.integers(10, 500, 6))
    _, sh = cell_summaries(d, cells)
    assert sh.delta_c.max() < 1e-8
    saturated = poststratify(fit_outcome_model(d, "interactions"), cells).value
    assert mrp_estimate(d, cells).value == pytest.approx(saturated, abs=1e-9)
