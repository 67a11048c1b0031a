import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonprob.data import (
    CovariateSchema,
    Dataset,
    PopulationCells,
    PopulationMargins,
    ReferenceSample,
    assign_cells,
    build_cell_index,
    cell_counts,
    common_support_report,
    margins_from_cells,
    stack_with_indicator,
    synthesize_reference,
)
from nonprob.errors import (
    EmptyPopulationError,
    InvalidSchemaError,
    NoTargetError,
    SchemaMismatchError,
    UnknownLevelError,
)

from conftest import make_dataset


# schema ---------------------------------------------------------------------

def test_schema_rejects_empty_and_duplicates():
    with pytest.raises(InvalidSchemaError):
        CovariateSchema([])
    with pytest.raises(InvalidSchemaError):
        CovariateSchema([("a", ["x", "y"]), ("a", ["u", "v"])])
    with pytest.raises(InvalidSchemaError):
        CovariateSchema([("a", ["x", "x"])])
    with pytest.raises(InvalidSchemaError):
        CovariateSchema([("a", ["x"])])


def test_schema_from_mapping_keeps_order():
    s = CovariateSchema({"b": ["1", "2"], "a": ["x", "y", "z"]})
    assert s.names == ["b", "a"]
    assert s.sizes == [2, 3]
    assert s.levels("a") == ("x", "y", "z")


def test_unknown_level_names_variable_and_value(schema2x3):
    with pytest.raises(UnknownLevelError) as exc:
        Dataset.from_rows(schema2x3, [("m", "retired")])
    assert exc.value.variable == "employment"
    assert exc.value.value == "retired"
    assert "retired" in str(exc.value) and "employment" in str(exc.value)


def test_dataset_target_length_checked(schema2x2):
    with pytest.raises(InvalidSchemaError):
        Dataset.from_rows(schema2x2, [("m", "a"), ("f", "b")], target=[1.0])


def test_require_target(schema2x2):
    d = Dataset.from_rows(schema2x2, [("m", "a")])
    with pytest.raises(NoTargetError):
        d.require_target()


def test_take_matches_constructor(schema2x3, rng):
    d = make_dataset(schema2x3, rng, 30)
    idx = rng.integers(0, 30, size=30)
    t = d.take(idx)
    assert np.array_equal(t.codes, d.codes[idx])
    assert np.array_equal(t.target, d.target[idx])
    assert not t.codes.flags.writeable


# cells ----------------------------------------------------------------------

def test_two_by_three_gives_six_cells(schema2x3):
    assert len(build_cell_index(schema2x3)) == 6


def test_single_variable_four_levels():
    s = CovariateSchema([("region", ["n", "e", "s", "w"])])
    idx = build_cell_index(s)
    assert len(idx) == 4
    assert [c.levels for c in idx.cells] == [("n",), ("e",), ("s",), ("w",)]


def test_two_three_four_enumeration():
    s = CovariateSchema([("a", ["0", "1"]), ("b", ["0", "1", "2"]), ("c", ["0", "1", "2", "3"])])
    idx = build_cell_index(s)
    assert len(idx) == 24
    brute = list(itertools.product(*(s.levels(n) for n in s.names)))
    assert [c.levels for c in idx.cells] == brute
    assert [c.cell_id for c in idx.cells] == list(range(24))


def test_assign_cells_examples(schema2x3):
    idx = build_cell_index(schema2x3)
    d = Dataset.from_rows(schema2x3, [("m", "employed"), ("m", "employed")])
    cid = assign_cells(d, idx)
    assert cid[0] == cid[1] == idx.id_of(("m", "employed"))
    all_rows = Dataset.from_rows(schema2x3, [c.levels for c in idx.cells])
    assert sorted(assign_cells(all_rows, idx).tolist()) == list(range(6))


def test_margins_from_cells_hand_sum(schema2x2):
    cells = PopulationCells.from_mapping(schema2x2, {("m", "a"): 10, ("m", "b"): 20, ("f", "a"): 30, ("f", "b"): 40})
    m = margins_from_cells(cells)
    assert m.N == 100
    assert (m.total("g", "m"), m.total("g", "f"), m.total("a", "a"), m.total("a", "b")) == (30, 70, 40, 60)


def test_margins_single_cell_and_symmetric(schema2x2):
    one = PopulationCells.from_mapping(schema2x2, {("f", "b"): 17})
    m = margins_from_cells(one)
    assert m.total("g", "f") == 17 and m.total("a", "b") == 17
    sym = PopulationCells.from_mapping(schema2x2, {c: 25 for c in itertools.product("mf", "ab")})
    m = margins_from_cells(sym)
    assert all(t == 50 for tt in m.totals for t in tt)


def test_margins_must_agree_on_N(schema2x2):
    with pytest.raises(InvalidSchemaError):
        PopulationMargins.from_mapping(schema2x2, {"g": {"m": 5, "f": 5}, "a": {"a": 5, "b": 6}})


# reference synthesis ----------------------------------------------------------

def test_synthesize_small():
    s = CovariateSchema([("c", ["c1", "c2"])])
    ref = synthesize_reference(PopulationCells.from_mapping(s, {("c1",): 2, ("c2",): 3}))
    assert ref.dataset.n == 5
    assert ref.synthetic
    got = {(r[0], p) for r, p in zip(ref.dataset.rows, ref.inclusion_probs)}
    assert got == {("c1", 1 / 2), ("c2", 1 / 3)}


def test_synthesize_empty_cell_and_scale():
    s = CovariateSchema([("c", ["c1", "c2", "c3"])])
    ref = synthesize_reference(PopulationCells.from_mapping(s, {("c1",): 1000, ("c2",): 3000}), scale=0.01)
    rows = [r[0] for r in ref.dataset.rows]
    assert rows.count("c1") == 10 and rows.count("c2") == 30 and rows.count("c3") == 0
    assert np.allclose(ref.inclusion_probs[:10], 1 / 1000)
    assert np.allclose(ref.inclusion_probs[10:], 1 / 3000)


def test_synthesize_keeps_every_nonempty_cell():
    s = CovariateSchema([("c", ["c1", "c2"])])
    ref = synthesize_reference(PopulationCells.from_mapping(s, {("c1",): 1, ("c2",): 1000}), scale=0.001)
    assert [r[0] for r in ref.dataset.rows] == ["c1", "c2"]


def test_synthesize_rounds_half_away_from_zero():
    s = CovariateSchema([("c", ["c1", "c2"])])
    ref = synthesize_reference(PopulationCells.from_mapping(s, {("c1",): 5, ("c2",): 15}), scale=0.5)
    rows = [r[0] for r in ref.dataset.rows]
    assert rows.count("c1") == 3 and rows.count("c2") == 8


def test_synthesize_empty_population(schema2x2):
    with pytest.raises(EmptyPopulationError):
        synthesize_reference(PopulationCells(build_cell_index(schema2x2), np.zeros(4)))


# stacking ---------------------------------------------------------------------

def test_stack_indicator_and_weights(schema2x2):
    smp = Dataset.from_rows(schema2x2, [("m", "a")] * 3, target=[1.0, 0.0, 1.0])
    ref = ReferenceSample(Dataset.from_rows(schema2x2, [("f", "b")] * 5), np.full(5, 0.25))
    fr = stack_with_indicator(smp, ref)
    assert fr.dataset.n == 8
    assert fr.S.tolist() == [1, 1, 1, 0, 0, 0, 0, 0]
    assert fr.base_weights.tolist() == [1, 1, 1, 4, 4, 4, 4, 4]
    assert np.all(np.isnan(fr.dataset.target[3:]))


def test_stack_empty_reference(schema2x2):
    smp = Dataset.from_rows(schema2x2, [("m", "a"), ("f", "b")], target=[1.0, 0.0])
    ref = ReferenceSample(Dataset(schema2x2, np.zeros((0, 2), dtype=int)), np.zeros(0))
    fr = stack_with_indicator(smp, ref)
    assert fr.S.tolist() == [1, 1]
    assert np.array_equal(fr.dataset.codes, smp.codes)


def test_stack_schema_mismatch(schema2x2, schema2x3):
    smp = Dataset.from_rows(schema2x2, [("m", "a")])
    ref = ReferenceSample(Dataset.from_rows(schema2x3, [("m", "employed")]), [0.5])
    with pytest.raises(SchemaMismatchError) as exc:
        stack_with_indicator(smp, ref)
    assert set(exc.value.variables) == {"g", "a", "gender", "employment"}


def test_regression_weight_modes(schema2x2):
    cells = PopulationCells.from_mapping(schema2x2, {("m", "a"): 4, ("f", "b"): 2})
    ref = synthesize_reference(cells)
    smp = Dataset.from_rows(schema2x2, [("m", "a")], target=[1.0])
    fr = stack_with_indicator(smp, ref)
    assert fr.regression_weights("inverse").tolist() == [1, 4, 4, 4, 4, 2, 2]
    assert fr.regression_weights("literal").tolist() == [1, .25, .25, .25, .25, .5, .5]
    # each cell's reference weight totals N_c
    assert fr.regression_weights("calibrated").tolist() == [1, 1, 1, 1, 1, 1, 1]


# common support ---------------------------------------------------------------

def test_common_support(schema2x2):
    cells = PopulationCells.from_mapping(schema2x2, {("m", "a"): 10, ("m", "b"): 20, ("f", "a"): 30, ("f", "b"): 40})
    full = Dataset.from_rows(schema2x2, [("m", "a"), ("m", "b"), ("f", "a"), ("f", "b")])
    assert not common_support_report(full, cells).violated
    part = Dataset.from_rows(schema2x2, [("m", "a"), ("m", "b"), ("f", "a")])
    assert common_support_report(part, cells).violations == [("f", "b")]
    empty = Dataset(schema2x2, np.zeros((0, 2), dtype=int))
    assert len(common_support_report(empty, cells).violations) == 4


# properties -------------------------------------------------------------------

schemas = st.lists(st.integers(2, 4), min_size=1, max_size=3).map(
    lambda sizes: CovariateSchema([(f"v{j}", [f"l{k}" for k in range(s)]) for j, s in enumerate(sizes)])
)


@given(schemas, st.integers(0, 60), st.integers(0, 2**32 - 1))
def test_cell_partition(schema, n, seed):
    d = make_dataset(schema, np.random.default_rng(seed), n, target=None)
    idx = build_cell_index(schema)
    counts = cell_counts(d, idx)
    assert counts.sum() == n
    # the cell of each row has that row's levels
    for row, c in zip(d.rows, assign_cells(d, idx)):
        assert idx.cells[c].levels == row


@given(schemas, st.integers(0, 2**32 - 1))
def test_margins_preserve_N(schema, seed):
    rng = np.random.default_rng(seed)
    cells = PopulationCells(build_cell_index(schema), rng.integers(0, 50, size=int(np.prod(schema.sizes))))
    m = margins_from_cells(cells)
    for t in m.totals:
        assert t.sum() == cells.N


@given(schemas, st.integers(0, 2**32 - 1))
def test_synthesize_scale_one_reproduces_counts(schema, seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 30, size=int(np.prod(schema.sizes)))
    counts[0] += 1
    cells = PopulationCells(build_cell_index(schema), counts)
    ref = synthesize_reference(cells)
    got = cell_counts(ref.dataset, cells.index)
    assert np.array_equal(got, counts)
    cid = assign_cells(ref.dataset, cells.index)
    assert np.allclose(ref.inclusion_probs, 1.0 / counts[cid])


@given(schemas, st.integers(1, 30), st.integers(0, 20), st.integers(0, 2**32 - 1))
def test_stack_is_invertible(schema, n, m, seed):
    rng = np.random.default_rng(seed)
    smp = make_dataset(schema, rng, n)
    ref = ReferenceSample(make_dataset(schema, rng, m, target=None), rng.uniform(0.01, 1, size=m))
    fr = stack_with_indicator(smp, ref)
    back = fr.sample_rows()
    assert fr.n_sample == n
    assert np.array_equal(back.codes, smp.codes)
    assert np.array_equal(back.target, smp.target)
    assert np.all(np.isfinite(fr.base_weights[n:])) and np.all(fr.base_weights[n:] > 0)
