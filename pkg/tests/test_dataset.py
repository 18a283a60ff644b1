import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from simnn.dataset import (
    MISSING,
    DataError,
    Dataset,
    FuzzySet,
    Kind,
    Role,
    SchemaError,
    derive_task,
    encode,
    encode_dataset,
    fit_encoder,
    format_example,
    horse_colic_files,
    horse_colic_schema,
    load_dataset,
    make_fold_plan,
    parse_lines,
    parse_schema,
    predictor_missing_fraction,
    write_dataset,
)
from synthetic import mixed_schema, random_dataset


def _doc(variables):
    return json.dumps({"format": "simnn-schema", "version": 1, "variables": variables})


class TestParseSchema:
    def test_minimal(self):
        s = parse_schema(_doc([
            {"name": "x", "kind": "continuous", "role": "predictor", "column": 1},
            {"name": "y", "kind": "categorical", "role": "target", "column": 2, "levels": ["a", "b"]},
        ]))
        assert len(s) == 2
        assert [v.name for v in s] == ["x", "y"]
        assert s.predictors == (0,) and s.targets == (1,)

    def test_duplicate_names(self):
        with pytest.raises(SchemaError, match="duplicate"):
            parse_schema(_doc([
                {"name": "x", "kind": "continuous", "role": "predictor", "column": 1},
                {"name": "x", "kind": "continuous", "role": "predictor", "column": 2},
            ]))

    @pytest.mark.parametrize("entry", [
        {"name": "x", "kind": "ordinal", "role": "predictor", "column": 1},
        {"name": "x", "kind": "categorical", "role": "predictor", "column": 1, "levels": []},
        {"name": "x", "kind": "continuous", "column": 1},
        {"name": "x", "kind": "colour", "role": "predictor", "column": 1},
        {"name": "x", "kind": "continuous", "role": "boss", "column": 1},
        {"name": "x", "kind": "continuous", "role": "predictor", "column": 0},
        {"name": "x", "kind": "fuzzy", "role": "predictor", "column": 1, "family": "gaussian"},
    ])
    def test_invalid_entries(self, entry):
        with pytest.raises(SchemaError):
            parse_schema(_doc([entry]))

    @pytest.mark.parametrize("text", ["not json", "[]", '{"variables": 3}', '{"variables": []}'])
    def test_malformed(self, text):
        with pytest.raises(SchemaError):
            parse_schema(text)

    def test_round_trip(self):
        s = horse_colic_schema()
        assert parse_schema(json.dumps(s.to_dict())) == s


class TestHorseColicSchema:
    def test_counts(self):
        s = horse_colic_schema()
        assert len(s.predictors) == 21
        counts = s.kind_counts()
        assert (counts["categorical"], counts["continuous"], counts["ordinal"]) == (6, 7, 8)

    def test_kinds_by_column(self):
        s = horse_colic_schema()
        by_col = {v.column: v for v in s}
        assert {c for c, v in by_col.items() if v.role is Role.PREDICTOR and v.kind is Kind.CATEGORICAL} == {1, 2, 9, 10, 18, 21}
        assert {c for c, v in by_col.items() if v.role is Role.PREDICTOR and v.kind is Kind.CONTINUOUS} == {4, 5, 6, 16, 19, 20, 22}
        assert {c for c, v in by_col.items() if v.kind is Kind.ORDINAL} == {7, 8, 11, 12, 13, 14, 15, 17}

    def test_reorderings(self):
        by_col = {v.column: v for v in horse_colic_schema()}
        assert by_col[7].labels == ("cold", "cool", "normal", "warm")
        assert by_col[8].labels == ("absent", "reduced", "normal", "increased")
        assert by_col[12].labels == ("absent", "hypomotile", "normal", "hypermotile")
        assert by_col[17].labels == ("absent", "decreased", "normal", "increased")

    def test_roles(self):
        by_col = {v.column: v for v in horse_colic_schema()}
        for c in (3, 25, 26, 27, 28):
            assert by_col[c].role is Role.IGNORED
        assert by_col[23].role is Role.TARGET and by_col[24].role is Role.TARGET
        assert by_col[23].n_levels == 3 and by_col[24].n_levels == 2


class TestLoadDataset:
    def test_horse_colic_size(self, horse_colic):
        assert len(horse_colic) == 368
        assert horse_colic.schema.n_columns == 28

    def test_files_concatenate_in_order(self):
        schema = horse_colic_schema()
        a, b = horse_colic_files()
        both = load_dataset([a, b], schema)
        first = load_dataset([a], schema)
        assert_array_equal(both.values[: len(first)], first.values)

    def test_missing_fraction(self, horse_colic):
        # 1927 "?" tokens plus the two undefined capillary refill codes
        assert int(horse_colic.missing.sum()) == 1929
        assert predictor_missing_fraction(horse_colic) == pytest.approx(0.2494, abs=1e-4)

    def test_wrong_arity(self):
        line = " ".join(["?"] * 27)
        with pytest.raises(DataError, match="expected 28 tokens"):
            parse_lines([line], horse_colic_schema())

    def test_bad_number(self):
        tokens = ["?"] * 28
        tokens[3] = "warm"
        with pytest.raises(DataError, match="cannot parse number"):
            parse_lines([" ".join(tokens)], horse_colic_schema())

    def test_unknown_level(self):
        tokens = ["?"] * 28
        tokens[0] = "7"
        with pytest.raises(DataError):
            parse_lines([" ".join(tokens)], horse_colic_schema())

    def test_codes_map_to_level_indices(self):
        tokens = ["?"] * 28
        tokens[6] = "4"  # cold, the first level after reordering
        tokens[1] = "9"
        (ex,) = parse_lines([" ".join(tokens)], horse_colic_schema())
        s = horse_colic_schema()
        assert ex[s.index("temperature_of_extremities")] == 0
        assert ex[s.index("age")] == 1
        assert ex[s.index("pulse")] is MISSING

    def test_alias_and_missing_code(self):
        tokens = ["?"] * 28
        tokens[1] = "2"
        tokens[9] = "3"
        (ex,) = parse_lines([" ".join(tokens)], horse_colic_schema())
        s = horse_colic_schema()
        assert ex[s.index("age")] == 1
        assert ex[s.index("capillary_refill_time")] is MISSING

    def test_blank_lines_skipped(self):
        line = " ".join(["?"] * 28)
        assert len(parse_lines(["", line, "   ", line], horse_colic_schema())) == 2


class TestRoundTrip:
    def test_horse_colic_tokens(self, horse_colic, tmp_path):
        path = tmp_path / "hc.data"
        write_dataset(path, horse_colic)
        again = load_dataset([path], horse_colic.schema)
        assert_array_equal(again.values, horse_colic.values)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_mixed_with_fuzzy(self, seed):
        schema = mixed_schema(n_fuzzy=2)
        data = random_dataset(np.random.default_rng(seed), 12, schema, missing=0.2)
        lines = [format_example(schema, ex) for ex in data.examples()]
        again = Dataset.from_examples(schema, parse_lines(lines, schema))
        for a, b in zip(data.examples(), again.examples()):
            assert a == b

    def test_triangular_token(self):
        from simnn.dataset import VariableSpec, Schema

        v = VariableSpec("t", Kind.FUZZY, Role.PREDICTOR, 1, family="triangular")
        s = Schema((v,))
        (ex,) = parse_lines(["1.0,2.5,4.0"], s)
        assert ex[0] == FuzzySet(1.0, 2.5, 2.5, 4.0)
        assert format_example(s, ex) == "1.0,2.5,4.0"


class TestDeriveTask:
    def test_hc23(self, hc23):
        assert len(hc23) == 366
        assert len(hc23.classes) == 3
        props = np.bincount(hc23.target_classes()) / len(hc23)
        assert_allclose(props, [0.615, 0.243, 0.142], atol=0.005)

    def test_hc24(self, hc24):
        assert len(hc24) == 368
        assert hc24.classes == ("yes", "no")
        assert np.mean(hc24.target_classes() == 0) == pytest.approx(0.63, abs=0.005)

    def test_predictors(self, hc24):
        assert len(hc24.schema.predictors) == 21
        assert len(hc24.schema.targets) == 1

    def test_values_untouched(self, horse_colic, hc23):
        keep = np.flatnonzero(~np.isnan(horse_colic.values[:, horse_colic.schema.index("outcome")]))
        for v in hc23.schema:
            k = horse_colic.schema.index(v.name)
            assert_array_equal(hc23.values[:, hc23.schema.index(v.name)], horse_colic.values[keep, k])

    def test_absent_target(self, horse_colic):
        with pytest.raises(SchemaError, match="absent"):
            derive_task(horse_colic, "no_such_variable")

    def test_task_schema_reads_raw_files(self, hc24):
        again = load_dataset(horse_colic_files(), hc24.schema)
        assert_array_equal(again.values, hc24.values)


class TestFoldPlan:
    def test_partitions(self, hc24):
        plan = make_fold_plan(hc24, 3)
        assert len(plan.replications) == 5
        for a, b in plan.replications:
            assert len(np.intersect1d(a, b)) == 0
            assert_array_equal(np.sort(np.concatenate([a, b])), np.arange(len(hc24)))
            assert abs(len(a) - len(b)) <= 1

    def test_deterministic(self, hc24):
        assert make_fold_plan(hc24, 11).to_dict() == make_fold_plan(hc24, 11).to_dict()
        assert make_fold_plan(hc24, 11).to_dict() != make_fold_plan(hc24, 12).to_dict()

    @pytest.mark.parametrize("seed", [0, 1, 7, 2024])
    def test_stratified(self, hc24, seed):
        y = hc24.target_classes()
        overall = np.mean(y == 0)
        for a, b in make_fold_plan(hc24, seed).replications:
            for fold in (a, b):
                assert abs(np.mean(y[fold] == 0) - overall) <= 1.0 / len(fold)

    def test_ten_cells(self, hc24):
        cells = list(make_fold_plan(hc24, 0).splits())
        assert len(cells) == 10
        assert [(i, j) for i, j, _, _ in cells] == [(i, j) for i in range(5) for j in range(2)]

    def test_too_small(self):
        schema = mixed_schema()
        data = random_dataset(np.random.default_rng(0), 1, schema)
        with pytest.raises(DataError):
            make_fold_plan(data, 0)


class TestEncoder:
    def test_one_hot_width(self):
        from simnn.dataset import Schema, VariableSpec

        s = Schema((
            VariableSpec("k", Kind.CATEGORICAL, Role.PREDICTOR, 1, levels=("a", "b", "c", "d")),
            VariableSpec("y", Kind.CATEGORICAL, Role.TARGET, 2, levels=("0", "1")),
        ))
        data = Dataset.from_examples(s, [(i % 4, i % 2) for i in range(8)])
        assert fit_encoder(data).dim == 4

    def test_standardised(self, hc24):
        enc = fit_encoder(hc24)
        Z = encode_dataset(enc, hc24)
        live = enc.std > 0
        assert_allclose(Z[:, live].mean(axis=0), 0.0, atol=1e-9)
        assert_allclose(Z[:, live].std(axis=0), 1.0, atol=1e-9)
        assert np.all(Z[:, ~live] == 0.0)

    def test_missing_continuous_maps_to_zero(self):
        schema = mixed_schema(n_cont=1, n_ord=0, n_cat=0)
        data = Dataset.from_examples(schema, [(1.0, 0), (3.0, 1), (8.0, 0)])
        enc = fit_encoder(data)
        z = encode(enc, (MISSING, 0))
        assert z[0] == pytest.approx(0.0, abs=1e-12)

    def test_ordinal_and_mode(self):
        schema = mixed_schema(n_cont=0, n_ord=1, n_cat=1)
        rows = [(0, 1, 0), (3, 1, 1), (MISSING, 2, 0), (3, MISSING, 1)]
        enc = fit_encoder(Dataset.from_examples(schema, rows))
        assert enc.impute[0] == pytest.approx(2.0)  # mean level index of (0, 3, 3)
        assert enc.impute[1] == 1.0  # modal category
        assert enc.dim == 1 + 3

    def test_pure(self, hc24):
        enc = fit_encoder(hc24)
        ex = hc24.example(5)
        assert_array_equal(encode(enc, ex), encode(enc, ex))

    def test_errors(self):
        schema = mixed_schema(n_cont=1, n_ord=0, n_cat=0)
        with pytest.raises(DataError):
            fit_encoder(Dataset.from_examples(schema, []))
        with pytest.raises(DataError, match="all values missing"):
            fit_encoder(Dataset.from_examples(schema, [(MISSING, 0), (MISSING, 1)]))

    def test_round_trip(self, hc24):
        from simnn.dataset import Encoder

        enc = fit_encoder(hc24)
        again = Encoder.from_dict(hc24.schema, json.loads(json.dumps(enc.to_dict())))
        assert_array_equal(encode_dataset(again, hc24), encode_dataset(enc, hc24))
