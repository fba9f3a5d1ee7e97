import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calx.dataset import (
    DataTable,
    FeatureSchema,
    Kind,
    SplitSpec,
    format_number,
    load_csv,
    load_schema,
    normalize_targets,
    save_schema,
    split,
    write_csv,
)
from calx.errors import (
    InsufficientRows,
    MissingColumn,
    NonNumericValue,
    SchemaError,
    SchemaMismatch,
    UnknownCategoryCode,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestSchema:
    def test_lengths_must_agree(self):
        with pytest.raises(SchemaError):
            FeatureSchema(("a", "b"), (Kind.NUMERICAL,), (None, None))

    def test_categorical_needs_two_values(self):
        with pytest.raises(SchemaError):
            FeatureSchema(("c",), (Kind.CATEGORICAL,), (("only",),))

    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            FeatureSchema.numeric(["a", "a"])

    def test_round_trip_through_json(self, tmp_path, color_schema):
        save_schema(color_schema, tmp_path / "s.json")
        assert load_schema(tmp_path / "s.json") == color_schema

    def test_from_dict_rejects_unknown_kind(self):
        with pytest.raises(SchemaError):
            FeatureSchema.from_dict({"features": [{"name": "a", "kind": "ordinal"}]})

    def test_label(self, color_schema):
        assert color_schema.label(1, 2.0) == "blue"
        assert color_schema.label(0, 34.256) == "34.26"


class TestLoadCsv:
    def test_three_rows_with_target(self, tmp_path):
        schema = FeatureSchema.numeric(["a"])
        t = load_csv(write(tmp_path / "d.csv", "a,y\n1,2\n3,4\n5,6\n"), schema, "y")
        assert len(t) == 3
        assert t.has_targets
        np.testing.assert_array_equal(t.targets, [2, 4, 6])

    def test_categories_map_to_schema_order(self, tmp_path, color_schema):
        t = load_csv(write(tmp_path / "d.csv", "color,a,y\nblue,1,0\nred,2,0\n"), color_schema, "y")
        np.testing.assert_array_equal(t.rows[:, 1], [2, 0])
        np.testing.assert_array_equal(t.rows[:, 0], [1, 2])

    def test_unknown_category(self, tmp_path, color_schema):
        with pytest.raises(UnknownCategoryCode, match="color"):
            load_csv(write(tmp_path / "d.csv", "a,color,y\n1,purple,0\n"), color_schema, "y")

    def test_missing_column(self, tmp_path, color_schema):
        with pytest.raises(MissingColumn, match="color"):
            load_csv(write(tmp_path / "d.csv", "a,y\n1,0\n"), color_schema, "y")

    def test_non_numeric_names_row(self, tmp_path):
        with pytest.raises(NonNumericValue, match="row 2"):
            load_csv(write(tmp_path / "d.csv", "a,y\n1,0\nx,0\n"), FeatureSchema.numeric(["a"]), "y")

    def test_empty_body(self, tmp_path):
        t = load_csv(write(tmp_path / "d.csv", "a,y\n"), FeatureSchema.numeric(["a"]), "y")
        assert len(t) == 0
        assert t.rows.shape == (0, 1)

    def test_extra_columns_ignored(self, tmp_path):
        t = load_csv(write(tmp_path / "d.csv", "z,a,y\nfoo,1,2\n"), FeatureSchema.numeric(["a"]), "y")
        assert t.rows.tolist() == [[1.0]]


class TestTable:
    def test_target_count_must_match(self, numeric_schema):
        with pytest.raises(SchemaMismatch):
            DataTable(np.zeros((3, 2)), np.zeros(2), numeric_schema)

    def test_arrays_read_only(self, numeric_schema):
        t = DataTable(np.zeros((2, 2)), np.zeros(2), numeric_schema)
        with pytest.raises(ValueError):
            t.rows[0, 0] = 1


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, st.integers(0, 2), finite), min_size=0, max_size=20))
def test_csv_round_trip_is_exact(tmp_path_factory, records):
    schema = FeatureSchema(("a", "color"), (Kind.NUMERICAL, Kind.CATEGORICAL),
                           (None, ("red", "green", "blue")))
    rows = np.array([[a, c] for a, c, _ in records], dtype=float).reshape(-1, 2)
    t = DataTable(rows, [y for *_, y in records], schema)
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    write_csv(t, path, "y")
    back = load_csv(path, schema, "y")
    assert back.equals(t)


class TestSplit:
    def make(self, n):
        return DataTable(np.arange(n, dtype=float).reshape(-1, 1), np.arange(n, dtype=float),
                         FeatureSchema.numeric(["a"]))

    def test_sizes(self):
        parts = split(self.make(100), SplitSpec(0.5, 25, seed=42))
        assert [len(p) for p in parts] == [50, 25, 25]

    def test_deterministic(self):
        a = split(self.make(100), SplitSpec(0.5, 25, seed=42))
        b = split(self.make(100), SplitSpec(0.5, 25, seed=42))
        assert all(x.equals(y) for x, y in zip(a, b))

    def test_insufficient_rows(self):
        with pytest.raises(InsufficientRows):
            split(self.make(100), SplitSpec(0.5, 200))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(1.0, 10)
        with pytest.raises(ValueError):
            SplitSpec(0.5, 1)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(4, 200), frac=st.floats(0.05, 0.9), cal=st.integers(2, 50), seed=st.integers(0, 10**6))
    def test_partition(self, n, frac, cal, seed):
        t = self.make(n)
        if math.floor(frac * n) + cal > n:
            with pytest.raises(InsufficientRows):
                split(t, SplitSpec(frac, cal, seed))
            return
        parts = split(t, SplitSpec(frac, cal, seed))
        seen = np.concatenate([p.rows[:, 0] for p in parts])
        assert sorted(seen.tolist()) == list(range(n))


def test_normalize_targets():
    t = DataTable(np.zeros((3, 1)), [2.0, 4.0, 6.0], FeatureSchema.numeric(["a"]))
    scaled, (lo, hi) = normalize_targets(t)
    assert (lo, hi) == (2.0, 6.0)
    np.testing.assert_allclose(scaled.targets, [0, 0.5, 1])


@pytest.mark.parametrize("value,text", [(34.256, "34.26"), (-2.0, "-2.00"), (0.05123, "0.0512"),
                                        (0.0, "0"), (math.inf, "inf"), (-math.inf, "-inf")])
def test_format_number(value, text):
    assert format_number(value) == text
