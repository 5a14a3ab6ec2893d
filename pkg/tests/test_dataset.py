import numpy as np
import pytest

from propaudit.dataset import (
    export_dataset,
    export_manifest,
    load_dataset,
    one_hot_labels,
    standardize,
    stratify,
)
from propaudit.errors import (
    InsufficientDataError,
    ParseError,
    SchemaError,
    ValidationError,
)

from conftest import write_manifest, write_table


class TestLoadDataset:
    def test_parse_round_trip(self, tiny_dataset):
        dataset, _, _ = tiny_dataset
        assert dataset.n == 3
        assert dataset.n_classes == 7
        assert dataset.sample_id == ("s0", "s1", "s2")
        assert list(dataset.true_label) == [3, 0, 6]
        assert dataset.properties["R_A"].tolist() == [1.0, 0.0, 1.0]

    def test_missing_column_names_it(self, tmp_path):
        write_table(tmp_path / "d.csv", ["a", "b"], [["s0", "a", 0.1, 0.2]])
        write_manifest(
            tmp_path / "m.json",
            ["a", "b"],
            [{"name": "age", "abbreviation": "B_A", "group": "bodily",
              "kind": "scalar", "column": "age"}],
        )
        with pytest.raises(SchemaError, match="age"):
            load_dataset(tmp_path / "d.csv", tmp_path / "m.json")

    def test_binary_out_of_range_reports_row(self, tmp_path):
        rows = [["s0", "a", 0.1, 0.2, 0], ["s1", "b", 0.3, 0.4, 2]]
        write_table(tmp_path / "d.csv", ["a", "b"], rows, prop_columns=["flag"])
        write_manifest(
            tmp_path / "m.json",
            ["a", "b"],
            [{"name": "flag", "abbreviation": "F", "group": "custom",
              "kind": "binary", "column": "flag"}],
        )
        with pytest.raises(ValidationError, match="row 1"):
            load_dataset(tmp_path / "d.csv", tmp_path / "m.json")

    def test_non_numeric_logit_reports_row(self, tmp_path):
        rows = [["s0", "a", 0.1, 0.2], ["s1", "b", "oops", 0.4]]
        write_table(tmp_path / "d.csv", ["a", "b"], rows)
        write_manifest(tmp_path / "m.json", ["a", "b"], [])
        with pytest.raises(ParseError, match="row 1"):
            load_dataset(tmp_path / "d.csv", tmp_path / "m.json")

    def test_export_load_identity(self, tiny_dataset, tmp_path):
        dataset, _, _ = tiny_dataset
        export_dataset(dataset, tmp_path / "out.csv")
        export_manifest(dataset, tmp_path / "out_manifest.json")
        again = load_dataset(tmp_path / "out.csv", tmp_path / "out_manifest.json")
        assert again.sample_id == dataset.sample_id
        assert np.array_equal(again.true_label, dataset.true_label)
        np.testing.assert_allclose(again.logits, dataset.logits, rtol=0, atol=1e-12)
        np.testing.assert_allclose(
            again.properties["R_A"], dataset.properties["R_A"], atol=1e-12
        )


class TestStandardize:
    def test_hand_computed(self):
        out = standardize([1.0, 2.0, 3.0])
        # population std sqrt(2/3)
        np.testing.assert_allclose(out.values, [-1.22474487, 0.0, 1.22474487], atol=1e-8)
        assert out.original_mean == 2.0

    def test_constant_vector(self):
        out = standardize([5.0, 5.0, 5.0])
        assert out.values.tolist() == [0.0, 0.0, 0.0]
        assert out.original_std == 0.0

    def test_idempotent(self):
        first = standardize([0.4, -1.2, 3.0, 0.7]).values
        np.testing.assert_allclose(standardize(first).values, first, atol=1e-9)

    def test_affine_shift_invariance(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(50)
        base = standardize(x).values
        np.testing.assert_allclose(standardize(2.5 * x + 3.0).values, base, atol=1e-9)
        np.testing.assert_allclose(standardize(-2.5 * x + 3.0).values, -base, atol=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            standardize([])


class TestStratify:
    @pytest.fixture
    def four_sample_dataset(self, tmp_path):
        rows = [
            ["s0", "a", 1.0, 0.0, 0.0],
            ["s1", "b", 0.0, 1.0, 0.0],
            ["s2", "a", 0.8, 0.1, 0.1],
            ["s3", "c", 0.0, 0.0, 1.0],
        ]
        write_table(tmp_path / "d.csv", ["a", "b", "c"], rows)
        write_manifest(tmp_path / "m.json", ["a", "b", "c"], [])
        return load_dataset(tmp_path / "d.csv", tmp_path / "m.json")

    def test_filter_semantics(self, four_sample_dataset):
        sub = stratify(four_sample_dataset, 0, min_size=1)
        assert sub.n == 2
        assert sub.sample_id == ("s0", "s2")

    def test_insufficient_data_names_class(self, four_sample_dataset):
        with pytest.raises(InsufficientDataError, match="'b'"):
            stratify(four_sample_dataset, 1, min_size=2)

    def test_idempotent(self, four_sample_dataset):
        once = stratify(four_sample_dataset, 0, min_size=1)
        twice = stratify(once, 0, min_size=1)
        assert twice.sample_id == once.sample_id
        np.testing.assert_array_equal(twice.logits, once.logits)

    def test_strata_partition_the_dataset(self, four_sample_dataset):
        total = sum(
            stratify(four_sample_dataset, c, min_size=1).n
            for c in range(four_sample_dataset.n_classes)
        )
        assert total == four_sample_dataset.n


class TestOneHot:
    def test_values(self, tiny_dataset):
        dataset, _, _ = tiny_dataset
        oh = one_hot_labels(dataset)
        assert oh.shape == (3, 7)
        assert oh[0, 3] == 1.0 and oh[1, 0] == 1.0 and oh[2, 6] == 1.0

    def test_rows_sum_to_one_and_columns_count_classes(self, tiny_dataset):
        dataset, _, _ = tiny_dataset
        oh = one_hot_labels(dataset)
        assert np.all(oh.sum(axis=1) == 1.0)
        counts = np.bincount(dataset.true_label, minlength=dataset.n_classes)
        np.testing.assert_array_equal(oh.sum(axis=0), counts)
