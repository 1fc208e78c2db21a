"""Dataset validation, CSV round-trips, and design-matrix construction."""

import numpy as np
import pytest

from ips.data import Dataset, DesignSpec, design_matrix, load_csv, write_csv
from ips.exceptions import DataValidationError, ParseError, SchemaError


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestDatasetValidation:
    def test_accepts_well_formed(self):
        ds = Dataset(d=[1, 0, 1], x=[[1.0], [2.0], [3.0]], y=[0.5, 0.1, 0.2])
        assert ds.n == 3 and ds.k == 1
        assert ds.names == ("x1",)

    def test_rejects_non_binary_treatment_naming_row(self):
        with pytest.raises(DataValidationError, match="row 1"):
            Dataset(d=[1, 2, 0], x=[[1.0], [2.0], [3.0]])

    def test_rejects_empty_arm(self):
        with pytest.raises(DataValidationError, match="non-empty"):
            Dataset(d=[1, 1, 1], x=[[1.0], [2.0], [3.0]])

    def test_rejects_nan_with_row_index(self):
        with pytest.raises(DataValidationError, match="row 1"):
            Dataset(d=[1, 0, 1], x=[[1.0], [np.nan], [3.0]])

    def test_rejects_too_few_rows(self):
        with pytest.raises(DataValidationError, match="at least 2"):
            Dataset(d=[1], x=[[1.0]])

    def test_rejects_binary_instrument_violation(self):
        with pytest.raises(DataValidationError, match="'z'"):
            Dataset(d=[1, 0], x=[[1.0], [2.0]], z=[0.5, 1.0])

    def test_arrays_read_only(self):
        ds = Dataset(d=[1, 0], x=[[1.0], [2.0]])
        with pytest.raises(ValueError):
            ds.x[0, 0] = 9.0


class TestDesignMatrix:
    def test_intercept_column_first(self, exog_small):
        xm = design_matrix(exog_small, DesignSpec())
        assert xm.shape == (exog_small.n, exog_small.k + 1)
        assert np.all(xm[:, 0] == 1.0)

    def test_no_intercept(self, exog_small):
        xm = design_matrix(exog_small, DesignSpec(include_intercept=False))
        np.testing.assert_array_equal(xm, exog_small.x)

    def test_subset_selection(self, exog_small):
        xm = design_matrix(exog_small, DesignSpec(covariate_subset=[2, 0]))
        np.testing.assert_array_equal(xm[:, 1], exog_small.x[:, 2])
        np.testing.assert_array_equal(xm[:, 2], exog_small.x[:, 0])

    def test_empty_subset_rejected(self):
        with pytest.raises(DataValidationError, match="empty"):
            DesignSpec(covariate_subset=[]).columns(4)

    def test_out_of_range_subset_rejected(self):
        with pytest.raises(DataValidationError, match="out of range"):
            DesignSpec(covariate_subset=[4]).columns(4)

    def test_duplicate_subset_rejected(self):
        with pytest.raises(DataValidationError, match="duplicate"):
            DesignSpec(covariate_subset=[1, 1]).columns(4)


class TestCsv:
    def test_round_trip_exact(self, tmp_path, lte_small):
        path = tmp_path / "round.csv"
        write_csv(lte_small, path)
        back = load_csv(path, treatment="d", covariates=list(lte_small.names),
                        outcome="y", instrument="z")
        np.testing.assert_array_equal(back.d, lte_small.d)
        np.testing.assert_array_equal(back.x, lte_small.x)
        np.testing.assert_array_equal(back.y, lte_small.y)
        np.testing.assert_array_equal(back.z, lte_small.z)

    def test_missing_column_is_schema_error(self, tmp_path):
        path = _write(tmp_path, "d,x1\n1,0.5\n0,0.2\n")
        with pytest.raises(SchemaError, match="'x9'"):
            load_csv(path, treatment="d", covariates=["x9"])

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = _write(tmp_path, "d,x1\n1,0.5\n0,oops\n")
        with pytest.raises(ParseError, match="'x1'.*row 3"):
            load_csv(path, treatment="d", covariates=["x1"])

    def test_non_binary_treatment_rejected(self, tmp_path):
        path = _write(tmp_path, "d,x1\n1,0.5\n2,0.2\n0,0.1\n")
        with pytest.raises(DataValidationError, match="row 3"):
            load_csv(path, treatment="d", covariates=["x1"])

    def test_float_treatment_literal_rejected(self, tmp_path):
        # only literal 0/1 accepted for binary roles
        path = _write(tmp_path, "d,x1\n1.0,0.5\n0,0.2\n")
        with pytest.raises(DataValidationError, match="literal 0/1"):
            load_csv(path, treatment="d", covariates=["x1"])

    def test_empty_file_is_schema_error(self, tmp_path):
        path = _write(tmp_path, "")
        with pytest.raises(SchemaError, match="empty"):
            load_csv(path, treatment="d", covariates=["x1"])

    def test_requires_some_covariate(self, tmp_path):
        path = _write(tmp_path, "d,x1\n1,0.5\n0,0.2\n")
        with pytest.raises(SchemaError, match="at least one covariate"):
            load_csv(path, treatment="d", covariates=[])
