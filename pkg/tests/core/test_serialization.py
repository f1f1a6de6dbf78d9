"""Tests for the schema-versioned matrix, JSON and CSV codecs."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from icl_ts_lab.core.errors import ConfigError, DimensionError
from icl_ts_lab.core.serialization import (
    SCHEMA_HEADER,
    matrix_from_dict,
    matrix_to_dict,
    read_json,
    read_matrix_csv,
    read_table,
    write_json,
    write_matrix_csv,
    write_table,
)


class TestMatrices:
    def test_dict_layout(self):
        obj = matrix_to_dict(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert obj == {"rows": 2, "cols": 2, "data": [1.0, 2.0, 3.0, 4.0]}

    def test_dict_size_mismatch(self):
        with pytest.raises(DimensionError):
            matrix_from_dict({"rows": 2, "cols": 2, "data": [1.0]})

    def test_dict_malformed(self):
        with pytest.raises(ConfigError):
            matrix_from_dict({"rows": 2})

    def test_csv_is_bit_exact(self, tmp_path, rng):
        m = rng.standard_normal((3, 5)) * 1e-7
        back = read_matrix_csv(write_matrix_csv(m, tmp_path / "m.csv"))
        np.testing.assert_array_equal(back, m)


class TestDocuments:
    def test_json_carries_schema(self, tmp_path):
        path = write_json({"a": 1}, tmp_path / "doc.json")
        assert read_json(path) == {"schema": 1, "a": 1}

    def test_json_wrong_schema(self, tmp_path):
        path = tmp_path / "doc.json"
        path.write_text('{"schema": 9}')
        with pytest.raises(ConfigError):
            read_json(path)

    def test_json_invalid(self, tmp_path):
        path = tmp_path / "doc.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            read_json(path)


class TestTables:
    def test_header_and_values(self, tmp_path):
        df = pd.DataFrame({"method": ["ls-closed"], "mse": [1.0 / 3.0], "error": ["boom # not a comment"]})
        path = write_table(df, tmp_path / "t.csv")
        assert path.read_text().splitlines()[0] == SCHEMA_HEADER
        back = read_table(path)
        assert back["mse"].iloc[0] == 1.0 / 3.0
        assert back["error"].iloc[0] == "boom # not a comment"

    def test_unknown_schema(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("# schema=2\na\n1\n")
        with pytest.raises(ConfigError):
            read_table(path)
