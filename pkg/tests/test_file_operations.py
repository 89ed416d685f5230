import json
import math
import os

import numpy as np
import pytest

from file_operations import CSV_HEADER, ReportFileOps, to_jsonable
from starweyl.config import WeylKind
from starweyl.errors import ConfigError
from starweyl.graph_forward import WeylSample


def _sample():
    lams = np.array([1j, 2j, 3j])
    values = np.array([[[1, 2 + 1j], [0, 1]], [[1, -0.5], [0, 1]], [[np.nan, np.nan], [np.nan, np.nan]]],
                      dtype=complex)
    return WeylSample(WeylKind.BOUNDARY, 1, lams, values, ["", "", "SingularAtLambda"])


class TestJson:
    def test_conversions(self):
        data = to_jsonable({"z": 1 + 2j, "arr": np.array([1.5, np.inf]), "n": np.int64(3),
                            "flag": np.bool_(True), "nan": math.nan, 4: (1, 2)})
        assert data == {"z": [1.0, 2.0], "arr": [1.5, None], "n": 3, "flag": True, "nan": None, "4": [1, 2]}

    def test_write_json_is_strict(self, tmp_path):
        ops = ReportFileOps(str(tmp_path / "out"))
        path = ops.write_json("report.json", {"value": math.nan, "z": 1j})
        with open(path, encoding="utf-8") as f:
            assert json.load(f) == {"value": None, "z": [0.0, 1.0]}


class TestWeylCsv:
    def test_written_sample_reads_back(self, tmp_path):
        ops = ReportFileOps(str(tmp_path))
        sample = _sample()
        ops.write_weyl_csv("M_1.csv", sample)
        back = ops.read_weyl_csv("M_1.csv", WeylKind.BOUNDARY, 1)
        np.testing.assert_array_equal(back.lams, sample.lams)
        np.testing.assert_array_equal(back.values[:2], sample.values[:2])
        assert np.isnan(back.values[2]).all()
        assert np.isnan(back.values[2].imag).all()
        assert back.flags == sample.flags

    def test_header_and_rows(self, tmp_path):
        ops = ReportFileOps(str(tmp_path))
        path = ops.write_weyl_csv("m_2.csv", _sample())
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines[0].split(",") == CSV_HEADER
        assert len(lines) == 1 + 3 * 4
        assert lines[-1].endswith(",nan,nan,SingularAtLambda")

    def test_no_temp_files_left(self, tmp_path):
        ops = ReportFileOps(str(tmp_path))
        ops.write_weyl_csv("M_1.csv", _sample())
        ops.write_json("r.json", {})
        assert sorted(os.listdir(tmp_path)) == ["M_1.csv", "r.json"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            ReportFileOps(str(tmp_path)).read_weyl_csv("M_3.csv", WeylKind.BOUNDARY, 3)

    def test_wrong_columns(self, tmp_path):
        (tmp_path / "M_1.csv").write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="expected columns"):
            ReportFileOps(str(tmp_path)).read_weyl_csv("M_1.csv", WeylKind.BOUNDARY, 1)

    def test_empty_file(self, tmp_path):
        (tmp_path / "M_1.csv").write_text(",".join(CSV_HEADER) + "\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="no data rows"):
            ReportFileOps(str(tmp_path)).read_weyl_csv("M_1.csv", WeylKind.BOUNDARY, 1)
