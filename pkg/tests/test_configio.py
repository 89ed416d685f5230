import glob
import json
import os

import pytest

from starweyl.config import GridKind, PotentialKind, VolterraScheme, WeylKind
from starweyl.configio import (
    cases_from_graph, encode_potential, load_config, parse_complex, parse_config, parse_potential,
)
from starweyl.errors import ConfigError, GammaDiagonalZero, InvalidW


def _doc(**extra):
    doc = {
        "edges": [
            {"order": 2, "length": 1.0, "nu": [0]},
            {"order": 2, "length": 0.8, "nu": [0],
             "potential": {"type": "polynomial", "coeffs": [[0.3, [0.0, -0.2]]]}},
        ],
        "w": 2,
    }
    doc.update(extra)
    return doc


class TestComplexValues:
    def test_numbers_and_pairs(self):
        assert parse_complex(2, "x") == 2
        assert parse_complex([1.5, -2], "x") == complex(1.5, -2)

    @pytest.mark.parametrize("bad", [True, "1", [1, 2, 3], [1, "a"], None])
    def test_rejected(self, bad):
        with pytest.raises(ConfigError):
            parse_complex(bad, "x")


class TestPotentials:
    def test_zero_when_missing(self):
        assert parse_potential(None, "p").is_zero()
        assert parse_potential({"type": "zero"}, "p").is_zero()

    def test_polynomial(self):
        q = parse_potential({"type": "polynomial", "coeffs": [[1, [0, 1]]]}, "p")
        assert q.kind is PotentialKind.POLYNOMIAL
        assert complex(q.evaluate(0, 2.0)) == pytest.approx(1 + 2j)

    def test_table_survives_encoding(self):
        data = {"type": "table", "samples": [{"x": [0.0, 0.25, 0.5, 1.0], "values": [0, 1, 2, [3, 1]]}]}
        q = parse_potential(data, "p")
        again = parse_potential(encode_potential(q), "p")
        assert complex(again.evaluate(0, 1.0)) == pytest.approx(complex(q.evaluate(0, 1.0)))

    def test_unknown_type(self):
        with pytest.raises(ConfigError):
            parse_potential({"type": "spline"}, "p")

    def test_missing_coeffs(self):
        with pytest.raises(ConfigError, match="coeffs"):
            parse_potential({"type": "polynomial"}, "p")


class TestParseConfig:
    def test_defaults(self):
        problem = parse_config(_doc())
        assert problem.graph.p == 2 and problem.graph.w == 2
        assert problem.grid.kind is GridKind.RAY and problem.grid.count == 20
        assert problem.tol.roundtrip == 1e-6
        assert problem.reduce_s is None and problem.recover is None
        assert [c.name for c in problem.verify_cases] == ["edge1", "edge2"]

    def test_numerical_sections(self):
        problem = parse_config(_doc(tol={"roundtrip": 1e-5}, volterra={"scheme": "trapezoid", "mesh_points": 600},
                                    birkhoff={"ladder": [4, 8, 16]}, reduce={"s": 1}))
        assert problem.tol.roundtrip == 1e-5
        assert problem.volterra.scheme is VolterraScheme.TRAPEZOID
        assert problem.birkhoff.ladder == (4.0, 8.0, 16.0)
        assert problem.reduce_s == 1

    @pytest.mark.parametrize("section", [{"tol": {"linear": -1}}, {"volterra": {"mesh_points": 2}},
                                         {"birkhoff": {"unknown": 1}}])
    def test_bad_numerical_settings(self, section):
        with pytest.raises(ConfigError):
            parse_config(_doc(**section))

    def test_zero_gamma_diagonal(self):
        doc = _doc()
        doc["edges"][0]["gamma"] = [[0, 0], [0, 1]]
        with pytest.raises(GammaDiagonalZero):
            parse_config(doc)

    def test_w_not_a_group_boundary(self):
        doc = _doc()
        doc["edges"].append({"order": 2, "length": 0.5, "nu": [0]})
        doc["edges"][0].update(order=3, nu=[0.1, 0])
        with pytest.raises(InvalidW):
            parse_config(doc)

    def test_missing_edges(self):
        with pytest.raises(ConfigError, match="edges"):
            parse_config({"w": 1})

    def test_grid_override(self):
        problem = parse_config(_doc(grid={"kind": "ray", "count": 12}))
        assert problem.with_grid_count(None) is problem
        assert problem.with_grid_count(5).grid.count == 5

    def test_recover_section(self):
        problem = parse_config(_doc(recover={"edge": 2, "powers": [[0, 0], [0, 1]],
                                             "truth": [0.3, -0.2], "box": [[-1, 1], [-1, 1]]}))
        spec = problem.recover
        assert spec.kind is WeylKind.INTERNAL and spec.index == 2
        assert spec.powers == ((0, 0), (0, 1)) and spec.initial is None

    def test_recover_boundary_defaults_to_first_vertex(self):
        problem = parse_config(_doc(recover={"edge": 2, "kind": "boundary", "powers": [[0, 0]],
                                             "truth": [0.3], "box": [[-1, 1]]}))
        assert problem.recover.index == 1

    @pytest.mark.parametrize("recover", [
        {"edge": 3, "powers": [[0, 0]], "truth": [0.1], "box": [[-1, 1]]},
        {"edge": 1, "powers": [[0, 0]], "truth": [0.1, 0.2], "box": [[-1, 1]]},
        {"edge": 1, "kind": "both", "powers": [[0, 0]], "truth": [0.1], "box": [[-1, 1]]},
    ])
    def test_bad_recover_section(self, recover):
        with pytest.raises(ConfigError):
            parse_config(_doc(recover=recover))


class TestLoadConfig:
    def test_load(self, tmp_path):
        path = tmp_path / "problem.json"
        path.write_text(json.dumps(_doc()), encoding="utf-8")
        assert load_config(str(path)).graph.edge(2).length == 0.8

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{ edges: ", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(str(path))

    def test_shipped_examples_load(self):
        files = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "configs", "*.json")))
        assert files
        for path in files:
            problem = load_config(path)
            assert problem.graph.p >= 2


def test_cases_from_graph_dedupes_identical_edges(hyperbolic3):
    assert len(cases_from_graph(hyperbolic3)) == 1
