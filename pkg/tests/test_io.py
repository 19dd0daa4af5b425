import json

import numpy as np
import pytest

from conftest import random_problem
from steerdca.io import (
    ProblemFormatError,
    dumps_problem,
    load_point,
    load_problem,
    loads_problem,
    problem_to_dict,
    save_point,
    save_problem,
)
from steerdca.problems import ProductionParams, TrainParams, build_production_problem, build_train_problem


class TestRoundTrip:
    @pytest.mark.parametrize("seed", range(5))
    def test_random_problems(self, seed):
        p = random_problem(np.random.default_rng(seed), 3, 2, 1)
        text = dumps_problem(p)
        q = loads_problem(text)
        assert dumps_problem(q) == text
        x = np.random.default_rng(seed + 100).normal(size=3)
        assert q.objective(x) == p.objective(x)
        np.testing.assert_array_equal(q.constraint_values(x)[0], p.constraint_values(x)[0])

    def test_benchmarks(self, tmp_path):
        for p in (build_production_problem(ProductionParams(k=6, seed=1)), build_train_problem(TrainParams(k=5))):
            path = tmp_path / f"{p.name}.json"
            save_problem(p, path)
            assert dumps_problem(load_problem(path)) == dumps_problem(p)

    def test_infinite_bounds_are_null(self, p_eq):
        obj = problem_to_dict(build_production_problem(ProductionParams(k=3)))
        assert obj["feasible_set"]["lower"][0] is None

    def test_point_files(self, tmp_path):
        path = tmp_path / "x.json"
        save_point([1.5, -2.0], path)
        np.testing.assert_array_equal(load_point(path, 2), [1.5, -2.0])
        path.write_text("[3, 4]")
        np.testing.assert_array_equal(load_point(path), [3.0, 4.0])


class TestErrors:
    def _base(self, p_ineq):
        return json.loads(dumps_problem(p_ineq))

    def test_missing_dimension(self, p_ineq):
        obj = self._base(p_ineq)
        del obj["dimension"]
        with pytest.raises(ProblemFormatError) as exc:
            loads_problem(json.dumps(obj))
        assert exc.value.where == "dimension"

    def test_unknown_atom_kind(self, p_ineq):
        obj = self._base(p_ineq)
        obj["inequalities"][0]["g"]["terms"][0]["atom"]["kind"] = "CUBE"
        with pytest.raises(ProblemFormatError) as exc:
            loads_problem(json.dumps(obj))
        assert exc.value.where == "inequalities[0].g.terms[0].atom.kind"

    def test_negative_weight(self, p_ineq):
        obj = self._base(p_ineq)
        obj["objective"]["g"]["terms"][0]["weight"] = -1
        with pytest.raises(ProblemFormatError, match="weight"):
            loads_problem(json.dumps(obj))

    def test_wrong_atom_dimension(self, p_ineq):
        obj = self._base(p_ineq)
        obj["objective"]["g"]["terms"][0]["atom"]["a"] = [1.0, 2.0]
        with pytest.raises(ProblemFormatError, match="objective.g.terms"):
            loads_problem(json.dumps(obj))

    def test_crossed_bounds(self, p_ineq):
        obj = self._base(p_ineq)
        obj["feasible_set"]["lower"] = [20.0]
        with pytest.raises(ProblemFormatError, match="feasible_set"):
            loads_problem(json.dumps(obj))

    def test_bad_json_location(self):
        with pytest.raises(ProblemFormatError, match="line 2"):
            loads_problem('{"dimension": 1,\n "objective": }')

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ProblemFormatError, match="cannot read"):
            load_problem(tmp_path / "missing.json")

    def test_point_dimension(self, tmp_path):
        path = tmp_path / "x.json"
        save_point([1.0, 2.0, 3.0], path)
        with pytest.raises(ProblemFormatError, match="dimension 2"):
            load_point(path, 2)
