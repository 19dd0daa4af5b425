import numpy as np
import pytest

from steerdca.io import dumps_problem
from steerdca.model import dc_value, validate
from steerdca.penalty import infeasibility
from steerdca.problems import (
    ProductionLayout,
    ProductionParams,
    TrainLayout,
    TrainParams,
    build_production_problem,
    build_train_problem,
    dc_pos_product,
    dc_signed_square,
    production_starts,
    simulate_production,
    simulate_train,
    tachogram,
)


class TestIdentities:
    @pytest.mark.parametrize("y, u, expected", [(1.0, 1.0, 1.0), (-2.0, 3.0, -6.0), (4.0, -1.0, 0.0)])
    def test_pos_product_points(self, y, u, expected):
        f = dc_pos_product(0, 1, 2)
        assert dc_value(f, [y, u])[0] == expected

    def test_pos_product_parts(self):
        _, g, h = dc_value(dc_pos_product(0, 1, 2), [-2.0, 3.0])
        assert (g, h) == (6.5, 12.5)

    def test_signed_square_point(self):
        assert dc_value(dc_signed_square(0, 1), [-3.0])[0] == -9.0

    def test_random_points(self):
        rng = np.random.default_rng(0)
        Y = rng.uniform(-10, 10, size=(10_000, 2))
        f = dc_pos_product(0, 1, 2)
        np.testing.assert_allclose(f.values(Y), Y[:, 0] * np.maximum(Y[:, 1], 0), rtol=0, atol=1e-12 * 100)
        s = dc_signed_square(0, 2)
        np.testing.assert_allclose(s.values(Y), Y[:, 0] * np.abs(Y[:, 0]), rtol=0, atol=1e-12 * 100)

    def test_index_errors(self):
        with pytest.raises(IndexError):
            dc_pos_product(0, 2, 2)
        with pytest.raises(IndexError):
            dc_signed_square(-1, 2)


class TestProduction:
    def test_reference_dimension(self):
        p = build_production_problem(ProductionParams(k=1000))
        assert p.dim == 1999 and p.n_eq == 999 and p.n_ineq == 0

    def test_defaults(self):
        pp = ProductionParams()
        assert (pp.theta, pp.beta, pp.rho_store, pp.z0, pp.h_coef) == (0.01, 5.0, 0.5, 0.0, 0.5)

    @pytest.mark.parametrize("kw", [{"k": 1}, {"price_range": (15.0, 10.0)}, {"beta": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ProductionParams(**kw)

    def test_constant_data_zero_start(self):
        pp = ProductionParams(k=3, prices=(10.0,) * 3, outputs=(5.0,) * 3, bounds=(5.0,) * 3)
        p = build_production_problem(pp)
        assert infeasibility(p, np.zeros(p.dim)) == 0.0

    def test_dynamics_match_recurrence(self):
        """Simulated trajectories are exactly feasible; perturbing a stock breaks one equality."""
        pp = ProductionParams(k=20, seed=3)
        p = build_production_problem(pp)
        u = np.random.default_rng(1).uniform(0, 5, size=20)
        x = simulate_production(pp, u)
        assert infeasibility(p, x) <= 1e-12
        L = ProductionLayout(20)
        x[L.z(4)] += 0.25
        assert infeasibility(p, x) > 0.2

    def test_objective_convex(self):
        p = build_production_problem(ProductionParams(k=8, seed=2))
        rng = np.random.default_rng(0)
        X, Y = rng.uniform(-5, 15, size=(2, 1000, p.dim))
        f = p.objective.g
        assert np.all(f.values((X + Y) / 2) <= (f.values(X) + f.values(Y)) / 2 + 1e-9)
        assert validate(p) == []

    def test_seeded_reproducibility(self):
        a = dumps_problem(build_production_problem(ProductionParams(k=10, seed=5)))
        b = dumps_problem(build_production_problem(ProductionParams(k=10, seed=5)))
        c = dumps_problem(build_production_problem(ProductionParams(k=10, seed=6)))
        assert a == b and a != c

    def test_pcg64_stream(self):
        p, v, b = ProductionParams(k=4, seed=7).data()
        rng = np.random.Generator(np.random.PCG64(7))
        np.testing.assert_array_equal(p, rng.uniform(10, 15, 4))
        np.testing.assert_array_equal(v, rng.uniform(5, 15, 4))
        np.testing.assert_array_equal(b, rng.uniform(5, 15, 4))

    def test_starts(self):
        pp = ProductionParams(k=6)
        s1 = production_starts(pp, 3, 42)
        s2 = production_starts(pp, 3, 42)
        assert len(s1) == 3 and all(np.array_equal(a, b) for a, b in zip(s1, s2))
        assert all(a.size == 11 and a.min() >= 0 and a.max() <= 15 for a in s1)


class TestTrain:
    def test_reference_dimension(self):
        """At k = 480 the model has 1438 variables and k - 1 = 479 DC equalities."""
        p = build_train_problem(TrainParams(k=480))
        assert p.dim == 1438
        assert p.n_eq == 479

    def test_defaults(self):
        tp = TrainParams()
        assert (tp.k, tp.T, tp.s, tp.P, tp.Q) == (480, 48.0, 200.0, 0.78e-4, 0.28e-3)
        assert (tp.u_lower, tp.u_upper) == (-2 / 3, 2 / 3)

    def test_invalid(self):
        with pytest.raises(ValueError):
            TrainParams(k=2)
        with pytest.raises(ValueError):
            TrainParams(u_lower=1.0, u_upper=0.0)

    def test_simulated_point_is_dc_feasible(self):
        tp = TrainParams(k=30)
        p = build_train_problem(tp)
        u = np.full(30, 0.3)
        w = simulate_train(tp, u)
        assert infeasibility(p, w) <= 1e-12
        L = TrainLayout(30)
        _, x, y = L.split(w)
        # position dynamics in A hold except the terminal condition
        E, e = p.feasible_set.E, p.feasible_set.e
        res = E @ w - e
        assert np.abs(res[:-2]).max() <= 1e-12 and abs(res[-1]) <= 1e-12

    def test_objective_is_positive_power(self):
        tp = TrainParams(k=10)
        p = build_train_problem(tp)
        w = np.random.default_rng(0).normal(size=p.dim)
        u, _, y = TrainLayout(10).split(w)
        assert p.objective(w) == pytest.approx(float(np.sum(y * np.maximum(u[1:], 0.0))), abs=1e-12)

    def test_tachogram_rows(self):
        tp = TrainParams(k=12)
        tach = tachogram(tp, np.zeros(3 * 12 - 2))
        assert tach.shape == (13, 2)
        assert tach[0].tolist() == [0.0, 0.0] and tach[-1].tolist() == [200.0, 0.0]

    def test_validate(self):
        assert validate(build_train_problem(TrainParams(k=10))) == []
