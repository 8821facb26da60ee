import numpy as np
import pytest

from lagbound import (
    BoundResult,
    Infeasible,
    MkpInstance,
    Multipliers,
    PartialAssignment,
    SubgradientConfig,
    evaluate_bound,
    generate_mkp,
    generate_ssp,
    optimize_multipliers,
    subgradient_step,
)

from _oracles import optimum
from conftest import random_small_mkp, random_small_ssp

TOL = 1e-9


class TestEvaluateBoundMkp:
    def test_zero_multipliers(self, tiny_mkp):
        mu = Multipliers.zeros(tiny_mkp)
        res = evaluate_bound(tiny_mkp, PartialAssignment.empty(2), mu)
        assert res.main_value == pytest.approx(7.0, abs=TOL)
        assert res.penalty_values.tolist() == [0.0]
        assert res.bound == pytest.approx(7.0, abs=TOL)
        assert res.bound >= 4.0  # brute-force optimum

    def test_ideal_multipliers_close_the_gap(self, tiny_mkp):
        mu = Multipliers("mkp", np.array([[-3.0, -4.0]]))
        res = evaluate_bound(tiny_mkp, PartialAssignment.empty(2), mu)
        assert res.main_value == pytest.approx(0.0, abs=TOL)
        assert res.penalty_values[0] == pytest.approx(4.0, abs=TOL)
        assert res.bound == pytest.approx(4.0, abs=TOL)

    def test_zero_mu_reduces_to_first_constraint(self):
        for seed in range(5):
            inst = random_small_mkp(seed)
            res = evaluate_bound(inst, PartialAssignment.empty(inst.n), Multipliers.zeros(inst))
            assert (res.penalty_values == 0.0).all()
            assert res.bound == pytest.approx(res.main_value, abs=TOL)

    def test_additivity(self):
        rng = np.random.Generator(np.random.PCG64(5))
        for seed in range(10):
            inst = random_small_mkp(seed)
            mu = Multipliers("mkp", rng.uniform(-10, 10, size=(inst.d - 1, inst.n)))
            res = evaluate_bound(inst, PartialAssignment.empty(inst.n), mu)
            assert res.bound == pytest.approx(res.main_value + res.penalty_values.sum(), abs=TOL)

    def test_subgradient_coordinates_in_unit_range(self):
        rng = np.random.Generator(np.random.PCG64(6))
        inst = random_small_mkp(3)
        mu = Multipliers("mkp", rng.uniform(-10, 10, size=(inst.d - 1, inst.n)))
        res = evaluate_bound(inst, PartialAssignment.empty(inst.n), mu)
        assert set(np.unique(res.subgradient.values)).issubset({-1.0, 0.0, 1.0})

    def test_infeasible_partial(self, tiny_mkp):
        partial = PartialAssignment.of(2, {0: 1, 1: 1})  # dim-2 load 6 > 3
        with pytest.raises(Infeasible):
            evaluate_bound(tiny_mkp, partial, Multipliers.zeros(tiny_mkp))

    def test_shape_check(self, tiny_mkp):
        bad = Multipliers("mkp", np.zeros((1, 3)))
        with pytest.raises(ValueError):
            evaluate_bound(tiny_mkp, PartialAssignment.empty(2), bad)


class TestBoundValidity:
    """B(mu) >= optimum for any finite mu, both families, random partials."""

    def test_mkp_validity(self):
        rng = np.random.Generator(np.random.PCG64(777))
        for seed in range(60):
            inst = random_small_mkp(seed, max_n=9)
            depth = int(rng.integers(0, 3))
            partial = PartialAssignment.of(
                inst.n, {int(j): int(rng.integers(0, 2))
                         for j in rng.choice(inst.n, size=depth, replace=False)})
            opt = optimum(inst, partial)
            for _ in range(3):
                mu = Multipliers("mkp", rng.uniform(-10, 10, size=(inst.d - 1, inst.n)))
                try:
                    res = evaluate_bound(inst, partial, mu)
                except Infeasible:
                    assert opt is None
                    break
                if opt is not None:
                    assert res.bound >= opt - TOL

    def test_ssp_validity(self):
        rng = np.random.Generator(np.random.PCG64(888))
        for seed in range(25):
            inst = random_small_ssp(seed)
            opt = optimum(inst)
            assert opt is not None  # generator guarantees feasibility
            shape = (len(inst.automata) - 1, inst.periods, inst.activity_count)
            for _ in range(3):
                mu = Multipliers("ssp", rng.uniform(-10, 10, size=shape))
                res = evaluate_bound(inst, PartialAssignment.empty(inst.periods), mu)
                assert res.bound >= opt - TOL


class TestSubgradientStep:
    def test_direct_formula(self):
        mu = Multipliers("mkp", np.array([[0.0, 0.0]]))
        res = _fake_result(mu, x0=[1, 0], x1=[0, 0])
        out = subgradient_step(mu, res, 0.5)
        assert out.values.tolist() == [[0.5, 0.0]]

    def test_zero_subgradient_fixed_point(self):
        mu = Multipliers("mkp", np.array([[1.5, -2.0]]))
        res = _fake_result(mu, x0=[1, 0], x1=[1, 0])
        out = subgradient_step(mu, res, 3.0)
        assert out.values.tolist() == mu.values.tolist()

    def test_negative_direction(self):
        mu = Multipliers("mkp", np.array([[1.0, -1.0]]))
        res = _fake_result(mu, x0=[0, 1], x1=[1, 1])
        out = subgradient_step(mu, res, 2.0)
        assert out.values.tolist() == [[-1.0, -1.0]]

    def test_local_linearity_of_bound(self):
        # moving mu by eps in a coordinate moves the bound by eps*subgradient,
        # while the sub-problem argmaxes stay unchanged
        inst = random_small_mkp(11)
        rng = np.random.Generator(np.random.PCG64(4))
        mu = Multipliers("mkp", rng.uniform(-5, 5, size=(inst.d - 1, inst.n)))
        partial = PartialAssignment.empty(inst.n)
        res = evaluate_bound(inst, partial, mu)
        eps = 1e-7
        for coord in [(0, 0), (inst.d - 2, inst.n - 1)]:
            bumped = mu.values.copy()
            bumped[coord] += eps
            res2 = evaluate_bound(inst, partial, Multipliers("mkp", bumped))
            predicted = res.bound + eps * res.subgradient.values[coord]
            assert res2.bound == pytest.approx(predicted, abs=1e-12 + eps * 1e-3)


def _fake_result(mu, x0, x1):
    sg = np.asarray(x0, dtype=float) - np.asarray(x1, dtype=float)
    return BoundResult(
        bound=0.0, main_value=0.0, penalty_values=np.zeros(1),
        solutions=[np.asarray(x0), np.asarray(x1)],
        subgradient=mu.with_values(sg[None, :]),
    )


class TestOptimizeMultipliers:
    def test_zero_iterations(self, tiny_mkp):
        mu0 = Multipliers.zeros(tiny_mkp)
        best, mu, trace = optimize_multipliers(
            tiny_mkp, PartialAssignment.empty(2), mu0, SubgradientConfig(0, 1.0, 0.97))
        assert trace == [7.0]
        assert best == 7.0
        assert mu is mu0

    def test_descends_toward_optimum(self, tiny_mkp):
        best, _, trace = optimize_multipliers(
            tiny_mkp, PartialAssignment.empty(2), Multipliers.zeros(tiny_mkp),
            SubgradientConfig(200, 1.0, 0.97))
        assert trace[0] == pytest.approx(7.0, abs=TOL)
        assert len(trace) == 201
        assert 4.0 - TOL <= best <= 7.0
        assert best < 7.0  # some progress on this instance

    def test_best_is_min_of_trace(self):
        inst = random_small_mkp(2)
        best, best_mu, trace = optimize_multipliers(
            inst, PartialAssignment.empty(inst.n), Multipliers.zeros(inst),
            SubgradientConfig(50, 1.0, 0.95))
        assert best == min(trace)
        res = evaluate_bound(inst, PartialAssignment.empty(inst.n), best_mu)
        assert res.bound == pytest.approx(best, abs=TOL)

    def test_best_mu_consistent_on_ssp(self):
        inst = random_small_ssp(5)
        best, best_mu, trace = optimize_multipliers(
            inst, PartialAssignment.empty(inst.periods), Multipliers.zeros(inst),
            SubgradientConfig(30, 0.5, 0.95))
        assert best == min(trace)
        res = evaluate_bound(inst, PartialAssignment.empty(inst.periods), best_mu)
        assert res.bound == pytest.approx(best, abs=TOL)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SubgradientConfig(-1, 1.0, 0.9)
        with pytest.raises(ValueError):
            SubgradientConfig(10, 0.0, 0.9)
        with pytest.raises(ValueError):
            SubgradientConfig(10, 1.0, 1.5)


class TestMultipliers:
    def test_zeros_shapes(self):
        mkp = generate_mkp(5, 3, 0.5, seed=0)
        assert Multipliers.zeros(mkp).values.shape == (2, 5)
        ssp = generate_ssp(4, 3, 3, seed=0)
        assert Multipliers.zeros(ssp).values.shape == (1, 4, 3)

    def test_finite_required(self):
        with pytest.raises(ValueError):
            Multipliers("mkp", np.array([[np.inf, 0.0]]))

    def test_family_checked(self):
        mkp = generate_mkp(3, 2, 0.5, seed=0)
        mu = Multipliers("ssp", np.zeros((1, 3, 2)))
        with pytest.raises(ValueError):
            mu.check_shape(mkp)
