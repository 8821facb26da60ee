import numpy as np
import pytest

from lagbound import (
    Automaton,
    BoundingMode,
    MkpInstance,
    PartialAssignment,
    SolveStatus,
    SspInstance,
    SubgradientConfig,
    generate_mkp,
    generate_ssp,
    init_params,
    propagate_knapsack,
    propagate_regular,
    prune_test,
    solve,
)

from _oracles import optimum
from conftest import random_small_mkp, random_small_ssp

FAST_SG = dict(sg_root=SubgradientConfig(30, 1.0, 0.95),
               sg_node=SubgradientConfig(5, 1.0, 0.95))


class TestPruneTest:
    def test_integrality_strengthening(self):
        # with integral objectives any bound below incumbent+1 closes the node
        assert prune_test(6.9999999, 7) is True
        assert prune_test(7.5, 7) is True
        assert prune_test(7.0, 7) is True
        assert prune_test(8.0 - 1e-5, 7) is True

    def test_keeps_when_bound_allows_improvement(self):
        assert prune_test(8.0, 7) is False
        assert prune_test(8.2, 7) is False

    def test_no_incumbent_keeps(self):
        assert prune_test(3.0, None) is False


class TestPropagateKnapsack:
    def test_too_heavy_item_excluded(self):
        inst = MkpInstance(n=2, d=1, profits=[1, 1], weights=[[3, 1]], capacities=[2])
        domains = [{0, 1}, {0, 1}]
        out = propagate_knapsack(inst, PartialAssignment.empty(2), domains)
        assert out == [{0}, {0, 1}]

    def test_residual_capacity_accounts_for_fixed(self):
        inst = MkpInstance(n=3, d=1, profits=[1, 1, 1], weights=[[2, 3, 1]], capacities=[4])
        domains = [{1}, {0, 1}, {0, 1}]
        out = propagate_knapsack(inst, PartialAssignment.empty(3), domains)
        assert out == [{1}, {0}, {0, 1}]  # item 1 no longer fits

    def test_overload_signalled_by_empty_domain(self):
        inst = MkpInstance(n=2, d=1, profits=[1, 1], weights=[[3, 3]], capacities=[4])
        domains = [{1}, {1}]
        out = propagate_knapsack(inst, PartialAssignment.empty(2), domains)
        assert any(len(d) == 0 for d in out)

    def test_no_change_when_everything_fits(self):
        inst = MkpInstance(n=3, d=2, profits=[1, 1, 1],
                           weights=[[1, 1, 1], [1, 1, 1]], capacities=[3, 3])
        domains = [{0, 1}] * 3
        out = propagate_knapsack(inst, PartialAssignment.empty(3), domains)
        assert out == [{0, 1}] * 3


def only_word_automaton():
    # accepts exactly "aa" over alphabet {a, b}
    return Automaton.from_transitions(
        3, 2, [(0, 0, 1), (1, 0, 2)], initial=0, finals=[2])


class TestPropagateRegular:
    def test_filters_to_single_word(self):
        aut = only_word_automaton()
        out = propagate_regular(aut, [{0, 1}, {0, 1}])
        assert out == [{0}, {0}]

    def test_full_language_unchanged(self):
        aut = Automaton.from_transitions(
            1, 2, [(0, 0, 0), (0, 1, 0)], initial=0, finals=[0])
        out = propagate_regular(aut, [{0, 1}, {0, 1}, {0, 1}])
        assert out == [{0, 1}] * 3

    def test_unreachable_final_empties_domains(self):
        aut = Automaton.from_transitions(2, 1, [(0, 0, 1), (1, 0, 0)], initial=0, finals=[1])
        out = propagate_regular(aut, [{0}, {0}])  # even length cannot end in q1
        assert any(len(d) == 0 for d in out)

    def test_domain_consistency_against_enumeration(self):
        from _oracles import accepted
        import itertools
        rng = np.random.Generator(np.random.PCG64(99))
        for _ in range(60):
            states = int(rng.integers(1, 5))
            alphabet = int(rng.integers(1, 4))
            n = int(rng.integers(1, 6))
            delta = np.where(rng.random((states, alphabet)) < 0.3, -1,
                             rng.integers(0, states, size=(states, alphabet)))
            finals = [q for q in range(states) if rng.random() < 0.5] or [0]
            aut = Automaton(states, alphabet, delta, initial=0, finals=frozenset(finals))
            domains = [set(a for a in range(alphabet) if rng.random() < 0.8) or {0}
                       for _ in range(n)]
            out = propagate_regular(aut, domains)
            # oracle: value survives iff some in-domain accepted word uses it
            expected = [set() for _ in range(n)]
            for word in itertools.product(range(alphabet), repeat=n):
                if all(word[j] in domains[j] for j in range(n)) and accepted(aut, word):
                    for j in range(n):
                        expected[j].add(word[j])
            assert out == expected


class TestSolveMkp:
    def test_tiny_instance_all_modes(self, tiny_mkp):
        model = init_params("mkp", 6, 2, seed=0)
        for mode in BoundingMode:
            res = solve(tiny_mkp, mode, model if mode.uses_model else None, **FAST_SG)
            assert res.status == SolveStatus.OPTIMAL
            assert res.objective == 4
            assert res.solution == (0, 1)

    def test_matches_brute_force_all_modes(self):
        model = init_params("mkp", 6, 2, seed=1)
        for seed in range(25):
            inst = random_small_mkp(seed, max_n=10)
            expect = optimum(inst)
            objectives = {}
            for mode in BoundingMode:
                res = solve(inst, mode, model if mode.uses_model else None, **FAST_SG)
                assert res.status == SolveStatus.OPTIMAL
                objectives[mode.value] = res.objective
            assert set(objectives.values()) == {expect}, (seed, objectives, expect)

    def test_respects_start_partial(self):
        inst = random_small_mkp(3, max_n=9)
        start = PartialAssignment.of(inst.n, {0: 0})
        res = solve(inst, BoundingMode.CP, start=start)
        expect = optimum(inst, start)
        assert res.objective == expect
        assert res.solution[0] == 0

    def test_deterministic_node_counts(self):
        inst = random_small_mkp(5)
        a = solve(inst, BoundingMode.CP_SG, **FAST_SG)
        b = solve(inst, BoundingMode.CP_SG, **FAST_SG)
        assert (a.objective, a.node_count, a.bound_evaluations) == \
               (b.objective, b.node_count, b.bound_evaluations)

    def test_max_nodes_limit(self):
        inst = generate_mkp(20, 3, 0.5, seed=0)
        res = solve(inst, BoundingMode.CP, max_nodes=1)
        assert res.status == SolveStatus.TIMED_OUT
        assert res.node_count >= 1

    def test_infeasible_start(self, tiny_mkp):
        start = PartialAssignment.of(2, {0: 1, 1: 1})
        res = solve(tiny_mkp, BoundingMode.CP, start=start)
        assert res.status == SolveStatus.INFEASIBLE
        assert res.objective is None

    def test_learned_mode_requires_model(self, tiny_mkp):
        with pytest.raises(ValueError, match="requires a model"):
            solve(tiny_mkp, BoundingMode.CP_LEARN_ALL)

    def test_model_family_checked(self, tiny_mkp):
        model = init_params("ssp", 4, 2, seed=0)
        with pytest.raises(ValueError, match="model"):
            solve(tiny_mkp, BoundingMode.CP_LEARN_ALL, model)

    def test_root_bound_reported_for_ld_modes(self, tiny_mkp):
        res = solve(tiny_mkp, BoundingMode.CP_SG, **FAST_SG)
        assert res.root_bound is not None
        assert res.root_bound >= 4.0
        res_cp = solve(tiny_mkp, BoundingMode.CP)
        assert res_cp.root_bound is None

    def test_sg_reduces_nodes(self):
        cp_nodes, sg_nodes = [], []
        for seed in range(10):
            inst = generate_mkp(14, 3, 0.5, seed=seed)
            cp_nodes.append(solve(inst, BoundingMode.CP).node_count)
            sg_nodes.append(solve(inst, BoundingMode.CP_SG, **FAST_SG).node_count)
        assert np.median(sg_nodes) < np.median(cp_nodes)


class TestSolveSsp:
    def test_matches_brute_force_all_modes(self):
        model = init_params("ssp", 4, 2, seed=2)
        for seed in range(15):
            inst = random_small_ssp(seed)
            expect = optimum(inst)
            for mode in BoundingMode:
                res = solve(inst, mode, model if mode.uses_model else None, **FAST_SG)
                assert res.status == SolveStatus.OPTIMAL, (seed, mode)
                assert res.objective == expect, (seed, mode)

    def test_infeasible_instance(self):
        # automaton accepting only odd-length words, even horizon
        aut = Automaton.from_transitions(2, 1, [(0, 0, 1), (1, 0, 0)], initial=0, finals=[1])
        inst = SspInstance(periods=2, activity_count=1, automata=(aut,),
                           profits=[[5, 5]])
        res = solve(inst, BoundingMode.CP)
        assert res.status == SolveStatus.INFEASIBLE

    def test_solution_respects_prefix(self):
        inst = random_small_ssp(7)
        from lagbound.instances import check_partial_feasible
        head = []
        for a in range(inst.activity_count):
            if check_partial_feasible(inst, PartialAssignment.prefix(inst.periods, [a])):
                head = [a]
                break
        res = solve(inst, BoundingMode.CP_SG,
                    start=PartialAssignment.prefix(inst.periods, head), **FAST_SG)
        assert res.status == SolveStatus.OPTIMAL
        assert res.solution[0] == head[0]
        assert res.objective == optimum(inst, PartialAssignment.prefix(inst.periods, head))

    def test_deterministic(self):
        inst = random_small_ssp(9)
        a = solve(inst, BoundingMode.CP_LEARN_ROOT_SG, init_params("ssp", 4, 2, seed=0), **FAST_SG)
        b = solve(inst, BoundingMode.CP_LEARN_ROOT_SG, init_params("ssp", 4, 2, seed=0), **FAST_SG)
        assert (a.objective, a.node_count) == (b.objective, b.node_count)


class TestCounters:
    def test_learn_all_does_no_sg(self, tiny_mkp):
        model = init_params("mkp", 6, 2, seed=0)
        res = solve(tiny_mkp, BoundingMode.CP_LEARN_ALL, model)
        assert res.sg_iterations_total == 0
        assert res.bound_evaluations >= 1

    def test_sg_counts_iterations(self, tiny_mkp):
        res = solve(tiny_mkp, BoundingMode.CP_SG,
                    sg_root=SubgradientConfig(10, 1.0, 0.9),
                    sg_node=SubgradientConfig(2, 1.0, 0.9))
        assert res.sg_iterations_total >= 10
        assert res.bound_evaluations >= 11

    def test_cp_mode_no_bound_work(self, tiny_mkp):
        res = solve(tiny_mkp, BoundingMode.CP)
        assert res.bound_evaluations == 0
        assert res.sg_iterations_total == 0
