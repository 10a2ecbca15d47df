import itertools
import math

import numpy as np
import pytest

from conftest import all_displays
from rmj import oracle
from rmj.model import RmjModel, pmf_topk
from rmj.oracle import (
    MallowsSpec,
    PairwiseMarginals,
    aggregate_choice,
    build_tilde_lambda,
    class_probabilities,
    class_probabilities_enumerated,
    enumerate_lambda,
    expected_kendall,
    f_n,
    group1_mass,
    group1_mass_enumerated,
    inconsistency_demo,
    kemeny_from_pairwise,
    mallows_topk_pmf,
    marginal_topk,
    pairwise_marginals,
    point_mass,
    topk_marginals,
    uniform_distribution,
    verify_suite,
)
from rmj.ranking import DisplaySet, Ranking, TopKList, kendall_tau, psi


class TestEnumeration:
    def test_rmj_table_sums_to_one(self):
        assert math.fsum(enumerate_lambda(RmjModel.centered(3, 0.4)).probs) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("n", range(1, 7))
    def test_mallows_normaliser(self, n):
        dist = enumerate_lambda(MallowsSpec.centered(n, 0.35))
        assert dist.normalizer == pytest.approx(psi(n, 0.35), rel=1e-13)
        assert dist.normalizer == pytest.approx(math.fsum(0.35 ** kendall_tau(Ranking(p)) for p in itertools.permutations(range(n))), rel=1e-13)

    def test_rmj_marginals_match_prefix_closed_form(self):
        model = RmjModel(Ranking((2, 4, 0, 3, 1)), 0.6)
        dist = enumerate_lambda(model)
        for k in range(1, 5):
            for key, p in topk_marginals(dist, k).items():
                assert abs(p - pmf_topk(model, TopKList(key, 5))) < 1e-12

    def test_cap(self):
        with pytest.raises(ValueError):
            enumerate_lambda(RmjModel.centered(9, 0.5))

    def test_table_invariants(self):
        with pytest.raises(ValueError):
            oracle.RankingDistribution(oracle.all_permutations(3), np.full(6, 0.2))


class TestAggregateChoice:
    def test_point_mass_gives_indicator(self):
        pi = Ranking((3, 1, 0, 2))
        dist = point_mass(pi)
        S = DisplaySet((0, 1, 2))
        assert aggregate_choice(dist, S, (1,)) == 1.0
        assert aggregate_choice(dist, S, (0,)) == 0.0
        assert aggregate_choice(dist, S, (1, 0)) == 1.0
        assert aggregate_choice(dist, S, (1, 2)) == 0.0

    def test_uniform_single_choice(self):
        dist = uniform_distribution(5)
        for S in all_displays(5):
            for x in S.items:
                assert aggregate_choice(dist, S, (x,)) == pytest.approx(1 / S.size, abs=1e-15)

    def test_outside_item_rejected(self):
        with pytest.raises(ValueError):
            aggregate_choice(uniform_distribution(4), DisplaySet((0, 1)), (3,))


class TestMallowsPrefix:
    def test_full_length_is_full_pmf(self):
        spec = MallowsSpec(Ranking((1, 3, 0, 2)), 0.4)
        dist = enumerate_lambda(spec)
        for p in itertools.permutations(range(4)):
            assert mallows_topk_pmf(spec, TopKList(p, 4)) == pytest.approx(dist.prob(p), rel=1e-12)

    @pytest.mark.parametrize("n", range(2, 8))
    def test_matches_marginalisation(self, n):
        spec = MallowsSpec(Ranking(tuple(reversed(range(n)))), 0.45)
        dist = enumerate_lambda(spec)
        for k in range(1, min(n, 4)):
            for key, p in topk_marginals(dist, k).items():
                assert abs(mallows_topk_pmf(spec, TopKList(key, n)) - p) < 1e-12

    def test_identity_prefix_is_the_mode(self):
        spec = MallowsSpec.centered(6, 0.5)
        best = mallows_topk_pmf(spec, TopKList((0, 1, 2), 6))
        assert all(mallows_topk_pmf(spec, TopKList(p, 6)) <= best for p in itertools.permutations(range(6), 3))

    def test_size_cap(self):
        with pytest.raises(ValueError):
            mallows_topk_pmf(MallowsSpec.centered(13, 0.5), TopKList((0,), 13))


class TestTransport:
    @pytest.mark.parametrize("n", [4, 5])
    def test_mass_marginals_and_choices(self, n):
        spec = MallowsSpec.centered(n, 0.1)
        lam, tilde = enumerate_lambda(spec), build_tilde_lambda(spec)
        assert math.fsum(tilde.probs) == pytest.approx(1.0, abs=1e-12)
        assert np.all(tilde.probs >= 0)
        m_e, m_t = topk_marginals(lam, n - 2), topk_marginals(tilde, n - 2)
        assert all(abs(m_e[key] - m_t[key]) < 1e-12 for key in m_e)
        for S in all_displays(n, 3):
            for x in S.items:
                assert abs(aggregate_choice(lam, S, (x,)) - aggregate_choice(tilde, S, (x,))) < 1e-12

    def test_pairs_are_where_the_distributions_differ(self):
        spec = MallowsSpec.centered(4, 0.1)
        lam, tilde = enumerate_lambda(spec), build_tilde_lambda(spec)
        S = DisplaySet((2, 3))
        assert aggregate_choice(tilde, S, (2,)) < 0.5 < aggregate_choice(lam, S, (2,))

    def test_bottom_pair_is_mapped_to_the_two_largest_labels(self):
        spec = MallowsSpec.centered(5, 0.1)
        tilde = build_tilde_lambda(spec)
        # no ranking ends with the centre's own bottom order
        assert tilde.prob((0, 1, 2, 3, 4)) == 0.0
        assert tilde.prob((0, 1, 2, 4, 3)) > 0.0


class TestPairwise:
    def test_point_mass(self):
        pi = Ranking((2, 0, 3, 1))
        assert kemeny_from_pairwise(pairwise_marginals(point_mass(pi))) == pi

    @pytest.mark.parametrize("n", [4, 5, 6])
    def test_mallows_small_q_gives_identity(self, n):
        P = pairwise_marginals(enumerate_lambda(MallowsSpec.centered(n, 0.1)))
        assert all(P[x, y] > 0.5 for x in range(n) for y in range(x + 1, n))
        assert kemeny_from_pairwise(P) == Ranking.identity(n)

    def test_transported_distribution_swaps_the_bottom(self):
        tilde = build_tilde_lambda(MallowsSpec.centered(4, 0.1))
        P = pairwise_marginals(tilde)
        assert P[2, 3] < 0.5
        assert kemeny_from_pairwise(P) == Ranking((0, 1, 3, 2))

    def test_kemeny_minimises_expected_kendall(self):
        tilde = build_tilde_lambda(MallowsSpec.centered(4, 0.3))
        best = kemeny_from_pairwise(pairwise_marginals(tilde))
        values = [expected_kendall(tilde, Ranking(p)) for p in itertools.permutations(range(4))]
        assert expected_kendall(tilde, best) == pytest.approx(min(values), abs=1e-12)

    def test_marginals_validate(self):
        with pytest.raises(ValueError):
            PairwiseMarginals(np.full((3, 3), 0.3))


class TestClasses:
    @pytest.mark.parametrize("n", [4, 5, 6, 7])
    @pytest.mark.parametrize("q", [0.1, 0.3, 0.8])
    def test_sum_to_one(self, n, q):
        assert abs(sum(class_probabilities(n, q).values()) - 1.0) < 1e-12

    def test_match_enumeration(self):
        closed, enum = class_probabilities(5, 0.3), class_probabilities_enumerated(5, 0.3)
        assert all(abs(closed[c] - enum[c]) < 1e-12 for c in closed)

    def test_tiny_q_puts_everything_in_a(self):
        assert class_probabilities(6, 1e-9)["A"] == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("n", [4, 5])
    def test_group1_mass(self, n):
        lam = enumerate_lambda(MallowsSpec.centered(n, 0.1))
        assert abs(group1_mass(n, 0.1) - group1_mass_enumerated(lam)) < 1e-12

    def test_group1_below_half_when_f_positive(self):
        assert f_n(4, 0.1) > 0
        assert group1_mass_enumerated(enumerate_lambda(MallowsSpec.centered(4, 0.1))) < 0.5

    def test_f_limits(self):
        for n in (4, 7, 12):
            assert f_n(n, 0.0) == 1.0
            assert f_n(n, 1e-9) == pytest.approx(1.0, abs=1e-12)
            assert f_n(n, 1.0) == 0.0

    @pytest.mark.parametrize("n,q", [(4, 0.5), (6, 0.7), (9, 0.5), (9, 0.83), (12, 0.8)])
    def test_f_sign_matches_group1_test(self, n, q):
        assert (f_n(n, q) > 0) == (group1_mass(n, q) < 0.5)


class TestDemoAndSuite:
    @pytest.mark.parametrize("n", [4, 5])
    def test_demo_passes(self, n):
        rep = inconsistency_demo(n, 0.1)
        assert rep.passed
        assert rep.recovered == Ranking(tuple(range(n - 2)) + (n - 1, n - 2))

    def test_verify_suite_passes(self):
        results = verify_suite(5, [0.1, 0.5, 0.9], Ranking((4, 2, 0, 1, 3)))
        assert all(r.passed for r in results)
        assert {r.name for r in results} == {"choice", "ranked_choice", "normalisation", "full_pmf", "topk_pmf", "next_item"}

    def test_verify_suite_catches_a_wrong_closed_form(self, monkeypatch):
        import rmj.choice

        real = rmj.choice.choice_prob
        monkeypatch.setattr(rmj.choice, "choice_prob", lambda m, S, x: real(m, S, x) * (1 + 1e-9))
        results = {r.name: r for r in verify_suite(4, [0.5])}
        assert not results["choice"].passed and results["ranked_choice"].passed

    def test_cap(self):
        with pytest.raises(ValueError):
            verify_suite(9, [0.5])

    def test_marginal_lookup(self):
        dist = enumerate_lambda(RmjModel.centered(4, 0.5))
        assert marginal_topk(dist, (0, 1)) == pytest.approx(pmf_topk(RmjModel.centered(4, 0.5), TopKList((0, 1), 4)), rel=1e-13)
