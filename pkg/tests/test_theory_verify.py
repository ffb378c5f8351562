import itertools
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from privsbm.config import VerifySection
from privsbm.errors import InvalidParameter, TooManyPairs
from privsbm.graph_model import (
    Labeling,
    SbmParams,
    balanced_array,
    balanced_default,
    sample_sbm,
)
from privsbm.mechanism import MechanismConfig
from privsbm.score_engine import ScoreContext
from privsbm.theory_verify import (
    LemmaCheck,
    chernoff_bound_check,
    check_k2_identity,
    check_split_merge_bounds,
    exact_tail_probability,
    graph_tail_probability,
    near_optimal_sets,
    orbit_bound_checks,
    orbit_census,
    orbit_count_bound,
    orbit_risk_bound,
    peeling_bound_check,
    run_verification,
    split_merge_bound,
    write_checks_csv,
    write_junit,
)


def _labelings(n, k, beta):
    return [Labeling.from_array(row, k) for row in balanced_array(n, k, beta)]


class TestTail:
    def test_single_move(self, small_params, block_truth):
        sigma = Labeling((1, 2, 2, 2), 2)
        assert exact_tail_probability(small_params, block_truth, sigma, 0.0) == (
            pytest.approx(0.25)
        )

    def test_infinite_slack(self, small_params, block_truth):
        sigma = Labeling((1, 2, 1, 2), 2)
        assert exact_tail_probability(small_params, block_truth, sigma, math.inf) == 1

    def test_truth_against_itself(self, small_params, block_truth):
        assert exact_tail_probability(small_params, block_truth, block_truth, 0.0) == 1

    @pytest.mark.parametrize("n, beta", [(4, 1.0), (5, 1.25)])
    def test_outcome_sum_matches_graph_sum(self, n, beta):
        params = SbmParams(n, 2, 3.0, 1.0, beta)
        labelings = _labelings(n, 2, beta)
        for truth, sigma in itertools.product(labelings[:4], labelings):
            for s in (0.0, 0.5, 2.0):
                assert exact_tail_probability(params, truth, sigma, s) == pytest.approx(
                    graph_tail_probability(params, truth, sigma, s), abs=1e-12
                )

    def test_pair_cap(self):
        params = SbmParams(12, 2, 3.0, 1.0)
        truth = balanced_default(params)
        alternating = Labeling(tuple(1 + i % 2 for i in range(12)), 2)
        with pytest.raises(TooManyPairs):
            exact_tail_probability(params, truth, alternating, 0.0)


class TestChernoff:
    def test_exhaustive_small(self, small_params):
        labelings = _labelings(4, 2, 1.0)
        for truth, sigma in itertools.product(labelings, repeat=2):
            checks = chernoff_bound_check(
                small_params, truth, sigma, (0.0, 0.25, 0.5, 1.0, 2.0)
            )
            assert all(check.passed for check in checks)

    def test_penalty_outside_interval_fails(self):
        params = SbmParams(6, 2, 3.0, 1.0, 1.5)
        truth = Labeling((1, 1, 1, 2, 2, 2), 2)
        sigma = Labeling((1, 1, 2, 2, 2, 2), 2)
        (check,) = chernoff_bound_check(params, truth, sigma, (0.0,), lam=-10.0)
        assert (check.counts.alpha, check.counts.gamma) == (2, 3)
        assert check.lhs == pytest.approx(1.0)
        assert not check.passed


class TestSplitMerge:
    @pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
    def test_k2_identity(self, n):
        check = check_k2_identity(SbmParams(n, 2, 3.0, 1.0, 1.25))
        assert check.passed
        assert check.lhs == 0

    def test_k2_identity_needs_two_classes(self):
        with pytest.raises(InvalidParameter):
            check_k2_identity(SbmParams(6, 3, 2.0, 1.0))

    def test_bound_needs_three_classes(self, small_params):
        with pytest.raises(InvalidParameter):
            check_split_merge_bounds(small_params)

    def test_bound_regimes(self):
        assert split_merge_bound(9, 3, 1.0, 0) == 0.0
        assert split_merge_bound(9, 3, 1.0, 1) == pytest.approx(2.0)
        assert split_merge_bound(9, 3, 1.0, 2) == pytest.approx(2 / 36 * 6)

    @pytest.mark.slow
    @pytest.mark.parametrize("beta", [1.0, 1.1, 1.25])
    def test_bound_exhaustive(self, beta):
        assert check_split_merge_bounds(SbmParams(9, 3, 3.0, 1.0, beta)).passed


class TestNearOptimal:
    def test_level_sets(self, small_params, matching_graph):
        ctx = ScoreContext.from_params(matching_graph, small_params)
        profile = near_optimal_sets(ctx, small_params, [0.0, 10.0])
        assert profile.set_sizes[0] == 2
        assert profile.set_sizes[1] == 6
        assert np.all(np.diff(profile.linear_bound) >= 0)


class TestPeeling:
    @pytest.mark.parametrize("epsilon", [2.0, 100.0, 1000.0])
    def test_shifted_bound_holds(self, small_params, epsilon):
        cfg = MechanismConfig.create(small_params, epsilon)
        graph = sample_sbm(small_params, balanced_default(small_params), 1)
        ctx = ScoreContext.from_params(graph, small_params)
        for s in (0.25, 0.5, 1.0, 2.0):
            check = peeling_bound_check(ctx, cfg, small_params, s)
            assert check.exact_lhs <= check.shifted_rhs + 1e-12
            assert check.peeled_rhs <= check.shifted_rhs

    @pytest.mark.parametrize("epsilon", [100.0, 1000.0])
    def test_peeled_bound_is_informative(self, small_params, epsilon):
        cfg = MechanismConfig.create(small_params, epsilon, c=1.0)
        for seed in range(5):
            graph = sample_sbm(small_params, balanced_default(small_params), seed)
            ctx = ScoreContext.from_params(graph, small_params)
            for s in (0.5, 1.0, 2.0):
                check = peeling_bound_check(ctx, cfg, small_params, s)
                assert check.peeled_rhs < 1
                assert check.exact_lhs <= check.peeled_rhs + 1e-12
                assert check.passed

    def test_zero_temperature(self, small_params, matching_graph):
        cfg = MechanismConfig.create(small_params, 0.0)
        ctx = ScoreContext.from_params(matching_graph, small_params)
        check = peeling_bound_check(ctx, cfg, small_params, 1.0)
        assert math.isinf(check.peeled_rhs)
        assert check.exact_lhs == pytest.approx(4 / 6)
        assert check.passed

    def test_slack_positive(self, small_params, matching_graph, wide_mechanism):
        ctx = ScoreContext.from_params(matching_graph, small_params)
        with pytest.raises(InvalidParameter):
            peeling_bound_check(ctx, wide_mechanism, small_params, 0.0)

    def test_verification_run(self):
        cfg = VerifySection(
            chernoff_n=(),
            reduction_n=(),
            identity_n=(),
            split_merge_betas=(),
            orbit_n=(),
        )
        checks = run_verification(cfg)
        assert len(checks) == 200
        assert {check.lemma for check in checks} == {"peeling"}
        assert all(check.passed for check in checks)


class TestOrbits:
    def test_census(self, small_params, block_truth):
        census = orbit_census(small_params, block_truth)
        assert census == {0: 1, 2: 2}
        assert sum(census.values()) * 2 == len(balanced_array(4, 2, 1.0))

    @pytest.mark.parametrize("n, k", [(6, 2), (6, 3), (8, 2)])
    def test_census_covers_support(self, n, k):
        params = SbmParams(n, k, 3.0, 1.0, 1.25)
        census = orbit_census(params, balanced_default(params))
        assert census[0] == 1
        assert sum(census.values()) * math.factorial(k) == len(
            balanced_array(n, k, 1.25)
        )

    def test_count_bound(self):
        assert orbit_count_bound(4, 2, 0) == 1.0
        assert orbit_count_bound(4, 2, 2) == 16.0
        assert orbit_count_bound(100, 2, 1) == pytest.approx(200 * math.e)

    def test_count_checks(self):
        params = SbmParams(6, 3, 3.0, 1.0, 1.25)
        checks = orbit_bound_checks(params, balanced_default(params))
        assert checks
        assert all(check.passed for check in checks)

    def test_risk_bound(self):
        params = SbmParams(6, 2, 3.0, 1.0)
        exact, bound = orbit_risk_bound(params, balanced_default(params), 0.5)
        assert 0 < exact <= bound


class TestReports:
    @pytest.fixture
    def checks(self):
        return [
            LemmaCheck("peeling", "n=4 s=1", 0.25, 0.5, True),
            LemmaCheck("peeling", "n=4 s=2", 0.75, 0.5, False),
            LemmaCheck("orbit_count", "n=4 m=2", 2, 16.0, True),
        ]

    def test_margin(self, checks):
        assert checks[1].margin == pytest.approx(-0.25)

    def test_csv(self, tmp_path, checks):
        path = tmp_path / "verification.csv"
        write_checks_csv(checks, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "lemma,instance,lhs,rhs,margin,pass"
        assert len(lines) == 4
        assert lines[2].endswith(",false")

    def test_junit(self, tmp_path, checks):
        path = tmp_path / "verification.xml"
        write_junit(checks, path)
        root = ET.parse(path).getroot()
        assert root.get("tests") == "3"
        assert root.get("failures") == "1"
        suites = {suite.get("name"): suite for suite in root}
        assert suites["peeling"].get("failures") == "1"
        assert len(suites["orbit_count"]) == 1
