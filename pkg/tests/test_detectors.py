import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartbank import (
    AlreadyStoppedError,
    ChartBank,
    ChartVariant,
    GaussianMeanShift,
    GeometricPrior,
    Interval,
    advance_log_stats,
    direct_stat_oracle,
    initial_log_stats,
    posterior_complement_from_stat,
    posterior_from_stat,
    stat_from_posterior,
)

FAMILY = GaussianMeanShift(pre_mean=0.0, sigma=1.0, post_params=Interval(-3.0, 3.0))
PRIOR = GeometricPrior(0.05)
GRID = (0.5, 1.0, 2.0)


def fresh_bank(threshold=np.inf, variant=ChartVariant.SR, grid=GRID):
    return ChartBank(FAMILY, PRIOR, grid, threshold, variant)


class TestRecursionPrimitives:
    def test_initial_states(self):
        assert np.all(initial_log_stats(ChartVariant.SR, 3) == -np.inf)
        assert np.all(initial_log_stats(ChartVariant.MAX, 2) == -np.inf)
        assert np.all(initial_log_stats(ChartVariant.SUM, 4) == 0.0)
        with pytest.raises(ValueError):
            initial_log_stats(ChartVariant.SR, 0)

    def test_first_step_is_common(self):
        # from their initial states all three recursions produce the same
        # first-slot statistic: slot_cost + llr
        llr = np.array([-0.3, 0.7])
        for variant in ChartVariant:
            state = initial_log_stats(variant, 2)
            out = advance_log_stats(variant, state, 0.01, llr)
            assert np.allclose(out, 0.01 + llr)

    def test_single_step_formulas(self):
        state = np.array([0.4])
        llr = np.array([0.2])
        sr = advance_log_stats(ChartVariant.SR, state, 0.05, llr)
        mx = advance_log_stats(ChartVariant.MAX, state, 0.05, llr)
        sm = advance_log_stats(ChartVariant.SUM, state, 0.05, llr)
        assert sr[0] == pytest.approx(np.logaddexp(0.4, 0.0) + 0.25)
        assert mx[0] == pytest.approx(0.4 + 0.25)
        assert sm[0] == pytest.approx(0.4 + 0.25)

    def test_batch_broadcasting(self):
        state = np.zeros((4, 3))
        llr = np.linspace(-1, 1, 12).reshape(4, 3)
        out = advance_log_stats(ChartVariant.SR, state, 0.01, llr)
        assert out.shape == (4, 3)
        single = advance_log_stats(ChartVariant.SR, state[1], 0.01, llr[1])
        assert np.array_equal(out[1], single)


class TestRecursionVsDirect:
    @pytest.mark.parametrize("variant", list(ChartVariant))
    def test_matches_direct_evaluation(self, variant):
        rng = np.random.default_rng(42)
        for _ in range(25):
            path = rng.normal(rng.uniform(0, 1.5), 1.0, size=120)
            bank = fresh_bank(variant=variant)
            trace = np.empty((path.size, len(GRID)))
            for i, x in enumerate(path):
                bank.step(float(x))
                trace[i] = bank.log_stats
            direct = direct_stat_oracle(FAMILY, PRIOR, variant, path, GRID)
            assert np.abs(trace - direct).max() < 1e-9

    def test_geometric_series_closed_form(self):
        # constant x = 0.5 zeroes the lone chart's llr, so the SR statistic
        # is a geometric sum with an explicit closed form
        prior = GeometricPrior(0.01)
        bank = ChartBank(FAMILY, prior, (1.0,), np.inf, ChartVariant.SR)
        expected = [
            0.010050335853501506,
            0.7082353104434055,
            1.118746629841962,
            1.4114833306320163,
            1.6396899270348382,
        ]
        for n in range(5):
            bank.step(0.5)
            assert bank.log_stats[0] == pytest.approx(expected[n], abs=1e-12)

    def test_geometric_series_stop_slots(self):
        # thresholds placed against the closed-form trace above
        prior = GeometricPrior(0.01)
        for threshold, slot in ((0.05, 2), (math.log(5.0), 5)):
            bank = ChartBank(FAMILY, prior, (1.0,), threshold, ChartVariant.SR)
            report = bank.run_to_stop(np.full(50, 0.5))
            assert report is not None and report.stopped_at == slot


class TestOrdering:
    def test_statistic_ordering_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            path = rng.normal(0.4, 1.3, size=100)
            banks = {v: fresh_bank(variant=v) for v in ChartVariant}
            for x in path:
                for bank in banks.values():
                    bank.step(float(x))
                s = {v: banks[v].log_stats for v in ChartVariant}
                assert np.all(s[ChartVariant.SUM] <= s[ChartVariant.MAX])
                assert np.all(s[ChartVariant.MAX] <= s[ChartVariant.SR])

    def test_stop_time_ordering(self):
        rng = np.random.default_rng(4)
        threshold = 4.0
        stops = {v: [] for v in ChartVariant}
        for run in range(30):
            path = rng.normal(0.8, 1.0, size=400)
            for v in ChartVariant:
                report = fresh_bank(threshold, v).run_to_stop(path)
                stops[v].append(report.stopped_at if report else math.inf)
        for a, b, c in zip(stops[ChartVariant.SR], stops[ChartVariant.MAX], stops[ChartVariant.SUM]):
            assert a <= b <= c


class TestBankBehaviour:
    def test_crossing_is_inclusive(self):
        # the statistic equals slot_cost + llr on the first step; a threshold
        # placed exactly there must fire
        x = 0.9
        llr = FAMILY.llr(1.0, x)
        exact = PRIOR.slot_cost + llr
        bank = ChartBank(FAMILY, PRIOR, (1.0,), exact, ChartVariant.SR)
        report = bank.step(x)
        assert report is not None and report.stopped_at == 1
        assert report.firing_value == pytest.approx(exact, abs=0, rel=1e-15)

    def test_tie_breaks_to_lowest_chart(self):
        # candidates -1 and 1 have identical llr dynamics when every x = 0,
        # so both charts sit at exactly slot_cost - 1/2 after one step; a
        # threshold placed there makes them cross together and the report
        # must name chart 0
        exact = PRIOR.slot_cost - 0.5
        bank = ChartBank(FAMILY, PRIOR, (-1.0, 1.0), exact, ChartVariant.SUM)
        report = bank.step(0.0)
        assert report is not None and report.stopped_at == 1
        assert report.firing_chart == 0

    def test_step_after_stop_raises(self):
        bank = fresh_bank(threshold=-10.0)
        bank.step(0.0)
        with pytest.raises(AlreadyStoppedError):
            bank.step(0.0)

    def test_run_to_stop_none_when_no_crossing(self):
        bank = fresh_bank(threshold=1e9)
        assert bank.run_to_stop(np.zeros(20)) is None
        assert bank.time == 20

    def test_per_chart_thresholds(self):
        thresholds = np.array([1e9, 1e9, -1e9])
        bank = fresh_bank(threshold=thresholds)
        report = bank.step(0.0)
        assert report is not None and report.firing_chart == 2

    def test_properties_are_copies(self):
        bank = fresh_bank()
        bank.log_stats[:] = 123.0
        bank.grid[:] = 0.0
        assert not np.any(bank.log_stats == 123.0)
        assert np.array_equal(bank.grid, np.asarray(GRID))

    def test_validation(self):
        with pytest.raises(ValueError):
            fresh_bank(grid=())
        with pytest.raises(ValueError):
            fresh_bank(grid=(1.0, 0.5))
        with pytest.raises(ValueError):
            fresh_bank(grid=(1.0, 9.0))  # outside the admissible interval
        with pytest.raises(ValueError):
            fresh_bank(threshold=np.nan)
        with pytest.raises(ValueError):
            fresh_bank(threshold=np.array([1.0, 2.0]))  # wrong length
        with pytest.raises(ValueError):
            # a candidate equal to the pre-change mean cannot be told apart
            fresh_bank(grid=(0.0, 1.0))


class TestPosterior:
    def test_identity_round_trip_full_precision(self):
        rho = 0.01
        for z in np.linspace(-27, 27, 121):
            log_r = float(z - math.log(rho))
            p = posterior_from_stat(log_r, rho)
            pc = posterior_complement_from_stat(log_r, rho)
            back = stat_from_posterior(p, rho, complement=pc)
            assert abs(back - log_r) <= 1e-9 * max(1.0, abs(log_r))

    def test_complement_pairs_sum_to_one(self):
        rho = 0.2
        for log_r in (-5.0, 0.0, 3.0):
            p = posterior_from_stat(log_r, rho)
            pc = posterior_complement_from_stat(log_r, rho)
            assert p + pc == pytest.approx(1.0, abs=1e-15)

    def test_extremes(self):
        assert posterior_from_stat(-math.inf, 0.1) == 0.0
        assert posterior_from_stat(math.inf, 0.1) == 1.0
        assert stat_from_posterior(0.0, 0.1) == -math.inf
        assert stat_from_posterior(1.0, 0.1) == math.inf
        assert stat_from_posterior(1.0, 0.1, complement=0.0) == math.inf

    def test_threshold_equivalence(self):
        # stopping when the posterior reaches p* is the same as stopping when
        # the log statistic reaches the mapped threshold
        rho = 0.05
        p_star = 0.99
        log_b = stat_from_posterior(p_star, rho)
        for log_r in (log_b - 1e-6, log_b, log_b + 1e-6):
            assert (posterior_from_stat(log_r, rho) >= p_star) == (log_r >= log_b)

    def test_validation(self):
        with pytest.raises(ValueError):
            posterior_from_stat(0.0, 0.0)
        with pytest.raises(ValueError):
            stat_from_posterior(1.5, 0.1)

    @settings(max_examples=60)
    @given(
        log_r=st.floats(min_value=-40, max_value=40),
        rho=st.floats(min_value=1e-4, max_value=0.9),
    )
    def test_posterior_monotone_in_statistic(self, log_r, rho):
        p1 = posterior_from_stat(log_r, rho)
        p2 = posterior_from_stat(log_r + 0.5, rho)
        assert 0.0 <= p1 <= 1.0
        assert p2 >= p1


@settings(max_examples=25, deadline=None)
@given(
    data=st.lists(
        st.floats(min_value=-4, max_value=4, allow_nan=False), min_size=1, max_size=60
    ),
    rho=st.floats(min_value=1e-3, max_value=0.5),
)
def test_recursion_vs_direct_property(data, rho):
    prior = GeometricPrior(rho)
    path = np.asarray(data)
    for variant in ChartVariant:
        bank = ChartBank(FAMILY, prior, GRID, np.inf, variant)
        trace = np.empty((path.size, len(GRID)))
        for i, x in enumerate(path):
            bank.step(float(x))
            trace[i] = bank.log_stats
        direct = direct_stat_oracle(FAMILY, prior, variant, path, GRID)
        assert np.abs(trace - direct).max() < 1e-9
