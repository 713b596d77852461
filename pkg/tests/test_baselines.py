import math

import numpy as np
import pytest
from scipy import stats

from inandout.baselines import (BallWalkParams, average_conductance_lower_bound,
                                average_conductance_mc, ball_local_conductance_mc,
                                ball_walk_step, default_speedy_delta,
                                exact_box_conductance_2d, run_ball_walk, run_speedy_batch,
                                run_speedy_walk, speedy_to_uniform, speedy_tv_bias_bound,
                                speedy_walk_step, uniform_in_ball)
from inandout.errors import ParameterError
from inandout.geometry import Ball, Box
from inandout.sampler import make_rng

from conftest import HalfSpace


class TestBallWalkStep:
    def test_center_always_moves(self, rng):
        x = np.zeros(3)
        for _ in range(500):
            assert not np.array_equal(ball_walk_step(Ball(3), x, 0.1, rng), x)

    def test_halfspace_boundary_acceptance(self, rng):
        x = np.zeros(2)
        moved = sum(not np.array_equal(ball_walk_step(HalfSpace(2), x, 0.5, rng), x)
                    for _ in range(10_000))
        assert abs(moved / 10_000 - 0.5) < 4 * math.sqrt(0.25 / 10_000)

    def test_huge_step_freezes(self, rng):
        body = Ball(2)
        # acceptance = vol(K) / vol(B_delta) = 1 / 400
        est, (lo, hi) = ball_local_conductance_mc(body, np.zeros(2), 20.0, 100_000, rng)
        assert lo <= 1 / 400 <= hi

    def test_run_parity_and_stationarity(self):
        body = Box(3)
        p = BallWalkParams(delta=0.5, T=40)
        finals = []
        for c in range(1500):
            rng = make_rng(3, c)
            tr = run_ball_walk(body, body.sample_uniform(rng), p, rng, store_iterates=False)
            assert tr.total_queries == 40
            finals.append(tr.final)
        finals = np.array(finals)
        for i in range(3):
            assert stats.kstest(finals[:, i], stats.uniform(-1, 2).cdf).pvalue > 0.01 / 3


class TestSpeedyStep:
    def test_interior_no_improper(self, rng):
        for _ in range(200):
            x, improper = speedy_walk_step(Box(2), np.zeros(2), 0.5, rng)
            assert improper == 0 and Box(2).contains(x)

    def test_corner_law_is_uniform_on_quarter_disk(self, rng):
        corner, delta, n = np.array([1.0, 1.0]), 0.2, 100_000
        pts, _, _ = run_speedy_batch(Box(2), np.tile(corner, (n, 1)), delta, 1, rng)
        x, _ = speedy_walk_step(Box(2), corner, delta, rng)
        assert Box(2).contains(x)
        v = corner - pts
        ang = np.arctan2(v[:, 1], v[:, 0])
        counts, _ = np.histogram(ang, bins=18, range=(0, math.pi / 2))
        assert stats.chisquare(counts).pvalue > 0.01
        # radius: P(|v| <= r) = (r / delta)^2
        r = np.linalg.norm(v, axis=1)
        assert stats.kstest((r / delta) ** 2, "uniform").pvalue > 0.01

    def test_run_parity(self, rng):
        body = Box(2)
        tr = run_speedy_walk(body, np.array([0.95, 0.95]), BallWalkParams(0.3, 200), rng)
        assert tr.total_queries == sum(tr.trials_per_iter)
        assert tr.proper_steps == 200
        assert np.all(body.contains(np.array(tr.iterates)))

    def test_improper_steps_linear_in_t(self):
        # warm start: improper steps per proper step stay flat as t grows
        body = Box(3)
        X0 = body.sample_uniform(make_rng(1), 2000)
        rates = []
        for t in (20, 200):
            _, improper, _ = run_speedy_batch(body, X0, 0.3, t, make_rng(2))
            rates.append(improper.mean() / t)
        assert 0.5 < rates[1] / rates[0] < 2.0

    def test_batch_matches_single_chain_law(self):
        body = Box(2)
        X0 = np.zeros((4000, 2))
        X, improper, rec = run_speedy_batch(body, X0, 0.3, 30, make_rng(4), record_from=29)
        assert rec.shape == (2, 4000, 2)
        assert np.all(body.contains(X))
        singles = np.array([run_speedy_walk(body, np.zeros(2), BallWalkParams(0.3, 30),
                                            make_rng(5, c), store_iterates=False).final
                            for c in range(4000)])
        for i in range(2):
            assert stats.ks_2samp(X[:, i], singles[:, i]).pvalue > 0.001


class TestConductance:
    def test_deep_interior(self, rng):
        est, _ = ball_local_conductance_mc(Box(3), np.zeros(3), 0.2, 5000, rng)
        assert est == 1.0

    def test_halfspace(self, rng):
        est, (lo, hi) = ball_local_conductance_mc(HalfSpace(4), np.zeros(4), 0.3, 20_000, rng)
        assert lo <= 0.5 <= hi

    def test_box_corner_quarter(self, rng):
        est, (lo, hi) = ball_local_conductance_mc(Box(2), np.array([1.0, 1.0]), 0.05, 40_000, rng)
        assert lo <= 0.25 <= hi

    def test_average_small_delta(self, rng):
        est, _ = average_conductance_mc(Box(3), 1e-6, 10_000, rng)
        assert est > 0.999

    def test_average_box4(self, rng):
        est, (lo, hi) = average_conductance_mc(Box(4), 0.1, 100_000, rng)
        assert lo >= average_conductance_lower_bound(0.1, 4)

    def test_average_large_ball_step(self, rng):
        est, (lo, hi) = average_conductance_mc(Ball(2), 2.0, 20_000, rng)
        assert hi < 1.0 and est < 0.6

    def test_bias_bound(self):
        assert speedy_tv_bias_bound(1.0) == 0.0
        assert speedy_tv_bias_bound(0.8) == pytest.approx(0.25)
        with pytest.raises(ParameterError):
            speedy_tv_bias_bound(0.0)


class TestExactBoxConductance:
    @pytest.mark.parametrize("x", [(0.0, 0.0), (1.0, 1.0), (0.9, 0.1), (-0.95, 0.9),
                                   (1.0, 0.0), (0.8, -0.85)])
    def test_against_monte_carlo(self, x):
        delta = 0.3
        exact = exact_box_conductance_2d(np.array(x), -1.0, 1.0, delta)[0]
        est, (lo, hi) = ball_local_conductance_mc(Box(2), np.array(x), delta, 200_000,
                                                  make_rng(hash(x) % 2 ** 32))
        assert lo - 1e-3 <= exact <= hi + 1e-3

    def test_special_values(self):
        f = lambda x: exact_box_conductance_2d(np.array(x), -1, 1, 0.3)[0]
        assert f((0, 0)) == pytest.approx(1.0)
        assert f((1, 0)) == pytest.approx(0.5)
        assert f((1, 1)) == pytest.approx(0.25)

    def test_step_too_large(self):
        with pytest.raises(ParameterError):
            exact_box_conductance_2d(np.zeros(2), -1, 1, 1.5)


class TestSpeedyToUniform:
    def test_interior_first_call(self, rng):
        x, calls = speedy_to_uniform(Box(3), lambda r: np.full(3, 0.1), rng)
        assert calls == 1 and Box(3).contains(x)

    def test_mean_calls_at_most_two(self):
        body = Box(5)
        d, eps = 5, 0.1
        delta = (8 * d * math.log(d / eps)) ** -0.5
        p = BallWalkParams(delta, 30)

        def sampler(r):
            return run_speedy_walk(body, body.sample_uniform(r), p, r, store_iterates=False).final

        calls = []
        for c in range(1000):
            x, k = speedy_to_uniform(body, sampler, make_rng(9, c))
            assert body.contains(x)
            calls.append(k)
        calls = np.array(calls, dtype=float)
        se = calls.std(ddof=1) / math.sqrt(len(calls))
        assert calls.mean() <= 2 + 3 * se


def test_uniform_in_ball_radius_law(rng):
    pts = uniform_in_ball(rng, np.zeros(4), 2.0, 50_000)
    r = np.linalg.norm(pts, axis=1) / 2.0
    assert stats.kstest(r ** 4, "uniform").pvalue > 0.01


def test_default_delta():
    assert default_speedy_delta(4) == pytest.approx(0.25)


def test_params_validation():
    with pytest.raises(ParameterError):
        BallWalkParams(delta=0.0, T=5)
    with pytest.raises(ParameterError):
        BallWalkParams(delta=0.1, T=-1)
