import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fusesep.metrics import (
    SDR_CAP,
    MetricError,
    hungarian_assign,
    pit_brute_force,
    sdr,
    si_sdr,
    si_sdr_grad,
    si_sdri,
    segment_histogram,
    segment_mse,
    write_histogram_csv,
)
from fusesep.spectral import TimeSignal


class TestSdr:
    def test_perfect_is_capped(self):
        v = np.random.default_rng(0).standard_normal(100)
        assert sdr(v, v) == SDR_CAP

    def test_zero_estimate(self):
        v = np.random.default_rng(1).standard_normal(1000)
        v -= v.mean()
        assert sdr(v, np.zeros_like(v)) == pytest.approx(0.0, abs=1e-12)

    def test_ten_db_noise(self):
        rng = np.random.default_rng(2)
        v = rng.standard_normal(100_000)
        n = rng.standard_normal(100_000) * np.sqrt(0.1)
        assert abs(sdr(v, v + n) - 10.0) <= 0.3

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            sdr(np.ones(3), np.ones(4))

    def test_constant_reference(self):
        with pytest.raises(MetricError):
            sdr(np.ones(5), np.zeros(5))

    def test_accepts_time_signal(self):
        v = np.random.default_rng(3).standard_normal(64)
        assert sdr(TimeSignal(v, 8000), TimeSignal(0.5 * v, 8000)) == pytest.approx(sdr(v, 0.5 * v))


class TestSiSdr:
    def test_hand_case(self):
        assert si_sdr(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == 0.0

    def test_scaled_copy_capped(self):
        v = np.random.default_rng(0).standard_normal(50)
        assert si_sdr(v, 7.3 * v) == SDR_CAP

    @pytest.mark.parametrize("a", [-1.0, 0.1, 3.0, 100.0])
    def test_scale_invariance(self, a):
        rng = np.random.default_rng(4)
        v = rng.standard_normal(500)
        vbar = v + 0.5 * rng.standard_normal(500)
        assert abs(si_sdr(v, a * vbar) - si_sdr(v, vbar)) <= 1e-9

    def test_zero_signals(self):
        with pytest.raises(MetricError):
            si_sdr(np.zeros(4), np.ones(4))
        with pytest.raises(MetricError):
            si_sdr(np.ones(4), np.zeros(4))

    def test_agrees_with_sdr_for_small_orthogonal_error(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal(4000)
        v -= v.mean()
        e = rng.standard_normal(4000)
        e -= e.mean()
        e -= (e @ v) / (v @ v) * v
        e *= 1e-3 * np.linalg.norm(v) / np.linalg.norm(e)
        assert abs(sdr(v, v + e) - si_sdr(v, v + e)) <= 0.01

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3), st.booleans())
    def test_invariance_property(self, seed, a, flip):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(64)
        vbar = rng.standard_normal(64)
        a = -a if flip else a
        assert abs(si_sdr(v, a * vbar) - si_sdr(v, vbar)) <= 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        v = rng.standard_normal(40)
        vbar = v + 0.3 * rng.standard_normal(40)
        val, g = si_sdr_grad(v, vbar)
        assert val == pytest.approx(si_sdr(v, vbar), abs=1e-12)
        h = 1e-6
        fd = np.empty_like(vbar)
        for i in range(vbar.size):
            e = np.zeros_like(vbar)
            e[i] = h
            fd[i] = (si_sdr(v, vbar + e) - si_sdr(v, vbar - e)) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)

    def test_gradient_zero_when_capped(self):
        v = np.random.default_rng(7).standard_normal(10)
        val, g = si_sdr_grad(v, 2 * v)
        assert val == SDR_CAP and np.all(g == 0)


class TestSiSdri:
    def test_mixture_estimate(self):
        rng = np.random.default_rng(0)
        v, m = rng.standard_normal((2, 200))
        assert si_sdri(v, m, m) == 0.0

    def test_perfect_estimate(self):
        rng = np.random.default_rng(1)
        v, o = rng.standard_normal((2, 200))
        m = v + o
        assert si_sdri(v, v, m) == pytest.approx(SDR_CAP - si_sdr(v, m))

    def test_two_mix(self):
        rng = np.random.default_rng(2)
        v, o = rng.standard_normal((2, 8000))
        o *= np.linalg.norm(v) / np.linalg.norm(o)  # 0 dB
        m = v + o
        assert si_sdri(v, v + 0.1 * o, m) > 0


class TestAssignment:
    def test_two_by_two(self):
        res = hungarian_assign([[1, 2], [3, 0]])
        assert res.permutation == (0, 1) and res.total_cost == 1.0
        assert pit_brute_force([[1, 2], [3, 0]]) == res

    def test_identity_friendly(self):
        cost = 1 - np.eye(5)
        res = hungarian_assign(cost)
        assert res.permutation == (0, 1, 2, 3, 4) and res.total_cost == 0.0

    def test_anti_diagonal(self):
        res = hungarian_assign([[5, 1, 9], [4, 8, 0], [2, 7, 6]])
        # enumerate all six permutations by hand
        costs = {p: sum([[5, 1, 9], [4, 8, 0], [2, 7, 6]][i][j] for i, j in enumerate(p))
                 for p in itertools.permutations(range(3))}
        assert res.total_cost == min(costs.values()) == 3
        assert res.permutation == (1, 2, 0)

    def test_tie_break_lexicographic(self):
        res = hungarian_assign(np.ones((4, 4)))
        assert res.permutation == (0, 1, 2, 3)
        cost = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], float)
        assert hungarian_assign(cost).permutation == (0, 1, 2)
        assert pit_brute_force(cost).permutation == (0, 1, 2)

    def test_one_by_one_and_empty(self):
        assert hungarian_assign([[3.5]]).permutation == (0,)
        assert hungarian_assign(np.zeros((0, 0))).permutation == ()

    def test_errors(self):
        with pytest.raises(MetricError):
            hungarian_assign(np.ones((2, 3)))
        with pytest.raises(MetricError):
            hungarian_assign([[np.nan, 1], [1, 1]])
        with pytest.raises(MetricError):
            pit_brute_force(np.ones((9, 9)))

    def test_matches_brute_force_500(self):
        rng = np.random.default_rng(2024)
        for trial in range(500):
            C = 2 + trial % 5
            cost = rng.standard_normal((C, C)) * 10
            h, b = hungarian_assign(cost), pit_brute_force(cost)
            assert h.total_cost == pytest.approx(b.total_cost, abs=1e-9)
            assert h.permutation == b.permutation

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 5), st.just(5)),
                  elements=st.integers(-3, 3).map(float)))
    def test_integer_ties_property(self, a):
        # integer costs produce many exact ties
        cost = a[:, : a.shape[0]]
        h, b = hungarian_assign(cost), pit_brute_force(cost)
        assert h.total_cost == b.total_cost
        assert h.permutation == b.permutation

    def test_permutation_is_bijection(self):
        cost = np.random.default_rng(3).random((8, 8))
        assert sorted(hungarian_assign(cost).permutation) == list(range(8))


class TestSegmentMse:
    def test_identical(self):
        v = np.random.default_rng(0).standard_normal(1600)
        s = segment_mse(v, v, 160)
        assert np.all(s.mse == 0) and s.mse.size == 10

    def test_constant_offset(self):
        v = np.random.default_rng(1).standard_normal(1000)
        s = segment_mse(v, v + 0.25, 100)
        np.testing.assert_allclose(s.mse, 0.0625, rtol=1e-12)

    def test_independent_noise(self):
        rng = np.random.default_rng(2)
        v, n = rng.standard_normal((2, 80_000))
        assert abs(segment_mse(v, n, 0.020, 8000).mean - 2.0) <= 0.2

    def test_seconds_vs_samples(self):
        rng = np.random.default_rng(3)
        v, w = rng.standard_normal((2, 800))
        a = segment_mse(TimeSignal(v, 8000), TimeSignal(w, 8000))
        b = segment_mse(v, w, 160)
        assert a.width == 160
        np.testing.assert_array_equal(a.mse, b.mse)

    def test_partial_segment_dropped(self):
        s = segment_mse(np.ones(250), np.zeros(250), 100)
        assert s.mse.size == 2

    def test_histogram_counts_everything(self):
        rng = np.random.default_rng(4)
        v, w = rng.standard_normal((2, 5000))
        s = segment_mse(v, w, 50, n_bins=20)
        assert s.counts.sum() == s.mse.size and s.edges[0] == 0.0

    def test_errors(self):
        with pytest.raises(MetricError):
            segment_mse(np.ones(10), np.ones(10), 0.02)  # seconds without a rate
        with pytest.raises(MetricError):
            segment_mse(np.ones(10), np.ones(10), 20)
        with pytest.raises(MetricError):
            segment_mse(np.ones(10), np.ones(10), 0)

    def test_shared_histogram_and_csv(self, tmp_path):
        rng = np.random.default_rng(5)
        v = rng.standard_normal(4000)
        det = segment_mse(v, v + 0.1 * rng.standard_normal(4000), 40)
        gen = segment_mse(v, v + 0.5 * rng.standard_normal(4000), 40)
        edges, cd, cg = segment_histogram(det, gen, n_bins=10)
        assert cd.sum() == det.mse.size and cg.sum() == gen.mse.size
        path = tmp_path / "h.csv"
        write_histogram_csv(path, edges, cd, cg)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["bin_left", "bin_right", "count_det", "count_gen"]
        assert len(rows) == 11
        assert float(rows[1][0]) == 0.0
