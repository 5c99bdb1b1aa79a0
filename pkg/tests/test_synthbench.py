import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kurtosis

from fusesep.fusion import load_params
from fusesep.metrics import SDR_CAP, segment_mse, si_sdr
from fusesep.spectral import MelConfig, TimeSignal, stft
from fusesep.synthbench import (
    BenchConfig,
    DetSim,
    GenSim,
    calibrate_sigma2,
    gen_sources,
    make_instance,
    make_training_set,
    mix,
    run_benchmark,
    simulate_deterministic,
    simulate_generative,
)
from importlib.resources import files

SR = 8000


def _orthogonal_pair(n=8000, seed=0):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, n))
    a -= a.mean()
    b -= b.mean()
    b -= (a @ b) / (a @ a) * a
    return a / a.std(), b / b.std()


class TestConfig:
    def test_defaults(self):
        cfg = BenchConfig()
        assert cfg.C == 2 and cfg.snr_range_db == (0.0, 5.0)

    def test_dict_round_trip(self):
        cfg = BenchConfig(C=3, det_sim=DetSim(burst_rate=2.0), gen_sim=GenSim(sigma2=0.5))
        assert BenchConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_rejects(self):
        with pytest.raises(ValueError):
            BenchConfig(C=1)
        with pytest.raises(ValueError):
            BenchConfig(snr_range_db=(5.0, 0.0))
        with pytest.raises(ValueError):
            BenchConfig.from_dict({"speakers": 2})


class TestSources:
    def test_same_seed_identical(self):
        a, b = gen_sources(3, 0.5, 11), gen_sources(3, 0.5, 11)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.samples, y.samples)

    def test_different_seed_differs(self):
        assert not np.array_equal(gen_sources(2, 0.5, 1)[0].samples, gen_sources(2, 0.5, 2)[0].samples)

    def test_unit_variance_and_length(self):
        for s in gen_sources(4, 0.75, 3):
            assert len(s) == 6000 and s.sample_rate == SR
            assert s.samples.var() == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_super_gaussian(self, seed):
        # per-segment Laplace amplitudes make each source a heavy-tailed scale mixture
        for s in gen_sources(3, 1.0, seed):
            assert kurtosis(s.samples, fisher=False) > 3.0

    def test_pairwise_uncorrelated_two_sources(self):
        for seed in range(20):
            a, b = gen_sources(2, 1.0, seed)
            assert abs(np.corrcoef(a.samples, b.samples)[0, 1]) <= 0.05

    def test_pairwise_uncorrelated_five_sources(self):
        for seed in range(5):
            X = np.array([s.samples for s in gen_sources(5, 4.0, seed)])
            c = np.corrcoef(X)
            assert np.abs(c[np.triu_indices(5, 1)]).max() <= 0.05

    def test_needs_two(self):
        with pytest.raises(ValueError):
            gen_sources(1, 1.0, 0)


class TestMix:
    def test_unit_gains_variance(self):
        a, b = _orthogonal_pair()
        m, gains = mix([a, b], snr_range=(0.0, 0.0), seed=0)
        np.testing.assert_array_equal(gains, [1.0, 1.0])
        assert abs(m.samples.var() - 2.0) <= 0.1

    def test_is_weighted_sum(self):
        src = gen_sources(3, 0.25, 4)
        m, g = mix(src, seed=5)
        np.testing.assert_allclose(m.samples, sum(gi * s.samples for gi, s in zip(g, src)), rtol=0, atol=1e-12)

    def test_gains_in_range(self):
        for seed in range(50):
            _, g = mix(gen_sources(4, 0.05, seed), (0.0, 5.0), seed)
            levels = -20 * np.log10(g)
            assert levels[0] == 0.0
            assert np.all(levels >= -1e-12) and np.all(levels <= 5.0 + 1e-12)
            # every pairwise level difference lies in the range
            assert np.ptp(levels) <= 5.0 + 1e-12

    def test_same_seed_identical(self):
        src = gen_sources(2, 0.25, 0)
        np.testing.assert_array_equal(mix(src, seed=9)[0].samples, mix(src, seed=9)[0].samples)

    def test_rejects(self):
        with pytest.raises(ValueError):
            mix([np.ones(10)])
        with pytest.raises(ValueError):
            mix([np.ones(10), np.ones(11)])


class TestDeterministicSim:
    def test_clean_is_exact(self):
        src = gen_sources(3, 0.5, 0)
        m, _ = mix(src, seed=0)
        out = simulate_deterministic(src, m, DetSim(leakage_db=-np.inf, burst_rate=0.0), seed=0)
        for v, vd in zip(src, out):
            np.testing.assert_array_equal(vd.samples, v.samples)

    def test_leakage_sets_si_sdr(self):
        a, b = _orthogonal_pair(16000, 1)
        m, _ = mix([a, b], (0.0, 0.0))
        out = simulate_deterministic([a, b], m, DetSim(leakage_db=-20.0, burst_rate=0.0))
        for v, vd in zip((a, b), out):
            assert abs(si_sdr(v, vd) - 20.0) <= 0.5

    def test_bursts_give_heavy_tail(self):
        src = gen_sources(2, 4.0, 2)
        m, _ = mix(src, seed=2)
        quiet = simulate_deterministic(src, m, DetSim(burst_rate=0.0), seed=3)
        bursty = simulate_deterministic(src, m, DetSim(burst_rate=4.0, burst_gain=1.0), seed=3)
        for v, q, b in zip(src, quiet, bursty):
            mq = segment_mse(v, q, 0.020, SR).mse
            mb = segment_mse(v, b, 0.020, SR).mse
            assert np.quantile(mb, 0.99) > 5 * np.quantile(mq, 0.99)
            # the bulk is unchanged; only a few segments are hit
            assert np.median(mb) == pytest.approx(np.median(mq), rel=0.25)

    def test_seeded(self):
        src = gen_sources(2, 1.0, 0)
        m, _ = mix(src)
        a = simulate_deterministic(src, m, DetSim(), seed=4)
        b = simulate_deterministic(src, m, DetSim(), seed=4)
        np.testing.assert_array_equal(a[0].samples, b[0].samples)


class TestGenerativeSim:
    cfg = BenchConfig()

    def _vd(self):
        return gen_sources(2, 1.0, 3)[0]

    def test_noise_free_magnitude_close(self):
        vd = self._vd()
        g = simulate_generative(vd, GenSim(0.0, 128), self.cfg.spectral, self.cfg.mel, seed=1)
        A = np.abs(stft(vd, self.cfg.spectral).data)
        B = np.abs(stft(g, self.cfg.spectral).data)
        assert np.linalg.norm(A - B) / np.linalg.norm(A) <= 0.1

    def test_noise_free_mel_close_phase_differs(self):
        from fusesep.spectral import mel_spectrogram

        vd = self._vd()
        g = simulate_generative(vd, GenSim(0.0, 128), self.cfg.spectral, self.cfg.mel, seed=1)
        Md = mel_spectrogram(vd, self.cfg.spectral, self.cfg.mel).data
        Mg = mel_spectrogram(g, self.cfg.spectral, self.cfg.mel).data
        assert np.linalg.norm(Md - Mg) / np.linalg.norm(Md) <= 0.1
        Sd, Sg = stft(vd, self.cfg.spectral).data, stft(g, self.cfg.spectral).data
        dphi = np.angle(Sg * np.conj(Sd))
        strong = np.abs(Sd) > np.quantile(np.abs(Sd), 0.9)
        assert np.std(dphi[strong]) > 0.5

    def test_unit_noise_segment_mse(self):
        vd = self._vd()
        g = simulate_generative(vd, GenSim(1.0, 32), self.cfg.spectral, self.cfg.mel, seed=1)
        assert abs(segment_mse(vd, g, 0.020, SR).mean - 1.0) <= 0.1

    def test_noise_adds_its_variance(self):
        vd = self._vd()
        g0 = simulate_generative(vd, GenSim(0.0, 32), self.cfg.spectral, self.cfg.mel, seed=1)
        g1 = simulate_generative(vd, GenSim(1.0, 32), self.cfg.spectral, self.cfg.mel, seed=1)
        assert abs(segment_mse(g0, g1, 0.020, SR).mean - 1.0) <= 0.1
        gain = segment_mse(vd, g1, 0.020, SR).mean - segment_mse(vd, g0, 0.020, SR).mean
        assert abs(gain - 1.0) <= 0.1

    def test_length_and_seed(self):
        vd = TimeSignal(self._vd().samples[:3001], SR)
        a = simulate_generative(vd, GenSim(), self.cfg.spectral, self.cfg.mel, seed=7)
        b = simulate_generative(vd, GenSim(), self.cfg.spectral, self.cfg.mel, seed=7)
        c = simulate_generative(vd, GenSim(), self.cfg.spectral, self.cfg.mel, seed=8)
        assert len(a) == len(vd)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_coarser_mel_config(self):
        vd = self._vd()
        g = simulate_generative(vd, GenSim(0.0, 8), self.cfg.spectral, MelConfig(n_mels=40), seed=0)
        assert len(g) == len(vd) and np.all(np.isfinite(g.samples))


class TestInstances:
    def test_make_instance_deterministic(self):
        cfg = BenchConfig()
        a, b = make_instance(cfg, 3), make_instance(cfg, 3)
        np.testing.assert_array_equal(a.mixture.samples, b.mixture.samples)
        np.testing.assert_array_equal(a.vg[1].samples, b.vg[1].samples)

    def test_instance_seed_is_seed_plus_index(self):
        a = make_instance(BenchConfig(seed=5), 2)
        b = make_instance(BenchConfig(seed=3), 4)
        np.testing.assert_array_equal(a.mixture.samples, b.mixture.samples)

    def test_targets_sum_to_mixture(self):
        inst = make_instance(BenchConfig(C=3), 0)
        np.testing.assert_allclose(np.sum(inst.sources, axis=0), inst.mixture.samples, atol=1e-12)

    def test_training_set_uses_offset_indices(self):
        cfg = BenchConfig()
        ex = make_training_set(cfg, 1, offset=7)[0]
        inst = make_instance(cfg, 7)
        for a, b in zip(ex.sources, inst.sources):
            np.testing.assert_array_equal(a, b)
        assert not np.array_equal(ex.sources[0], make_instance(cfg, 0).sources[0])


@pytest.fixture(scope="module")
def shipped():
    return load_params(files("fusesep") / "data" / "desk_combiner.json")


class TestBenchmark:
    def test_perfect_simulators_hit_cap(self):
        cfg = BenchConfig(n_instances=2, det_sim=DetSim(leakage_db=-np.inf, burst_rate=0.0),
                          gen_sim=GenSim(sigma2=0.0))
        rep = run_benchmark(cfg)
        for r in rep.rows:
            assert r["si_sdr"] == SDR_CAP, r["strategy"]

    def test_perfect_deterministic_and_oracle_hit_cap(self):
        cfg = BenchConfig(n_instances=2, det_sim=DetSim(leakage_db=-np.inf, burst_rate=0.0),
                          gen_sim=GenSim(sigma2=0.0))
        rep = run_benchmark(cfg)
        for r in rep.rows:
            if r["strategy"] in ("deterministic", "oracle"):
                assert r["si_sdr"] == SDR_CAP

    def test_oracle_beats_deterministic(self):
        rep = run_benchmark(BenchConfig(n_instances=6))
        assert rep.median("oracle") >= rep.median("deterministic")

    def test_learned_beats_xcorr_held_out(self, shipped):
        rep = run_benchmark(BenchConfig(n_instances=6), shipped)
        assert rep.median("learned") >= rep.median("xcorr")

    def test_oracle_residual_dominance(self):
        rep = run_benchmark(BenchConfig(n_instances=4))
        for r in rep.residuals:
            assert r["oracle"] <= min(r["deterministic"], r["generative"]) * (1 + 1e-12)

    def test_outputs_and_reproducible(self, tmp_path, shipped):
        cfg = BenchConfig(n_instances=2)
        a = run_benchmark(cfg, shipped, out_dir=tmp_path / "a")
        run_benchmark(cfg, shipped, out_dir=tmp_path / "b")
        for name in ("report.csv", "summary.csv", "mse_hist.csv", "residuals.csv", "mse_parity.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        rows = list(csv.DictReader(open(tmp_path / "a" / "report.csv")))
        assert len(rows) == 2 * 2 * 5
        summary = {r["strategy"]: r for r in csv.DictReader(open(tmp_path / "a" / "summary.csv"))}
        assert set(summary) == {"deterministic", "generative", "xcorr", "oracle", "learned"}
        for s, r in summary.items():
            assert float(r["median_si_sdri"]) == a.median(s)
            assert float(r["mean_si_sdri"]) == pytest.approx(a.per_instance(s).mean())

    def test_learned_needs_params(self):
        rep = run_benchmark(BenchConfig(n_instances=1))
        assert "learned" not in rep.strategies()

    def test_aggregate_is_median_of_instances(self):
        rep = run_benchmark(BenchConfig(n_instances=3))
        v = rep.per_instance("xcorr")
        assert v.size == 3 and rep.summary["xcorr"] == float(np.median(v))

    def test_parallel_matches_serial(self, monkeypatch):
        cfg = BenchConfig(n_instances=2)
        a = run_benchmark(cfg)
        monkeypatch.setenv("FUSESEP_THREADS", "2")
        b = run_benchmark(cfg)
        assert a.rows == b.rows
        np.testing.assert_array_equal(a.mse_gen, b.mse_gen)


class TestCalibration:
    def test_sigma2_equalises_means(self):
        cfg = BenchConfig(n_instances=3, gen_sim=GenSim(sigma2=0.0))
        s2, info = calibrate_sigma2(cfg, n_instances=3)
        assert s2 >= 0.0
        assert s2 == max(info["mean_mse_det"] - info["mean_mse_gen_floor"], 0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_sources_property(seed, C):
    src = gen_sources(C, 0.1, seed)
    assert len(src) == C
    for s in src:
        assert abs(s.samples.mean()) <= 1e-12 and s.samples.var() == pytest.approx(1.0)
