"""Synthetic sources, simulated separators and the benchmark harness.

Sources are harmonic tones with slowly drifting pitch whose amplitude is
drawn from a Laplace distribution once per 20 ms segment and interpolated
between segment centres.  The deterministic separator is simulated as the
true source plus leakage of the other sources and short bursts of
interferer content; the generative estimate is Griffin-Lim applied to the
mel spectrogram of the deterministic estimate, plus white Gaussian noise.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import wasserstein_distance

from .alignment import align, xcorr_fuse
from .fusion.combine import FusionWeights, apply_fusion, fuse_spectrum, oracle_weights, weights_from_heads
from .fusion.network import CombinerParams, combiner_forward
from .fusion.train import Example, make_example
from .metrics import hungarian_assign, segment_histogram, segment_mse, si_sdr, write_histogram_csv
from .spectral import MelConfig, SpectralConfig, TimeSignal, griffin_lim, istft, mel_spectrogram, stft

__all__ = [
    "DetSim",
    "GenSim",
    "BenchConfig",
    "Instance",
    "BenchReport",
    "STRATEGIES",
    "gen_sources",
    "mix",
    "simulate_deterministic",
    "simulate_generative",
    "make_instance",
    "make_training_set",
    "run_benchmark",
    "calibrate_sigma2",
]

log = logging.getLogger(__name__)

STRATEGIES = ("deterministic", "generative", "xcorr", "oracle", "learned")
SEGMENT_S = 0.020


@dataclass(frozen=True)
class DetSim:
    leakage_db: float = -20.0
    burst_rate: float = 4.0      # bursts per second
    burst_gain: float = 1.0
    burst_ms: float = 10.0


@dataclass(frozen=True)
class GenSim:
    sigma2: float = 1e-3
    griffin_lim_iters: int = 32


@dataclass(frozen=True)
class BenchConfig:
    C: int = 2
    n_instances: int = 50
    duration_s: float = 1.0
    snr_range_db: tuple[float, float] = (0.0, 5.0)
    det_sim: DetSim = DetSim()
    gen_sim: GenSim = GenSim()
    seed: int = 0
    sample_rate: int = 8000
    n_fft: int = 512
    n_mels: int = 80
    align_first: bool = True
    w1_threshold: float = 0.5

    def __post_init__(self):
        if self.C < 2:
            raise ValueError("need at least two sources")
        lo, hi = self.snr_range_db
        if lo > hi:
            raise ValueError("snr_range_db must be (low, high)")
        if self.n_instances < 1 or self.duration_s <= 0:
            raise ValueError("n_instances and duration_s must be positive")

    @property
    def spectral(self) -> SpectralConfig:
        return SpectralConfig(sample_rate=self.sample_rate, n_fft=self.n_fft)

    @property
    def mel(self) -> MelConfig:
        return MelConfig(n_mels=self.n_mels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_range_db"] = list(self.snr_range_db)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown bench config keys: {sorted(unknown)}")
        if "det_sim" in d:
            d["det_sim"] = DetSim(**d["det_sim"])
        if "gen_sim" in d:
            d["gen_sim"] = GenSim(**d["gen_sim"])
        if "snr_range_db" in d:
            d["snr_range_db"] = tuple(d["snr_range_db"])
        return cls(**d)


# --------------------------------------------------------------- sources


def gen_sources(C: int, duration: float, seed: int, sample_rate: int = 8000) -> list[TimeSignal]:
    """``C`` independent unit-variance harmonic sources."""
    if C < 2:
        raise ValueError("need at least two sources")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    seg = int(round(SEGMENT_S * sample_rate))
    n_seg = -(-n // seg)

    # distinct fundamentals, at least 20 Hz apart
    f0s: list[float] = []
    while len(f0s) < C:
        f = rng.uniform(90.0, 320.0)
        if all(abs(f - g) >= 20.0 for g in f0s):
            f0s.append(f)

    out = []
    for f0 in f0s:
        drift = 1.0 + 0.04 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
        phase0 = 2 * np.pi * np.cumsum(f0 * drift) / sample_rate
        n_harm = int((sample_rate / 2) // (f0 * 1.05))
        tilt = rng.uniform(0.6, 1.2)
        carrier = np.zeros(n)
        for k in range(1, n_harm + 1):
            carrier += np.sin(k * phase0 + rng.uniform(0, 2 * np.pi)) / k ** tilt
        amps = rng.laplace(0.0, 1.0, n_seg)
        centres = (np.arange(n_seg) + 0.5) * seg
        env = np.interp(np.arange(n), centres, np.abs(amps))
        x = carrier * env
        x -= x.mean()
        x /= x.std()
        out.append(TimeSignal(x, sample_rate))
    return out


def mix(sources, snr_range=(0.0, 5.0), seed: int = 0):
    """Scale sources by random gains and sum them.

    Source 0 keeps unit gain; source ``i`` is attenuated by a level drawn
    uniformly from ``snr_range`` dB, so every pairwise level difference
    lies within the range.  Returns ``(mixture, gains)``; the scaled
    sources ``gains[i] * sources[i]`` are the separation targets.
    """
    if len(sources) < 2:
        raise ValueError("need at least two sources")
    arrs = [np.asarray(getattr(s, "samples", s), dtype=np.float64) for s in sources]
    if len({a.size for a in arrs}) != 1:
        raise ValueError("sources must have equal lengths")
    rng = np.random.default_rng(seed)
    lo, hi = snr_range
    levels = np.concatenate([[0.0], rng.uniform(lo, hi, len(arrs) - 1)])
    gains = 10.0 ** (-levels / 20.0)
    m = sum(g * a for g, a in zip(gains, arrs))
    sr = getattr(sources[0], "sample_rate", 8000)
    return TimeSignal(m, sr), gains


def simulate_deterministic(sources, mixture, det_sim: DetSim, seed: int = 0) -> list[TimeSignal]:
    """Source plus leakage of the others plus rectangular interferer bursts."""
    arrs = [np.asarray(getattr(s, "samples", s), dtype=np.float64) for s in sources]
    sr = getattr(mixture, "sample_rate", 8000)
    n = arrs[0].size
    rng = np.random.default_rng(seed)
    leak = 10.0 ** (det_sim.leakage_db / 20.0) if np.isfinite(det_sim.leakage_db) else 0.0
    total = np.sum(arrs, axis=0)
    blen = max(1, int(round(det_sim.burst_ms * 1e-3 * sr)))
    out = []
    for i, v in enumerate(arrs):
        est = v + leak * (total - v) if leak else v.copy()
        if det_sim.burst_rate > 0 and det_sim.burst_gain != 0:
            count = rng.poisson(det_sim.burst_rate * n / sr)
            others = [j for j in range(len(arrs)) if j != i]
            for _ in range(count):
                start = int(rng.integers(0, max(1, n - blen)))
                j = others[int(rng.integers(len(others)))]
                est[start: start + blen] += det_sim.burst_gain * arrs[j][start: start + blen]
        out.append(TimeSignal(est, sr))
    return out


def simulate_generative(vd: TimeSignal, gen_sim: GenSim, cfg: SpectralConfig, mcfg: MelConfig, seed: int = 0) -> TimeSignal:
    """Mel spectrogram -> Griffin-Lim (random initial phase) -> AWGN."""
    rng = np.random.default_rng(seed)
    gl_seed = int(rng.integers(2**31))
    M = mel_spectrogram(vd, cfg, mcfg)
    y = griffin_lim(M, iterations=gen_sim.griffin_lim_iters, seed=gl_seed).samples
    if gen_sim.sigma2 > 0:
        y = y + rng.normal(0.0, np.sqrt(gen_sim.sigma2), y.size)
    return TimeSignal(y[: len(vd)], vd.sample_rate)


# -------------------------------------------------------------- instances


@dataclass
class Instance:
    index: int
    mixture: TimeSignal
    sources: list[np.ndarray]
    vd: list[TimeSignal]
    vg: list[TimeSignal]


def _instance_seeds(seed: int, index: int) -> np.ndarray:
    # one independent stream per instance, keyed by seed + index
    return np.random.SeedSequence(seed + index).generate_state(4)


def make_instance(cfg: BenchConfig, index: int) -> Instance:
    s = _instance_seeds(cfg.seed, index)
    raw = gen_sources(cfg.C, cfg.duration_s, int(s[0]), cfg.sample_rate)
    m, gains = mix(raw, cfg.snr_range_db, int(s[1]))
    targets = [g * r.samples for g, r in zip(gains, raw)]
    vd = simulate_deterministic(targets, m, cfg.det_sim, int(s[2]))
    vg = [
        simulate_generative(d, cfg.gen_sim, cfg.spectral, cfg.mel, int(s[3]) + i)
        for i, d in enumerate(vd)
    ]
    return Instance(index, m, targets, vd, vg)


def make_training_set(cfg: BenchConfig, n: int, offset: int = 1_000_000) -> list[Example]:
    """Training examples from instance indices disjoint from the benchmark's."""
    out = []
    for k in range(n):
        inst = make_instance(cfg, offset + k)
        out.append(make_example(inst.sources, inst.vd, inst.vg, cfg.spectral))
    return out


# ------------------------------------------------------------- benchmark


def _assign(sources, estimates):
    C = len(sources)
    scores = np.array([[si_sdr(sources[i], estimates[j]) for j in range(C)] for i in range(C)])
    res = hungarian_assign(-scores)
    return res.permutation, scores


def learned_fuse(Vd, Vg, params: CombinerParams):
    from .alignment import magnitude_features, phase_features

    d1, d2 = combiner_forward(magnitude_features(Vd, Vg), phase_features(Vd, Vg), params)
    return apply_fusion(Vd, Vg, weights_from_heads(d1, d2))


def _align_to(ref: np.ndarray, est: np.ndarray, cfg: SpectralConfig) -> np.ndarray:
    """Per-frame delay-align ``est`` to ``ref`` (for segment MSE)."""
    R = stft(TimeSignal(ref, cfg.sample_rate), cfg)
    E = stft(TimeSignal(est, cfg.sample_rate), cfg)
    res = align(R, E)
    return istft(E.like(res.phasors * E.data)).samples


def evaluate_instance(cfg: BenchConfig, index: int, params: CombinerParams | None = None) -> dict:
    inst = make_instance(cfg, index)
    scfg = cfg.spectral
    Vd = [stft(x, scfg) for x in inst.vd]
    Vg = [stft(x, scfg) for x in inst.vg]
    Vref = [stft(TimeSignal(s, scfg.sample_rate), scfg) for s in inst.sources]
    C = cfg.C

    outputs = {
        "deterministic": [x.samples for x in inst.vd],
        "generative": [x.samples for x in inst.vg],
        "xcorr": [xcorr_fuse(Vd[i], Vg[i]).samples for i in range(C)],
    }
    # oracle: references follow the deterministic assignment
    det_perm, _ = _assign(inst.sources, outputs["deterministic"])
    oracle_out = [None] * C
    residuals = []
    for i, j in enumerate(det_perm):
        w = oracle_weights(Vd[j], Vg[j], Vref[i])
        oracle_out[j] = apply_fusion(Vd[j], Vg[j], w).samples
        res_o = np.linalg.norm(Vref[i].data - fuse_spectrum(Vd[j], Vg[j], w).data)
        residuals.append((i, float(res_o),
                          float(np.linalg.norm(Vref[i].data - Vd[j].data)),
                          float(np.linalg.norm(Vref[i].data - Vg[j].data))))
    outputs["oracle"] = oracle_out
    if params is not None:
        outputs["learned"] = [learned_fuse(Vd[i], Vg[i], params).samples for i in range(C)]

    rows = []
    for name in STRATEGIES:
        if name not in outputs:
            continue
        perm, scores = _assign(inst.sources, outputs[name])
        for i, j in enumerate(perm):
            base = si_sdr(inst.sources[i], inst.mixture.samples)
            rows.append({
                "instance": index,
                "strategy": name,
                "source": i,
                "estimate": j,
                "si_sdr": scores[i, j],
                "si_sdri": scores[i, j] - base,
            })

    # segment MSE of both estimate families against their assigned sources
    mse_d, mse_g = [], []
    for i, j in enumerate(det_perm):
        src = inst.sources[i]
        d = outputs["deterministic"][j]
        g = outputs["generative"][j]
        if cfg.align_first:
            d = _align_to(src, d, scfg)
            g = _align_to(src, g, scfg)
        mse_d.append(segment_mse(src, d, SEGMENT_S, scfg.sample_rate).mse)
        mse_g.append(segment_mse(src, g, SEGMENT_S, scfg.sample_rate).mse)
    return {
        "rows": rows,
        "residuals": [{"instance": index, "source": i, "oracle": o, "deterministic": d, "generative": g}
                      for i, o, d, g in residuals],
        "mse_det": np.concatenate(mse_d),
        "mse_gen": np.concatenate(mse_g),
    }


@dataclass
class BenchReport:
    config: BenchConfig
    rows: list[dict]
    residuals: list[dict]
    mse_det: np.ndarray
    mse_gen: np.ndarray
    runtime_s: float = 0.0
    summary: dict = field(default_factory=dict)

    def per_instance(self, strategy: str) -> np.ndarray:
        """Mean SI-SDRi over sources, one value per instance."""
        vals: dict[int, list[float]] = {}
        for r in self.rows:
            if r["strategy"] == strategy:
                vals.setdefault(r["instance"], []).append(r["si_sdri"])
        return np.array([np.mean(vals[k]) for k in sorted(vals)])

    def median(self, strategy: str) -> float:
        return float(np.median(self.per_instance(strategy)))

    def strategies(self) -> list[str]:
        present = {r["strategy"] for r in self.rows}
        return [s for s in STRATEGIES if s in present]

    def mse_parity(self) -> dict:
        md, mg = float(self.mse_det.mean()), float(self.mse_gen.mean())
        w1 = float(wasserstein_distance(self.mse_det, self.mse_gen))
        return {
            "mean_mse_det": md,
            "mean_mse_gen": mg,
            "mean_ratio": mg / md if md > 0 else float("inf"),
            "w1": w1,
            "w1_normalized": w1 / md if md > 0 else float("inf"),
            "w1_threshold": self.config.w1_threshold,
        }

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.csv", out / "summary.csv", out / "mse_hist.csv"]
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["instance", "strategy", "source", "estimate", "si_sdr", "si_sdri"])
            for r in self.rows:
                w.writerow([r["instance"], r["strategy"], r["source"], r["estimate"],
                            repr(float(r["si_sdr"])), repr(float(r["si_sdri"]))])
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["strategy", "n_instances", "mean_si_sdri", "median_si_sdri"])
            for s in self.strategies():
                v = self.per_instance(s)
                w.writerow([s, v.size, repr(float(v.mean())), repr(float(np.median(v)))])
        edges, cd, cg = segment_histogram(_stats(self.mse_det), _stats(self.mse_gen))
        write_histogram_csv(paths[2], edges, cd, cg)
        res_path = out / "residuals.csv"
        with open(res_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["instance", "source", "oracle", "deterministic", "generative"])
            for r in self.residuals:
                w.writerow([r["instance"], r["source"], repr(r["oracle"]), repr(r["deterministic"]), repr(r["generative"])])
        paths.append(res_path)
        parity_path = out / "mse_parity.json"
        parity_path.write_text(json.dumps(self.mse_parity(), indent=2, sort_keys=True))
        paths.append(parity_path)
        # wall-clock numbers differ between runs; kept out of the CSVs
        (out / "runtime.json").write_text(json.dumps({"runtime_s": self.runtime_s}))
        return paths


class _stats:
    def __init__(self, mse):
        self.mse = np.asarray(mse)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FUSESEP_THREADS", "1")))
    except ValueError:
        return 1


def run_benchmark(cfg: BenchConfig, combiner: CombinerParams | None = None, out_dir=None,
                  indices=None) -> BenchReport:
    """Evaluate every strategy on ``cfg.n_instances`` synthetic mixtures.

    Instance seeds are ``cfg.seed + index``; instances may run in
    parallel (``FUSESEP_THREADS``); results are gathered in index order.
    """
    t0 = time.perf_counter()
    idx = list(range(cfg.n_instances)) if indices is None else list(indices)
    n_workers = min(_threads(), len(idx))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as ex:
            results = list(ex.map(evaluate_instance, [cfg] * len(idx), idx, [combiner] * len(idx)))
    else:
        results = [evaluate_instance(cfg, i, combiner) for i in idx]
    rows = [r for res in results for r in res["rows"]]
    residuals = [r for res in results for r in res["residuals"]]
    report = BenchReport(
        cfg,
        rows,
        residuals,
        np.concatenate([r["mse_det"] for r in results]),
        np.concatenate([r["mse_gen"] for r in results]),
        time.perf_counter() - t0,
    )
    report.summary = {s: report.median(s) for s in report.strategies()}
    if out_dir is not None:
        report.write(out_dir)
    return report


def calibrate_sigma2(cfg: BenchConfig, n_instances: int = 10) -> tuple[float, dict]:
    """Generative noise variance that equalises mean segment MSE.

    The AWGN adds its variance to the generative segment MSE, so the
    target is the mean deterministic MSE minus the noise-free generative
    MSE.  Returns ``(sigma2, info)``; ``sigma2`` is 0 when the generative
    floor already exceeds the deterministic error.
    """
    base = BenchConfig.from_dict({**cfg.to_dict(), "n_instances": n_instances,
                                  "gen_sim": {**asdict(cfg.gen_sim), "sigma2": 0.0}})
    det, gen = [], []
    for i in range(n_instances):
        res = evaluate_instance(base, i)
        det.append(res["mse_det"])
        gen.append(res["mse_gen"])
    md, mg = float(np.concatenate(det).mean()), float(np.concatenate(gen).mean())
    return max(md - mg, 0.0), {"mean_mse_det": md, "mean_mse_gen_floor": mg}
