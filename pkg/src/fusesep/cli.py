"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .alignment import align, xcorr_fuse
from .fusion import (
    CombinerConfig,
    CombinerError,
    TrainConfig,
    TrainError,
    apply_fusion,
    init_params,
    load_params,
    make_example,
    oracle_weights,
    save_params,
    train_combiner,
)
from .metrics import MetricError, sdr, segment_histogram, segment_mse, si_sdr, write_histogram_csv
from .spectral import MelConfig, SpectralConfig, SpectralError, TimeSignal, stft
from .synthbench import BenchConfig, learned_fuse, make_training_set, run_benchmark
from .wavio import read_wav, write_wav

EXIT_USAGE = 2
EXIT_DATA = 3

log = logging.getLogger("fusesep")

CONFIG_SECTIONS = {
    "spectral": {"sample_rate", "n_fft", "hop", "window"},
    "mel": {"n_mels", "f_min", "f_max"},
    "train": {"learning_rate", "batch_size", "epochs", "seed", "n_train"},
    "combiner": {"hidden", "leaky_slope", "phase_skip"},
    "bench": set(BenchConfig.__dataclass_fields__),
    "bounds": {"length", "width", "var_v", "mi_ref"},
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def load_config(path) -> dict:
    """Read a JSON config, rejecting unknown sections and keys."""
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    for section, values in cfg.items():
        if section not in CONFIG_SECTIONS:
            raise UsageError(f"unknown config section {section!r}")
        unknown = set(values) - CONFIG_SECTIONS[section]
        if unknown:
            raise UsageError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return cfg


def _spectral(cfg: dict, args) -> SpectralConfig:
    d = dict(cfg.get("spectral", {}))
    if getattr(args, "sample_rate", None):
        d["sample_rate"] = args.sample_rate
    if getattr(args, "n_fft", None):
        d["n_fft"] = args.n_fft
    return SpectralConfig(**d)


def _bench(cfg: dict, args) -> BenchConfig:
    d = dict(cfg.get("bench", {}))
    for key in ("seed", "n_instances", "C"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    return BenchConfig.from_dict(d)


def _train_cfg(cfg: dict, args) -> tuple[TrainConfig, int]:
    d = dict(cfg.get("train", {}))
    n_train = int(d.pop("n_train", 40))
    for key in ("epochs", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    return TrainConfig(**d), n_train


def _combiner_cfg(cfg: dict) -> CombinerConfig:
    d = cfg.get("combiner")
    return CombinerConfig.from_dict({"leaky_slope": 0.01, **d}) if d else CombinerConfig()


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


# ----------------------------------------------------------------- commands


def cmd_fuse(args, cfg) -> int:
    scfg = _spectral(cfg, args)
    det = read_wav(args.det, scfg.sample_rate)
    gen = read_wav(args.gen, scfg.sample_rate)
    if len(det) != len(gen):
        raise DataError("deterministic and generative files differ in length")
    ref = read_wav(args.ref, scfg.sample_rate) if args.ref else None
    Vd, Vg = stft(det, scfg), stft(gen, scfg)
    if args.strategy == "xcorr":
        out = xcorr_fuse(Vd, Vg)
    elif args.strategy == "oracle":
        if ref is None:
            raise UsageError("--strategy oracle requires --ref")
        if len(ref) != len(det):
            raise DataError("reference length differs from the estimates")
        out = apply_fusion(Vd, Vg, oracle_weights(Vd, Vg, stft(ref, scfg), lam=args.ridge))
    else:
        if not args.params:
            raise UsageError("--strategy learned requires --params")
        out = learned_fuse(Vd, Vg, load_params(args.params))
    write_wav(args.out, out)
    metrics = {"strategy": args.strategy, "n_samples": len(out), "sample_rate": out.sample_rate}
    if ref is not None:
        metrics["si_sdr"] = si_sdr(ref, out)
        metrics["sdr"] = sdr(ref, out)
        metrics["si_sdr_deterministic"] = si_sdr(ref, det)
    if args.metrics:
        _write_json(args.metrics, metrics)
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_bounds(args, cfg) -> int:
    if args.classical is not None:
        classical = float(args.classical)
        inputs = None
    else:
        d = dict(cfg.get("bounds", {}))
        for key in ("length", "width", "var_v", "mi_ref"):
            val = getattr(args, key)
            if val is not None:
                d[key] = val
        missing = {"length", "width", "var_v", "mi_ref"} - set(d)
        if missing:
            raise UsageError(f"missing bound inputs: {sorted(missing)} (or pass --classical)")
        try:
            inputs = bnd.BoundInputs(**{k: float(v) for k, v in d.items()})
            classical = bnd.classical_sdr_bound(inputs)
        except bnd.BoundError as exc:
            raise DataError(str(exc)) from exc
    out = {"classical_db": classical, "generative_db": bnd.generative_from_classical(classical)}
    if inputs is not None:
        out["inputs"] = asdict(inputs)
        out["mi_units"] = "nats (used as a dimensionless factor)"
    which = "generative" if args.generative else "classical"
    print(f"{which} bound: {out[which + '_db']:.4f} dB")
    if args.json:
        _write_json(args.json, out)
    return 0


def _parse_grid(text: str) -> np.ndarray:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError("grid spec is LOW:HIGH:N (log-spaced) or a comma list")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        return np.geomspace(lo, hi, n)
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise UsageError(f"bad sigma2 grid {text!r}") from exc


PLOT_SCRIPT = '''"""Plot a rho curve written by `fusesep rho`."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv}"
with open(path) as fh:
    rows = list(csv.DictReader(fh))
s = [float(r["sigma2"]) for r in rows]
rho = [float(r["rho"]) for r in rows]
plt.semilogx(s, rho, marker="o")
plt.xlabel("noise variance")
plt.ylabel("rho")
plt.ylim(0, 1.05)
plt.grid(True, which="both", alpha=0.3)
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def cmd_rho(args, cfg) -> int:
    grid = _parse_grid(args.sigma2_grid)
    if grid.size == 0:
        raise UsageError("empty sigma2 grid")
    mi_ref = args.mi_ref if args.mi_ref is not None else bnd.default_mi_ref(args.n_sources)
    try:
        pts = bnd.rho_curve(grid, mi_ref)
    except bnd.BoundError as exc:
        raise DataError(str(exc)) from exc
    if args.out:
        bnd.write_rho_csv(args.out, pts)
        script = Path(args.out).with_suffix(".plot.py")
        script.write_text(PLOT_SCRIPT.format(csv=Path(args.out).name))
    else:
        print("sigma2,rho,mi_nats")
        for p in pts:
            print(f"{p.sigma2!r},{p.rho!r},{p.mi!r}")
    return 0


def cmd_bench(args, cfg) -> int:
    bcfg = _bench(cfg, args)
    params = None
    if args.params:
        params = load_params(args.params)
    elif args.train:
        tcfg, n_train = _train_cfg(cfg, args)
        ds = make_training_set(bcfg, n_train)
        params, _ = train_combiner(ds, tcfg, _combiner_cfg(cfg))
        Path(args.out).mkdir(parents=True, exist_ok=True)
        save_params(params, Path(args.out) / "combiner.json")
    report = run_benchmark(bcfg, params, out_dir=args.out)
    if args.dump_wav:
        _dump_instance(bcfg, params, Path(args.out) / "wav")
    for s in report.strategies():
        print(f"{s:14s} median SI-SDRi {report.median(s):8.3f} dB")
    return 0


def _dump_instance(bcfg, params, out: Path) -> None:
    from .synthbench import make_instance

    out.mkdir(parents=True, exist_ok=True)
    inst = make_instance(bcfg, 0)
    scfg = bcfg.spectral
    Vd, Vg = stft(inst.vd[0], scfg), stft(inst.vg[0], scfg)
    sr = scfg.sample_rate
    write_wav(out / "mixture.wav", inst.mixture)
    write_wav(out / "source.wav", TimeSignal(inst.sources[0], sr))
    write_wav(out / "deterministic.wav", inst.vd[0])
    write_wav(out / "generative.wav", inst.vg[0])
    write_wav(out / "xcorr.wav", xcorr_fuse(Vd, Vg))
    if params is not None:
        write_wav(out / "learned.wav", learned_fuse(Vd, Vg, params))


def _read_dataset(path: Path, scfg: SpectralConfig):
    examples = []
    for ex_dir in sorted(p for p in path.iterdir() if p.is_dir()):
        srcs = sorted(ex_dir.glob("src*.wav"))
        if not srcs:
            continue
        ids = [p.stem[3:] for p in srcs]
        try:
            s = [read_wav(ex_dir / f"src{i}.wav", scfg.sample_rate) for i in ids]
            d = [read_wav(ex_dir / f"det{i}.wav", scfg.sample_rate) for i in ids]
            g = [read_wav(ex_dir / f"gen{i}.wav", scfg.sample_rate) for i in ids]
        except FileNotFoundError as exc:
            raise DataError(f"{ex_dir}: missing file {exc.filename}") from exc
        examples.append(make_example(s, d, g, scfg))
    if not examples:
        raise DataError(f"{path}: no examples (expected <dir>/*/src<i>.wav, det<i>.wav, gen<i>.wav)")
    return examples


def cmd_train(args, cfg) -> int:
    tcfg, n_train = _train_cfg(cfg, args)
    ccfg = _combiner_cfg(cfg)
    if args.dataset:
        ds = _read_dataset(Path(args.dataset), _spectral(cfg, args))
    else:
        bcfg = _bench(cfg, args)
        ds = make_training_set(bcfg, args.synthetic or n_train)
    params, history = train_combiner(ds, tcfg, ccfg, params=init_params(ccfg, tcfg.seed))
    save_params(params, args.out)
    for i, v in enumerate(history.epoch_si_sdr, 1):
        print(f"epoch {i}: mean SI-SDR {v:.3f} dB")
    return 0


def cmd_metrics(args, cfg) -> int:
    ref = read_wav(args.ref)
    mix = read_wav(args.mixture, ref.sample_rate) if args.mixture else None
    out = {}
    stats = []
    for path in args.est:
        est = read_wav(path, ref.sample_rate)
        if len(est) != len(ref):
            raise DataError(f"{path}: length {len(est)} differs from reference {len(ref)}")
        st = segment_mse(ref, est, 0.020)
        stats.append(st)
        entry = {
            "si_sdr": si_sdr(ref, est),
            "sdr": sdr(ref, est),
            "segment_mse_mean": st.mean,
            "segment_mse_median": float(np.median(st.mse)),
            "n_segments": int(st.mse.size),
        }
        if mix is not None:
            entry["si_sdri"] = entry["si_sdr"] - si_sdr(ref, mix)
        out[str(path)] = entry
    if args.hist_csv:
        if len(stats) != 2:
            raise UsageError("--hist-csv needs exactly two estimates (deterministic, generative)")
        edges, cd, cg = segment_histogram(stats[0], stats[1])
        write_histogram_csv(args.hist_csv, edges, cd, cg)
    _write_json(args.json or "-", out)
    return 0


def cmd_align(args, cfg) -> int:
    scfg = _spectral(cfg, args)
    det = read_wav(args.det, scfg.sample_rate)
    gen = read_wav(args.gen, scfg.sample_rate)
    if len(det) != len(gen):
        raise DataError("deterministic and generative files differ in length")
    Vd, Vg = stft(det, scfg), stft(gen, scfg)
    res = align(Vd, Vg)
    if args.delays:
        with open(args.delays, "w") as fh:
            fh.write("frame,delay_samples\n")
            for i, d in enumerate(res.delays):
                fh.write(f"{i},{int(d)}\n")
    else:
        print(" ".join(str(int(d)) for d in res.delays))
    if args.out:
        from .spectral import istft

        write_wav(args.out, istft(Vg.like(res.phasors * Vg.data)))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fusesep",
        description="Fuse deterministic and generative separation estimates; compute SDR bounds.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--config", help="JSON config (sections: %s)" % ", ".join(CONFIG_SECTIONS))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    f = sub.add_parser("fuse", help="fuse a deterministic and a generative estimate", formatter_class=fmt)
    f.add_argument("--det", required=True, help="deterministic estimate WAV")
    f.add_argument("--gen", required=True, help="generative estimate WAV")
    f.add_argument("--strategy", choices=("xcorr", "oracle", "learned"), default="xcorr")
    f.add_argument("--ref", help="reference source WAV (required for oracle)")
    f.add_argument("--params", help="combiner checkpoint (required for learned)")
    f.add_argument("--ridge", type=float, default=0.0, help="oracle ridge parameter")
    f.add_argument("--out", required=True, help="output WAV")
    f.add_argument("--metrics", help="metrics JSON path")
    f.add_argument("--sample-rate", type=int, help="override spectral.sample_rate (default 8000)")
    f.add_argument("--n-fft", type=int, help="override spectral.n_fft (default 512)")
    f.set_defaults(func=cmd_fuse)

    b = sub.add_parser("bounds", help="classical / generative SDR upper bounds", formatter_class=fmt)
    b.add_argument("--classical", type=float, help="classical bound in dB (skips the inputs)")
    b.add_argument("--generative", action="store_true", help="print the generative bound")
    b.add_argument("--length", type=float, help="signal length L in samples")
    b.add_argument("--width", type=float, help="segment width w in samples")
    b.add_argument("--var", dest="var_v", type=float, help="source variance")
    b.add_argument("--mi-ref", dest="mi_ref", type=float, help="I(m_r; v_r) per segment, nats")
    b.add_argument("--json", help="write JSON report here ('-' for stdout)")
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("rho", help="rho(sigma2) curve as CSV", formatter_class=fmt)
    r.add_argument("--sigma2-grid", default="1e-4:1e1:25", help="LOW:HIGH:N (log-spaced) or comma list")
    r.add_argument("--mi-ref", type=float, help="reference I(v;m) in nats (default: mixture model)")
    r.add_argument("--n-sources", type=int, default=2, help="sources in the default mixture model")
    r.add_argument("--out", help="CSV output; a .plot.py companion is written next to it")
    r.set_defaults(func=cmd_rho)

    be = sub.add_parser("bench", help="synthetic benchmark", formatter_class=fmt)
    be.add_argument("--out", required=True, help="output directory")
    be.add_argument("--params", help="combiner checkpoint for the learned strategy")
    be.add_argument("--train", action="store_true", help="train a combiner first")
    be.add_argument("--seed", type=int)
    be.add_argument("--n-instances", dest="n_instances", type=int)
    be.add_argument("--C", type=int, help="number of sources")
    be.add_argument("--epochs", type=int)
    be.add_argument("--dump-wav", action="store_true", help="write WAVs of instance 0")
    be.set_defaults(func=cmd_bench)

    t = sub.add_parser("train", help="train a combiner checkpoint", formatter_class=fmt)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--dataset", help="directory of examples: <dir>/*/src<i>.wav, det<i>.wav, gen<i>.wav")
    t.add_argument("--synthetic", type=int, help="number of synthetic training mixtures")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("metrics", help="SI-SDR / SDR / segment MSE", formatter_class=fmt)
    m.add_argument("--ref", required=True)
    m.add_argument("--est", required=True, nargs="+")
    m.add_argument("--mixture", help="mixture WAV for SI-SDRi")
    m.add_argument("--hist-csv", help="MSE histogram CSV for exactly two estimates")
    m.add_argument("--json", help="JSON output path (default stdout)")
    m.set_defaults(func=cmd_metrics)

    a = sub.add_parser("align", help="per-frame cross-correlation delays", formatter_class=fmt)
    a.add_argument("--det", required=True)
    a.add_argument("--gen", required=True)
    a.add_argument("--delays", help="CSV of per-frame delays")
    a.add_argument("--out", help="write the delay-aligned generative estimate")
    a.set_defaults(func=cmd_align)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"fusesep: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SpectralError, MetricError, CombinerError, TrainError, bnd.BoundError, ValueError) as exc:
        print(f"fusesep: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"fusesep: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
