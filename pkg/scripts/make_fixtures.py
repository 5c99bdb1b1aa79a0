"""Regenerate the shipped desk-scale combiner and the bundled sample.

    python scripts/make_fixtures.py

Writes ``src/fusesep/data/desk_combiner.json`` and
``src/fusesep/data/sample_{det,gen,ref}.wav``.
"""
import logging
from pathlib import Path

from fusesep.fusion import TrainConfig, save_params, train_combiner
from fusesep.spectral import TimeSignal
from fusesep.synthbench import BenchConfig, make_instance, make_training_set
from fusesep.wavio import write_wav

DATA = Path(__file__).resolve().parents[1] / "src" / "fusesep" / "data"
SAMPLE_INDEX = 2_000_000  # outside both the benchmark and training ranges


def main():
    logging.basicConfig(level=logging.INFO)
    cfg = BenchConfig()
    ds = make_training_set(cfg, 40)
    params, _ = train_combiner(ds, TrainConfig(epochs=20, seed=0))
    DATA.mkdir(parents=True, exist_ok=True)
    save_params(params, DATA / "desk_combiner.json")

    inst = make_instance(cfg, SAMPLE_INDEX)
    sr = cfg.sample_rate
    write_wav(DATA / "sample_ref.wav", TimeSignal(inst.sources[0], sr))
    write_wav(DATA / "sample_det.wav", inst.vd[0])
    write_wav(DATA / "sample_gen.wav", inst.vg[0])


if __name__ == "__main__":
    main()
