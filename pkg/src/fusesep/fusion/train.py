"""Training the combiner with a negative SI-SDR objective.

Each example holds the estimates for all C sources of one mixture.  The
combiner runs on every (Vd, Vg) pair, the fused outputs are matched to the
references by the Hungarian method on negative SI-SDR, and the loss is the
mean negative SI-SDR over matched pairs.  The assignment is held fixed
during back-propagation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..alignment import magnitude_features, phase_features
from ..metrics import hungarian_assign, si_sdr_grad
from ..spectral import Spectrogram, SpectralConfig, TimeSignal, istft, istft_adjoint, stft
from .combine import fuse_spectrum, weights_from_heads
from .network import (
    CombinerConfig,
    CombinerParams,
    DESK_CONFIG,
    ForwardCache,
    combiner_backward_heads,
    combiner_forward,
    init_params,
    zeros_like_params,
)

__all__ = [
    "TrainError",
    "TrainConfig",
    "Example",
    "make_example",
    "loss_and_grad",
    "batch_loss",
    "Adam",
    "train_combiner",
]

log = logging.getLogger(__name__)


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 3
    epochs: int = 30
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise TrainError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise TrainError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Example:
    """One mixture: reference sources and the paired estimates (as STFTs)."""

    sources: list[np.ndarray]
    Vd: list[Spectrogram]
    Vg: list[Spectrogram]
    features: np.ndarray = field(repr=False)  # (C, 4, bins, K) cache of A and psi

    @property
    def n_sources(self) -> int:
        return len(self.sources)


def make_example(sources, vd_list, vg_list, cfg: SpectralConfig) -> Example:
    if not (len(sources) == len(vd_list) == len(vg_list)) or not sources:
        raise TrainError("need matching, non-empty lists of sources and estimates")
    Vd = [stft(_sig(x, cfg), cfg) for x in vd_list]
    Vg = [stft(_sig(x, cfg), cfg) for x in vg_list]
    feats = []
    for d, g in zip(Vd, Vg):
        feats.append(np.concatenate([magnitude_features(d, g).a, phase_features(d, g).psi]))
    src = [np.asarray(getattr(s, "samples", s), dtype=np.float64) for s in sources]
    return Example(src, Vd, Vg, np.stack(feats))


def _sig(x, cfg):
    return x if isinstance(x, TimeSignal) else TimeSignal(x, cfg.sample_rate)


def _forward_example(ex: Example, params: CombinerParams, cache=None):
    d1, d2 = combiner_forward(ex.features[:, :2], ex.features[:, 2:], params, cache)
    w = weights_from_heads(d1, d2)
    fused = []
    for i in range(ex.n_sources):
        V = ex.Vd[i].data * w.alpha[i] + ex.Vg[i].data * w.beta[i]
        fused.append(istft(ex.Vd[i].like(V)).samples)
    return d1, d2, w, fused


def _assignment(ex: Example, fused) -> tuple[int, ...]:
    C = ex.n_sources
    cost = np.empty((C, C))
    for i in range(C):
        for j in range(C):
            cost[i, j] = -si_sdr_grad(ex.sources[i], fused[j])[0]
    return hungarian_assign(cost).permutation


def batch_loss(batch: list[Example], params: CombinerParams, assignments=None) -> float:
    total, count = 0.0, 0
    for k, ex in enumerate(batch):
        _, _, _, fused = _forward_example(ex, params)
        perm = assignments[k] if assignments is not None else _assignment(ex, fused)
        for i, j in enumerate(perm):
            total -= si_sdr_grad(ex.sources[i], fused[j])[0]
            count += 1
    return total / count


def loss_and_grad(batch: list[Example], params: CombinerParams, assignments=None, scale: float = 1.0):
    """Mean negative SI-SDR over the batch and its exact parameter gradient.

    ``assignments`` fixes the source->estimate matching per example (the
    Hungarian result is used otherwise).  Returns ``(loss, grads, perms)``.
    """
    n_pairs = sum(ex.n_sources for ex in batch)
    grads = zeros_like_params(params)
    total = 0.0
    perms = []
    for k, ex in enumerate(batch):
        cache = ForwardCache()
        d1, d2, w, fused = _forward_example(ex, params, cache)
        perm = assignments[k] if assignments is not None else _assignment(ex, fused)
        perms.append(tuple(perm))
        gd1 = np.zeros_like(d1)
        gd2 = np.zeros_like(d2)
        for i, j in enumerate(perm):
            val, g_time = si_sdr_grad(ex.sources[i], fused[j])
            if not np.isfinite(val):
                raise TrainError(f"non-finite SI-SDR for source {i} of example {k}")
            total -= val
            gV = istft_adjoint(-scale * g_time / n_pairs, ex.Vd[j])
            g_alpha = gV * np.conj(ex.Vd[j].data)
            g_beta = gV * np.conj(ex.Vg[j].data)
            for ch, gq in ((0, g_alpha), (1, g_beta)):
                e = np.exp(-1j * d2[j, ch])
                q = d1[j, ch] * e
                gd1[j, ch] = np.real(np.conj(gq) * e)
                gd2[j, ch] = np.imag(np.conj(gq) * q)
        g = combiner_backward_heads(gd1, gd2, params, cache)
        for acc, new in zip(grads.arrays(), g.arrays()):
            acc += new
    loss = scale * total / n_pairs
    if not np.isfinite(loss):
        raise TrainError("loss is not finite")
    return loss, grads, perms


class Adam:
    def __init__(self, params: CombinerParams, tcfg: TrainConfig):
        self.cfg = tcfg
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: CombinerParams, grads: CombinerParams) -> None:
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + c.eps)


@dataclass
class TrainLog:
    epoch_si_sdr: list[float] = field(default_factory=list)


def train_combiner(
    dataset: list[Example],
    tcfg: TrainConfig = TrainConfig(),
    config: CombinerConfig = DESK_CONFIG,
    params: CombinerParams | None = None,
    log_every: int = 1,
):
    """Adam training; returns ``(params, TrainLog)``.

    Batches are drawn in an order fixed by ``tcfg.seed``; with the same
    seed the result is bit-identical on one thread.
    """
    if not dataset:
        raise TrainError("empty dataset")
    params = init_params(config, tcfg.seed) if params is None else params.copy()
    opt = Adam(params, tcfg)
    rng = np.random.default_rng(tcfg.seed + 1)
    history = TrainLog()
    for epoch in range(tcfg.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), tcfg.batch_size):
            batch = [dataset[i] for i in order[start: start + tcfg.batch_size]]
            loss, grads, _ = loss_and_grad(batch, params)
            opt.step(params, grads)
            losses.append(loss)
        history.epoch_si_sdr.append(-float(np.mean(losses)))
        if log_every and (epoch + 1) % log_every == 0:
            log.info("epoch %d: mean SI-SDR %.3f dB", epoch + 1, history.epoch_si_sdr[-1])
    return params, history
