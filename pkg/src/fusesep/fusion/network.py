"""Dual-head convolutional combiner.

A trunk of 3x3 convolutions with leaky-ReLU activations (residual where a
layer keeps its channel count) feeds two 3x3 heads: a magnitude head
producing ``D1`` and a phase head producing ``D2``, each with two channels
(one per estimate).  The relative-phase input channel is added to the
second phase channel, so the head learns a correction to the phase that
aligns the generative estimate to the deterministic one.

Input features per source are ``log1p(|Vd|), log1p(|Vg|), angle(Vd),
angle(Vg conj(Vd))`` laid out as ``(4, bins, K)``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..kernels import conv3x3_backward, conv3x3_forward

__all__ = [
    "CombinerError",
    "CombinerConfig",
    "CombinerParams",
    "FULL_CONFIG",
    "DESK_CONFIG",
    "init_params",
    "zeros_like_params",
    "stack_features",
    "combiner_forward",
    "combiner_backward_heads",
]

IN_CHANNELS = 4


class CombinerError(ValueError):
    pass


@dataclass(frozen=True)
class CombinerConfig:
    """``hidden`` lists the trunk channel counts; the heads add one layer."""

    hidden: tuple[int, ...] = (8, 8, 16)
    leaky_slope: float = 0.01
    phase_skip: bool = True

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden), "leaky_slope": self.leaky_slope, "phase_skip": self.phase_skip}

    @classmethod
    def from_dict(cls, d: dict) -> "CombinerConfig":
        return cls(tuple(int(c) for c in d["hidden"]), float(d["leaky_slope"]), bool(d.get("phase_skip", True)))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


FULL_CONFIG = CombinerConfig(hidden=(32, 32, 64, 64, 64))
DESK_CONFIG = CombinerConfig()


@dataclass
class CombinerParams:
    """Trunk weights/biases followed by the magnitude and phase heads.

    ``weights[i]`` has shape ``(out, in, 3, 3)``; the last two entries are
    the magnitude and phase heads.
    """

    config: CombinerConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        expected = self.shapes(self.config)
        got = [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]
        if len(self.weights) != len(expected) or got != expected:
            raise CombinerError(f"parameter shapes {got} do not match config {expected}")
        for a in (*self.weights, *self.biases):
            if not np.all(np.isfinite(a)):
                raise CombinerError("non-finite parameter")

    @staticmethod
    def shapes(config: CombinerConfig):
        out = []
        c_in = IN_CHANNELS
        for c in config.hidden:
            out.append(((c, c_in, 3, 3), (c,)))
            c_in = c
        out.append(((2, c_in, 3, 3), (2,)))
        out.append(((2, c_in, 3, 3), (2,)))
        return out

    @property
    def n_trunk(self) -> int:
        return len(self.config.hidden)

    def arrays(self) -> list[np.ndarray]:
        """Flat view order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def size(self) -> int:
        return int(sum(a.size for a in self.arrays()))

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, flat: np.ndarray) -> "CombinerParams":
        arrays, pos = [], 0
        for a in self.arrays():
            arrays.append(np.asarray(flat[pos: pos + a.size], dtype=np.float64).reshape(a.shape).copy())
            pos += a.size
        return CombinerParams(self.config, arrays[0::2], arrays[1::2])

    def copy(self) -> "CombinerParams":
        return CombinerParams(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def residual(self, i: int) -> bool:
        return i > 0 and self.config.hidden[i] == self.config.hidden[i - 1]


def init_params(config: CombinerConfig = DESK_CONFIG, seed: int = 0, head_scale: float = 0.1) -> CombinerParams:
    """Fan-in scaled uniform initialisation.

    Head weights are shrunk by ``head_scale`` and the magnitude-head bias
    is ``(1, 0)`` so an untrained combiner starts near ``alpha = 1,
    beta = 0`` (the deterministic estimate alone).
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    shapes = CombinerParams.shapes(config)
    for k, (ws, bs) in enumerate(shapes):
        bound = 1.0 / np.sqrt(ws[1] * 9)
        w = rng.uniform(-bound, bound, ws)
        b = rng.uniform(-bound, bound, bs)
        if k >= len(shapes) - 2:
            w *= head_scale
            b[:] = 0.0
        weights.append(w)
        biases.append(b)
    biases[-2][:] = (1.0, 0.0)
    return CombinerParams(config, weights, biases)


def zeros_like_params(params: CombinerParams) -> CombinerParams:
    return CombinerParams(
        params.config,
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def stack_features(A, psi) -> np.ndarray:
    """Network input ``(B, 4, bins, K)`` from magnitude and phase features.

    Accepts single-source features of shape ``(2, bins, K)`` or batches
    ``(B, 2, bins, K)``.
    """
    a = np.asarray(getattr(A, "a", A), dtype=np.float64)
    p = np.asarray(getattr(psi, "psi", psi), dtype=np.float64)
    if a.ndim == 3:
        a, p = a[None], p[None]
    if a.shape != p.shape or a.ndim != 4 or a.shape[1] != 2:
        raise CombinerError(f"feature shapes {a.shape} and {p.shape} do not match")
    return np.concatenate([np.log1p(a), p], axis=1)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)   # input to each trunk layer
    pre: list[np.ndarray] = field(default_factory=list)      # pre-activation of each trunk layer
    top: np.ndarray | None = None                            # trunk output


def combiner_forward(A, psi, params: CombinerParams, cache: ForwardCache | None = None):
    """Return ``(D1, D2)``, each ``(B, 2, bins, K)`` (or ``(2, bins, K)``
    for unbatched input)."""
    x = stack_features(A, psi)
    single = np.ndim(getattr(A, "a", A)) == 3
    slope = params.config.leaky_slope
    h = x
    for i in range(params.n_trunk):
        if cache is not None:
            cache.inputs.append(h)
        z = conv3x3_forward(h, params.weights[i], params.biases[i])
        if cache is not None:
            cache.pre.append(z)
        a = np.where(z > 0, z, slope * z)
        h = a + h if params.residual(i) else a
    if cache is not None:
        cache.top = h
    d1 = conv3x3_forward(h, params.weights[-2], params.biases[-2])
    d2 = conv3x3_forward(h, params.weights[-1], params.biases[-1])
    if params.config.phase_skip:
        d2[:, 1] += x[:, 3]
    if single:
        return d1[0], d2[0]
    return d1, d2


def combiner_backward_heads(gd1: np.ndarray, gd2: np.ndarray, params: CombinerParams, cache: ForwardCache) -> CombinerParams:
    """Back-propagate head gradients through the network to its parameters."""
    if gd1.ndim == 3:
        gd1, gd2 = gd1[None], gd2[None]
    slope = params.config.leaky_slope
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    gh_m, grads_w[-2], grads_b[-2] = conv3x3_backward(cache.top, params.weights[-2], gd1)
    gh_p, grads_w[-1], grads_b[-1] = conv3x3_backward(cache.top, params.weights[-1], gd2)
    gh = gh_m + gh_p
    for i in reversed(range(params.n_trunk)):
        z = cache.pre[i]
        gz = gh * np.where(z > 0, 1.0, slope)
        gx, grads_w[i], grads_b[i] = conv3x3_backward(cache.inputs[i], params.weights[i], gz)
        gh = gx + gh if params.residual(i) else gx
    return CombinerParams(params.config, grads_w, grads_b)
