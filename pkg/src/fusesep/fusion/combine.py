"""Complex fusion weights and the linear spectral combination."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..spectral import Spectrogram, SpectralError, TimeSignal, istft

__all__ = [
    "FusionWeights",
    "weights_from_heads",
    "fuse_spectrum",
    "apply_fusion",
    "oracle_weights",
    "spectral_residual",
]


@dataclass(frozen=True)
class FusionWeights:
    """Per-tile complex weights for the deterministic (alpha) and generative
    (beta) spectrograms.  Arrays broadcast against ``(bins, K)``."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.complex128)
        b = np.asarray(self.beta, dtype=np.complex128)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise SpectralError("fusion weights must be finite")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def constant(cls, alpha: complex, beta: complex) -> "FusionWeights":
        return cls(np.asarray(alpha), np.asarray(beta))


def weights_from_heads(D1: np.ndarray, D2: np.ndarray) -> FusionWeights:
    """``Q = D1 * exp(-j D2)``; channel 0 is alpha, channel 1 is beta.

    Takes ``(2, bins, K)`` arrays (a leading batch axis is also accepted,
    giving ``(B, bins, K)`` weights).
    """
    D1 = np.asarray(D1, dtype=np.float64)
    D2 = np.asarray(D2, dtype=np.float64)
    if D1.shape != D2.shape or D1.shape[-3] != 2:
        raise SpectralError(f"head shapes {D1.shape} and {D2.shape} do not match")
    Q = D1 * np.exp(-1j * D2)
    return FusionWeights(Q[..., 0, :, :], Q[..., 1, :, :])


def fuse_spectrum(Vd: Spectrogram, Vg: Spectrogram, w: FusionWeights) -> Spectrogram:
    if Vd.shape != Vg.shape or Vd.config != Vg.config:
        raise SpectralError("Vd and Vg must share shape and config")
    try:
        data = w.alpha * Vd.data + w.beta * Vg.data
    except ValueError as exc:
        raise SpectralError(f"weights do not broadcast to {Vd.shape}") from exc
    if data.shape != Vd.shape:
        raise SpectralError(f"weights of shape {data.shape} do not match {Vd.shape}")
    return Vd.like(data)


def apply_fusion(Vd: Spectrogram, Vg: Spectrogram, w: FusionWeights) -> TimeSignal:
    """``istft(alpha * Vd + beta * Vg)``."""
    return istft(fuse_spectrum(Vd, Vg, w))


def oracle_weights(
    Vd: Spectrogram,
    Vg: Spectrogram,
    Vref: Spectrogram,
    lam: float = 0.0,
    per_tile: bool = False,
) -> FusionWeights:
    """Least-squares weights given the reference spectrogram.

    Default: one ``(alpha, beta)`` pair per frequency bin, minimising
    ``sum_frames |Vref - alpha Vd - beta Vg|^2 + lam (|alpha|^2 + |beta|^2)``
    through the 2x2 normal equations.  When the Gram matrix is singular
    (relative determinant below 1e-12) the fit falls back to the best
    single-estimate fit: on Vd if it has energy, else on Vg, else (1, 0).

    ``per_tile=True`` solves each tile independently; that problem has one
    equation and two unknowns, so it needs ``lam > 0``.
    """
    if not (Vd.shape == Vg.shape == Vref.shape):
        raise SpectralError("Vd, Vg and Vref must have the same shape")
    if lam < 0:
        raise SpectralError("ridge parameter must be non-negative")
    d, g, r = Vd.data, Vg.data, Vref.data
    if per_tile:
        if lam <= 0:
            raise SpectralError("per-tile oracle weights need lam > 0")
        den = np.abs(d) ** 2 + np.abs(g) ** 2 + lam
        return FusionWeights(np.conj(d) * r / den, np.conj(g) * r / den)

    g11 = np.sum(np.abs(d) ** 2, axis=1) + lam
    g22 = np.sum(np.abs(g) ** 2, axis=1) + lam
    g12 = np.sum(np.conj(d) * g, axis=1)
    r1 = np.sum(np.conj(d) * r, axis=1)
    r2 = np.sum(np.conj(g) * r, axis=1)
    det = g11 * g22 - np.abs(g12) ** 2
    scale = g11 * g22
    ok = det > 1e-12 * scale
    alpha = np.ones(d.shape[0], dtype=np.complex128)
    beta = np.zeros(d.shape[0], dtype=np.complex128)
    safe = np.where(ok, det, 1.0)
    alpha[ok] = ((g22 * r1 - g12 * r2) / safe)[ok]
    beta[ok] = ((g11 * r2 - np.conj(g12) * r1) / safe)[ok]
    # singular bins: single-estimate fits
    use_d = ~ok & (g11 > 0)
    alpha[use_d] = r1[use_d] / g11[use_d]
    use_g = ~ok & ~use_d & (g22 > 0)
    alpha[use_g] = 0.0
    beta[use_g] = r2[use_g] / g22[use_g]
    return FusionWeights(alpha[:, None], beta[:, None])


def spectral_residual(Vd: Spectrogram, Vg: Spectrogram, Vref: Spectrogram, w: FusionWeights) -> float:
    """Frobenius norm of ``Vref - (alpha Vd + beta Vg)``."""
    return float(np.linalg.norm(Vref.data - fuse_spectrum(Vd, Vg, w).data))
