"""Relative-phase features and cross-correlation alignment.

Delay convention: a positive delay means the generative spectrogram lags
the deterministic one, and the phasor ``exp(+j 2 pi f t)`` cancels it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Spectrogram, SpectralConfig, SpectralError, TimeSignal, angle, istft

__all__ = [
    "PhaseFeatures",
    "MagnitudeFeatures",
    "AlignmentResult",
    "phase_features",
    "magnitude_features",
    "xcorr_spectrum",
    "estimate_delays",
    "delay_phasors",
    "align",
    "xcorr_fuse",
]


@dataclass(frozen=True)
class PhaseFeatures:
    """``psi``: shape ``(2, bins, K)``; channel 0 is the phase of Vd,
    channel 1 the phase of ``Vg * conj(Vd)``."""

    psi: np.ndarray


@dataclass(frozen=True)
class MagnitudeFeatures:
    """``a``: shape ``(2, bins, K)`` holding ``|Vd|`` and ``|Vg|``."""

    a: np.ndarray


@dataclass(frozen=True)
class AlignmentResult:
    delays: np.ndarray
    phasors: np.ndarray


def _check_pair(Vd: Spectrogram, Vg: Spectrogram):
    if Vd.shape != Vg.shape:
        raise SpectralError(f"shape mismatch: {Vd.shape} vs {Vg.shape}")
    if Vd.config != Vg.config:
        raise SpectralError("spectrograms were computed with different configs")


def _mul_conj(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a * conj(b)`` by components, so ``a is b`` gives an exactly real result."""
    out = np.empty(np.broadcast(a, b).shape, dtype=np.complex128)
    out.real = a.real * b.real + a.imag * b.imag
    out.imag = a.imag * b.real - a.real * b.imag
    return out


def phase_features(Vd: Spectrogram, Vg: Spectrogram) -> PhaseFeatures:
    _check_pair(Vd, Vg)
    psi = np.stack([angle(Vd.data), angle(_mul_conj(Vg.data, Vd.data))])
    return PhaseFeatures(psi)


def magnitude_features(Vd: Spectrogram, Vg: Spectrogram) -> MagnitudeFeatures:
    _check_pair(Vd, Vg)
    return MagnitudeFeatures(np.stack([np.abs(Vd.data), np.abs(Vg.data)]))


def xcorr_spectrum(Vd: Spectrogram, Vg: Spectrogram) -> Spectrogram:
    """Cross-spectrum ``Vd * conj(Vg)``."""
    _check_pair(Vd, Vg)
    return Vd.like(_mul_conj(Vd.data, Vg.data))


def _search_order(n_fft: int) -> np.ndarray:
    # candidate delays, in tie-break order: |t| ascending, negative first.
    # t = n_fft/2 is ambiguous in sign and excluded.
    half = n_fft // 2
    lags = [0]
    for d in range(1, half):
        lags += [-d, d]
    return np.asarray(lags)


def estimate_delays(R: Spectrogram) -> np.ndarray:
    """Per-frame integer delay of Vg relative to Vd.

    The circular cross-correlation of frame ``i`` is the inverse real FFT of
    the cross-spectrum column; its real maximum sits at lag ``-t``, where
    ``t`` is the delay.  Ties resolve to the smallest ``|t|``, then the
    negative one, so an all-zero frame yields 0.
    """
    n_fft = R.config.n_fft
    corr = np.fft.irfft(R.data.T, n=n_fft, axis=1)
    delays_in_order = _search_order(n_fft)
    idx = np.mod(-delays_in_order, n_fft)  # lag of each candidate delay
    vals = corr[:, idx]
    # argmax returns the first maximum, i.e. the preferred candidate
    return delays_in_order[np.argmax(vals, axis=1)].astype(np.int64)


def delay_phasors(delays, cfg: SpectralConfig) -> np.ndarray:
    """``exp(j 2 pi f t)`` per tile, shape ``(bins, K)``."""
    delays = np.asarray(delays, dtype=np.float64)
    if np.any(np.abs(delays) >= cfg.n_fft / 2):
        raise SpectralError("delays must satisfy |t| < n_fft / 2")
    f = cfg.bin_frequencies[:, None]
    t = delays[None, :] / cfg.sample_rate
    return np.exp(2j * np.pi * f * t)


def align(Vd: Spectrogram, Vg: Spectrogram) -> AlignmentResult:
    delays = estimate_delays(xcorr_spectrum(Vd, Vg))
    return AlignmentResult(delays, delay_phasors(delays, Vd.config))


def xcorr_fuse(Vd: Spectrogram, Vg: Spectrogram) -> TimeSignal:
    """Align Vg to Vd frame by frame and add the two with unit weights."""
    res = align(Vd, Vg)
    return istft(Vd.like(Vd.data + res.phasors * Vg.data))
