"""Mono WAV reading and writing (PCM16 or 32-bit float)."""
from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .spectral import SpectralError, TimeSignal


class WavError(SpectralError):
    pass


def read_wav(path, expected_rate: int | None = None) -> TimeSignal:
    """Read a mono PCM16 or float32 file; PCM16 is scaled to [-1, 1)."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise WavError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise WavError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported sample format {data.dtype}")
    if expected_rate is not None and rate != expected_rate:
        raise WavError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (no resampling)")
    return TimeSignal(x, int(rate))


def write_wav(path, x: TimeSignal, fmt: str = "float32") -> None:
    if fmt == "float32":
        wavfile.write(path, x.sample_rate, x.samples.astype(np.float32))
    elif fmt == "pcm16":
        if np.max(np.abs(x.samples)) > 1.0:
            raise WavError("PCM16 output needs samples in [-1, 1]; normalise first")
        pcm = np.clip(np.round(x.samples * 32767.0), -32768, 32767).astype(np.int16)
        wavfile.write(path, x.sample_rate, pcm)
    else:
        raise WavError(f"unknown WAV format {fmt!r}")
