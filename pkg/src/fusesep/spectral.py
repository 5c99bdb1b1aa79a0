"""Windowed spectral transforms.

STFT / inverse STFT with centred reflect padding, a triangular mel
filterbank, Griffin-Lim phase reconstruction and a quadrant-aware angle.

The stored spectrogram is one-sided: ``n_fft // 2 + 1`` bins per frame.
Bin ``k`` maps to the full-spectrum bins ``k`` and ``n_fft - k`` (complex
conjugates for real input), so nothing is lost by dropping the mirror half.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectralError",
    "SpectralConfig",
    "TimeSignal",
    "Spectrogram",
    "MelConfig",
    "MelSpec",
    "get_window",
    "stft",
    "istft",
    "istft_adjoint",
    "mel_filterbank",
    "mel_spectrogram",
    "mel_to_magnitude",
    "griffin_lim",
    "angle",
    "hz_to_mel",
    "mel_to_hz",
]

_COLA_TOL = 1e-10


class SpectralError(ValueError):
    """Invalid input or configuration for a spectral transform."""


def get_window(name: str, n_fft: int) -> np.ndarray:
    if name == "hann":
        # periodic Hann
        n = np.arange(n_fft)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / n_fft)
    if name in ("rect", "boxcar", "rectangular"):
        return np.ones(n_fft)
    raise SpectralError(f"unknown window {name!r}")


@dataclass(frozen=True)
class SpectralConfig:
    """STFT parameters.

    ``hop`` defaults to ``n_fft // 4``.  The window must satisfy the
    constant-overlap-add condition at the chosen hop; this is checked
    numerically on construction.
    """

    sample_rate: int = 8000
    n_fft: int = 512
    hop: int | None = None
    window: str = "hann"

    def __post_init__(self):
        if self.n_fft < 4 or self.n_fft % 2:
            raise SpectralError(f"n_fft must be an even integer >= 4, got {self.n_fft}")
        if self.hop is None:
            object.__setattr__(self, "hop", self.n_fft // 4)
        if self.hop <= 0 or self.n_fft % self.hop:
            raise SpectralError(f"hop {self.hop} must divide n_fft {self.n_fft}")
        if self.sample_rate <= 0:
            raise SpectralError("sample_rate must be positive")
        w = get_window(self.window, self.n_fft)
        ola = w.reshape(-1, self.hop).sum(axis=0)
        if np.max(np.abs(ola - ola.mean())) > _COLA_TOL * max(ola.mean(), 1.0):
            raise SpectralError(
                f"window {self.window!r} is not COLA at hop {self.hop}"
            )

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.n_fft

    def window_array(self) -> np.ndarray:
        return get_window(self.window, self.n_fft)

    def n_frames(self, length: int) -> int:
        return 1 + length // self.hop

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "n_fft": self.n_fft,
            "hop": self.hop,
            "window": self.window,
        }


@dataclass(frozen=True)
class TimeSignal:
    """Mono waveform."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise SpectralError("TimeSignal must be a non-empty 1-D array")
        if not np.all(np.isfinite(x)):
            raise SpectralError("TimeSignal contains non-finite samples")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT, shape ``(n_bins, K)``.

    ``length`` is the number of samples of the signal the frames came from;
    the inverse transform trims to it.
    """

    data: np.ndarray
    config: SpectralConfig
    length: int

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.complex128)
        if d.ndim != 2 or d.shape[0] != self.config.n_bins or d.shape[1] < 1:
            raise SpectralError(
                f"spectrogram shape {d.shape} incompatible with n_bins={self.config.n_bins}"
            )
        if not np.all(np.isfinite(d)):
            raise SpectralError("spectrogram contains non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def like(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(data, self.config, self.length)


def _frame(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    n_frames = 1 + (x.size - n_fft) // hop
    return np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop][:n_frames]


def stft(x: TimeSignal, cfg: SpectralConfig) -> Spectrogram:
    """Centred STFT with reflect padding of ``n_fft // 2`` on both ends."""
    if len(x) < cfg.n_fft:
        raise SpectralError(
            f"signal of {len(x)} samples is shorter than one frame ({cfg.n_fft})"
        )
    if x.sample_rate != cfg.sample_rate:
        raise SpectralError(
            f"sample rate {x.sample_rate} does not match config {cfg.sample_rate}"
        )
    pad = cfg.n_fft // 2
    xp = np.pad(x.samples, pad, mode="reflect")
    frames = _frame(xp, cfg.n_fft, cfg.hop) * cfg.window_array()
    data = np.fft.rfft(frames, axis=1).T
    return Spectrogram(np.ascontiguousarray(data), cfg, len(x))


def _ola_envelope(cfg: SpectralConfig, n_frames: int) -> np.ndarray:
    w2 = cfg.window_array() ** 2
    total = cfg.n_fft + cfg.hop * (n_frames - 1)
    env = np.zeros(total)
    for i in range(n_frames):
        env[i * cfg.hop: i * cfg.hop + cfg.n_fft] += w2
    return env


def _overlap_add(frames: np.ndarray, cfg: SpectralConfig) -> np.ndarray:
    n_frames = frames.shape[0]
    out = np.zeros(cfg.n_fft + cfg.hop * (n_frames - 1))
    for i in range(n_frames):
        out[i * cfg.hop: i * cfg.hop + cfg.n_fft] += frames[i]
    return out


def _safe_inverse(env: np.ndarray) -> np.ndarray:
    inv = np.zeros_like(env)
    nz = env > 1e-10 * env.max()
    inv[nz] = 1.0 / env[nz]
    return inv


def _fold_index(cfg: SpectralConfig, n_frames: int, length: int) -> np.ndarray:
    """Original-sample index of every padded position (reflect padding)."""
    total = cfg.n_fft + cfg.hop * (n_frames - 1)
    i = np.arange(total) - cfg.n_fft // 2
    i = np.where(i < 0, -i, i)
    i = np.where(i >= length, 2 * (length - 1) - i, i)
    # positions the reflection cannot reach (inconsistent length) are dropped
    return np.where((i >= 0) & (i < length), i, -1)


class _Synthesis:
    """Least-squares inverse of the reflect-padded STFT for a fixed shape.

    Reflect padding copies each padded sample from exactly one original
    sample, so the normal matrix is diagonal: overlap-add, fold the padded
    ends back onto the samples they mirror, and divide by the folded
    squared-window envelope.
    """

    def __init__(self, cfg: SpectralConfig, n_frames: int, length: int):
        self.cfg, self.length = cfg, length
        self.window = cfg.window_array()
        idx = _fold_index(cfg, n_frames, length)
        self.keep = idx >= 0
        self.idx = idx[self.keep]
        self.inv_env = _safe_inverse(self._fold(_ola_envelope(cfg, n_frames)))

    def _fold(self, padded: np.ndarray) -> np.ndarray:
        return np.bincount(self.idx, weights=padded[self.keep], minlength=self.length)

    def __call__(self, data: np.ndarray) -> np.ndarray:
        frames = np.fft.irfft(data.T, n=self.cfg.n_fft, axis=1) * self.window
        return self._fold(_overlap_add(frames, self.cfg)) * self.inv_env

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        full = np.zeros(self.keep.size)
        full[self.keep] = (g * self.inv_env)[self.idx]
        frames = _frame(full, self.cfg.n_fft, self.cfg.hop) * self.window
        G = np.fft.rfft(frames, axis=1) / self.cfg.n_fft
        G[:, 1:-1] *= 2.0
        G[:, 0] = G[:, 0].real
        G[:, -1] = G[:, -1].real
        return np.ascontiguousarray(G.T)


def istft(S: Spectrogram, cfg: SpectralConfig | None = None) -> TimeSignal:
    """Least-squares inverse of :func:`stft` (exact on consistent input)."""
    if cfg is not None and cfg != S.config:
        raise SpectralError("config does not match the spectrogram's config")
    cfg = S.config
    y = _Synthesis(cfg, S.shape[1], S.length)(S.data)
    return TimeSignal(y, cfg.sample_rate)


def istft_adjoint(g: np.ndarray, S: Spectrogram) -> np.ndarray:
    """Gradient of a real loss w.r.t. the spectrogram, given ``dL/dy``.

    ``istft`` is real-linear in ``(Re S, Im S)``; the returned complex array
    holds ``dL/dRe + 1j * dL/dIm`` for every tile of ``S``.
    """
    g = np.asarray(g, dtype=np.float64)
    return _Synthesis(S.config, S.shape[1], S.length).adjoint(g)


# --------------------------------------------------------------------- mel


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float | None = None

    def resolved_fmax(self, cfg: SpectralConfig) -> float:
        return cfg.sample_rate / 2.0 if self.f_max is None else float(self.f_max)

    def to_dict(self) -> dict:
        return {"n_mels": self.n_mels, "f_min": self.f_min, "f_max": self.f_max}


@dataclass(frozen=True)
class MelSpec:
    data: np.ndarray
    config: SpectralConfig
    mel_config: MelConfig
    length: int

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or np.any(d < 0) or not np.all(np.isfinite(d)):
            raise SpectralError("MelSpec must be a finite non-negative matrix")
        object.__setattr__(self, "data", d)


def mel_filterbank(cfg: SpectralConfig, mcfg: MelConfig) -> np.ndarray:
    """Triangular, area-normalised filters, shape ``(n_mels, n_bins)``.

    Filter ``i`` rises from centre ``i-1`` to centre ``i`` and falls to
    centre ``i+1`` (``n_mels + 2`` points equally spaced in mel), scaled by
    ``2 / (f_hi - f_lo)``.
    """
    f_max = mcfg.resolved_fmax(cfg)
    nyq = cfg.sample_rate / 2.0
    if f_max > nyq + 1e-9:
        raise SpectralError(f"f_max {f_max} exceeds Nyquist {nyq}")
    if not 0.0 <= mcfg.f_min < f_max:
        raise SpectralError("need 0 <= f_min < f_max")
    if mcfg.n_mels < 1:
        raise SpectralError("n_mels must be >= 1")
    edges = mel_to_hz(np.linspace(hz_to_mel(mcfg.f_min), hz_to_mel(f_max), mcfg.n_mels + 2))
    freqs = cfg.bin_frequencies
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    fb *= 2.0 / (hi - lo)
    empty = np.flatnonzero(fb.sum(axis=1) <= 0)
    if empty.size:
        raise SpectralError(
            f"mel filters {empty.tolist()} cover no FFT bin; lower n_mels or raise n_fft"
        )
    return fb


def mel_centers(cfg: SpectralConfig, mcfg: MelConfig) -> np.ndarray:
    f_max = mcfg.resolved_fmax(cfg)
    return mel_to_hz(np.linspace(hz_to_mel(mcfg.f_min), hz_to_mel(f_max), mcfg.n_mels + 2))[1:-1]


def mel_spectrogram(x: TimeSignal, cfg: SpectralConfig, mcfg: MelConfig | None = None) -> MelSpec:
    mcfg = mcfg or MelConfig()
    fb = mel_filterbank(cfg, mcfg)
    S = stft(x, cfg)
    return MelSpec(fb @ np.abs(S.data), cfg, mcfg, len(x))


def mel_to_magnitude(M: MelSpec) -> np.ndarray:
    """Magnitude estimate from a mel spectrogram: pseudo-inverse, clamped at 0."""
    fb = mel_filterbank(M.config, M.mel_config)
    return np.maximum(np.linalg.pinv(fb) @ M.data, 0.0)


# -------------------------------------------------------------- Griffin-Lim


def _bin_weights(cfg: SpectralConfig) -> np.ndarray:
    # one-sided -> full-spectrum energy weights
    w = np.full(cfg.n_bins, 2.0)
    w[0] = w[-1] = 1.0
    return w[:, None]


def griffin_lim(
    M,
    cfg: SpectralConfig | None = None,
    iterations: int = 32,
    seed: int | None = 0,
    length: int | None = None,
    momentum: float = 0.99,
    return_history: bool = False,
):
    """Griffin-Lim reconstruction from a magnitude.

    ``M`` is a :class:`MelSpec`, a magnitude :class:`Spectrogram` or a
    non-negative ``(n_bins, K)`` array (then ``cfg`` and ``length`` are
    required).  The initial phase is uniform noise drawn from ``seed``.

    The synthesis step is the exact least-squares inverse of :func:`stft`,
    so the consistency step is an orthogonal projection and the inconsistency
    ``|| |STFT(x_n)| - M ||`` (full-spectrum weighting) never increases
    when ``momentum == 0`` (the classical algorithm).  A positive
    ``momentum`` extrapolates successive projections, which converges much
    faster but is not monotone.  With ``return_history`` the inconsistency
    sequence is returned alongside the signal.
    """
    if isinstance(M, MelSpec):
        cfg, length, mag = M.config, M.length, mel_to_magnitude(M)
    elif isinstance(M, Spectrogram):
        cfg, length, mag = M.config, M.length, np.abs(M.data)
    else:
        if cfg is None or length is None:
            raise SpectralError("array input needs cfg and length")
        mag = np.asarray(M, dtype=np.float64)
        if mag.shape[0] != cfg.n_bins or np.any(mag < 0):
            raise SpectralError("magnitude must be non-negative with n_bins rows")
    if iterations < 1:
        raise SpectralError("iterations must be >= 1")
    if not 0.0 <= momentum < 1.0:
        raise SpectralError("momentum must lie in [0, 1)")

    rng = np.random.default_rng(seed)
    synth = _Synthesis(cfg, mag.shape[1], length)
    weights = _bin_weights(cfg)
    pad = cfg.n_fft // 2

    def analyse(y):
        yp = np.pad(y, pad, mode="reflect")
        return np.fft.rfft(_frame(yp, cfg.n_fft, cfg.hop) * synth.window, axis=1).T

    X = mag * np.exp(2j * np.pi * rng.random(mag.shape))
    prev = X
    history = []
    y = synth(X)
    for _ in range(iterations):
        C = analyse(y)
        history.append(float(np.sqrt(np.sum(weights * (np.abs(C) - mag) ** 2))))
        P = mag * np.exp(1j * np.angle(C))
        X = P + momentum * (P - prev) if momentum else P
        prev = P
        y = synth(X)
    sig = TimeSignal(y, cfg.sample_rate)
    if return_history:
        return sig, np.asarray(history)
    return sig


def angle(z):
    """Quadrant-aware complex angle in ``(-pi, pi]``; ``angle(0) == 0``."""
    a = np.arctan2(np.imag(z), np.real(z))
    # arctan2 returns -pi for (-x, -0.0); fold onto +pi
    a = np.where(a <= -np.pi, np.pi, a)
    if np.ndim(a) == 0:
        return float(a)
    return a
