"""DFT magnitudes, mel projection and the spectral matching loss.

The loss is the weighted sum of a linear-magnitude and a log-magnitude
squared-error term between two mel spectra, reduced by summation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

MEL_SCALE = 2595.0
MEL_BREAK_HZ = 700.0


def hz_to_mel(f):
    return MEL_SCALE * np.log10(1.0 + np.asarray(f, dtype=float) / MEL_BREAK_HZ)


def mel_to_hz(m):
    return MEL_BREAK_HZ * (10.0 ** (np.asarray(m, dtype=float) / MEL_SCALE) - 1.0)


@dataclass(frozen=True)
class SpectralConfig:
    """Spectral feature settings shared by rendering, fitting and training.

    ``n_samples`` is both the render length and the DFT size; the filterbank
    is evaluated on the same N-point bin grid.
    """

    sample_rate: int = 32000
    n_samples: int = 32768
    n_mels: int = 128
    f_min: float = 20.0
    f_max: float | None = None
    log_eps: float = 1e-7
    lam: float = 1.0
    gamma: float = 0.1

    def __post_init__(self):
        if self.n_samples < 2 or self.n_samples & (self.n_samples - 1):
            raise InvalidArgumentError(f"n_samples must be a power of two, got {self.n_samples}")
        f_max = self.effective_f_max
        if not (0.0 < self.f_min < f_max <= self.sample_rate / 2):
            raise InvalidArgumentError(
                f"need 0 < f_min < f_max <= fs/2, got f_min={self.f_min}, f_max={f_max}"
            )
        if self.lam < 0 or self.gamma < 0:
            raise InvalidArgumentError("loss weights must be nonnegative")
        if self.log_eps <= 0:
            raise InvalidArgumentError("log_eps must be positive")
        if self.n_mels < 1:
            raise InvalidArgumentError("n_mels must be >= 1")

    @property
    def effective_f_max(self) -> float:
        return self.sample_rate / 2 if self.f_max is None else self.f_max

    @property
    def n_bins(self) -> int:
        return self.n_samples // 2 + 1

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.n_samples

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "n_samples": self.n_samples,
            "n_mels": self.n_mels,
            "f_min": self.f_min,
            "f_max": self.f_max,
            "log_eps": self.log_eps,
            "lam": self.lam,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralConfig":
        return cls(**d)


#: Desk-scale config used by dataset builds, predictor training and eval fits.
#: Shorter DFT grid keeps the frequency-sampled gradient CPU-sized.
DESK_SPECTRAL = SpectralConfig(n_samples=4096, n_mels=64)


def dft_mag(samples, cfg: SpectralConfig) -> np.ndarray:
    """Magnitude of the unnormalized DFT on bins 0..N/2. No windowing."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[-1] != cfg.n_samples:
        raise InvalidArgumentError(
            f"buffer length {samples.shape[-1]} != configured n_samples {cfg.n_samples}"
        )
    return np.abs(np.fft.rfft(samples, axis=-1))


@functools.lru_cache(maxsize=8)
def mel_matrix(cfg: SpectralConfig) -> np.ndarray:
    """B x (N/2+1) matrix of triangular mel filters, each row peaking at 1.

    Apexes sit at B points equally spaced on the mel axis strictly between
    m(f_min) and m(f_max); triangles are linear in mel. Rows are rescaled by
    their max so the peak entry is exactly 1 on the discrete bin grid.
    """
    n_bins = cfg.n_bins
    if cfg.n_mels > cfg.n_samples // 2:
        raise InvalidArgumentError("more mel bands than positive-frequency bins")
    grid_mel = hz_to_mel(np.arange(n_bins) * cfg.bin_hz)
    anchors = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.effective_f_max), cfg.n_mels + 2)
    lower, center, upper = anchors[:-2], anchors[1:-1], anchors[2:]
    up = (grid_mel[None, :] - lower[:, None]) / (center - lower)[:, None]
    down = (upper[:, None] - grid_mel[None, :]) / (upper - center)[:, None]
    weights = np.maximum(0.0, np.minimum(up, down))
    peak = weights.max(axis=1, keepdims=True)
    if np.any(peak <= 0):
        raise InvalidArgumentError("a mel band covers no DFT bin; lower n_mels or raise n_samples")
    return weights / peak


def mel_centers_hz(cfg: SpectralConfig) -> np.ndarray:
    """Apex frequencies of the mel filters (before bin snapping)."""
    anchors = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.effective_f_max), cfg.n_mels + 2)
    return mel_to_hz(anchors[1:-1])


def mel_project(mag, cfg: SpectralConfig) -> np.ndarray:
    """Project magnitude spectra (…, N/2+1) to mel spectra (…, B)."""
    mag = np.asarray(mag, dtype=np.float64)
    if mag.shape[-1] != cfg.n_bins:
        raise InvalidArgumentError(f"expected {cfg.n_bins} bins, got {mag.shape[-1]}")
    return mag @ mel_matrix(cfg).T


def loss(x_mel, h_mel, cfg: SpectralConfig) -> float:
    """lam * ||X - H||_2^2 + gamma * ||log(X+eps) - log(H+eps)||_2^2 (summed)."""
    x = np.asarray(x_mel, dtype=np.float64)
    h = np.asarray(h_mel, dtype=np.float64)
    if x.shape != h.shape:
        raise InvalidArgumentError(f"shape mismatch {x.shape} vs {h.shape}")
    if np.any(x < 0) or np.any(h < 0):
        raise InvalidArgumentError("mel spectra must be nonnegative")
    diff = x - h
    log_diff = np.log(x + cfg.log_eps) - np.log(h + cfg.log_eps)
    return float(cfg.lam * np.sum(diff * diff) + cfg.gamma * np.sum(log_diff * log_diff))
