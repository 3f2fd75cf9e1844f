"""Ground-truth impulse-response rendering from modal data.

A damped-sinusoid oscillator bank: the excite-and-listen-at-the-same-point
unit-impulse solution of the per-mode oscillator q'' + 2*sigma*q' + w^2 q = delta,
with modal participation folded in as gain^2 / w_d.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile

from .errors import InvalidArgumentError
from .spectral import SpectralConfig


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidArgumentError("AudioBuffer is mono: samples must be 1-D")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("AudioBuffer samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]


def unit_impulse(cfg: SpectralConfig) -> AudioBuffer:
    samples = np.zeros(cfg.n_samples)
    samples[0] = 1.0
    return AudioBuffer(samples, cfg.sample_rate)


def render_ir(model, gains, cfg: SpectralConfig, normalize: bool = True) -> AudioBuffer:
    """Render the modal impulse response s[t] = sum_i a_i e^(-sigma_i t/fs) sin(w_d,i t/fs).

    w_d,i = sqrt(w_i^2 - sigma_i^2) is the damped frequency and a_i = g_i^2 / w_d,i.
    Modes at or above Nyquist are dropped; the result is peak-normalized unless
    ``normalize`` is False (the zero signal stays zero either way).
    """
    omegas = np.asarray(model.omegas, dtype=np.float64)
    sigmas = np.asarray(model.sigmas, dtype=np.float64)
    gains = np.asarray(gains, dtype=np.float64)
    if gains.shape != omegas.shape:
        raise InvalidArgumentError(f"{gains.shape[0]} gains for {omegas.shape[0]} modes")
    fs = cfg.sample_rate
    omega_d = np.sqrt(np.maximum(omegas**2 - sigmas**2, 0.0))
    keep = omega_d / (2 * np.pi) < fs / 2
    keep &= omega_d > 0
    if not np.any(keep):
        warnings.warn("no modes below Nyquist; rendering silence", stacklevel=2)
        return AudioBuffer(np.zeros(cfg.n_samples), fs)
    omega_d, sig, g = omega_d[keep], sigmas[keep], gains[keep]
    amp = g * g / omega_d
    t = np.arange(cfg.n_samples) / fs
    s = np.einsum("i,it->t", amp, np.exp(-np.outer(sig, t)) * np.sin(np.outer(omega_d, t)))
    if normalize:
        peak = np.max(np.abs(s))
        if peak > 0:
            s = s / peak
    return AudioBuffer(s, fs)


def write_wav(path, buffer: AudioBuffer) -> None:
    """RIFF/WAVE, 32-bit IEEE float, mono."""
    scipy.io.wavfile.write(path, buffer.sample_rate, buffer.samples.astype(np.float32))


def read_wav(path) -> AudioBuffer:
    rate, data = scipy.io.wavfile.read(path)
    data = np.asarray(data)
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype.kind == "i":
        data = data / float(np.iinfo(data.dtype).max)
    return AudioBuffer(data.astype(np.float64), int(rate))
