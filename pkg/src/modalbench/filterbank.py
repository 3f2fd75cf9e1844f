"""Differentiable IIR resonator bank.

An L-parallel x M-cascade bank of biquads, each carrying one conjugate pole
pair (constrained inside the unit circle by a tanh radial activation) and one
unconstrained conjugate zero pair, with a real gain folded into the numerator.
Training-time evaluation samples the transfer function on the DFT bin grid;
audio rendering runs the exact recursion (transposed direct form II).
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import InvalidArgumentError, NumericOverflowError
from .modal_render import AudioBuffer
from .spectral import hz_to_mel, mel_to_hz

#: Asserted pole-magnitude margin: |h(p)| < 1 - POLE_MARGIN always holds.
POLE_MARGIN = 1e-12
#: tanh clamp sits below the margin so |s * p| stays under it after rounding.
POLE_CLAMP = 1.0 - 2e-12

#: Post-activation pole magnitude of the initialization bias.
INIT_POLE_MAG = 0.98
INIT_NOISE = 0.01
INIT_F_LO = 20.0


def parse_topology(text: str) -> tuple[int, int]:
    """Parse an 'LxM' topology string, e.g. '32x2' -> (32, 2)."""
    try:
        l_str, m_str = text.lower().split("x")
        L, M = int(l_str), int(m_str)
    except ValueError as exc:
        raise InvalidArgumentError(f"bad topology {text!r}, expected 'LxM'") from exc
    if L < 1 or M < 1:
        raise InvalidArgumentError(f"topology dimensions must be >= 1, got {L}x{M}")
    return L, M


def _tanh_ratio(r):
    """tanh(r)/r and its clamped tanh value, stable at r -> 0 and r -> inf."""
    r = np.asarray(r, dtype=np.float64)
    t = np.minimum(np.tanh(r), POLE_CLAMP)
    small = r < 1e-4
    rs = np.where(small, 0.0, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(small, 1.0 - r * r / 3.0, t / np.where(rs == 0.0, 1.0, rs))
    return s, t


def pole_activation(p):
    """h(p) = (tanh|p| / |p|) * p, with h(0) = 0; |h(p)| < 1 always."""
    p = np.asarray(p, dtype=np.complex128)
    s, _ = _tanh_ratio(np.abs(p))
    return s * p


def pole_activation_jacobian(p):
    """h(p) plus the 2x2 real Jacobian of (Re h, Im h) w.r.t. (Re p, Im p).

    Returns (h, s, w) where s = tanh(r)/r and w = s'(r)/r, so that
    d(Re h)/d(Re p) = s + a^2 w, d(Re h)/d(Im p) = d(Im h)/d(Re p) = a b w,
    d(Im h)/d(Im p) = s + b^2 w, with p = a + jb. The smooth even extension of
    tanh(r)/r is used through r = 0; where tanh saturates to the clamp the
    radial derivative is zero.
    """
    p = np.asarray(p, dtype=np.complex128)
    r = np.abs(p)
    s, t = _tanh_ratio(r)
    clamped = np.tanh(r) >= POLE_CLAMP
    tprime = np.where(clamped, 0.0, 1.0 - t * t)
    small = r < 1e-4
    rs = np.where(small, 1.0, r)
    # w = (d/dr)(tanh r / r) / r = (t' r - t) / r^3; series -2/3 + 8 r^2 / 15 at 0
    w = np.where(small, -2.0 / 3.0 + 8.0 * r * r / 15.0, (tprime * rs - t) / rs**3)
    return s * p, s, w


@dataclass(frozen=True)
class FilterBankParams:
    """Raw (pre-activation) parameters of an L x M biquad bank.

    ``p_raw`` and ``q`` are complex arrays of shape (L, M); ``k`` is real of
    the same shape. The flat real-parameter ordering is C-order over
    (L, M, [Re p, Im p, Re q, Im q, k]) — 5 reals per section.
    """

    p_raw: np.ndarray
    q: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.p_raw, dtype=np.complex128)
        q = np.ascontiguousarray(self.q, dtype=np.complex128)
        k = np.ascontiguousarray(self.k, dtype=np.float64)
        if p.ndim != 2 or p.shape != q.shape or p.shape != k.shape:
            raise InvalidArgumentError("p_raw, q, k must share one (L, M) shape")
        for name, arr in (("p_raw", p), ("q", q), ("k", k)):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"non-finite entries in {name}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def L(self) -> int:
        return self.p_raw.shape[0]

    @property
    def M(self) -> int:
        return self.p_raw.shape[1]

    @property
    def n_params(self) -> int:
        return self.L * self.M * 5

    def to_vector(self) -> np.ndarray:
        stacked = np.stack(
            [self.p_raw.real, self.p_raw.imag, self.q.real, self.q.imag, self.k], axis=-1
        )
        return stacked.reshape(-1).copy()

    @classmethod
    def from_vector(cls, vec, L: int, M: int) -> "FilterBankParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (L * M * 5,):
            raise InvalidArgumentError(f"expected {L * M * 5} parameters, got {vec.shape}")
        s = vec.reshape(L, M, 5)
        return cls(s[..., 0] + 1j * s[..., 1], s[..., 2] + 1j * s[..., 3], s[..., 4].copy())

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "M": self.M,
            "p_raw": [[[z.real, z.imag] for z in row] for row in self.p_raw],
            "q": [[[z.real, z.imag] for z in row] for row in self.q],
            "k": self.k.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterBankParams":
        p = np.array([[complex(re, im) for re, im in row] for row in d["p_raw"]])
        q = np.array([[complex(re, im) for re, im in row] for row in d["q"]])
        return cls(p.reshape(d["L"], d["M"]), q.reshape(d["L"], d["M"]), np.array(d["k"]))


@dataclass(frozen=True)
class FrequencyGrid:
    """z^-1 and z^-2 sampled at z_k = e^(j 2 pi k / N), k = 0..N/2."""

    n_samples: int
    w1: np.ndarray = field(repr=False)
    w2: np.ndarray = field(repr=False)

    @property
    def n_bins(self) -> int:
        return self.n_samples // 2 + 1


@functools.lru_cache(maxsize=8)
def bin_grid(n_samples: int) -> FrequencyGrid:
    k = np.arange(n_samples // 2 + 1)
    w1 = np.exp(-2j * np.pi * k / n_samples)
    w2 = w1 * w1
    w1.setflags(write=False)
    w2.setflags(write=False)
    return FrequencyGrid(n_samples, w1, w2)


@dataclass(frozen=True)
class FrequencyResponse:
    values: np.ndarray
    n_samples: int


def eval_conjugate_pair(root, grid: FrequencyGrid) -> np.ndarray:
    """(1 - r z^-1)(1 - conj(r) z^-1) on the grid for stacked roots.

    The factored form; expanding to 1 - 2 Re(r) z^-1 + |r|^2 z^-2 cancels
    catastrophically when a root sits near z = +/-1 (the quadratic's true
    value ~(1-|r|)^2 falls below the rounding of its O(1) terms).
    """
    root = np.asarray(root, dtype=np.complex128)[..., None]
    return (1.0 - root * grid.w1) * (1.0 - root.conj() * grid.w1)


def section_polys(p_raw, q):
    """Numerator/denominator z^-1, z^-2 coefficients for stacked sections.

    Returns (numer, denom), each shaped like p_raw + (2,): the coefficients of
    z^-1 and z^-2 (the z^0 coefficient is always 1).
    """
    p_raw = np.asarray(p_raw, dtype=np.complex128)
    q = np.asarray(q, dtype=np.complex128)
    h = pole_activation(p_raw)
    numer = np.stack([-2.0 * q.real, np.abs(q) ** 2], axis=-1)
    denom = np.stack([-2.0 * h.real, np.abs(h) ** 2], axis=-1)
    return numer, denom


def biquad_response(p_raw: complex, q: complex, grid: FrequencyGrid) -> np.ndarray:
    """Single-section transfer function on the bin grid (unit gain)."""
    h = pole_activation(np.asarray(p_raw, dtype=np.complex128))
    return eval_conjugate_pair(q, grid) / eval_conjugate_pair(h, grid)


def bank_response_stacked(p_raw, q, k, grid: FrequencyGrid) -> np.ndarray:
    """Bank response for stacked parameter arrays of shape (..., L, M).

    Returns complex responses shaped (..., n_bins):
    H(z) = sum_l prod_m k_lm H_lm(z).
    """
    h = pole_activation(p_raw)
    sections = eval_conjugate_pair(q, grid) / eval_conjugate_pair(h, grid)
    terms = np.asarray(k, dtype=np.float64)[..., None] * sections
    return terms.prod(axis=-2).sum(axis=-2)


def bank_response(params: FilterBankParams, grid: FrequencyGrid) -> FrequencyResponse:
    """Frequency-sampled bank transfer function (N/2+1 bins)."""
    values = bank_response_stacked(params.p_raw, params.q, params.k, grid)
    return FrequencyResponse(values, grid.n_samples)


def realize_coefficients(params: FilterBankParams) -> np.ndarray:
    """Per-section (b0, b1, b2, a1, a2), branch-major then cascade order.

    The gain is folded into the numerator: b = k * (1, -2 Re q, |q|^2);
    a = (-2 Re h(p), |h(p)|^2). Rows are (L*M, 5).
    """
    h = pole_activation(params.p_raw)
    k = params.k
    q = params.q
    sections = np.stack(
        [
            k,
            -2.0 * k * q.real,
            k * np.abs(q) ** 2,
            -2.0 * h.real,
            np.abs(h) ** 2,
        ],
        axis=-1,
    )
    return sections.reshape(params.L * params.M, 5)


def sections_to_json(params: FilterBankParams) -> str:
    """Coefficient export consumed by the UI audio engine."""
    sections = realize_coefficients(params)
    return json.dumps(
        {"L": params.L, "M": params.M, "sections": [[float(c) for c in row] for row in sections]}
    )


def render_recursive(params: FilterBankParams, excitation: AudioBuffer) -> AudioBuffer:
    """Run the exact recursion: per branch, M cascaded transposed-DF2 sections.

    Branch outputs are summed. For a unit impulse this is the bank's impulse
    response.
    """
    x = excitation.samples
    sections = realize_coefficients(params).reshape(params.L, params.M, 5)
    out = np.zeros_like(x)
    for l in range(params.L):
        sos = np.concatenate(
            [sections[l, :, :3], np.ones((params.M, 1)), sections[l, :, 3:]], axis=1
        )
        out += scipy.signal.sosfilt(sos, x)
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise NumericOverflowError(f"non-finite sample at index {bad}", bin_index=bad)
    return AudioBuffer(out, excitation.sample_rate)


def bias_params(L: int, M: int, sample_rate: int, pole_mag: float = INIT_POLE_MAG) -> FilterBankParams:
    """Deterministic initialization bias: resonant poles, centered zeros.

    Pole angles are spread uniformly on the mel axis between 20 Hz and
    Nyquist (branch-major section order); raw pole magnitudes are
    atanh(pole_mag) so the activated poles sit at radius ``pole_mag``.
    Zeros start at 0 and every gain at 1/(L*M).
    """
    n = L * M
    mel_pts = np.linspace(hz_to_mel(INIT_F_LO), hz_to_mel(sample_rate / 2), n + 2)[1:-1]
    angles = 2.0 * np.pi * mel_to_hz(mel_pts) / sample_rate
    p = np.arctanh(pole_mag) * np.exp(1j * angles).reshape(L, M)
    q = np.zeros((L, M), dtype=np.complex128)
    k = np.full((L, M), 1.0 / n)
    return FilterBankParams(p, q, k)


def init_params(
    L: int,
    M: int,
    sample_rate: int,
    seed: int,
    pole_mag: float = INIT_POLE_MAG,
    noise: float = INIT_NOISE,
) -> FilterBankParams:
    """Bias plus small Gaussian noise on every raw real parameter."""
    rng = np.random.default_rng(seed)
    bias = bias_params(L, M, sample_rate, pole_mag)
    vec = bias.to_vector() + noise * rng.standard_normal(L * M * 5)
    return FilterBankParams.from_vector(vec, L, M)
