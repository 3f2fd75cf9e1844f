"""Gradient machinery and optimization for filterbank fitting.

The loss gradient is computed analytically, reverse-mode, through the fixed
chain: pole activation -> section transfer functions on the bin grid ->
parallel/cascade combination -> magnitude -> mel projection -> spectral loss.
Complex intermediates are handled as pairs of reals; the recursion is never
differentiated. All functions support a leading batch axis over independent
targets so finite-difference oracles, multi-sample fits and predictor
training share one vectorized core.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FitAbortedError, InvalidArgumentError, NumericError
from .filterbank import (
    FilterBankParams,
    bin_grid,
    eval_conjugate_pair,
    init_params,
    pole_activation_jacobian,
)
from .modal_render import AudioBuffer
from .spectral import SpectralConfig, dft_mag, mel_matrix

#: Cap on chunk size in (section x bin) elements; ~8 MB complex temporaries
#: stay cache-friendly, which dominates throughput on small hosts.
_CHUNK_ELEMS = 500_000


def _as_batched(arr, name):
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise InvalidArgumentError(f"{name} must have shape (batch, L, M), got {arr.shape}")
    return arr


def bank_mel_loss_stacked(p_raw, q, k, x_mel, cfg: SpectralConfig) -> np.ndarray:
    """Forward-only per-sample losses for stacked parameters (batch, L, M)."""
    losses, _ = _loss_core(p_raw, q, k, x_mel, cfg, want_grad=False)
    return losses


def bank_mel_loss_and_grad_stacked(p_raw, q, k, x_mel, cfg: SpectralConfig):
    """Per-sample losses (batch,) and gradients (batch, L, M, 5).

    Gradient layout matches FilterBankParams.to_vector: the last axis is
    [d/dRe p, d/dIm p, d/dRe q, d/dIm q, d/dk].
    """
    return _loss_core(p_raw, q, k, x_mel, cfg, want_grad=True)


def _loss_core(p_raw, q, k, x_mel, cfg, want_grad):
    p_raw = _as_batched(p_raw, "p_raw").astype(np.complex128, copy=False)
    q = _as_batched(q, "q").astype(np.complex128, copy=False)
    k = _as_batched(k, "k").astype(np.float64, copy=False)
    batch, L, M = p_raw.shape
    x_mel = np.asarray(x_mel, dtype=np.float64)
    if x_mel.ndim == 1:
        x_mel = np.broadcast_to(x_mel, (batch, x_mel.shape[0]))
    if x_mel.shape != (batch, cfg.n_mels):
        raise InvalidArgumentError(f"x_mel shape {x_mel.shape} != ({batch}, {cfg.n_mels})")
    if np.any(x_mel < 0):
        raise InvalidArgumentError("target mel spectra must be nonnegative")

    grid = bin_grid(cfg.n_samples)
    K = grid.n_bins
    W = np.stack([grid.w1, grid.w2])  # (2, K)
    mel = mel_matrix(cfg)  # (B_mel, K)
    log_x = np.log(x_mel + cfg.log_eps)

    losses = np.empty(batch)
    grads = np.empty((batch, L, M, 5)) if want_grad else None

    step = max(1, _CHUNK_ELEMS // (L * M * K))
    for lo in range(0, batch, step):
        hi = min(batch, lo + step)
        b = hi - lo
        S = b * L * M

        h, s_act, w_act = pole_activation_jacobian(p_raw[lo:hi])
        numer = eval_conjugate_pair(q[lo:hi].reshape(S), grid)
        denom = eval_conjugate_pair(h.reshape(S), grid)
        sec = numer / denom  # H_lm on the grid
        del numer
        sec = sec.reshape(b, L, M, K)
        T = k[lo:hi, :, :, None] * sec

        # prefix[m] = prod_{m'<m} T_m', suffix[m] = prod_{m'>m} T_m'
        prefix = np.empty_like(T)
        prefix[:, :, 0] = 1.0
        for m in range(1, M):
            np.multiply(prefix[:, :, m - 1], T[:, :, m - 1], out=prefix[:, :, m])
        branch = prefix[:, :, M - 1] * T[:, :, M - 1]
        bank = branch.sum(axis=1)  # (b, K)
        del branch

        mag = np.abs(bank)
        h_mel = mag @ mel.T
        diff = h_mel - x_mel[lo:hi]
        log_diff = np.log(h_mel + cfg.log_eps) - log_x[lo:hi]
        chunk_loss = cfg.lam * np.sum(diff**2, axis=1) + cfg.gamma * np.sum(log_diff**2, axis=1)
        if not np.all(np.isfinite(chunk_loss)):
            bad_sample = int(np.flatnonzero(~np.isfinite(chunk_loss))[0])
            bad_bins = np.flatnonzero(~np.isfinite(mag[bad_sample]))
            bad_bin = int(bad_bins[0]) if bad_bins.size else -1
            raise NumericError(
                f"non-finite loss for sample {lo + bad_sample}", bin_index=bad_bin
            )
        losses[lo:hi] = chunk_loss
        if not want_grad:
            continue

        g_mel = 2.0 * cfg.lam * diff + 2.0 * cfg.gamma * log_diff / (h_mel + cfg.log_eps)
        g_mag = g_mel @ mel  # (b, K)
        with np.errstate(invalid="ignore"):
            scale = np.where(mag > 0.0, g_mag / mag, 0.0)
        g_bank = scale * bank  # cogradient: dL/dRe + j dL/dIm

        # suffix products, folded into prefix to form prod of the other sections
        suffix = np.empty_like(T)
        suffix[:, :, M - 1] = 1.0
        for m in range(M - 2, -1, -1):
            np.multiply(suffix[:, :, m + 1], T[:, :, m + 1], out=suffix[:, :, m])
        prefix *= suffix
        del suffix, T

        np.conjugate(prefix, out=prefix)
        g_term = prefix  # renamed: now holds dL/d(T_lm) cogradients
        g_term *= g_bank[:, None, None, :]
        del g_bank

        grad_k = np.einsum(
            "blmk,blmk->blm", g_term.view(np.float64).reshape(b, L, M, K, 2)[..., 0],
            sec.view(np.float64).reshape(b, L, M, K, 2)[..., 0],
        )
        grad_k += np.einsum(
            "blmk,blmk->blm", g_term.view(np.float64).reshape(b, L, M, K, 2)[..., 1],
            sec.view(np.float64).reshape(b, L, M, K, 2)[..., 1],
        )

        g_term *= k[lo:hi, :, :, None]  # now dL/d(H_lm)
        denom = denom.reshape(b, L, M, K)
        np.conjugate(denom, out=denom)
        g_num = g_term / denom  # dL/d(numerator poly)
        del denom, g_term
        np.conjugate(sec, out=sec)
        g_den = g_num * sec
        np.negative(g_den, out=g_den)
        del sec

        Wc = W.conj().T  # (K, 2)
        gn = g_num.reshape(S, K) @ Wc
        gd = g_den.reshape(S, K) @ Wc
        del g_num, g_den
        gn1, gn2 = gn.real[:, 0].reshape(b, L, M), gn.real[:, 1].reshape(b, L, M)
        gd1, gd2 = gd.real[:, 0].reshape(b, L, M), gd.real[:, 1].reshape(b, L, M)

        qs = q[lo:hi]
        grad_q_re = -2.0 * gn1 + 2.0 * qs.real * gn2
        grad_q_im = 2.0 * qs.imag * gn2
        grad_u = -2.0 * gd1 + 2.0 * h.real * gd2
        grad_v = 2.0 * h.imag * gd2
        a, bb = p_raw[lo:hi].real, p_raw[lo:hi].imag
        grad_p_re = (s_act + a * a * w_act) * grad_u + (a * bb * w_act) * grad_v
        grad_p_im = (a * bb * w_act) * grad_u + (s_act + bb * bb * w_act) * grad_v

        grads[lo:hi] = np.stack([grad_p_re, grad_p_im, grad_q_re, grad_q_im, grad_k], axis=-1)

    return losses, grads


def target_mel(target: AudioBuffer, cfg: SpectralConfig) -> np.ndarray:
    """Mel magnitude spectrum of a target buffer (the X in the loss)."""
    return dft_mag(target.samples, cfg) @ mel_matrix(cfg).T


def loss_and_grad(params: FilterBankParams, x_mel, cfg: SpectralConfig):
    """Loss and flat gradient for one bank against one target mel spectrum."""
    losses, grads = bank_mel_loss_and_grad_stacked(
        params.p_raw[None], params.q[None], params.k[None], np.asarray(x_mel)[None], cfg
    )
    return float(losses[0]), grads[0].reshape(-1)


@dataclass
class OptimizerState:
    """Adam moments plus the stepped exponential learning-rate schedule."""

    m: np.ndarray
    v: np.ndarray
    step: int
    base_lr: float
    decay: float = 0.9
    interval: int = 300
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, n_params, base_lr, decay=0.9, interval=300, shape=None):
        shape = (n_params,) if shape is None else shape
        return cls(np.zeros(shape), np.zeros(shape), 0, base_lr, decay, interval)

    @property
    def lr(self) -> float:
        return self.base_lr * self.decay ** (self.step // self.interval)


def adam_step(state: OptimizerState, params, grads):
    """One Adam update. Mutates ``state``; returns (new_params, state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape or grads.shape != state.m.shape:
        raise InvalidArgumentError("params, grads and moments must share a shape")
    lr = state.lr
    state.step += 1
    t = state.step
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps), state


@dataclass(frozen=True)
class FitBudget:
    max_steps: int = 5000
    patience: int = 2000
    lr: float = 1e-2
    decay: float = 0.9
    decay_interval: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise InvalidArgumentError("max_steps must be >= 1")


@dataclass
class FitResult:
    params: FilterBankParams
    history: list = field(default_factory=list)  # (step, loss, lr) tuples

    @property
    def best_loss(self) -> float:
        return min(h[1] for h in self.history)


def fit(target: AudioBuffer, topology, cfg: SpectralConfig, budget: FitBudget) -> FitResult:
    """Gradient-fit a bank of the given (L, M) topology to one target buffer."""
    L, M = topology
    x_mel = target_mel(target, cfg)
    vec = init_params(L, M, cfg.sample_rate, budget.seed).to_vector()
    state = OptimizerState.create(vec.size, budget.lr, budget.decay, budget.decay_interval)
    best_vec, best_loss, stale = vec.copy(), np.inf, 0
    history = []
    for step in range(budget.max_steps):
        params = FilterBankParams.from_vector(vec, L, M)
        try:
            loss, grad = loss_and_grad(params, x_mel, cfg)
        except NumericError as exc:
            best = FilterBankParams.from_vector(best_vec, L, M)
            raise FitAbortedError(str(exc), params=best, history=history) from exc
        history.append((step, loss, state.lr))
        if loss < best_loss:
            best_loss, stale = loss, 0
            best_vec = vec.copy()
        else:
            stale += 1
            if stale >= budget.patience:
                break
        vec, state = adam_step(state, vec, grad)
    return FitResult(FilterBankParams.from_vector(best_vec, L, M), history)


def fit_batched(x_mels, topology, cfg: SpectralConfig, budget: FitBudget):
    """Fit independent banks to a batch of target mel spectra simultaneously.

    Runs the full ``max_steps`` budget (no per-sample patience) and returns
    (params_list, best_losses, mean_loss_history). Per-sample seeds derive
    from budget.seed + index so results match individually seeded fits.
    """
    L, M = topology
    x_mels = np.asarray(x_mels, dtype=np.float64)
    batch = x_mels.shape[0]
    vecs = np.stack(
        [init_params(L, M, cfg.sample_rate, budget.seed + i).to_vector() for i in range(batch)]
    )
    state = OptimizerState.create(None, budget.lr, budget.decay, budget.decay_interval,
                                  shape=vecs.shape)
    best_vecs, best_losses = vecs.copy(), np.full(batch, np.inf)
    history = []
    for step in range(budget.max_steps):
        sp = vecs.reshape(batch, L, M, 5)
        losses, grads = bank_mel_loss_and_grad_stacked(
            sp[..., 0] + 1j * sp[..., 1], sp[..., 2] + 1j * sp[..., 3], sp[..., 4], x_mels, cfg
        )
        improved = losses < best_losses
        best_losses = np.where(improved, losses, best_losses)
        best_vecs[improved] = vecs[improved]
        history.append((step, float(losses.mean()), state.lr))
        vecs, state = adam_step(state, vecs, grads.reshape(batch, -1))
    params = [FilterBankParams.from_vector(v, L, M) for v in best_vecs]
    return params, best_losses, history


def save_history(path, history) -> None:
    """Write a fit/train loss trace as CSV: step,loss,lr."""
    with open(path, "w") as f:
        f.write("step,loss,lr\n")
        for step, loss, lr in history:
            f.write(f"{step},{loss!r},{lr!r}\n")
