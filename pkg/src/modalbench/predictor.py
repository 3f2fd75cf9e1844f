"""Amortized filterbank predictor: conv shape encoder + MLP head.

The encoder embeds a 64x64 occupancy grid; the MLP maps the embedding
concatenated with normalized material parameters and excitation coordinates
to raw filterbank parameters, emitted as additive residuals on the resonant
initialization bias. Training backpropagates the spectral loss through the
frequency-sampled filterbank into every weight.
"""

from __future__ import annotations

import json
import struct
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import Dataset
from .elastodynamics import MATERIAL_RANGES
from .errors import InvalidArgumentError, NumericError
from .filterbank import FilterBankParams, bias_params
from .optim import OptimizerState, adam_step, bank_mel_loss_and_grad_stacked, bank_mel_loss_stacked
from .spectral import SpectralConfig

CHECKPOINT_MAGIC = b"MBCK"
CHECKPOINT_VERSION = 1

COND_DIM = 7  # 5 normalized material fields + 2 coordinates


@dataclass(frozen=True)
class PredictorConfig:
    topology: tuple = (32, 2)
    embed_dim: int = 64
    channels: tuple = (16, 32, 64, 128)
    hidden: tuple = (512, 512, 512)
    grid_size: int = 64
    sample_rate: int = 32000

    @property
    def out_dim(self) -> int:
        L, M = self.topology
        return L * M * 5

    def to_dict(self) -> dict:
        return {
            "topology": list(self.topology),
            "embed_dim": self.embed_dim,
            "channels": list(self.channels),
            "hidden": list(self.hidden),
            "grid_size": self.grid_size,
            "sample_rate": self.sample_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        return cls(
            topology=tuple(d["topology"]),
            embed_dim=d["embed_dim"],
            channels=tuple(d["channels"]),
            hidden=tuple(d["hidden"]),
            grid_size=d["grid_size"],
            sample_rate=d["sample_rate"],
        )


@dataclass
class PredictorWeights:
    config: PredictorConfig
    arrays: dict  # name -> float64 ndarray, in declared order
    material_ranges: dict = field(default_factory=lambda: dict(MATERIAL_RANGES))
    seed: int = 0

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays.values()])

    def unflatten(self, vec: np.ndarray) -> None:
        pos = 0
        for name, a in self.arrays.items():
            n = a.size
            self.arrays[name] = vec[pos : pos + n].reshape(a.shape).copy()
            pos += n
        if pos != vec.size:
            raise InvalidArgumentError("weight vector size mismatch")

    def copy(self) -> "PredictorWeights":
        return PredictorWeights(
            self.config, {k: v.copy() for k, v in self.arrays.items()},
            dict(self.material_ranges), self.seed,
        )

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())


def init_weights(config: PredictorConfig, seed: int = 0) -> PredictorWeights:
    """He-initialized stack; the output layer starts near zero so untrained
    predictions sit at the resonant bias bank.

    Biases start at small random values rather than 0: occupancy rasters
    produce whole dead patches in the relu maps, and a zero bias then parks
    pre-activations exactly on the relu kink.
    """
    rng = np.random.default_rng(seed)
    arrays = {}
    c_in = 1
    for i, c_out in enumerate(config.channels):
        arrays[f"conv{i}_w"] = nn.he_init(rng, (c_out, c_in, 3, 3), fan_in=c_in * 9)
        arrays[f"conv{i}_b"] = 0.01 * rng.standard_normal(c_out)
        c_in = c_out
    arrays["proj_w"] = nn.he_init(rng, (config.embed_dim, c_in), fan_in=c_in)
    n_in = config.embed_dim + COND_DIM
    for i, width in enumerate(config.hidden):
        arrays[f"mlp{i}_w"] = nn.he_init(rng, (width, n_in), fan_in=n_in)
        arrays[f"mlp{i}_b"] = 0.01 * rng.standard_normal(width)
        n_in = width
    arrays["out_w"] = 0.01 * nn.he_init(rng, (config.out_dim, n_in), fan_in=n_in)
    arrays["out_b"] = np.zeros(config.out_dim)
    return PredictorWeights(config, arrays, seed=seed)


def _bias_vector(config: PredictorConfig) -> np.ndarray:
    L, M = config.topology
    return bias_params(L, M, config.sample_rate).to_vector()


def encode_batch(grids, weights: PredictorWeights):
    """Embed (U, S, S) occupancy rasters; returns ((U, D), cache)."""
    cfg = weights.config
    grids = np.asarray(grids, dtype=np.float64)
    if grids.shape[-2:] != (cfg.grid_size, cfg.grid_size):
        raise InvalidArgumentError(f"expected {cfg.grid_size}x{cfg.grid_size} grids")
    x = grids[:, None]  # (U, 1, S, S)
    caches = []
    for i in range(len(cfg.channels)):
        w, b = weights.arrays[f"conv{i}_w"], weights.arrays[f"conv{i}_b"]
        pre, conv_cache = nn.conv2d(x, w, b)
        x = nn.relu(pre)
        caches.append((conv_cache, pre))
    pooled, pool_shape = nn.global_avg_pool(x)
    emb, lin_cache = nn.linear(pooled, weights.arrays["proj_w"])
    return emb, (caches, pool_shape, lin_cache)


def encode_backward(g_emb, weights: PredictorWeights, cache, grads: dict) -> None:
    caches, pool_shape, lin_cache = cache
    g, gw, _ = nn.linear_backward(g_emb, weights.arrays["proj_w"], lin_cache, has_bias=False)
    grads["proj_w"] = gw
    g = nn.global_avg_pool_backward(g, pool_shape)
    for i in reversed(range(len(weights.config.channels))):
        conv_cache, pre = caches[i]
        g = nn.relu_backward(g, pre)
        g, gw, gb = nn.conv2d_backward(g, weights.arrays[f"conv{i}_w"], conv_cache)
        grads[f"conv{i}_w"] = gw
        grads[f"conv{i}_b"] = gb


def encode(grid, weights: PredictorWeights) -> np.ndarray:
    """Embedding of one occupancy grid (cacheable per shape)."""
    cells = grid.cells if hasattr(grid, "cells") else grid
    emb, _ = encode_batch(np.asarray(cells, dtype=np.float64)[None], weights)
    return emb[0]


def mlp_batch(x, weights: PredictorWeights):
    cfg = weights.config
    caches = []
    for i in range(len(cfg.hidden)):
        pre, lin_cache = nn.linear(x, weights.arrays[f"mlp{i}_w"], weights.arrays[f"mlp{i}_b"])
        caches.append((lin_cache, pre))
        x = nn.relu(pre)
    out, out_cache = nn.linear(x, weights.arrays["out_w"], weights.arrays["out_b"])
    return out, (caches, out_cache)


def mlp_backward(g, weights: PredictorWeights, cache, grads: dict) -> np.ndarray:
    caches, out_cache = cache
    g, gw, gb = nn.linear_backward(g, weights.arrays["out_w"], out_cache)
    grads["out_w"], grads["out_b"] = gw, gb
    for i in reversed(range(len(weights.config.hidden))):
        lin_cache, pre = caches[i]
        g = nn.relu_backward(g, pre)
        g, gw, gb = nn.linear_backward(g, weights.arrays[f"mlp{i}_w"], lin_cache)
        grads[f"mlp{i}_w"], grads[f"mlp{i}_b"] = gw, gb
    return g


def predict(embedding, cond, weights: PredictorWeights) -> FilterBankParams:
    """Raw filterbank parameters for one (embedding, conditioning) pair.

    The MLP output is a residual added to the fixed bias parameter vector;
    the pole activation is applied downstream by the filterbank itself.
    """
    embedding = np.asarray(embedding, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    if embedding.shape != (weights.config.embed_dim,):
        raise InvalidArgumentError(
            f"embedding dim {embedding.shape} != {weights.config.embed_dim}"
        )
    if cond.shape != (COND_DIM,):
        raise InvalidArgumentError(f"conditioning must have {COND_DIM} entries")
    out, _ = mlp_batch(np.concatenate([embedding, cond])[None], weights)
    vec = _bias_vector(weights.config) + out[0]
    L, M = weights.config.topology
    return FilterBankParams.from_vector(vec, L, M)


def _stacked_from_vectors(vecs, L, M):
    sp = vecs.reshape(-1, L, M, 5)
    return sp[..., 0] + 1j * sp[..., 1], sp[..., 2] + 1j * sp[..., 3], sp[..., 4]


def batch_forward(weights, grids_unique, inv_idx, conds):
    emb_u, enc_cache = encode_batch(grids_unique, weights)
    emb = emb_u[inv_idx]
    x = np.concatenate([emb, conds], axis=1)
    out, mlp_cache = mlp_batch(x, weights)
    vecs = _bias_vector(weights.config)[None] + out
    return vecs, (enc_cache, mlp_cache, inv_idx, emb_u.shape)


def batch_loss(weights, grids_unique, inv_idx, conds, x_mels, cfg: SpectralConfig) -> float:
    """Mean spectral loss of predicted banks over a batch (forward only)."""
    vecs, _ = batch_forward(weights, grids_unique, inv_idx, conds)
    L, M = weights.config.topology
    losses = bank_mel_loss_stacked(*_stacked_from_vectors(vecs, L, M), x_mels, cfg)
    return float(losses.mean())


def batch_loss_and_grad(weights, grids_unique, inv_idx, conds, x_mels, cfg: SpectralConfig):
    """Mean loss plus gradients for every weight array."""
    vecs, (enc_cache, mlp_cache, inv_idx, emb_shape) = batch_forward(
        weights, grids_unique, inv_idx, conds
    )
    L, M = weights.config.topology
    losses, g_params = bank_mel_loss_and_grad_stacked(
        *_stacked_from_vectors(vecs, L, M), x_mels, cfg
    )
    batch = len(vecs)
    g_out = g_params.reshape(batch, -1) / batch
    grads = {}
    g_x = mlp_backward(g_out, weights, mlp_cache, grads)
    g_emb = g_x[:, : weights.config.embed_dim]
    g_emb_u = np.zeros(emb_shape)
    np.add.at(g_emb_u, inv_idx, g_emb)
    encode_backward(g_emb_u, weights, enc_cache, grads)
    ordered = {name: grads[name] for name in weights.arrays}
    return float(losses.mean()), ordered


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    base_lr: float = 1e-3
    decay: float = 0.9
    decay_interval: int = 300
    max_steps: int = 2000
    patience: int = 2000
    val_interval: int = 50
    val_frac: float = 0.25
    seed: int = 0
    max_seconds: float | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "batch_size", "base_lr", "decay", "decay_interval", "max_steps",
            "patience", "val_interval", "val_frac", "seed", "max_seconds",
        )}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainMetrics:
    history: list = field(default_factory=list)  # (step, train_loss, lr)
    val_history: list = field(default_factory=list)  # (step, val_loss)
    baseline_val: float = np.inf
    best_val: float = np.inf
    train_shapes: list = field(default_factory=list)
    val_shapes: list = field(default_factory=list)
    elapsed: float = 0.0
    aborted: bool = False


def split_by_shape(shape_ids, n_shapes, val_frac, seed):
    """Shape-level train/validation split (no shape appears in both)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
    order = rng.permutation(n_shapes)
    n_val = max(1, int(round(val_frac * n_shapes)))
    val_shapes = set(order[:n_val].tolist())
    val_mask = np.isin(shape_ids, list(val_shapes))
    return np.flatnonzero(~val_mask), np.flatnonzero(val_mask), sorted(val_shapes)


def train(dataset: Dataset, topology=None, hyper: TrainConfig = TrainConfig()):
    """End-to-end training against a dataset's stored mel targets.

    Minimizes the spectral loss averaged over minibatches, early-stops on
    validation patience (counted in optimizer steps), and returns the
    best-validation weights plus metrics. Deterministic for a fixed seed.
    """
    cfg = dataset.spectral
    grids, conds, mels, shape_ids = dataset.load_training_arrays()
    config = PredictorConfig(
        topology=tuple(topology) if topology else (32, 2), sample_rate=cfg.sample_rate
    )
    weights = init_weights(config, seed=hyper.seed)
    train_idx, val_idx, val_shapes = split_by_shape(
        shape_ids, len(grids), hyper.val_frac, hyper.seed
    )
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise InvalidArgumentError("train/validation split produced an empty side")

    metrics = TrainMetrics(
        train_shapes=sorted(set(shape_ids[train_idx].tolist())), val_shapes=val_shapes
    )

    def eval_split(w, idx):
        total = 0.0
        for lo in range(0, len(idx), hyper.batch_size):
            sel = idx[lo : lo + hyper.batch_size]
            u, inv = np.unique(shape_ids[sel], return_inverse=True)
            total += batch_loss(w, grids[u], inv, conds[sel], mels[sel], cfg) * len(sel)
        return total / len(idx)

    # bias-only baseline: the deterministic init bank, identical for every input
    L, M = config.topology
    bias_vec = _bias_vector(config)
    base_losses = bank_mel_loss_stacked(
        *_stacked_from_vectors(np.repeat(bias_vec[None], len(val_idx), axis=0), L, M),
        mels[val_idx],
        cfg,
    )
    metrics.baseline_val = float(base_losses.mean())

    state = OptimizerState.create(
        weights.n_params, hyper.base_lr, hyper.decay, hyper.decay_interval
    )
    rng = np.random.default_rng(np.random.SeedSequence((hyper.seed, 4)))
    best = weights.copy()
    stale = 0
    t0 = time.time()
    for step in range(hyper.max_steps):
        sel = rng.choice(train_idx, size=min(hyper.batch_size, len(train_idx)), replace=False)
        u, inv = np.unique(shape_ids[sel], return_inverse=True)
        try:
            loss, grads = batch_loss_and_grad(weights, grids[u], inv, conds[sel], mels[sel], cfg)
        except NumericError as exc:
            warnings.warn(f"training aborted at step {step}: {exc}", stacklevel=2)
            metrics.aborted = True
            break
        metrics.history.append((step, loss, state.lr))
        flat = weights.flatten()
        grad_flat = np.concatenate([grads[n].reshape(-1) for n in weights.arrays])
        flat, state = adam_step(state, flat, grad_flat)
        weights.unflatten(flat)
        if (step + 1) % hyper.val_interval == 0 or step == hyper.max_steps - 1:
            val_loss = eval_split(weights, val_idx)
            metrics.val_history.append((step, val_loss))
            if val_loss < metrics.best_val:
                metrics.best_val = val_loss
                best = weights.copy()
                stale = 0
        stale += 1
        if stale >= hyper.patience:
            break
        if hyper.max_seconds is not None and time.time() - t0 > hyper.max_seconds:
            break
    metrics.elapsed = time.time() - t0
    if not metrics.val_history:
        metrics.best_val = eval_split(weights, val_idx)
        best = weights.copy()
    return best, metrics


def save_checkpoint(path, weights: PredictorWeights) -> None:
    """Single file: JSON header + float32 little-endian blobs in declared order."""
    tensors = [[name, list(a.shape)] for name, a in weights.arrays.items()]
    header = json.dumps(
        {
            "version": CHECKPOINT_VERSION,
            "config": weights.config.to_dict(),
            "material_ranges": {k: list(v) for k, v in weights.material_ranges.items()},
            "seed": weights.seed,
            "dtype": "<f4",
            "tensors": tensors,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for a in weights.arrays.values():
            f.write(a.astype("<f4").tobytes())


def load_checkpoint(path) -> PredictorWeights:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise InvalidArgumentError(f"{path} is not a predictor checkpoint")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen))
        if header["version"] != CHECKPOINT_VERSION:
            raise InvalidArgumentError(f"unsupported checkpoint version {header['version']}")
        config = PredictorConfig.from_dict(header["config"])
        arrays = {}
        for name, shape in header["tensors"]:
            n = int(np.prod(shape))
            arrays[name] = np.frombuffer(f.read(4 * n), dtype="<f4").astype(np.float64).reshape(shape)
    ranges = {k: tuple(v) for k, v in header["material_ranges"].items()}
    return PredictorWeights(config, arrays, ranges, header["seed"])
