"""Evaluation metrics (log-spectrogram MAE/MSE) and the benchmark harness.

The eval command compares oracle renders against model audio per held-out
sample; the bench command times the FEM solve path against the predictor
inference path over growing mesh sizes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .dataset import Dataset
from .elastodynamics import assemble, modal_gains, solve_modes
from .errors import InvalidArgumentError
from .filterbank import realize_coefficients, render_recursive
from .geometry import contains_many, gen_convex_shape, rasterize, triangulate
from .modal_render import AudioBuffer, render_ir, unit_impulse
from .optim import FitBudget, fit_batched
from .predictor import (
    PredictorConfig,
    PredictorWeights,
    encode,
    init_weights,
    mlp_batch,
    predict,
    split_by_shape,
    _bias_vector,
)
from .spectral import SpectralConfig

STFT_FRAME = 1024
STFT_HOP = 256


def stft_log_mag(samples, cfg: SpectralConfig, frame: int = STFT_FRAME, hop: int = STFT_HOP):
    """log(|STFT| + eps) with a Hann window; frames x (frame/2+1)."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < frame:
        raise InvalidArgumentError(f"buffer shorter than one STFT frame ({frame})")
    window = scipy.signal.windows.hann(frame, sym=False)
    n_frames = 1 + (len(samples) - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    spec = np.abs(np.fft.rfft(samples[idx] * window, axis=1))
    return np.log(spec + cfg.log_eps)


def eval_metrics(oracle: AudioBuffer, model: AudioBuffer, cfg: SpectralConfig):
    """Mean absolute and mean squared log-spectrogram error over all bins."""
    if len(oracle) != len(model):
        raise InvalidArgumentError(f"length mismatch {len(oracle)} vs {len(model)}")
    diff = stft_log_mag(oracle.samples, cfg) - stft_log_mag(model.samples, cfg)
    return float(np.abs(diff).mean()), float((diff**2).mean())


@dataclass
class EvalReport:
    topology: str
    source: str
    n_samples: int
    per_sample: list = field(default_factory=list)  # (mae, mse) per sample
    mae: float = 0.0
    mse: float = 0.0

    def finalize(self):
        arr = np.asarray(self.per_sample)
        self.mae = float(arr[:, 0].mean())
        self.mse = float(arr[:, 1].mean())
        return self

    def to_dict(self) -> dict:
        return {
            "topology": self.topology,
            "source": self.source,
            "n_samples": self.n_samples,
            "mae": self.mae,
            "mse": self.mse,
            "per_sample": [[float(a), float(b)] for a, b in self.per_sample],
        }


def heldout_samples(dataset: Dataset, n_samples: int, seed: int = 0, val_frac: float = 0.25) -> list:
    """Test samples drawn from validation shapes (the shape-level split).

    val_frac=1.0 treats the whole dataset as a test set (for datasets built
    solely for evaluation, disjoint by seed from any training data).
    """
    shape_ids = np.array([s["shape_id"] for s in dataset.samples])
    n_shapes = len(dataset.manifest["shapes"])
    if val_frac >= 1.0:
        val_idx = np.arange(len(dataset.samples))
    else:
        _, val_idx, _ = split_by_shape(shape_ids, n_shapes, val_frac=val_frac, seed=seed)
    if len(val_idx) < n_samples:
        raise InvalidArgumentError(
            f"only {len(val_idx)} held-out samples available, need {n_samples}"
        )
    return [dataset.samples[i] for i in val_idx[:n_samples]]


def _oracle_buffer(dataset: Dataset, sample: dict) -> AudioBuffer:
    model = dataset.modal(sample["shape_id"], sample["material_id"])
    gains = modal_gains(model, np.asarray(sample["position"]))
    return render_ir(model, gains, dataset.spectral)


def run_eval(
    dataset: Dataset,
    topologies,
    source: str = "fit",
    n_samples: int = 64,
    budget: FitBudget = None,
    weights: PredictorWeights = None,
    seed: int = 0,
    val_frac: float = 0.25,
) -> list:
    """Ablation-style evaluation: one report per topology over held-out samples."""
    cfg = dataset.spectral
    budget = budget or FitBudget(max_steps=500, lr=2e-2, seed=seed)
    samples = heldout_samples(dataset, n_samples, seed=seed, val_frac=val_frac)
    oracles = [_oracle_buffer(dataset, s) for s in samples]
    x_mels = np.stack([dataset.mel_target(s) for s in samples])
    impulse = unit_impulse(cfg)

    reports = []
    for topology in topologies:
        L, M = topology
        if source == "fit":
            params_list, _, _ = fit_batched(x_mels, topology, cfg, budget)
        elif source == "predictor":
            if weights is None:
                raise InvalidArgumentError("predictor source needs a checkpoint")
            if tuple(weights.config.topology) != (L, M):
                raise InvalidArgumentError(
                    f"checkpoint topology {weights.config.topology} != requested {L}x{M}"
                )
            params_list = []
            emb_cache = {}
            for s in samples:
                sid = s["shape_id"]
                if sid not in emb_cache:
                    emb_cache[sid] = encode(dataset.occupancy(sid).cells, weights)
                params_list.append(predict(emb_cache[sid], np.asarray(s["cond"]), weights))
        else:
            raise InvalidArgumentError(f"unknown eval source {source!r}")
        report = EvalReport(f"{L}x{M}", source, len(samples))
        for oracle, params in zip(oracles, params_list):
            model_audio = render_recursive(params, impulse)
            report.per_sample.append(eval_metrics(oracle, model_audio, cfg))
        reports.append(report.finalize())
    return reports


@dataclass
class BenchReport:
    vertex_counts: list
    repetitions: int
    fem_ms: dict = field(default_factory=dict)  # count -> {"mean":…, "median":…}
    model_ms: dict = field(default_factory=dict)
    model_cached_ms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "vertex_counts": self.vertex_counts,
            "repetitions": self.repetitions,
            "fem_ms": self.fem_ms,
            "model_ms": self.model_ms,
            "model_cached_ms": self.model_cached_ms,
        }


def _stats(times) -> dict:
    ms = 1e3 * np.asarray(times)
    return {"mean": float(ms.mean()), "median": float(np.median(ms))}


def bench_mesh(vertex_count: int, seed: int = 0):
    """Shape + mesh with approximately the requested vertex count."""
    n_boundary = 16
    shape = gen_convex_shape(n_boundary, seed=seed)
    target = 2 * vertex_count - n_boundary - 2
    if not 4 <= target <= 4096:
        raise InvalidArgumentError(f"vertex count {vertex_count} out of supported range")
    return shape, triangulate(shape, target, seed=seed)


def run_bench(
    vertex_counts=(96, 426, 1792),
    repetitions: int = 3,
    n_positions: int = 96,
    weights: PredictorWeights = None,
    material=None,
    seed: int = 0,
    n_modes: int = 32,
) -> BenchReport:
    """Wall-clock FEM solve path vs predictor inference path per mesh size.

    The model path embeds the occupancy grid, predicts filter parameters for
    ``n_positions`` coordinates and realizes coefficients; the cached variant
    reuses the shape embedding (the per-shape forward pass is done once).
    """
    from .dataset import normalize_conditioning, sample_material

    material = material or sample_material((seed, 7))
    report = BenchReport(list(vertex_counts), repetitions)
    for count in vertex_counts:
        shape, mesh = bench_mesh(count, seed=seed)
        if weights is None:
            weights = init_weights(PredictorConfig(), seed=seed)
        grid = rasterize(shape)
        rng = np.random.default_rng(np.random.SeedSequence((seed, 8, count)))
        pts = []
        lo, hi = shape.vertices.min(axis=0), shape.vertices.max(axis=0)
        while len(pts) < n_positions:
            cand = lo + (hi - lo) * rng.random((4 * n_positions, 2))
            pts.extend(cand[contains_many(shape, cand)][: n_positions - len(pts)])
        conds = np.stack([normalize_conditioning(material, p) for p in pts])

        fem_times, model_times, cached_times = [], [], []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            sys = assemble(mesh, material)
            solve_modes(sys, material, mesh=mesh, n_modes=n_modes)
            fem_times.append(time.perf_counter() - t0)

            t0 = time.perf_counter()
            emb = encode(grid.cells, weights)
            _predict_all(emb, conds, weights)
            model_times.append(time.perf_counter() - t0)

            t0 = time.perf_counter()
            _predict_all(emb, conds, weights)  # embedding served from cache
            cached_times.append(time.perf_counter() - t0)

        report.fem_ms[count] = _stats(fem_times)
        report.model_ms[count] = _stats(model_times)
        report.model_cached_ms[count] = _stats(cached_times)
    return report


def _predict_all(emb, conds, weights: PredictorWeights):
    x = np.concatenate([np.repeat(emb[None], len(conds), axis=0), conds], axis=1)
    out, _ = mlp_batch(x, weights)
    vecs = _bias_vector(weights.config)[None] + out
    L, M = weights.config.topology
    from .filterbank import FilterBankParams

    return [realize_coefficients(FilterBankParams.from_vector(v, L, M)) for v in vecs]
