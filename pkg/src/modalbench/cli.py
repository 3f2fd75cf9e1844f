"""Command-line entry points.

Thin wrappers over the library: every command maps to module operations and
emits machine-readable output with --json. Exit codes: 0 success, 2 invalid
arguments, 3 numeric/solver failure; stderr carries structured error context.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .dataset import DatasetConfig, Dataset, build
from .errors import InvalidArgumentError, ModalbenchError
from .evaluation import run_bench, run_eval
from .filterbank import FilterBankParams, parse_topology, realize_coefficients, render_recursive
from .geometry import gen_convex_shape, shape_to_dict
from .modal_render import AudioBuffer, read_wav, unit_impulse, write_wav
from .optim import FitBudget, fit, save_history
from .predictor import TrainConfig, load_checkpoint, save_checkpoint, train
from .spectral import DESK_SPECTRAL, SpectralConfig


def _fail(code: int, error: str, message: str):
    json.dump({"error": error, "message": message}, sys.stderr)
    sys.stderr.write("\n")
    sys.exit(code)


def cli_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except InvalidArgumentError as exc:
            _fail(2, type(exc).__name__, str(exc))
        except ModalbenchError as exc:
            _fail(3, type(exc).__name__, str(exc))

    return wrapper


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        return json.load(f)


def spectral_from_config(config: dict, **overrides) -> SpectralConfig:
    fields = dict(config.get("spectral", {}))
    fields.update({k: v for k, v in overrides.items() if v is not None})
    return SpectralConfig(**fields) if fields else DESK_SPECTRAL


def emit(payload: dict, as_json: bool, text: str):
    if as_json:
        click.echo(json.dumps(payload))
    else:
        click.echo(text)


@click.group()
def main():
    """Modal sound synthesis workbench."""


@main.command("gen-shapes")
@click.option("--count", default=8, show_default=True)
@click.option("--n-boundary", default=12, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@cli_errors
def gen_shapes(count, n_boundary, out, seed, config_path, as_json):
    """Generate random convex shapes as JSON files."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        shape_seed = seed + i
        shape = gen_convex_shape(n_boundary, shape_seed)
        path = out_dir / f"shape_{i:03d}.json"
        with open(path, "w") as f:
            json.dump(shape_to_dict(shape, seed=shape_seed, n_boundary=n_boundary), f)
        paths.append(str(path))
    emit({"count": count, "paths": paths}, as_json, f"wrote {count} shapes to {out_dir}")


@main.command("gen-dataset")
@click.option("--out", type=click.Path(), required=True)
@click.option("--shapes", default=None, type=int)
@click.option("--materials", default=None, type=int)
@click.option("--positions", default=None, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--export-wav", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
@cli_errors
def gen_dataset(out, shapes, materials, positions, seed, config_path, export_wav, as_json):
    """Build a dataset: shapes, meshes, modes, target spectra."""
    config = load_config(config_path)
    fields = dict(config.get("dataset", {}))
    if "spectral" in config:
        fields["spectral"] = SpectralConfig(**config["spectral"])
    if shapes is not None:
        fields["shapes"] = shapes
    if materials is not None:
        fields["materials_per_shape"] = materials
    if positions is not None:
        fields["positions_per_pair"] = positions
    fields["seed"] = seed
    fields["export_wav"] = export_wav
    if isinstance(fields.get("spectral"), dict):
        fields["spectral"] = SpectralConfig(**fields["spectral"])
    ds = build(DatasetConfig(**fields), out)
    counts = ds.manifest["counts"]
    emit(
        {"out": str(out), "counts": counts},
        as_json,
        f"dataset at {out}: {counts['samples']} samples ({counts['skipped']} pairs skipped)",
    )


@main.command("fit")
@click.option("--target", type=click.Path(exists=True), required=True, help="target WAV file")
@click.option("--topology", default="32x2", show_default=True, help="LxM: parallel x cascade")
@click.option("--steps", default=5000, show_default=True)
@click.option("--lr", default=1e-2, show_default=True)
@click.option("--patience", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="params JSON output")
@click.option("--history", "history_path", type=click.Path(), default=None, help="loss CSV output")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@cli_errors
def fit_cmd(target, topology, steps, lr, patience, seed, out, history_path, config_path, as_json):
    """Gradient-fit a filterbank to a target sound."""
    buf = read_wav(target)
    config = load_config(config_path)
    n = len(buf)
    cfg = spectral_from_config(
        config, sample_rate=buf.sample_rate,
        n_samples=config.get("spectral", {}).get("n_samples", n),
    )
    if cfg.n_samples != n:
        raise InvalidArgumentError(
            f"target length {n} != configured n_samples {cfg.n_samples}"
        )
    budget = FitBudget(max_steps=steps, patience=patience, lr=lr, seed=seed)
    result = fit(buf, parse_topology(topology), cfg, budget)
    doc = {
        "topology": topology,
        "sample_rate": cfg.sample_rate,
        "n_samples": cfg.n_samples,
        "best_loss": result.best_loss,
        "raw": result.params.to_dict(),
        "L": result.params.L,
        "M": result.params.M,
        "sections": [[float(c) for c in row] for row in realize_coefficients(result.params)],
    }
    with open(out, "w") as f:
        json.dump(doc, f)
    if history_path:
        save_history(history_path, result.history)
    emit(
        {"out": str(out), "best_loss": result.best_loss, "steps": len(result.history)},
        as_json,
        f"fit {topology}: best loss {result.best_loss:.6g} after {len(result.history)} steps -> {out}",
    )


@main.command("render")
@click.option("--params", "params_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--excitation", default="impulse", show_default=True,
              help="'impulse' or a WAV file path")
@click.option("--length", default=None, type=int, help="impulse render length (samples)")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@cli_errors
def render_cmd(params_path, out, excitation, length, seed, config_path, as_json):
    """Render audio through a fitted filterbank (exact recursion)."""
    with open(params_path) as f:
        doc = json.load(f)
    params = FilterBankParams.from_dict(doc["raw"])
    fs = doc["sample_rate"]
    if excitation == "impulse":
        n = length or doc["n_samples"]
        cfg = SpectralConfig(sample_rate=fs, n_samples=n, n_mels=min(64, n // 8))
        buf = unit_impulse(cfg)
    else:
        buf = read_wav(excitation)
    audio = render_recursive(params, AudioBuffer(buf.samples, fs))
    write_wav(out, audio)
    emit({"out": str(out), "samples": len(audio)}, as_json, f"rendered {len(audio)} samples -> {out}")


@main.command("train")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--topology", default="32x2", show_default=True)
@click.option("--steps", default=2000, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--batch", default=64, show_default=True)
@click.option("--patience", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="checkpoint output")
@click.option("--history", "history_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@cli_errors
def train_cmd(dataset_dir, topology, steps, lr, batch, patience, seed, out, history_path,
              config_path, as_json):
    """Train the amortized predictor on a dataset."""
    config = load_config(config_path)
    fields = dict(config.get("train", {}))
    fields.update(
        batch_size=batch, base_lr=lr, max_steps=steps, patience=patience, seed=seed
    )
    hyper = TrainConfig(**fields)
    ds = Dataset(dataset_dir)
    weights, metrics = train(ds, topology=parse_topology(topology), hyper=hyper)
    save_checkpoint(out, weights)
    if history_path:
        save_history(history_path, metrics.history)
    payload = {
        "out": str(out),
        "best_val": metrics.best_val,
        "baseline_val": metrics.baseline_val,
        "steps": len(metrics.history),
        "elapsed_s": metrics.elapsed,
        "val_shapes": metrics.val_shapes,
        "aborted": metrics.aborted,
    }
    emit(
        payload,
        as_json,
        f"trained {topology}: val {metrics.best_val:.6g} (baseline {metrics.baseline_val:.6g}) -> {out}",
    )


@main.command("eval")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--topologies", default="16x4,32x2,64x1", show_default=True)
@click.option("--source", type=click.Choice(["fit", "predictor"]), default="fit", show_default=True)
@click.option("--samples", default=64, show_default=True)
@click.option("--steps", default=500, show_default=True, help="fit steps per topology")
@click.option("--lr", default=2e-2, show_default=True)
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="report JSON output")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@cli_errors
def eval_cmd(dataset_dir, topologies, source, samples, steps, lr, checkpoint, seed, out,
             config_path, as_json):
    """Log-spectrogram MAE/MSE of model audio vs the FEM oracle."""
    ds = Dataset(dataset_dir)
    topo_list = [parse_topology(t.strip()) for t in topologies.split(",")]
    weights = load_checkpoint(checkpoint) if checkpoint else None
    budget = FitBudget(max_steps=steps, lr=lr, seed=seed)
    reports = run_eval(ds, topo_list, source=source, n_samples=samples, budget=budget,
                       weights=weights, seed=seed)
    payload = {"reports": [r.to_dict() for r in reports]}
    if out:
        with open(out, "w") as f:
            json.dump(payload, f)
    lines = [
        f"{r.topology:>6s}: MAE {r.mae:.4f}  MSE {r.mse:.4f}  ({r.n_samples} samples, {r.source})"
        for r in reports
    ]
    emit(payload, as_json, "\n".join(lines))


@main.command("bench")
@click.option("--vertices", default="96,426,1792", show_default=True)
@click.option("--reps", default=3, show_default=True)
@click.option("--positions", default=96, show_default=True)
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@cli_errors
def bench_cmd(vertices, reps, positions, checkpoint, seed, out, config_path, as_json):
    """Wall-clock comparison: FEM solve path vs predictor inference path."""
    counts = [int(v) for v in vertices.split(",")]
    weights = load_checkpoint(checkpoint) if checkpoint else None
    report = run_bench(counts, repetitions=reps, n_positions=positions, weights=weights,
                       seed=seed)
    payload = report.to_dict()
    if out:
        with open(out, "w") as f:
            json.dump(payload, f)
    lines = []
    for c in counts:
        lines.append(
            f"{c:>5d} vertices: FEM {report.fem_ms[c]['median']:.1f} ms | "
            f"model {report.model_ms[c]['median']:.2f} ms | "
            f"cached {report.model_cached_ms[c]['median']:.2f} ms (medians)"
        )
    emit(payload, as_json, "\n".join(lines))


@main.command("serve")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="directory with the built web UI")
@click.option("--fem-workers", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@cli_errors
def serve_cmd(dataset_dir, checkpoint, host, port, static_dir, fem_workers, seed, config_path):
    """Start the HTTP service consumed by the web UI."""
    import uvicorn

    from .service import create_app

    app = create_app(dataset_dir, checkpoint, fem_workers=fem_workers, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
