"""Build (once) and serve a small dataset + checkpoint for UI tests."""

import argparse
from pathlib import Path

import uvicorn

from modalbench.dataset import Dataset, DatasetConfig, build
from modalbench.predictor import PredictorConfig, init_weights, save_checkpoint
from modalbench.service import create_app
from modalbench.spectral import SpectralConfig


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, default=8077)
    parser.add_argument("--dir", default=".fixture")
    args = parser.parse_args()

    root = Path(args.dir)
    ds_dir = root / "dataset"
    ckpt = root / "predictor.bin"
    if not (ds_dir / "manifest.json").exists():
        build(
            DatasetConfig(
                shapes=3,
                materials_per_shape=2,
                positions_per_pair=3,
                seed=2024,
                spectral=SpectralConfig(n_samples=8192, n_mels=32),
                tri_range=(40, 80),
                n_modes=12,
            ),
            ds_dir,
        )
    if not ckpt.exists():
        ds = Dataset(ds_dir)
        weights = init_weights(
            PredictorConfig(topology=(16, 2), sample_rate=ds.spectral.sample_rate), seed=1
        )
        save_checkpoint(ckpt, weights)

    app = create_app(ds_dir, ckpt, fem_workers=1)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
