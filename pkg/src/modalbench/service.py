"""HTTP service over the workbench: shapes, occupancy, synthesis, rendering.

Stateless per request apart from read-only caches (shape embeddings, modal
solutions). FEM solves are funneled through a bounded worker pool so a burst
of oracle requests cannot oversubscribe the host.
"""

from __future__ import annotations

import base64
import io
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Union

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .dataset import Dataset, normalize_conditioning
from .elastodynamics import Material, assemble, modal_gains, solve_modes
from .errors import ModalbenchError, OutOfDomainError
from .filterbank import FilterBankParams, parse_topology, realize_coefficients, render_recursive
from .geometry import contains
from .modal_render import AudioBuffer, render_ir, unit_impulse, write_wav
from .optim import FitBudget, fit
from .predictor import PredictorWeights, encode, load_checkpoint, predict


class MaterialBody(BaseModel):
    rho: float
    youngs: float
    poisson: float
    alpha: float
    beta: float

    def to_material(self) -> Material:
        return Material(self.rho, self.youngs, self.poisson, self.alpha, self.beta)


class ExcitationSamples(BaseModel):
    samples_b64: str  # float32 little-endian raw samples


class SynthesizeRequest(BaseModel):
    shape_id: int
    material: MaterialBody
    position: tuple[float, float]
    source: Literal["predictor", "fit", "oracle"]
    topology: str = "32x2"
    fit_steps: int = Field(default=300, ge=1, le=20000)
    seed: int = 0


class RenderRequest(SynthesizeRequest):
    excitation: Union[Literal["impulse"], ExcitationSamples] = "impulse"


class SectionsResponse(BaseModel):
    source: str
    sections: list[list[float]]
    L: int
    M: int
    sample_rate: int


class ModalData(BaseModel):
    freqs_hz: list[float]
    sigmas: list[float]
    gains: list[float]


class OracleResponse(BaseModel):
    source: str
    modal: ModalData
    sample_rate: int


class ServerState:
    def __init__(self, dataset: Dataset, weights: PredictorWeights | None, fem_workers: int):
        self.dataset = dataset
        self.weights = weights
        self.embeddings: dict = {}
        self.modal_cache: dict = {}
        self._lock = threading.Lock()
        self.fem_pool = ThreadPoolExecutor(max_workers=fem_workers)

    def embedding(self, shape_id: int):
        cache = self.embeddings
        if shape_id in cache:
            return cache[shape_id]
        emb = encode(self.dataset.occupancy(shape_id).cells, self.weights)
        with self._lock:  # copy-on-insert; readers never see a partial map
            updated = dict(self.embeddings)
            updated[shape_id] = emb
            self.embeddings = updated
        return emb

    def modal(self, shape_id: int, material: Material):
        key = (shape_id, material.rho, material.youngs, material.poisson,
               material.alpha, material.beta)
        cache = self.modal_cache
        if key in cache:
            return cache[key]

        def solve():
            mesh = self.dataset.mesh(shape_id)
            return solve_modes(assemble(mesh, material), material, mesh=mesh,
                               n_modes=self.dataset.config.n_modes)

        model = self.fem_pool.submit(solve).result()
        with self._lock:
            updated = dict(self.modal_cache)
            updated[key] = model
            self.modal_cache = updated
        return model


def create_app(
    dataset_dir,
    checkpoint_path=None,
    fem_workers: int = 2,
    fit_lr: float = 1e-2,
    static_dir=None,
) -> FastAPI:
    dataset = Dataset(dataset_dir)
    weights = load_checkpoint(checkpoint_path) if checkpoint_path else None
    state = ServerState(dataset, weights, fem_workers)
    app = FastAPI(title="modalbench", version="0.1.0")
    app.state.bench = state

    @app.exception_handler(ModalbenchError)
    def modalbench_error(request, exc: ModalbenchError):
        return JSONResponse(
            status_code=500,
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    def get_shape_or_404(shape_id: int):
        shapes = dataset.manifest["shapes"]
        if not 0 <= shape_id < len(shapes):
            raise HTTPException(404, detail=f"unknown shape id {shape_id}")
        return dataset.shape(shape_id)

    def validate_request(req: SynthesizeRequest):
        shape = get_shape_or_404(req.shape_id)
        for name, (lo, hi) in dataset.material_ranges.items():
            value = getattr(req.material, name)
            if not lo <= value <= hi:
                raise HTTPException(
                    422, detail=f"material.{name}={value} outside dataset range [{lo}, {hi}]"
                )
        if not contains(shape, req.position):
            raise HTTPException(422, detail=f"position {list(req.position)} outside shape")
        return shape

    def synthesize_params(req: SynthesizeRequest) -> FilterBankParams:
        material = req.material.to_material()
        if req.source == "predictor":
            if state.weights is None:
                raise HTTPException(422, detail="server started without a predictor checkpoint")
            cond = normalize_conditioning(material, req.position)
            return predict(state.embedding(req.shape_id), cond, state.weights)
        # fit: ground-truth render of this (shape, material, position), then gradient fit
        model = state.modal(req.shape_id, material)
        gains = modal_gains(model, np.asarray(req.position))
        target = render_ir(model, gains, dataset.spectral)
        budget = FitBudget(max_steps=req.fit_steps, lr=fit_lr, seed=req.seed)
        return fit(target, parse_topology(req.topology), dataset.spectral, budget).params

    @app.get("/shapes")
    def list_shapes():
        return [
            {
                "id": meta["id"],
                "n_vertices": len(meta["shape"]["vertices"]),
                "vertices": meta["shape"]["vertices"],
            }
            for meta in dataset.manifest["shapes"]
        ]

    @app.get("/shapes/{shape_id}/occupancy")
    def shape_occupancy(shape_id: int):
        get_shape_or_404(shape_id)
        grid = dataset.occupancy(shape_id)
        return {
            "id": shape_id,
            "resolution": grid.resolution,
            "cells": grid.cells.astype(int).tolist(),
            "vertices": dataset.manifest["shapes"][shape_id]["shape"]["vertices"],
        }

    @app.get("/meta")
    def meta():
        sources = ["oracle", "fit"] + (["predictor"] if state.weights else [])
        return {
            "material_ranges": {k: list(v) for k, v in dataset.material_ranges.items()},
            "sample_rate": dataset.spectral.sample_rate,
            "n_samples": dataset.spectral.n_samples,
            "sources": sources,
            "topology": list(state.weights.config.topology) if state.weights else [32, 2],
            "n_shapes": len(dataset.manifest["shapes"]),
        }

    @app.post("/synthesize", response_model=Union[SectionsResponse, OracleResponse])
    def synthesize(req: SynthesizeRequest):
        validate_request(req)
        fs = dataset.spectral.sample_rate
        if req.source == "oracle":
            model = state.modal(req.shape_id, req.material.to_material())
            try:
                gains = modal_gains(model, np.asarray(req.position))
            except OutOfDomainError as exc:
                raise HTTPException(422, detail=str(exc))
            return OracleResponse(
                source="oracle",
                modal=ModalData(
                    freqs_hz=(model.omegas / (2 * np.pi)).tolist(),
                    sigmas=model.sigmas.tolist(),
                    gains=gains.tolist(),
                ),
                sample_rate=fs,
            )
        params = synthesize_params(req)
        return SectionsResponse(
            source=req.source,
            sections=[[float(c) for c in row] for row in realize_coefficients(params)],
            L=params.L,
            M=params.M,
            sample_rate=fs,
        )

    @app.post("/render")
    def render(req: RenderRequest):
        validate_request(req)
        cfg = dataset.spectral
        if isinstance(req.excitation, ExcitationSamples):
            raw = base64.b64decode(req.excitation.samples_b64)
            samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            if samples.size == 0 or samples.size > 10 * cfg.n_samples:
                raise HTTPException(422, detail="excitation length out of range")
            if not np.all(np.isfinite(samples)):
                raise HTTPException(422, detail="excitation contains non-finite samples")
            excitation = AudioBuffer(samples, cfg.sample_rate)
        else:
            excitation = None  # impulse
        if req.source == "oracle":
            if excitation is not None:
                raise HTTPException(
                    422, detail="oracle rendering supports the impulse excitation only"
                )
            model = state.modal(req.shape_id, req.material.to_material())
            try:
                gains = modal_gains(model, np.asarray(req.position))
            except OutOfDomainError as exc:
                raise HTTPException(422, detail=str(exc))
            buf = render_ir(model, gains, cfg)
        else:
            params = synthesize_params(req)
            buf = render_recursive(params, excitation or unit_impulse(cfg))
        payload = io.BytesIO()
        write_wav(payload, buf)
        return Response(content=payload.getvalue(), media_type="audio/wav")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
