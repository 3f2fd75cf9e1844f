"""Dataset generation and persistence.

Pipeline per sample: random convex shape -> Delaunay mesh -> FEM modes ->
unit-impulse gains at a random mesh vertex -> oracle render -> mel spectrum.
Everything is seeded hierarchically so rebuilds are byte-identical.

Container layout in a dataset directory:
  manifest.json   counts, configs, shapes (with meshes), per-sample index
  grids.bin       one 512-byte bit-packed occupancy blob per shape
  modal.bin       per (shape, material): JSON header + omegas/sigmas/shapes arrays
  mel.bin         per sample: target mel spectrum array
Numeric arrays use the MRDB record framing (magic, version, dtype, rank, dims).
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .elastodynamics import MATERIAL_RANGES, Material, ModalModel, assemble, modal_gains, solve_modes
from .errors import InvalidArgumentError, ModalbenchError
from .geometry import ConvexShape, OccupancyGrid, TriMesh, gen_convex_shape, mesh_from_dict, mesh_to_dict, rasterize, shape_from_dict, shape_to_dict, triangulate
from .modal_render import render_ir, write_wav
from .spectral import DESK_SPECTRAL, SpectralConfig, dft_mag, mel_project

MANIFEST_VERSION = 1

_MRDB_MAGIC = b"MRDB"
_MRDB_VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4"), 3: np.dtype("u1")}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


def write_array(f, arr: np.ndarray) -> tuple[int, int]:
    """Append one MRDB record; returns (offset, length) in bytes."""
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise InvalidArgumentError(f"unsupported dtype {arr.dtype}")
    offset = f.tell()
    header = _MRDB_MAGIC + struct.pack(
        "<HBB", _MRDB_VERSION, _DTYPE_CODES[dtype], arr.ndim
    ) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    f.write(header)
    f.write(arr.astype(dtype, copy=False).tobytes())
    return offset, f.tell() - offset


def read_array(f, offset: int) -> np.ndarray:
    f.seek(offset)
    magic = f.read(4)
    if magic != _MRDB_MAGIC:
        raise InvalidArgumentError(f"bad record magic {magic!r} at offset {offset}")
    version, dtype_code, rank = struct.unpack("<HBB", f.read(4))
    if version != _MRDB_VERSION:
        raise InvalidArgumentError(f"unsupported record version {version}")
    dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
    dtype = _DTYPES[dtype_code]
    data = f.read(int(np.prod(dims)) * dtype.itemsize)
    return np.frombuffer(data, dtype=dtype).reshape(dims)


def sample_material(seed) -> Material:
    """Independent uniform draws from the dataset ranges.

    ``seed`` may be anything numpy's SeedSequence accepts (int or tuple).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draws = {name: rng.uniform(lo, hi) for name, (lo, hi) in MATERIAL_RANGES.items()}
    return Material(**draws)


def normalize_conditioning(material: Material, position) -> np.ndarray:
    """Affine-normalize (material, coords) to [0,1]^7, clamped."""
    vals = [
        (getattr(material, name) - lo) / (hi - lo)
        for name, (lo, hi) in MATERIAL_RANGES.items()
    ]
    vals += [position[0], position[1]]
    return np.clip(np.asarray(vals, dtype=np.float64), 0.0, 1.0)


@dataclass(frozen=True)
class DatasetConfig:
    shapes: int = 32
    materials_per_shape: int = 8
    positions_per_pair: int = 16
    seed: int = 0
    spectral: SpectralConfig = DESK_SPECTRAL
    n_boundary_range: tuple = (10, 25)
    tri_range: tuple = (120, 280)
    n_modes: int = 32
    export_wav: bool = False

    def __post_init__(self):
        if min(self.shapes, self.materials_per_shape, self.positions_per_pair) < 1:
            raise InvalidArgumentError("counts must be >= 1")

    def to_dict(self) -> dict:
        return {
            "shapes": self.shapes,
            "materials_per_shape": self.materials_per_shape,
            "positions_per_pair": self.positions_per_pair,
            "seed": self.seed,
            "spectral": self.spectral.to_dict(),
            "n_boundary_range": list(self.n_boundary_range),
            "tri_range": list(self.tri_range),
            "n_modes": self.n_modes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        d["spectral"] = SpectralConfig.from_dict(d["spectral"])
        d["n_boundary_range"] = tuple(d["n_boundary_range"])
        d["tri_range"] = tuple(d["tri_range"])
        return cls(**d)


def build(cfg: DatasetConfig, out_dir) -> "Dataset":
    """Generate and persist a dataset; FEM failures are skipped and logged."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spectral = cfg.spectral
    shapes_meta, modal_index, samples, skipped = [], [], [], []

    grids_f = open(out / "grids.bin", "wb")
    modal_f = open(out / "modal.bin", "wb")
    mel_f = open(out / "mel.bin", "wb")
    wav_dir = out / "wav"
    if cfg.export_wav:
        wav_dir.mkdir(exist_ok=True)
    try:
        for s in range(cfg.shapes):
            rng_s = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, s)))
            n_boundary = int(rng_s.integers(cfg.n_boundary_range[0], cfg.n_boundary_range[1] + 1))
            shape_seed = int(rng_s.integers(0, 2**31))
            shape = gen_convex_shape(n_boundary, shape_seed)
            target_tris = int(rng_s.integers(cfg.tri_range[0], cfg.tri_range[1] + 1))
            mesh = triangulate(shape, target_tris, int(rng_s.integers(0, 2**31)))
            grid_offset, _ = write_array(grids_f, np.frombuffer(rasterize(shape).pack(), dtype=np.uint8))
            shapes_meta.append(
                {
                    "id": s,
                    "shape": shape_to_dict(shape, seed=shape_seed, n_boundary=n_boundary),
                    "mesh": mesh_to_dict(mesh),
                    "grid_offset": grid_offset,
                }
            )
            for r in range(cfg.materials_per_shape):
                material = sample_material((cfg.seed, 1, s, r))
                try:
                    sys = assemble(mesh, material)
                    model = solve_modes(sys, material, mesh=mesh, n_modes=cfg.n_modes)
                except ModalbenchError as exc:
                    skipped.append({"shape_id": s, "material_id": r, "reason": str(exc)})
                    continue
                modal_offset = _write_modal(modal_f, model)
                modal_index.append(
                    {
                        "shape_id": s,
                        "material_id": r,
                        "material": material.to_dict(),
                        "offset": modal_offset,
                    }
                )
                rng_p = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2, s, r)))
                n_v = mesh.n_vertices
                count = cfg.positions_per_pair
                verts = rng_p.choice(n_v, size=count, replace=count > n_v)
                for p, v_idx in enumerate(map(int, verts)):
                    position = mesh.V[v_idx]
                    gains = modal_gains(model, position)
                    buf = render_ir(model, gains, spectral)
                    x_mel = mel_project(dft_mag(buf.samples, spectral), spectral)
                    mel_offset, _ = write_array(mel_f, x_mel)
                    if cfg.export_wav:
                        write_wav(wav_dir / f"s{s:03d}_m{r:02d}_p{p:02d}.wav", buf)
                    samples.append(
                        {
                            "shape_id": s,
                            "material_id": r,
                            "position_id": p,
                            "vertex_index": v_idx,
                            "position": [float(position[0]), float(position[1])],
                            "cond": normalize_conditioning(material, position).tolist(),
                            "mel_offset": mel_offset,
                        }
                    )
    finally:
        grids_f.close()
        modal_f.close()
        mel_f.close()

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "material_ranges": {k: list(v) for k, v in MATERIAL_RANGES.items()},
        "counts": {
            "shapes": cfg.shapes,
            "materials_per_shape": cfg.materials_per_shape,
            "positions_per_pair": cfg.positions_per_pair,
            "samples": len(samples),
            "skipped": len(skipped),
        },
        "shapes": shapes_meta,
        "modal_records": modal_index,
        "samples": samples,
        "skipped": skipped,
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, sort_keys=True, separators=(",", ":"))
    if skipped:
        warnings.warn(f"{len(skipped)} (shape, material) pairs skipped", stacklevel=2)
    return Dataset(out)


def _write_modal(f, model: ModalModel) -> int:
    offset = f.tell()
    header = json.dumps(
        {
            "n_modes": model.n_modes,
            "n_vertices": model.mesh.n_vertices,
            "material": model.material.to_dict(),
            "dof_order": "interleaved-xy",
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    f.write(struct.pack("<I", len(header)))
    f.write(header)
    write_array(f, model.omegas)
    write_array(f, model.sigmas)
    write_array(f, model.shapes)
    return offset


class Dataset:
    """Read-side view over a dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        with open(self.root / "manifest.json") as f:
            self.manifest = json.load(f)
        if self.manifest.get("version") != MANIFEST_VERSION:
            raise InvalidArgumentError(f"unsupported manifest version {self.manifest.get('version')}")
        self.config = DatasetConfig.from_dict(self.manifest["config"])
        self.spectral = self.config.spectral
        self._modal_by_key = {
            (rec["shape_id"], rec["material_id"]): rec for rec in self.manifest["modal_records"]
        }

    @property
    def samples(self) -> list:
        return self.manifest["samples"]

    @property
    def material_ranges(self) -> dict:
        return {k: tuple(v) for k, v in self.manifest["material_ranges"].items()}

    def shape(self, shape_id: int) -> ConvexShape:
        return shape_from_dict(self.manifest["shapes"][shape_id]["shape"])

    def mesh(self, shape_id: int) -> TriMesh:
        return mesh_from_dict(self.manifest["shapes"][shape_id]["mesh"])

    def occupancy(self, shape_id: int) -> OccupancyGrid:
        with open(self.root / "grids.bin", "rb") as f:
            packed = read_array(f, self.manifest["shapes"][shape_id]["grid_offset"])
        return OccupancyGrid.unpack(packed.tobytes())

    def modal(self, shape_id: int, material_id: int) -> ModalModel:
        rec = self._modal_by_key[(shape_id, material_id)]
        with open(self.root / "modal.bin", "rb") as f:
            f.seek(rec["offset"])
            (hlen,) = struct.unpack("<I", f.read(4))
            header = json.loads(f.read(hlen))
            pos = f.tell()
            omegas = read_array(f, pos)
            pos = f.tell()
            sigmas = read_array(f, pos)
            pos = f.tell()
            shapes = read_array(f, pos)
        material = Material.from_dict(header["material"])
        return ModalModel(omegas.copy(), sigmas.copy(), shapes.copy(), self.mesh(shape_id), material)

    def mel_target(self, sample: dict) -> np.ndarray:
        with open(self.root / "mel.bin", "rb") as f:
            return read_array(f, sample["mel_offset"]).copy()

    def load_training_arrays(self):
        """Dense arrays for training: grids per shape, cond/mel/shape-id per sample."""
        n_shapes = len(self.manifest["shapes"])
        grids = np.stack(
            [self.occupancy(i).cells.astype(np.float64) for i in range(n_shapes)]
        )
        samples = self.samples
        conds = np.array([s["cond"] for s in samples])
        shape_ids = np.array([s["shape_id"] for s in samples], dtype=np.int64)
        with open(self.root / "mel.bin", "rb") as f:
            mels = np.stack([read_array(f, s["mel_offset"]) for s in samples])
        return grids, conds, mels, shape_ids
