import numpy as np
import pytest

from modalbench.dataset import DatasetConfig, build
from modalbench.elastodynamics import Material
from modalbench.geometry import ConvexShape, TriMesh, gen_convex_shape, triangulate
from modalbench.predictor import PredictorConfig, init_weights, save_checkpoint
from modalbench.spectral import SpectralConfig


@pytest.fixture(scope="session")
def shared_dataset(tmp_path_factory):
    """Small dataset reused by evaluation/service/cli tests."""
    cfg = DatasetConfig(
        shapes=4,
        materials_per_shape=2,
        positions_per_pair=4,
        seed=17,
        spectral=SpectralConfig(n_samples=2048, n_mels=32),
        tri_range=(40, 80),
        n_modes=8,
    )
    return build(cfg, tmp_path_factory.mktemp("shared_ds"))


@pytest.fixture(scope="session")
def shared_checkpoint(shared_dataset, tmp_path_factory):
    """Untrained predictor checkpoint matching the shared dataset's config."""
    weights = init_weights(
        PredictorConfig(topology=(8, 2), sample_rate=shared_dataset.spectral.sample_rate),
        seed=5,
    )
    path = tmp_path_factory.mktemp("ckpt") / "predictor.bin"
    save_checkpoint(path, weights)
    return path


@pytest.fixture
def unit_square() -> ConvexShape:
    return ConvexShape(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


@pytest.fixture
def small_shape() -> ConvexShape:
    return gen_convex_shape(10, seed=7)


@pytest.fixture
def small_mesh(small_shape) -> TriMesh:
    return triangulate(small_shape, 60, seed=3)


@pytest.fixture
def steel_like() -> Material:
    return Material(rho=7800.0, youngs=2.0e10, poisson=0.3, alpha=4.0, beta=8e-7)


def make_rect_mesh(nx: int, ny: int, x0=0.2, x1=0.8, y0=0.2, y1=0.56) -> TriMesh:
    """Structured rectangle mesh, mirror-symmetric about x = (x0+x1)/2.

    nx, ny count cells per side; nx must be even so a vertex column sits on
    the symmetry axis. Left-half cells split with one diagonal, right-half
    with the mirrored one.
    """
    assert nx % 2 == 0
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    V = np.array([[x, y] for y in ys for x in xs])
    idx = lambda i, j: j * (nx + 1) + i
    F = []
    for j in range(ny):
        for i in range(nx):
            a, b = idx(i, j), idx(i + 1, j)
            c, d = idx(i + 1, j + 1), idx(i, j + 1)
            if i < nx // 2:
                F += [[a, b, c], [a, c, d]]
            else:
                F += [[a, b, d], [b, c, d]]
    return TriMesh(V, np.array(F))
