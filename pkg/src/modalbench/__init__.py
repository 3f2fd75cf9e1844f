"""Modal sound synthesis workbench.

2D elastic shapes -> FEM modal analysis -> ground-truth impulse responses,
plus differentiable IIR filterbank resonators fitted by gradient descent or
predicted by an amortized shape/material network. Exposed through a library
API, a CLI and an HTTP service.
"""

from .elastodynamics import MATERIAL_RANGES, Material, ModalModel, SystemMatrices, assemble, modal_gains, solve_modes
from .filterbank import (
    FilterBankParams,
    FrequencyGrid,
    FrequencyResponse,
    bank_response,
    bias_params,
    bin_grid,
    biquad_response,
    init_params,
    parse_topology,
    pole_activation,
    realize_coefficients,
    render_recursive,
)
from .geometry import (
    ConvexShape,
    OccupancyGrid,
    TriMesh,
    contains,
    gen_convex_shape,
    rasterize,
    triangulate,
)
from .modal_render import AudioBuffer, read_wav, render_ir, unit_impulse, write_wav
from .optim import FitBudget, FitResult, OptimizerState, adam_step, fit, loss_and_grad
from .spectral import DESK_SPECTRAL, SpectralConfig, dft_mag, loss, mel_matrix, mel_project

__version__ = "0.1.0"
