"""Ground-truth numerical solvers and trajectory generation."""

from .burgers import PDEParams1D, SCENARIO_RANGES, sample_params, simulate_burgers1d
from .forcing import ForcingSpec1D, constant_forcing, sample_forcing, zero_forcing
from .grids import Grid1D, Grid2D
from .navier_stokes import (
    default_forcing_field,
    sample_vorticity_grf,
    simulate_ns2d,
    velocity_from_vorticity,
)
from .smoke import BoundaryParams, cell_categories, gaussian_smoke, simulate_smoke2d
from .trajectory import Trajectory, downsample_trajectory

__all__ = [
    "BoundaryParams",
    "ForcingSpec1D",
    "Grid1D",
    "Grid2D",
    "PDEParams1D",
    "SCENARIO_RANGES",
    "Trajectory",
    "cell_categories",
    "constant_forcing",
    "default_forcing_field",
    "downsample_trajectory",
    "gaussian_smoke",
    "sample_forcing",
    "sample_params",
    "sample_vorticity_grf",
    "simulate_burgers1d",
    "simulate_ns2d",
    "simulate_smoke2d",
    "velocity_from_vorticity",
    "zero_forcing",
]
