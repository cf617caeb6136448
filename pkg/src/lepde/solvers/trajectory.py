"""Trajectory container shared by every solver, plus strided downsampling."""

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class Trajectory:
    """A discretized PDE solution.

    states is time-major, channel-second: shape [n_t, C, *spatial], float32.
    params holds the static system parameter (scenario coefficients,
    viscosity, or boundary geometry). extras carries solver side outputs,
    e.g. per-frame outlet exit tallies for the smoke box.
    """

    states: np.ndarray
    dt: float
    grid: Any
    params: Any
    seed: int
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.float32)
        if s.ndim < 3:
            raise ValueError("states must be [n_t, C, spatial...]")
        if s.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 frames")
        if not np.isfinite(s).all():
            raise ValueError("trajectory contains non-finite values")
        self.states = s

    @property
    def n_t(self) -> int:
        return self.states.shape[0]

    @property
    def n_channels(self) -> int:
        return self.states.shape[1]

    @property
    def spatial_shape(self) -> tuple:
        return self.states.shape[2:]


def downsample_trajectory(traj: Trajectory, t_factor: int, x_factor: int) -> Trajectory:
    """Strided subsampling in time and space; dt and the grid are rescaled.

    Both factors must divide the respective dimensions exactly.
    """
    if t_factor < 1 or x_factor < 1:
        raise ValueError("factors must be >= 1")
    n_t = traj.states.shape[0]
    if n_t % t_factor != 0:
        raise ValueError(f"t_factor {t_factor} does not divide n_t={n_t}")
    for extent in traj.spatial_shape:
        if extent % x_factor != 0:
            raise ValueError(f"x_factor {x_factor} does not divide spatial extent {extent}")

    idx = (slice(None, None, t_factor), slice(None)) + (slice(None, None, x_factor),) * len(traj.spatial_shape)
    states = traj.states[idx].copy()

    grid = traj.grid
    if x_factor > 1 and grid is not None:
        if hasattr(grid, "n_x"):
            grid = type(grid)(n_x=grid.n_x // x_factor, length=grid.length, periodic=grid.periodic)
        elif hasattr(grid, "n"):
            grid = type(grid)(n=grid.n // x_factor, length=grid.length, periodic=grid.periodic)

    return Trajectory(
        states=states,
        dt=traj.dt * t_factor,
        grid=grid,
        params=traj.params,
        seed=traj.seed,
        extras=dict(traj.extras),
    )
