"""Uniform periodic grids for the 1D and 2D solver families."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1D grid of cell-centered values on a periodic interval."""

    n_x: int
    length: float = 16.0
    periodic: bool = True

    def __post_init__(self):
        if self.n_x < 4:
            raise ValueError(f"n_x must be >= 4, got {self.n_x}")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n_x

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.dx


@dataclass(frozen=True)
class Grid2D:
    """Square n-by-n grid, cell-centered, on a periodic torus of side `length`."""

    n: int
    length: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"n must be >= 8, got {self.n}")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    def cell_centers(self):
        """Return (x, y) meshgrids of cell-center coordinates, indexed [y, x]."""
        c = (np.arange(self.n) + 0.5) * self.dx
        return np.meshgrid(c, c, indexing="xy")
