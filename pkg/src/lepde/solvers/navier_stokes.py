"""Pseudo-spectral solver for 2D incompressible Navier-Stokes in vorticity
form on the periodic unit torus:

    w_t + u . grad(w) = nu * lap(w) + f(x),   div(u) = 0.

Velocity is recovered from vorticity through the streamfunction, so the
reconstructed velocity is divergence-free by construction. The nonlinear
term is dealiased with the 2/3 rule. Time stepping is integrating-factor
RK4: diffusion is integrated exactly per substep, advection+forcing with
classic RK4 (which does not amplify the purely advective spectrum), so
enstrophy cannot grow when f = 0.
"""

import logging

import numpy as np

from ..errors import SolverInstabilityError
from .grids import Grid2D
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

CFL = 0.5
MEAN_WARN_THRESHOLD = 1e-10


class _Spectral2D:
    """Precomputed wavenumbers, dealias mask, and helpers for one grid."""

    def __init__(self, grid: Grid2D):
        n = grid.n
        k1d = 2.0 * np.pi / grid.length * np.fft.fftfreq(n, d=1.0 / n)
        self.kx, self.ky = np.meshgrid(k1d, k1d, indexing="xy")
        self.k_sq = self.kx**2 + self.ky**2
        self.k_sq_inv = np.where(self.k_sq > 0, 1.0 / np.where(self.k_sq > 0, self.k_sq, 1.0), 0.0)
        k_max = np.max(np.abs(k1d))
        self.dealias = (np.abs(self.kx) <= (2.0 / 3.0) * k_max) & (np.abs(self.ky) <= (2.0 / 3.0) * k_max)
        self.dx = grid.dx

    def velocity(self, w_hat):
        """Streamfunction velocity: psi solves lap(psi) = -w, u = (psi_y, -psi_x)."""
        psi_hat = w_hat * self.k_sq_inv
        u = np.real(np.fft.ifft2(1j * self.ky * psi_hat))
        v = np.real(np.fft.ifft2(-1j * self.kx * psi_hat))
        return u, v

    def advection_hat(self, w_hat):
        u, v = self.velocity(w_hat)
        wx = np.real(np.fft.ifft2(1j * self.kx * w_hat))
        wy = np.real(np.fft.ifft2(1j * self.ky * w_hat))
        nonlin = -(u * wx + v * wy)
        return np.fft.fft2(nonlin) * self.dealias, u, v


def velocity_from_vorticity(w: np.ndarray, grid: Grid2D):
    """Return (u, v) reconstructed spectrally from a vorticity field."""
    sp = _Spectral2D(grid)
    return sp.velocity(np.fft.fft2(np.asarray(w, dtype=np.float64)))


def default_forcing_field(grid: Grid2D) -> np.ndarray:
    """Fixed low-wavenumber trigonometric forcing, zero mean."""
    x, y = grid.cell_centers()
    s = 2.0 * np.pi * (x + y) / grid.length
    return 0.1 * (np.sin(s) + np.cos(s))


def sample_vorticity_grf(grid: Grid2D, rng: np.random.Generator, alpha: float = 2.5, tau: float = 7.0) -> np.ndarray:
    """Sample a smooth Gaussian random vorticity field with power spectrum
    proportional to (|k|^2 + tau^2)^(-alpha), normalized by tau^(alpha-1)."""
    n = grid.n
    sp = _Spectral2D(grid)
    noise = rng.standard_normal((n, n))
    coef = tau ** (alpha - 1.0) * (sp.k_sq + tau**2) ** (-alpha / 2.0)
    w_hat = np.fft.fft2(noise) * coef * n
    w_hat[0, 0] = 0.0
    return np.real(np.fft.ifft2(w_hat))


def simulate_ns2d(
    nu: float,
    grid: Grid2D,
    w0: np.ndarray,
    forcing_f: np.ndarray | None = None,
    n_t: int = 2,
    dt: float = 1.0,
    seed: int = 0,
) -> Trajectory:
    """Integrate vorticity and store n_t frames at interval dt.

    The mean of w0 (and of the forcing) is removed; a warning is logged
    if |mean(w0)| exceeds 1e-10. Substeps per frame follow the advective
    CFL on the current velocity.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    if not grid.periodic:
        raise ValueError("the spectral solver requires a periodic grid")
    if not np.isfinite(dt) or dt <= 0:
        raise ValueError("frame interval dt must be positive and finite")

    sp = _Spectral2D(grid)
    w = np.array(w0, dtype=np.float64)
    if w.shape != (grid.n, grid.n):
        raise ValueError(f"w0 shape {w.shape} does not match grid ({grid.n}, {grid.n})")

    mean = float(w.mean())
    if abs(mean) > MEAN_WARN_THRESHOLD:
        logger.warning("subtracting non-zero vorticity mean %.3e", mean)
    w = w - w.mean()

    if forcing_f is None:
        f_hat = np.zeros((grid.n, grid.n), dtype=complex)
    else:
        f = np.asarray(forcing_f, dtype=np.float64)
        f_hat = np.fft.fft2(f - f.mean())

    w_hat = np.fft.fft2(w)
    frames = np.empty((n_t, 1, grid.n, grid.n), dtype=np.float32)
    frames[0, 0] = w

    def nonlin(wh):
        adv_hat, u, v = sp.advection_hat(wh)
        return adv_hat + f_hat, u, v

    for k in range(1, n_t):
        n1, u, v = nonlin(w_hat)
        speed = max(float(np.max(np.abs(u))), float(np.max(np.abs(v))), 1e-8)
        n_sub = max(1, int(np.ceil(1.25 * dt * speed / (CFL * sp.dx))))
        h = dt / n_sub
        e_half = np.exp(-nu * sp.k_sq * h / 2.0)
        e_full = e_half * e_half
        for i in range(n_sub):
            if i > 0:
                n1, _, _ = nonlin(w_hat)
            a = e_half * (w_hat + 0.5 * h * n1)
            n2, _, _ = nonlin(a)
            b = e_half * w_hat + 0.5 * h * n2
            n3, _, _ = nonlin(b)
            c = e_full * w_hat + h * e_half * n3
            n4, _, _ = nonlin(c)
            w_hat = e_full * w_hat + (h / 6.0) * (e_full * n1 + 2.0 * e_half * (n2 + n3) + n4)
        w = np.real(np.fft.ifft2(w_hat))
        if not np.isfinite(w).all():
            raise SolverInstabilityError(f"non-finite vorticity at frame {k} (internal step {h:.3e})")
        frames[k, 0] = w

    return Trajectory(states=frames, dt=dt, grid=grid, params=float(nu), seed=seed)
