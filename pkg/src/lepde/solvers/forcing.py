"""Random trigonometric forcing for the 1D nonlinear PDE family.

The forcing is a superposition of J traveling sine modes,

    delta(t, x) = sum_j A_j * sin(omega_j * t + 2*pi*l_j*x/L + phi_j),

and doubles as the initial condition u(0, x) = delta(0, x).
"""

from dataclasses import dataclass

import numpy as np

AMPLITUDE_RANGE = (-0.5, 0.5)
OMEGA_RANGE = (-0.4, 0.4)
SPATIAL_MODES = (1, 2, 3)
DEFAULT_J = 5


@dataclass(frozen=True)
class ForcingSpec1D:
    """Coefficients of one sampled forcing; `terms` is a (J, 4) array of
    rows (A_j, omega_j, l_j, phi_j)."""

    terms: np.ndarray
    length: float = 16.0

    def __post_init__(self):
        t = np.asarray(self.terms, dtype=np.float64)
        if t.ndim != 2 or t.shape[1] != 4:
            raise ValueError("terms must have shape (J, 4)")
        object.__setattr__(self, "terms", t)

    @property
    def n_terms(self) -> int:
        return self.terms.shape[0]

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate delta(t, x) on an array of positions."""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for amp, omega, ell, phi in self.terms:
            out += amp * np.sin(omega * t + 2.0 * np.pi * ell * x / self.length + phi)
        return out


def sample_forcing(rng_seed: int, n_terms: int = DEFAULT_J, length: float = 16.0) -> ForcingSpec1D:
    """Draw a forcing spec with every coefficient uniform over its range.

    Deterministic given the seed.
    """
    rng = np.random.default_rng(rng_seed)
    amps = rng.uniform(*AMPLITUDE_RANGE, size=n_terms)
    omegas = rng.uniform(*OMEGA_RANGE, size=n_terms)
    ells = rng.choice(SPATIAL_MODES, size=n_terms).astype(np.float64)
    phis = rng.uniform(0.0, 2.0 * np.pi, size=n_terms)
    return ForcingSpec1D(terms=np.stack([amps, omegas, ells, phis], axis=1), length=length)


def constant_forcing(value: float, length: float = 16.0) -> ForcingSpec1D:
    """Forcing that is constant in x and t (single term, l=0, omega=0, phase pi/2)."""
    term = np.array([[value, 0.0, 0.0, np.pi / 2.0]])
    return ForcingSpec1D(terms=term, length=length)


def zero_forcing(length: float = 16.0) -> ForcingSpec1D:
    return ForcingSpec1D(terms=np.zeros((1, 4)), length=length)
