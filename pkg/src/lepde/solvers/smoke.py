"""Stable-fluids style smoke box with one inlet and two outlet voids.

Square n-by-n collocated grid in cell units (dx = 1). Walls of fixed
thickness line all four sides; an inlet void on the left wall blows in at
a prescribed speed, two outlet voids on the right wall let flow leave
through a zero-gradient outflow condition. Velocity is advected
semi-Lagrangian and projected with a fixed number of Jacobi iterations;
smoke is advected with a conservative first-order upwind flux so the mass
budget (interior + exited) closes to rounding.

Smoke crossing an outlet face is removed from the domain, tallied per
outlet and per frame, and displayed in that outlet's void cells of the
stored frame so downstream observables can read per-frame exit amounts
off the state itself. Trajectory channels are (smoke, v_x, v_y).
"""

from dataclasses import dataclass, replace

import numpy as np

from ..errors import BoundaryGeometryError, SolverInstabilityError
from .trajectory import Trajectory

WALL_THICKNESS = 2
JACOBI_ITERS = 40
CFL = 0.4
DEFAULT_INFLOW = 1.0


@dataclass(frozen=True)
class BoundaryParams:
    """Continuous y-positions of the inlet and outlet void centers.

    The inlet sits on the left wall, the lower/upper outlets on the right
    wall. `width` is the void extent in cells; `n` the grid side. The two
    outlet voids must stay in their own half of the wall (lower below the
    midline, upper above) and every void strictly inside the wall run.
    """

    inlet_y: float
    outlet_lo_y: float
    outlet_hi_y: float
    n: int = 32
    width: float | None = None
    wall: int = WALL_THICKNESS

    def __post_init__(self):
        if self.width is None:
            object.__setattr__(self, "width", self.n / 8.0)

    def as_vector(self) -> np.ndarray:
        return np.array([self.inlet_y, self.outlet_lo_y, self.outlet_hi_y], dtype=np.float64)

    @staticmethod
    def from_vector(v, n: int = 32, width: float | None = None) -> "BoundaryParams":
        a, b, c = (float(x) for x in v)
        return BoundaryParams(a, b, c, n=n, width=width)

    def feasible_box(self):
        """Per-coordinate (lo, hi) bounds keeping voids inside their wall
        segments, off the corners, and the two outlets non-overlapping."""
        half = self.width / 2.0
        margin = self.wall + half
        mid = self.n / 2.0
        return (
            (margin, self.n - margin),
            (margin, mid - half - 0.5),
            (mid + half + 0.5, self.n - margin),
        )

    def clamp(self) -> "BoundaryParams":
        box = self.feasible_box()
        vals = [min(max(v, lo), hi) for v, (lo, hi) in zip(self.as_vector(), box)]
        return replace(self, inlet_y=vals[0], outlet_lo_y=vals[1], outlet_hi_y=vals[2])

    def validate(self):
        half = self.width / 2.0
        for name, y in (("inlet", self.inlet_y), ("outlet_lo", self.outlet_lo_y), ("outlet_hi", self.outlet_hi_y)):
            if y - half < self.wall - 0.5 or y + half > self.n - self.wall + 0.5:
                raise BoundaryGeometryError(f"{name} void [{y - half:.2f}, {y + half:.2f}] leaves the wall run")
        if self.outlet_lo_y + half >= self.outlet_hi_y - half:
            raise BoundaryGeometryError("outlet voids overlap")

    def void_rows(self, y: float) -> np.ndarray:
        """Integer rows strictly inside the void interval (sharp-mask semantics)."""
        half = self.width / 2.0
        rows = np.arange(self.n)
        return rows[(rows > y - half) & (rows < y + half)]


def cell_categories(p: BoundaryParams, outlets_open: bool = True):
    """Return boolean masks (solid, inlet, outlet_lo, outlet_hi), [y, x]."""
    n, t = p.n, p.wall
    wall = np.zeros((n, n), dtype=bool)
    wall[:t, :] = wall[-t:, :] = True
    wall[:, :t] = wall[:, -t:] = True

    inlet = np.zeros_like(wall)
    inlet[p.void_rows(p.inlet_y), :t] = True
    out_lo = np.zeros_like(wall)
    out_hi = np.zeros_like(wall)
    if outlets_open:
        out_lo[p.void_rows(p.outlet_lo_y), n - t:] = True
        out_hi[p.void_rows(p.outlet_hi_y), n - t:] = True

    solid = wall & ~inlet & ~out_lo & ~out_hi
    return solid, inlet, out_lo, out_hi


def gaussian_smoke(n: int, center, sigma: float = 2.0, amplitude: float = 1.0) -> np.ndarray:
    """Gaussian smoke blob centered at (y, x), zeroed inside the walls."""
    cy, cx = center
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    blob = amplitude * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
    t = WALL_THICKNESS
    blob[:t, :] = blob[-t:, :] = 0.0
    blob[:, :t] = blob[:, -t:] = 0.0
    return blob


def _bilinear(field, ys, xs):
    n = field.shape[0]
    ys = np.clip(ys, 0.0, n - 1.0)
    xs = np.clip(xs, 0.0, n - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, n - 1)
    x1 = np.minimum(x0 + 1, n - 1)
    fy = ys - y0
    fx = xs - x0
    return (
        field[y0, x0] * (1 - fy) * (1 - fx)
        + field[y0, x1] * (1 - fy) * fx
        + field[y1, x0] * fy * (1 - fx)
        + field[y1, x1] * fy * fx
    )


class _SmokeBox:
    def __init__(self, p: BoundaryParams, inflow: float):
        p.validate()
        self.p = p
        self.n = p.n
        self.inflow = inflow
        self.solid, self.inlet, self.out_lo, self.out_hi = cell_categories(p)
        self.voids = self.inlet | self.out_lo | self.out_hi
        self.interior = ~self.solid & ~self.voids
        self.outlet_any = self.out_lo | self.out_hi
        yy, xx = np.meshgrid(np.arange(self.n, dtype=float), np.arange(self.n, dtype=float), indexing="ij")
        self.yy, self.xx = yy, xx
        self._build_face_masks()
        self._build_pressure_masks()

    def _build_face_masks(self):
        # x-faces between columns ix and ix+1; open iff one side interior and
        # the other interior or outlet; inlet faces pass velocity inward only.
        left_int = self.interior[:, :-1]
        right_int = self.interior[:, 1:]
        left_out = self.outlet_any[:, :-1]
        right_out = self.outlet_any[:, 1:]
        self.fx_open = (left_int & (right_int | right_out)) | (right_int & left_out)
        self.fx_inlet = self.inlet[:, :-1] & right_int  # inlet on the left of the face
        bot_int = self.interior[:-1, :]
        top_int = self.interior[1:, :]
        bot_out = self.outlet_any[:-1, :]
        top_out = self.outlet_any[1:, :]
        self.fy_open = (bot_int & (top_int | top_out)) | (top_int & bot_out)
        # faces whose right side is an outlet void: positive flux exits there
        self.fx_exit_lo = self.interior[:, :-1] & self.out_lo[:, 1:]
        self.fx_exit_hi = self.interior[:, :-1] & self.out_hi[:, 1:]

    def _build_pressure_masks(self):
        # Neighbor handling for the Jacobi solve: interior neighbors are read,
        # solid/inlet neighbors mirror the center (Neumann), outlet neighbors
        # are held at p = 0 (Dirichlet, open outflow).
        self.nb_interior = {}
        self.nb_neumann = {}
        shifts = {"E": (0, 1), "W": (0, -1), "N": (1, 0), "S": (-1, 0)}
        neumann = self.solid | self.inlet
        for key, (dy, dx) in shifts.items():
            # _shift(a, -dy, -dx)[y, x] = a[y + dy, x + dx], the neighbor value
            self.nb_interior[key] = self._shift(self.interior, -dy, -dx) & self.interior
            self.nb_neumann[key] = self._shift(neumann, -dy, -dx) & self.interior
        self.shifts = shifts

    def _neighbor(self, field, key):
        dy, dx = self.shifts[key]
        return self._shift(field, -dy, -dx)

    @staticmethod
    def _shift(a, dy, dx):
        """Shift with zero fill; result[i] = a[i - (dy, dx)]."""
        out = np.zeros_like(a)
        ys = slice(max(dy, 0), a.shape[0] + min(dy, 0))
        xs = slice(max(dx, 0), a.shape[1] + min(dx, 0))
        ys_src = slice(max(-dy, 0), a.shape[0] + min(-dy, 0))
        xs_src = slice(max(-dx, 0), a.shape[1] + min(-dx, 0))
        out[ys, xs] = a[ys_src, xs_src]
        return out

    def apply_velocity_bc(self, vx, vy):
        vx[self.solid] = 0.0
        vy[self.solid] = 0.0
        vx[self.inlet] = self.inflow
        vy[self.inlet] = 0.0
        t = self.p.wall
        edge = self.n - t - 1  # last interior column feeding the outlets
        for mask in (self.out_lo, self.out_hi):
            rows = np.where(mask[:, self.n - t])[0]
            for col in range(self.n - t, self.n):
                vx[rows, col] = vx[rows, edge]
                vy[rows, col] = vy[rows, edge]

    def advect_velocity(self, vx, vy, dt):
        ys = self.yy - dt * vy
        xs = self.xx - dt * vx
        new_vx = _bilinear(vx, ys, xs)
        new_vy = _bilinear(vy, ys, xs)
        vx[self.interior] = new_vx[self.interior]
        vy[self.interior] = new_vy[self.interior]

    def project(self, vx, vy, pressure):
        div = np.zeros_like(vx)
        div[self.interior] = 0.5 * (
            (self._neighbor(vx, "E") - self._neighbor(vx, "W"))
            + (self._neighbor(vy, "N") - self._neighbor(vy, "S"))
        )[self.interior]
        p = pressure
        for _ in range(JACOBI_ITERS):
            total = np.zeros_like(p)
            for key in self.shifts:
                total += np.where(self.nb_interior[key], self._neighbor(p, key), 0.0)
                total += np.where(self.nb_neumann[key], p, 0.0)
            p = np.where(self.interior, 0.25 * (total - div), 0.0)

        def p_at(key):
            return np.where(self.nb_interior[key], self._neighbor(p, key), 0.0) + np.where(
                self.nb_neumann[key], p, 0.0
            )

        grad_x = np.zeros_like(p)
        grad_y = np.zeros_like(p)
        grad_x[self.interior] = 0.5 * (p_at("E") - p_at("W"))[self.interior]
        grad_y[self.interior] = 0.5 * (p_at("N") - p_at("S"))[self.interior]
        vx -= grad_x
        vy -= grad_y
        return p

    def advect_smoke(self, s, vx, vy, dt):
        """Conservative upwind update; returns (exited_lo, exited_hi, clamped)."""
        u_face = 0.5 * (vx[:, :-1] + vx[:, 1:])
        u_face = np.where(self.fx_inlet, np.maximum(u_face, 0.0), u_face)
        u_face = np.where(self.fx_open | self.fx_inlet, u_face, 0.0)
        s_up_x = np.where(u_face > 0.0, s[:, :-1], s[:, 1:])
        flux_x = u_face * s_up_x

        v_face = 0.5 * (vy[:-1, :] + vy[1:, :])
        v_face = np.where(self.fy_open, v_face, 0.0)
        s_up_y = np.where(v_face > 0.0, s[:-1, :], s[1:, :])
        flux_y = v_face * s_up_y

        ds = np.zeros_like(s)
        ds[:, :-1] -= flux_x
        ds[:, 1:] += flux_x
        ds[:-1, :] -= flux_y
        ds[1:, :] += flux_y

        exited_lo = dt * float(flux_x[self.fx_exit_lo].sum())
        exited_hi = dt * float(flux_x[self.fx_exit_hi].sum())

        s_new = s + dt * ds
        s_new[~self.interior] = 0.0
        clamped = float(np.minimum(s_new, 0.0).sum())
        np.maximum(s_new, 0.0, out=s_new)
        return s_new, exited_lo, exited_hi, abs(clamped)


def simulate_smoke2d(
    boundary: BoundaryParams,
    smoke_init: np.ndarray,
    inflow_speed: float = DEFAULT_INFLOW,
    n_t: int = 100,
    dt: float = 1.0,
    seed: int = 0,
) -> Trajectory:
    """Advect smoke through the box and record (smoke, v_x, v_y) frames.

    extras carries 'exited' as an [n_t, 2] per-frame tally (lower, upper
    outlet) plus the cumulative totals and the negative-smoke clamp counter.
    """
    box = _SmokeBox(boundary, inflow_speed)
    n = boundary.n
    s = np.array(smoke_init, dtype=np.float64)
    if s.shape != (n, n):
        raise ValueError(f"smoke_init shape {s.shape} does not match grid ({n}, {n})")
    if np.any(s < 0):
        raise ValueError("smoke_init must be non-negative")
    s[~box.interior] = 0.0

    vx = np.zeros((n, n))
    vy = np.zeros((n, n))
    pressure = np.zeros((n, n))
    frames = np.zeros((n_t, 3, n, n), dtype=np.float32)
    exited = np.zeros((n_t, 2))
    clamp_total = 0.0

    box.apply_velocity_bc(vx, vy)
    frames[0] = np.stack([s, vx, vy])
    for k in range(1, n_t):
        speed = max(float(np.max(np.abs(vx) + np.abs(vy))), inflow_speed, 1e-8)
        n_sub = max(1, int(np.ceil(1.25 * dt * speed / CFL)))
        h = dt / n_sub
        frame_lo = frame_hi = 0.0
        for _ in range(n_sub):
            box.apply_velocity_bc(vx, vy)
            box.advect_velocity(vx, vy, h)
            box.apply_velocity_bc(vx, vy)
            pressure = box.project(vx, vy, pressure)
            box.apply_velocity_bc(vx, vy)
            s, ex_lo, ex_hi, clamped = box.advect_smoke(s, vx, vy, h)
            frame_lo += ex_lo
            frame_hi += ex_hi
            clamp_total += clamped
        if not (np.isfinite(s).all() and np.isfinite(vx).all() and np.isfinite(vy).all()):
            raise SolverInstabilityError(f"non-finite state at frame {k} (internal step {h:.3e})")
        exited[k] = (frame_lo, frame_hi)
        display = s.copy()
        for mask, amount in ((box.out_lo, frame_lo), (box.out_hi, frame_hi)):
            cells = int(mask.sum())
            if cells:
                display[mask] = amount / cells
        frames[k] = np.stack([display, vx, vy])

    return Trajectory(
        states=frames,
        dt=dt,
        grid=None,
        params=boundary,
        seed=seed,
        extras={
            "exited": exited,
            "exited_total": exited.sum(axis=0),
            "smoke_clamped": clamp_total,
        },
    )
