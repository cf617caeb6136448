"""Differentiable boundary masks and gradient-based inverse design.

A boundary is a set of wall segments; each void segment carries continuous
edge positions (x1, x2) and is rendered with a sigmoid interpolation whose
temperature beta controls sharpness. The solid mask is the cell-wise
maximum over segment contributions, with void segments contributing
wall * (1 - CB). Everything is differentiable in (x1, x2), so a design
loss evaluated on decoded latent rollouts can be pushed back to the
boundary parameters; beta is annealed from soft to sharp across the
design iterations.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .data import NormStats, apply_normalization
from .errors import TrainingDivergedError
from .model import Model
from .solvers.smoke import BoundaryParams, cell_categories, gaussian_smoke, simulate_smoke2d

FRACTION_FLOOR = 1e-8


# -- sigmoid interpolation -----------------------------------------------------

def sigmoid_segment(i, x1, x2, beta):
    """Soft indicator of x1 < i < x2 along one axis.

    Outside the interval the argument is the signed distance to the nearer
    edge; inside it is the harmonic mean of the distances to both edges,
    so the value tends to 1 deep inside and to 0 far outside as beta -> 0.
    Branch boundaries sit exactly at i = x1 and i = x2 (value 1/2).
    """
    if float(beta) <= 0:
        raise ValueError("beta must be positive")
    i = torch.as_tensor(i, dtype=torch.float64)
    x1 = torch.as_tensor(x1, dtype=torch.float64)
    x2 = torch.as_tensor(x2, dtype=torch.float64)
    d1 = torch.abs(i - x1)
    d2 = torch.abs(i - x2)
    harmonic = 2.0 * d1 * d2 / torch.clamp(d1 + d2, min=1e-300)
    arg = torch.where(i <= x1, (i - x1) / beta,
                      torch.where(i >= x2, (x2 - i) / beta, harmonic / beta))
    return torch.sigmoid(arg)


@dataclass(frozen=True)
class SegmentSpec:
    """One wall strip. `orientation` gives the axis the segment runs along
    ("h": varies in x, "v": varies in y); `trans` is the (lo, hi) index
    range across the wall thickness, `span` the (lo, hi) range along it.
    Void segments carry edge positions (x1, x2) of the opening."""

    orientation: str
    trans: tuple
    span: tuple
    x1: float | torch.Tensor | None = None
    x2: float | torch.Tensor | None = None

    @property
    def is_void(self) -> bool:
        return self.x1 is not None

    def __post_init__(self):
        if self.orientation not in ("h", "v"):
            raise ValueError("orientation must be 'h' or 'v'")
        if self.is_void and self.x2 is None:
            raise ValueError("void segments need both edges")


@dataclass
class MaskField:
    values: torch.Tensor
    beta: float


def continuous_boundary_mask(segments, beta, grid_shape) -> MaskField:
    """Render segments to a [0,1] solid mask of the given shape ([y, x]).

    Solid segments contribute their wall indicator; void segments
    contribute wall * (1 - CB(coord | x1, x2, beta)); the mask is the
    cell-wise maximum over contributions.
    """
    ny, nx = grid_shape
    yy = torch.arange(ny, dtype=torch.float64).reshape(-1, 1).expand(ny, nx)
    xx = torch.arange(nx, dtype=torch.float64).reshape(1, -1).expand(ny, nx)
    mask = torch.zeros((ny, nx), dtype=torch.float64)
    for seg in segments:
        t_lo, t_hi = seg.trans
        s_lo, s_hi = seg.span
        run = xx if seg.orientation == "h" else yy
        across = yy if seg.orientation == "h" else xx
        inside = ((across >= t_lo) & (across < t_hi) & (run >= s_lo) & (run < s_hi)).to(torch.float64)
        if seg.is_void:
            contrib = inside * (1.0 - sigmoid_segment(run, seg.x1, seg.x2, beta))
        else:
            contrib = inside
        mask = torch.maximum(mask, contrib)
    return MaskField(values=mask, beta=float(beta))


@dataclass(frozen=True)
class AnnealSchedule:
    """Linear temperature ramp over the design iterations."""

    beta0: float = 0.1
    beta1: float = 0.05
    iters: int = 100

    def __post_init__(self):
        if not (self.beta0 >= self.beta1 > 0):
            raise ValueError("need beta0 >= beta1 > 0")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")

    def beta(self, iteration: int) -> float:
        if not 0 <= iteration < self.iters:
            raise ValueError(f"iteration {iteration} outside [0, {self.iters})")
        if self.iters == 1:
            return self.beta0
        frac = iteration / (self.iters - 1)
        return self.beta0 + (self.beta1 - self.beta0) * frac


def anneal_schedule(sched: AnnealSchedule, iteration: int) -> float:
    return sched.beta(iteration)


# -- the smoke-box boundary as segments ---------------------------------------

def box_segments(p_vec, n: int, width: float, wall: int = 2):
    """Segments for the box: solid top/bottom walls, a left wall with the
    inlet void, and the right wall split at the midline so each outlet
    void lives in its own segment (max-composition then keeps the two
    openings independent)."""
    inlet_y, out_lo_y, out_hi_y = p_vec[0], p_vec[1], p_vec[2]
    half = width / 2.0
    mid = n // 2
    return [
        SegmentSpec("h", trans=(0, wall), span=(0, n)),
        SegmentSpec("h", trans=(n - wall, n), span=(0, n)),
        SegmentSpec("v", trans=(0, wall), span=(0, n), x1=inlet_y - half, x2=inlet_y + half),
        SegmentSpec("v", trans=(n - wall, n), span=(0, mid), x1=out_lo_y - half, x2=out_lo_y + half),
        SegmentSpec("v", trans=(n - wall, n), span=(mid, n), x1=out_hi_y - half, x2=out_hi_y + half),
    ]


def box_mask(p_vec, n: int, width: float, beta: float, wall: int = 2) -> MaskField:
    return continuous_boundary_mask(box_segments(p_vec, n, width, wall), beta, (n, n))


def outlet_masks(p_vec, n: int, width: float, beta: float, wall: int = 2):
    """Soft indicators of the two outlet voids (ones on the openings)."""
    ny = nx = n
    yy = torch.arange(ny, dtype=torch.float64).reshape(-1, 1).expand(ny, nx)
    xx = torch.arange(nx, dtype=torch.float64).reshape(1, -1).expand(ny, nx)
    strip = (xx >= n - wall).to(torch.float64)
    half = width / 2.0
    masks = []
    for y in (p_vec[1], p_vec[2]):
        masks.append(strip * sigmoid_segment(yy, y - half, y + half, beta))
    return masks[0], masks[1]


# -- design objective ----------------------------------------------------------

def smoke_fraction_objective(pred_states, o1, o2, targets, k_s: int, k_e: int):
    """Squared-error objective on per-outlet smoke fractions.

    pred_states is [T, C, ny, nx] (channel 0 = smoke) indexed so that
    entry t is the state at accounting step t; frames k_s..k_e inclusive
    enter the tallies. Returns (loss, fractions) with the total exit mass
    floored to keep the ratio finite.
    """
    if not 0 <= k_s <= k_e < pred_states.shape[0]:
        raise ValueError(f"accounting window [{k_s}, {k_e}] outside rollout of {pred_states.shape[0]}")
    smoke = pred_states[k_s : k_e + 1, 0]
    amounts = torch.stack([(smoke * o).sum() for o in (o1, o2)])
    total = torch.clamp(amounts.sum(), min=FRACTION_FLOOR)
    fractions = amounts / total
    t = torch.as_tensor(targets, dtype=fractions.dtype)
    loss = ((t - fractions) ** 2).sum()
    return loss, fractions


# -- optimizer loop ------------------------------------------------------------

def run_design_loop(p0, objective_fn, iters: int, lr: float = 0.1, project_fn=None):
    """Adam iterations on a raw parameter vector.

    objective_fn(p, iteration) returns (loss tensor, aux dict); aux values
    are recorded per iteration. project_fn clamps p back into its validity
    box after every step. Returns (final p tensor, history list).
    """
    p = torch.as_tensor(p0, dtype=torch.float64).clone().requires_grad_(True)
    optimizer = torch.optim.Adam([p], lr=lr)
    history = []
    for it in range(iters):
        optimizer.zero_grad()
        loss, aux = objective_fn(p, it)
        loss.backward()
        if not bool(torch.isfinite(p.grad).all()):
            raise TrainingDivergedError(f"non-finite design gradient at iteration {it}")
        record = {"iteration": it, "loss": float(loss.detach()), "p": p.detach().clone().numpy().tolist()}
        record.update({k: (float(v) if np.ndim(v) == 0 else np.asarray(v).tolist()) for k, v in aux.items()})
        history.append(record)
        optimizer.step()
        if project_fn is not None:
            with torch.no_grad():
                p.copy_(project_fn(p.detach()))
    return p.detach(), history


# -- the full inverse task -----------------------------------------------------

@dataclass
class DesignProblem:
    """Inverse design of the box boundary against target outlet fractions."""

    p0: BoundaryParams
    targets: tuple = (0.3, 0.7)
    k_s: int = 50
    k_e: int = 99
    iters: int = 100
    lr: float = 0.1
    smoke_center: tuple = (16.0, 8.0)
    smoke_sigma: float = 2.5
    inflow: float = 1.0
    n_frames: int = 100

    def __post_init__(self):
        if abs(sum(self.targets) - 1.0) > 1e-9:
            raise ValueError("targets must sum to 1")
        if not 0 <= self.k_s < self.k_e:
            raise ValueError("need 0 <= k_s < k_e")
        if self.k_e >= self.n_frames:
            raise ValueError("k_e must fall inside the rollout")

    def initial_state(self) -> np.ndarray:
        """Initial (smoke, v_x, v_y) frame matching the solver's frame 0."""
        n = self.p0.n
        smoke = gaussian_smoke(n, center=self.smoke_center, sigma=self.smoke_sigma)
        solid, inlet, out_lo, out_hi = cell_categories(self.p0)
        interior = ~(solid | inlet | out_lo | out_hi)
        smoke[~interior] = 0.0
        vx = np.zeros((n, n))
        vx[inlet] = self.inflow
        vy = np.zeros((n, n))
        return np.stack([smoke, vx, vy])[None].astype(np.float32)  # [S=1, C=3, n, n]


def optimize_boundary(model: Model, problem: DesignProblem, sched: AnnealSchedule,
                      stats: NormStats | None = None):
    """Gradient-based design: rebuild the soft mask at the annealed beta,
    embed it, roll the latent state out, decode only the accounting
    window, and backprop the fraction objective to the void positions.

    Returns (optimized BoundaryParams, history).
    """
    geo = problem.p0
    n, width, wall = geo.n, geo.width, geo.wall
    box = geo.feasible_box()
    lows = torch.tensor([b[0] for b in box], dtype=torch.float64)
    highs = torch.tensor([b[1] for b in box], dtype=torch.float64)
    U0 = problem.initial_state()
    x0 = U0.astype(np.float64)
    if stats is not None:
        x0 = apply_normalization(x0, stats)
    x0_t = torch.as_tensor(x0).to(model.dtype)
    mean_t = std_t = None
    if stats is not None:
        mean_t = torch.as_tensor(stats.mean, dtype=model.dtype).reshape(1, -1, 1, 1)
        std_t = torch.as_tensor(stats.std, dtype=model.dtype).reshape(1, -1, 1, 1)

    def objective(p, it):
        beta = sched.beta(min(it, sched.iters - 1))
        mask = box_mask(p, n, width, beta, wall).values.to(model.dtype)
        z_p = model.encode_static(mask.reshape(1, 1, n, n))[0]
        z = model.encode(x0_t)
        decoded = [None] * problem.n_frames
        decoded[0] = x0_t
        for k in range(1, problem.k_e + 1):
            z = model.evolve(z, z_p)
            if k >= problem.k_s:
                decoded[k] = model.decode(z)
        frames = torch.stack([d[0] for d in decoded[problem.k_s : problem.k_e + 1]])
        if stats is not None:
            frames = frames * std_t + mean_t
        o1, o2 = outlet_masks(p, n, width, beta, wall)
        loss, fractions = smoke_fraction_objective(
            frames, o1.to(model.dtype), o2.to(model.dtype), problem.targets, 0, frames.shape[0] - 1
        )
        return loss, {"fractions": fractions.detach().numpy(), "beta": beta}

    def project(p):
        return torch.clamp(p, lows, highs)

    p_final, history = run_design_loop(
        geo.as_vector(), objective, iters=problem.iters, lr=problem.lr, project_fn=project
    )
    final = BoundaryParams.from_vector(p_final.numpy(), n=n, width=width).clamp()
    return final, history


def evaluate_design(p: BoundaryParams, problem: DesignProblem,
                    model_fractions=None) -> dict:
    """Score a design with the ground-truth solver at sharp-mask semantics.

    Runs the smoke box from the problem's initial condition and measures
    the per-outlet exit fractions over the same accounting window as the
    design objective, plus the gap to the model's own estimate.
    """
    p.validate()
    n = p.n
    smoke = gaussian_smoke(n, center=problem.smoke_center, sigma=problem.smoke_sigma)
    traj = simulate_smoke2d(p, smoke, inflow_speed=problem.inflow, n_t=problem.n_frames)
    window = traj.extras["exited"][problem.k_s : problem.k_e + 1].sum(axis=0)
    total = max(float(window.sum()), FRACTION_FLOOR)
    fractions = (window / total).tolist()
    result = {
        "solver_fractions": fractions,
        "target_error": [abs(f - t) for f, t in zip(fractions, problem.targets)],
    }
    if model_fractions is not None:
        mf = [float(v) for v in model_fractions]
        result["model_fractions"] = mf
        result["model_target_error"] = [abs(f - t) for f, t in zip(mf, problem.targets)]
        result["model_solver_gap"] = [abs(a - b) for a, b in zip(mf, fractions)]
    return result
