"""Three-term objective, training loop, and gradient verification.

The objective combines (per window, averaged over the batch):
  multi-step   sum_m alpha_m * l(decode(evolve^m(z, z_p)), U^{k+m})
  recons       l(decode(z), U^k)
  consistency  sum_m ||evolve^m(z, z_p) - encode(U^{k+m})||^2
                     / ||encode(U^{k+m})||^2
with z = encode(U^k). Gradients flow through the consistency target
encodings (no stop-gradient). The loss kernel l is MSE, per-sample RMSE,
or per-sample relative L2.
"""

import copy
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .data import Dataset, NormStats, WindowBatch, compute_norm_stats, make_windows
from .errors import TrainingDivergedError
from .model import Model, save_checkpoint

logger = logging.getLogger(__name__)

CONSISTENCY_FLOOR = 1e-8
LOSS_KERNELS = ("mse", "rmse", "l2")


@dataclass(frozen=True)
class LossWeights:
    """Per-horizon multi-step weights plus term toggles. `alphas` defaults
    to (1, 0.1, ..., 0.1) stretched to the horizon."""

    alphas: tuple = (1.0, 0.1)
    multi_step: bool = True
    recons: bool = True
    consistency: bool = True

    @staticmethod
    def default(horizon: int) -> "LossWeights":
        return LossWeights(alphas=(1.0,) + (0.1,) * (horizon - 1))

    def for_horizon(self, horizon: int) -> "LossWeights":
        if len(self.alphas) == horizon:
            return self
        if len(self.alphas) > horizon:
            return replace(self, alphas=tuple(self.alphas[:horizon]))
        pad = self.alphas[-1] if self.alphas else 0.1
        return replace(self, alphas=tuple(self.alphas) + (pad,) * (horizon - len(self.alphas)))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    schedule: str = "cosine"
    horizon: int = 4
    loss: str = "mse"
    stride: int | None = None
    seed: int = 0
    weights: LossWeights | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon M must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.loss not in LOSS_KERNELS:
            raise ValueError(f"loss must be one of {LOSS_KERNELS}")
        if self.weights is None:
            object.__setattr__(self, "weights", LossWeights.default(self.horizon))
        else:
            object.__setattr__(self, "weights", self.weights.for_horizon(self.horizon))


@dataclass
class LossBreakdown:
    total: torch.Tensor
    multi_step: torch.Tensor
    recons: torch.Tensor
    consistency: torch.Tensor

    def detach_floats(self) -> dict:
        return {
            "total": float(self.total),
            "multi_step": float(self.multi_step),
            "recons": float(self.recons),
            "consistency": float(self.consistency),
        }


def _kernel(kind: str, pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Per-sample loss, averaged over the batch (dim 0)."""
    diff = (pred - target).flatten(start_dim=1)
    if kind == "mse":
        return (diff**2).mean()
    if kind == "rmse":
        return torch.sqrt((diff**2).mean(dim=1) + 1e-30).mean()
    if kind == "l2":
        tgt = target.flatten(start_dim=1)
        denom = torch.clamp(tgt.norm(dim=1), min=CONSISTENCY_FLOOR)
        return (diff.norm(dim=1) / denom).mean()
    raise ValueError(f"unknown loss kernel {kind}")


def _as_model_tensor(model: Model, arr) -> torch.Tensor:
    return torch.as_tensor(arr).to(model.dtype)


def compute_objective(model: Model, batch: WindowBatch, cfg: TrainConfig,
                      static_input_fn=None) -> LossBreakdown:
    """Evaluate the three-term objective on one batch.

    batch.targets must hold exactly cfg.horizon future bundles. The static
    inputs default to the raw parameter vectors; static_input_fn may map
    them to e.g. a mask field first.
    """
    if batch.horizon != cfg.horizon:
        raise ValueError(f"batch horizon {batch.horizon} != configured M={cfg.horizon}")
    weights = cfg.weights
    inputs = _as_model_tensor(model, batch.inputs)
    targets = _as_model_tensor(model, batch.targets)

    z_p = None
    if model.cfg.static_dim > 0:
        static_in = batch.params if static_input_fn is None else static_input_fn(batch.params)
        z_p = model.encode_static(_as_model_tensor(model, static_in))

    z = model.encode(inputs)
    zero = torch.zeros((), dtype=inputs.dtype)
    multi = zero.clone()
    consistency = zero.clone()
    z_m = z
    for m in range(1, cfg.horizon + 1):
        z_m = model.evolve(z_m, z_p)
        target_m = targets[:, m - 1]
        if weights.multi_step:
            multi = multi + weights.alphas[m - 1] * _kernel(cfg.loss, model.decode(z_m), target_m)
        if weights.consistency:
            z_target = model.encode(target_m)
            denom_sq = (z_target**2).sum(dim=-1)
            if bool((denom_sq < CONSISTENCY_FLOOR).any()):
                logger.warning("consistency denominator floored at %.0e", CONSISTENCY_FLOOR)
            denom_sq = torch.clamp(denom_sq, min=CONSISTENCY_FLOOR)
            consistency = consistency + (((z_m - z_target) ** 2).sum(dim=-1) / denom_sq).mean()
    recons = _kernel(cfg.loss, model.decode(z), inputs) if weights.recons else zero.clone()

    total = zero.clone()
    if weights.multi_step:
        total = total + multi
    if weights.recons:
        total = total + recons
    if weights.consistency:
        total = total + consistency
    return LossBreakdown(total=total, multi_step=multi, recons=recons, consistency=consistency)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train: dict
    val: dict


@dataclass
class TrainResult:
    model: Model
    stats: NormStats
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = math.inf
    wall_time: float = 0.0

    def history_rows(self) -> list:
        rows = []
        for rec in self.history:
            row = {"epoch": rec.epoch, "lr": rec.lr}
            row.update({f"train_{k}": v for k, v in rec.train.items()})
            row.update({f"val_{k}": v for k, v in rec.val.items()})
            rows.append(row)
        return rows


def _epoch_loss(model, dataset, split, cfg, stats, static_input_fn):
    sums = {"total": 0.0, "multi_step": 0.0, "recons": 0.0, "consistency": 0.0}
    count = 0
    with torch.no_grad():
        for batch in make_windows(dataset, split, model.cfg.bundle, cfg.horizon,
                                  stride=cfg.stride, batch_size=cfg.batch_size, stats=stats):
            n = batch.inputs.shape[0]
            vals = compute_objective(model, batch, cfg, static_input_fn).detach_floats()
            for k in sums:
                sums[k] += vals[k] * n
            count += n
    return {k: v / max(count, 1) for k, v in sums.items()}


def train(model: Model, dataset: Dataset, cfg: TrainConfig, static_input_fn=None,
          checkpoint_dir=None, log_every: int = 0) -> TrainResult:
    """Adam + cosine annealing to zero; epoch-level validation with the
    best-validation parameters restored at the end. Deterministic given
    cfg.seed (shuffling, init-independent batch order, optimizer state).
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    stats = compute_norm_stats(dataset, "train")
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=max(cfg.epochs, 1), eta_min=0.0)

    result = TrainResult(model=model, stats=stats)
    best_state = copy.deepcopy(model.state_dict())
    started = time.perf_counter()
    step = 0
    for epoch in range(cfg.epochs):
        lr_now = optimizer.param_groups[0]["lr"]
        model.train()
        for batch in make_windows(dataset, "train", model.cfg.bundle, cfg.horizon,
                                  stride=cfg.stride, batch_size=cfg.batch_size,
                                  shuffle=True, rng=rng, stats=stats):
            optimizer.zero_grad()
            breakdown = compute_objective(model, batch, cfg, static_input_fn)
            if not torch.isfinite(breakdown.total):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, step {step}")
            breakdown.total.backward()
            optimizer.step()
            step += 1
        model.eval()
        train_loss = _epoch_loss(model, dataset, "train", cfg, stats, static_input_fn)
        val_loss = _epoch_loss(model, dataset, "val", cfg, stats, static_input_fn)
        result.history.append(EpochRecord(epoch=epoch, lr=lr_now, train=train_loss, val=val_loss))
        if val_loss["total"] < result.best_val:
            result.best_val = val_loss["total"]
            result.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        if log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            logger.info("epoch %d lr %.2e train %.4e val %.4e", epoch, lr_now,
                        train_loss["total"], val_loss["total"])
        scheduler.step()

    model.load_state_dict(best_state)
    model.eval()
    result.wall_time = time.perf_counter() - started
    if checkpoint_dir is not None:
        save_checkpoint(model, stats, checkpoint_dir, extra_meta={
            "best_epoch": result.best_epoch,
            "best_val_total": result.best_val if math.isfinite(result.best_val) else None,
            "train_config": {
                "epochs": cfg.epochs, "batch_size": cfg.batch_size, "lr": cfg.lr,
                "horizon": cfg.horizon, "loss": cfg.loss, "seed": cfg.seed,
            },
        })
    return result


def gradient_check(model: Model, batch: WindowBatch, cfg: TrainConfig, eps: float = 1e-6,
                   n_coords: int = 200, seed: int = 0, static_input_fn=None) -> float:
    """Max relative error between autograd and central finite differences
    over a random subset of parameter coordinates, in 64-bit arithmetic."""
    model64 = copy.deepcopy(model).double()
    model64.eval()

    def loss_value():
        return compute_objective(model64, batch, cfg, static_input_fn).total

    loss = loss_value()
    params = [p for p in model64.parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]

    flat_grads = torch.cat([g.reshape(-1) for g in grads])
    sizes = [p.numel() for p in params]
    total = int(sum(sizes))
    rng = np.random.default_rng(seed)
    n = min(n_coords, total)
    coords = rng.choice(total, size=n, replace=False)

    g_scale = max(1.0, float(flat_grads.abs().max()))
    worst = 0.0
    offsets = np.cumsum([0] + sizes)
    with torch.no_grad():
        for c in coords:
            pi = int(np.searchsorted(offsets, c, side="right") - 1)
            local = int(c - offsets[pi])
            view = params[pi].reshape(-1)
            orig = view[local].item()
            view[local] = orig + eps
            up = float(loss_value())
            view[local] = orig - eps
            down = float(loss_value())
            view[local] = orig
            fd = (up - down) / (2.0 * eps)
            a = float(flat_grads[c])
            denom = max(abs(a), abs(fd), 1e-6 * g_scale)
            worst = max(worst, abs(a - fd) / denom)
    return worst
