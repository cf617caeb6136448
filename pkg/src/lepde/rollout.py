"""Latent-space autoregressive inference, evaluation metrics, timing.

The latent trajectory z^0, z^1, ... is produced by repeated application
of the evolver and never depends on whether intermediate states are
decoded, so rollouts compose exactly and decoding can be skipped outright
when only the latent endpoint matters.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import NormStats, apply_normalization, invert_normalization
from .errors import SolverInstabilityError
from .model import Model


@dataclass
class RolloutReport:
    latents: np.ndarray                      # [m+1, d_z]
    predictions: np.ndarray | None = None    # [n_decoded, S, C, spatial...]
    decoded_steps: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)


def _prep_initial(model: Model, U0, stats: NormStats | None):
    arr = np.asarray(U0, dtype=np.float64)
    if stats is not None:
        arr = apply_normalization(arr, stats)
    return torch.as_tensor(arr).to(model.dtype)


def _latent_loop(model: Model, z, z_p, m: int, decode_every: int | None, stats):
    latents = [z]
    decoded = []
    decoded_steps = []
    for k in range(1, m + 1):
        z = model.evolve(z, z_p)
        if not bool(torch.isfinite(z).all()):
            raise SolverInstabilityError(f"non-finite latent at rollout step {k}")
        latents.append(z)
        if decode_every is not None and k % decode_every == 0:
            decoded.append(model.decode(z))
            decoded_steps.append(k)
    latents_np = torch.stack(latents).double().numpy()
    predictions = None
    if decoded:
        predictions = torch.stack(decoded).double().numpy()
        if stats is not None:
            predictions = invert_normalization(predictions, stats)
    return RolloutReport(latents=latents_np, predictions=predictions, decoded_steps=decoded_steps)


def rollout(model: Model, U0, p=None, m: int = 0, decode_every: int | None = None,
            stats: NormStats | None = None) -> RolloutReport:
    """Encode U0, apply the evolver m times, decode at requested steps.

    decode_every=None decodes nothing; decode_every=k decodes steps
    k, 2k, ... Predictions are returned in raw units when stats are given.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    x0 = _prep_initial(model, U0, stats)
    with torch.no_grad():
        z = model.encode(x0)
        z_p = model.encode_static(p) if (p is not None and model.cfg.static_dim > 0) else None
        return _latent_loop(model, z, z_p, m, decode_every, stats)


def continue_rollout(model: Model, z0, p=None, m: int = 0, decode_every: int | None = None,
                     stats: NormStats | None = None) -> RolloutReport:
    """Resume a rollout from a saved latent instead of an input state."""
    if m < 0:
        raise ValueError("m must be >= 0")
    with torch.no_grad():
        z = torch.as_tensor(z0).to(model.dtype)
        z_p = model.encode_static(p) if (p is not None and model.cfg.static_dim > 0) else None
        return _latent_loop(model, z, z_p, m, decode_every, stats)


def accumulated_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Sum over frames of the per-frame spatial mean squared error.

    pred/gt are [T, ...] with identical shapes; all non-time axes are
    averaged within each frame.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    per_frame = ((pred - gt) ** 2).reshape(pred.shape[0], -1).mean(axis=1)
    return float(per_frame.sum())


def relative_l2(pred: np.ndarray, gt: np.ndarray) -> float:
    """||pred - gt|| / ||gt|| over the whole rollout (one trajectory)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    denom = np.linalg.norm(gt.ravel())
    if denom == 0.0:
        raise ValueError("ground truth has zero norm")
    return float(np.linalg.norm((pred - gt).ravel()) / denom)


def persistence_prediction(last_bundle: np.ndarray, n_bundles: int) -> np.ndarray:
    """Repeat the last observed bundle for every future bundle, giving a
    [n_bundles * S, C, spatial...] frame sequence."""
    reps = np.concatenate([last_bundle] * n_bundles, axis=0)
    return reps


def predicted_frames(report: RolloutReport) -> np.ndarray:
    """Concatenate decoded bundles into a [m * S, C, spatial...] sequence."""
    if report.predictions is None:
        raise ValueError("rollout was run without decoding")
    preds = report.predictions
    return preds.reshape(preds.shape[0] * preds.shape[1], *preds.shape[2:])


def evaluate_trajectory(model: Model, traj_states: np.ndarray, params_vec, stats: NormStats | None,
                        start_frame: int, n_frames: int, static_input_fn=None) -> dict:
    """Roll out from the bundle ending at start_frame and score against the
    ground-truth frames [start_frame, start_frame + n_frames)."""
    S = model.cfg.bundle
    if start_frame < S:
        raise ValueError(f"start_frame must be >= bundle size {S}")
    if n_frames % S != 0:
        raise ValueError("n_frames must be a multiple of the bundle size")
    m = n_frames // S
    U0 = traj_states[start_frame - S : start_frame]
    gt = traj_states[start_frame : start_frame + n_frames]
    if gt.shape[0] != n_frames:
        raise ValueError("trajectory too short for the requested evaluation window")

    static_in = None
    if model.cfg.static_dim > 0:
        static_in = params_vec if static_input_fn is None else static_input_fn(params_vec)
    report = rollout(model, U0, p=static_in, m=m, decode_every=1, stats=stats)
    pred = predicted_frames(report)
    persist = persistence_prediction(U0, m)
    return {
        "accumulated_error": accumulated_error(pred, gt),
        "relative_l2": relative_l2(pred, gt),
        "persistence_accumulated_error": accumulated_error(persist, gt),
        "persistence_relative_l2": relative_l2(persist, gt),
    }


def evaluate_split(model: Model, dataset, split: str, stats: NormStats | None,
                   start_frame: int = 50, n_frames: int = 200, static_input_fn=None) -> dict:
    """Average per-trajectory metrics over a split (trajectory-mean of the
    per-trajectory accumulated errors)."""
    from .data import params_to_vector

    rows = []
    for ti in dataset.split_indices(split):
        traj = dataset.trajectories[ti]
        vec = params_to_vector(traj.params, dataset.meta.params_schema)
        res = evaluate_trajectory(model, traj.states, vec, stats, start_frame, n_frames,
                                  static_input_fn=static_input_fn)
        res["trajectory"] = ti
        rows.append(res)
    keys = ["accumulated_error", "relative_l2", "persistence_accumulated_error", "persistence_relative_l2"]
    summary = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    summary["n_trajectories"] = len(rows)
    return {"summary": summary, "per_trajectory": rows}


def benchmark_runtime(model: Model, U0, p=None, m: int = 200, repeats: int = 5,
                      warmup: int = 2, stats: NormStats | None = None) -> dict:
    """Median wall-clock for encode + m latent steps (evo) and the same
    plus decoding at every step (full)."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")

    def run(decode: bool):
        t0 = time.perf_counter()
        rollout(model, U0, p=p, m=m, decode_every=1 if decode else None, stats=stats)
        return time.perf_counter() - t0

    for _ in range(warmup):
        run(False)
        run(True)
    t_evo = float(np.median([run(False) for _ in range(repeats)]))
    t_full = float(np.median([run(True) for _ in range(repeats)]))
    return {
        "t_evo_s": t_evo,
        "t_full_s": t_full,
        "steps": m,
        "repeats": repeats,
        "representation_dim": model.cfg.latent_dim,
        "input_dim": model.cfg.input_dim,
        "compression_ratio": model.compression_ratio(),
    }
