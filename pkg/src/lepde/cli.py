"""Command-line entry points.

Every command resolves a JSON config (file, then --set dotted overrides,
then convenience flags, then the LEPDE_SEED env var), validates it
against a schema that rejects unknown keys, and writes all outputs into a
self-contained run directory: resolved config, logs, reports,
checkpoints.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import ConfigError, LepdeError
from .model import ModelConfig, build_model, load_checkpoint
from .reports import emit_report, plot_design_curve, plot_history, write_csv, write_json
from .solvers import (
    BoundaryParams,
    Grid1D,
    Grid2D,
    default_forcing_field,
    gaussian_smoke,
    sample_forcing,
    sample_params,
    sample_vorticity_grf,
    simulate_burgers1d,
    simulate_ns2d,
    simulate_smoke2d,
)

logger = logging.getLogger("lepde.cli")

SEED_ENV = "LEPDE_SEED"

# -- schemas -------------------------------------------------------------------

GENERATE_SCHEMA = {
    "seed": int,
    "out": str,
    "pde": str,
    "scenario": str,
    "n_train": int,
    "n_val": int,
    "n_test": int,
    "n_t": int,
    "dt": float,
    "grid": {"n_x": int, "n": int, "length": float},
    "solver": {"nu": float, "forcing": str, "inflow": float, "smoke_sigma": float, "width": float},
}

MODEL_SCHEMA = {
    "latent_dim": int,
    "static_dim": int,
    "start_channels": int,
    "depth": int,
    "static_depth": int,
    "static_kind": str,
    "static_hidden": int,
    "bundle": int,
    "mask_beta": float,
}

TRAIN_SCHEMA = {
    "seed": int,
    "dataset": str,
    "out": str,
    "model": MODEL_SCHEMA,
    "train": {
        "epochs": int,
        "batch_size": int,
        "lr": float,
        "horizon": int,
        "loss": str,
        "stride": int,
        "alphas": list,
        "multi_step": bool,
        "recons": bool,
        "consistency": bool,
        "noise_amplitude": float,
        "noise_seed": int,
    },
    "plots": bool,
}

EVALUATE_SCHEMA = {
    "seed": int,
    "checkpoint": str,
    "dataset": str,
    "out": str,
    "split": str,
    "start_frame": int,
    "n_frames": int,
    "benchmark_repeats": int,
    "plots": bool,
}

ROLLOUT_SCHEMA = {
    "seed": int,
    "checkpoint": str,
    "dataset": str,
    "out": str,
    "split": str,
    "trajectory": int,
    "start_frame": int,
    "n_frames": int,
    "decode_every": int,
    "plots": bool,
}

BENCHMARK_SCHEMA = {
    "seed": int,
    "checkpoint": str,
    "out": str,
    "m": int,
    "repeats": int,
    "model": MODEL_SCHEMA,
    "grid": {"n_x": int, "n": int, "length": float},
    "in_channels": int,
    "param_dim": int,
}

INVERT_SCHEMA = {
    "seed": int,
    "checkpoint": str,
    "out": str,
    "problem": {
        "grid_n": int,
        "targets": list,
        "k_s": int,
        "k_e": int,
        "iters": int,
        "lr": float,
        "n_frames": int,
        "inflow": float,
        "smoke_sigma": float,
        "width": float,
    },
    "anneal": {"beta0": float, "beta1": float},
    "inits": {"count": int, "seed": int},
    "evaluate_gt": bool,
    "plots": bool,
}

SCHEMAS = {
    "generate": GENERATE_SCHEMA,
    "train": TRAIN_SCHEMA,
    "evaluate": EVALUATE_SCHEMA,
    "rollout": ROLLOUT_SCHEMA,
    "benchmark": BENCHMARK_SCHEMA,
    "invert": INVERT_SCHEMA,
}


def validate_config(cfg: dict, schema: dict, path: str = ""):
    """Reject unknown keys and obviously mistyped values, recursively."""
    for key, value in cfg.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key {here!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here!r} must be an object")
            validate_config(value, spec, here)
        elif value is not None:
            if spec is float and isinstance(value, int) and not isinstance(value, bool):
                continue
            if spec is int and isinstance(value, bool):
                raise ConfigError(f"{here!r} must be an integer")
            if not isinstance(value, spec):
                raise ConfigError(f"{here!r} must be {spec.__name__}")


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"--set expects key.path=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_override(cfg: dict, dotted: str, value):
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot descend into {dotted!r}")
    node[parts[-1]] = value


def resolve_config(args, defaults: dict, flag_map: dict) -> dict:
    cfg = json.loads(json.dumps(defaults))  # deep copy
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text())
        for key, value in file_cfg.items():
            if isinstance(value, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    for flag, dotted in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            apply_override(cfg, dotted, value)
    for item in getattr(args, "set", None) or []:
        key, value = _parse_override(item)
        apply_override(cfg, key, value)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    return cfg


def make_run_dir(out: str) -> Path:
    run_dir = Path(out)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _setup_run_logging(run_dir: Path):
    handler = logging.FileHandler(run_dir / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


# -- generate ------------------------------------------------------------------

GENERATE_DEFAULTS = {
    "seed": 0,
    "out": None,
    "pde": "burgers1d",
    "scenario": "E1",
    "n_train": 96,
    "n_val": 12,
    "n_test": 12,
    "n_t": 250,
    "dt": None,
    "grid": {},
    "solver": {},
}

FRAME_DT = {"burgers1d": 0.016, "ns2d": 1.0, "smoke2d": 1.0}


def _splits(n_train, n_val, n_test):
    total = n_train + n_val + n_test
    idx = list(range(total))
    return {
        "train": idx[:n_train],
        "val": idx[n_train : n_train + n_val],
        "test": idx[n_train + n_val :],
    }


def _generate_burgers(cfg, rng):
    grid = Grid1D(n_x=int(cfg["grid"].get("n_x", 50)), length=float(cfg["grid"].get("length", 16.0)))
    scenario = cfg["scenario"]
    n_total = cfg["n_train"] + cfg["n_val"] + cfg["n_test"]
    trajs = []
    for i in range(n_total):
        seed = int(rng.integers(0, 2**31 - 1))
        traj_rng = np.random.default_rng(seed)
        params = sample_params(scenario, traj_rng)
        forcing = sample_forcing(int(traj_rng.integers(0, 2**31 - 1)), length=grid.length)
        trajs.append(simulate_burgers1d(params, forcing, grid, cfg["n_t"], cfg["dt"], seed=seed))
    meta = data_mod.DatasetMeta(
        pde_family=f"burgers1d/{scenario}",
        grid={"n_x": grid.n_x, "length": grid.length, "periodic": True},
        dt=cfg["dt"],
        channels=["u"],
        params_schema={"kind": "coeffs3", "dim": 3, "names": ["alpha", "beta", "gamma"]},
        splits=_splits(cfg["n_train"], cfg["n_val"], cfg["n_test"]),
    )
    return trajs, meta


def _generate_ns2d(cfg, rng):
    grid = Grid2D(n=int(cfg["grid"].get("n", 64)), length=float(cfg["grid"].get("length", 1.0)))
    nu = float(cfg["solver"].get("nu", 1e-3))
    forcing_kind = cfg["solver"].get("forcing", "default")
    forcing = default_forcing_field(grid) if forcing_kind == "default" else None
    n_total = cfg["n_train"] + cfg["n_val"] + cfg["n_test"]
    trajs = []
    for i in range(n_total):
        seed = int(rng.integers(0, 2**31 - 1))
        w0 = sample_vorticity_grf(grid, np.random.default_rng(seed))
        trajs.append(simulate_ns2d(nu, grid, w0, forcing_f=forcing, n_t=cfg["n_t"], dt=cfg["dt"], seed=seed))
    meta = data_mod.DatasetMeta(
        pde_family="ns2d",
        grid={"n": grid.n, "length": grid.length, "periodic": True},
        dt=cfg["dt"],
        channels=["vorticity"],
        params_schema={"kind": "viscosity", "dim": 1, "names": ["nu"]},
        splits=_splits(cfg["n_train"], cfg["n_val"], cfg["n_test"]),
    )
    return trajs, meta


def sample_boundary(rng, n: int, width: float | None = None) -> BoundaryParams:
    proto = BoundaryParams(n / 2, n / 4, 3 * n / 4, n=n, width=width)
    box = proto.feasible_box()
    vals = [rng.uniform(lo, hi) for lo, hi in box]
    return BoundaryParams(vals[0], vals[1], vals[2], n=n, width=proto.width)


def _generate_smoke(cfg, rng):
    n = int(cfg["grid"].get("n", 32))
    inflow = float(cfg["solver"].get("inflow", 1.0))
    sigma = float(cfg["solver"].get("smoke_sigma", 2.5))
    width = cfg["solver"].get("width")
    n_total = cfg["n_train"] + cfg["n_val"] + cfg["n_test"]
    trajs = []
    for i in range(n_total):
        seed = int(rng.integers(0, 2**31 - 1))
        traj_rng = np.random.default_rng(seed)
        boundary = sample_boundary(traj_rng, n, width)
        center = (traj_rng.uniform(0.3 * n, 0.7 * n), n / 4.0)
        smoke = gaussian_smoke(n, center=center, sigma=sigma)
        trajs.append(
            simulate_smoke2d(boundary, smoke, inflow_speed=inflow, n_t=cfg["n_t"], dt=cfg["dt"], seed=seed)
        )
    meta = data_mod.DatasetMeta(
        pde_family="smoke2d",
        grid={"n": n, "length": float(n), "periodic": False},
        dt=cfg["dt"],
        channels=["smoke", "vx", "vy"],
        params_schema={
            "kind": "boundary_box",
            "dim": 3,
            "names": ["inlet_y", "outlet_lo_y", "outlet_hi_y"],
            "geometry": {"n": n, "width": trajs[0].params.width if trajs else n / 8.0,
                         "wall": 2, "inflow": inflow, "smoke_sigma": sigma},
        },
        splits=_splits(cfg["n_train"], cfg["n_val"], cfg["n_test"]),
    )
    return trajs, meta


def cmd_generate(cfg) -> int:
    if not cfg.get("out"):
        raise ConfigError("generate needs an output directory (--out)")
    rng = np.random.default_rng(cfg["seed"])
    family = cfg["pde"]
    if family not in FRAME_DT:
        raise ConfigError(f"unknown pde family {cfg['pde']!r}")
    if cfg.get("dt") is None:
        cfg["dt"] = FRAME_DT[family]
    if family == "burgers1d":
        trajs, meta = _generate_burgers(cfg, rng)
    elif family == "ns2d":
        trajs, meta = _generate_ns2d(cfg, rng)
    else:
        trajs, meta = _generate_smoke(cfg, rng)
    out = make_run_dir(cfg["out"])
    data_mod.write_dataset(trajs, meta, out)
    write_json(out / "generate_config.json", cfg)
    logger.info("wrote %d trajectories to %s", len(trajs), out)
    return 0


# -- train ---------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "seed": 0,
    "dataset": None,
    "out": None,
    "model": {
        "latent_dim": 64,
        "static_dim": 3,
        "start_channels": 32,
        "depth": 4,
        "static_depth": 0,
        "static_kind": "vector",
        "static_hidden": None,
        "bundle": 25,
        "mask_beta": 0.05,
    },
    "train": {
        "epochs": 50,
        "batch_size": 32,
        "lr": 1e-3,
        "horizon": 2,
        "loss": "mse",
        "stride": None,
        "alphas": None,
        "multi_step": True,
        "recons": True,
        "consistency": True,
        "noise_amplitude": 0.0,
        "noise_seed": 0,
    },
    "plots": False,
}


def model_config_from_dataset(meta: data_mod.DatasetMeta, model_cfg: dict) -> ModelConfig:
    spatial = meta.spatial_shape()
    schema = meta.params_schema
    static_kind = model_cfg.get("static_kind", "vector")
    if schema.get("kind") == "boundary_box" and model_cfg.get("static_dim", 0) > 0:
        static_kind = "field"
    return ModelConfig(
        spatial_dims=len(spatial),
        grid_shape=spatial,
        in_channels=len(meta.channels),
        bundle=int(model_cfg.get("bundle", 1)),
        latent_dim=int(model_cfg.get("latent_dim", 64)),
        static_dim=int(model_cfg.get("static_dim", 0)),
        param_dim=int(schema.get("dim", 0)),
        start_channels=int(model_cfg.get("start_channels", 32)),
        depth=int(model_cfg.get("depth", 4)),
        static_depth=int(model_cfg.get("static_depth", 0)),
        static_kind=static_kind,
        static_hidden=model_cfg.get("static_hidden"),
    )


def make_static_input_fn(meta: data_mod.DatasetMeta, mask_beta: float):
    """Map parameter vectors to static-encoder inputs (masks for the box)."""
    if meta.params_schema.get("kind") != "boundary_box":
        return None
    import torch

    from .inverse import box_mask

    geo = meta.params_schema.get("geometry", {})
    n = int(geo.get("n", meta.spatial_shape()[0]))
    width = float(geo.get("width", n / 8.0))
    wall = int(geo.get("wall", 2))

    def fn(params):
        arr = np.atleast_2d(np.asarray(params, dtype=np.float64))
        masks = [box_mask(row, n, width, mask_beta, wall).values for row in arr]
        return torch.stack(masks).unsqueeze(1)

    return fn


def cmd_train(cfg) -> int:
    from .training import LossWeights, TrainConfig, train

    if not cfg.get("dataset") or not cfg.get("out"):
        raise ConfigError("train needs dataset and out paths")
    dataset = data_mod.read_dataset(cfg["dataset"])
    tc = cfg["train"]
    if tc.get("noise_amplitude", 0.0):
        dataset = data_mod.inject_fixed_noise(dataset, tc["noise_amplitude"], tc.get("noise_seed", 0))
    weights = LossWeights(
        alphas=tuple(tc["alphas"]) if tc.get("alphas") else LossWeights.default(tc["horizon"]).alphas,
        multi_step=tc.get("multi_step", True),
        recons=tc.get("recons", True),
        consistency=tc.get("consistency", True),
    )
    train_cfg = TrainConfig(
        epochs=tc["epochs"], batch_size=tc["batch_size"], lr=tc["lr"], horizon=tc["horizon"],
        loss=tc["loss"], stride=tc.get("stride"), seed=cfg["seed"], weights=weights,
    )
    model_cfg = model_config_from_dataset(dataset.meta, cfg["model"])
    model = build_model(model_cfg, seed=cfg["seed"])
    static_fn = make_static_input_fn(dataset.meta, cfg["model"].get("mask_beta", 0.05))

    run_dir = make_run_dir(cfg["out"])
    handler = _setup_run_logging(run_dir)
    try:
        write_json(run_dir / "config.json", cfg)
        result = train(model, dataset, train_cfg, static_input_fn=static_fn,
                       checkpoint_dir=run_dir / "checkpoint", log_every=1)
        rows = result.history_rows()
        fields = ["epoch", "lr"] + [f"{p}_{k}" for p in ("train", "val")
                                    for k in ("total", "multi_step", "recons", "consistency")]
        write_csv(run_dir / "history.csv", rows, fields)
        payload = {
            "best_epoch": result.best_epoch,
            "best_val_total": result.best_val if np.isfinite(result.best_val) else None,
            "wall_time_s": result.wall_time,
            "parameter_counts": model.parameter_counts(),
            "compression_ratio": model.compression_ratio(),
        }
        plots = {"loss_curves": plot_history(rows)} if (cfg.get("plots") and rows) else None
        emit_report(payload, run_dir, "train_report", rows=None, plots=plots)
        logger.info("training done: best epoch %s best val %.4e", result.best_epoch, result.best_val)
    finally:
        logging.getLogger().removeHandler(handler)
    return 0


# -- evaluate / rollout / benchmark ---------------------------------------------

EVALUATE_DEFAULTS = {
    "seed": 0,
    "checkpoint": None,
    "dataset": None,
    "out": None,
    "split": "test",
    "start_frame": 50,
    "n_frames": 200,
    "benchmark_repeats": 5,
    "plots": False,
}


def _load_model_for_dataset(checkpoint, dataset):
    model, stats, meta = load_checkpoint(checkpoint)
    static_fn = make_static_input_fn(dataset.meta, meta.get("training_state", {}).get("mask_beta", 0.05))
    return model, stats, static_fn


def cmd_evaluate(cfg) -> int:
    from .rollout import benchmark_runtime, evaluate_split

    if not all(cfg.get(k) for k in ("checkpoint", "dataset", "out")):
        raise ConfigError("evaluate needs checkpoint, dataset, and out paths")
    dataset = data_mod.read_dataset(cfg["dataset"])
    model, stats, static_fn = _load_model_for_dataset(cfg["checkpoint"], dataset)
    run_dir = make_run_dir(cfg["out"])
    write_json(run_dir / "config.json", cfg)

    report = evaluate_split(model, dataset, cfg["split"], stats,
                            start_frame=cfg["start_frame"], n_frames=cfg["n_frames"],
                            static_input_fn=static_fn)
    first = dataset.split_trajectories(cfg["split"])[0]
    S = model.cfg.bundle
    U0 = first.states[cfg["start_frame"] - S : cfg["start_frame"]]
    vec = data_mod.params_to_vector(first.params, dataset.meta.params_schema)
    static_in = vec if static_fn is None else static_fn(vec)
    timing = benchmark_runtime(model, U0, p=static_in if model.cfg.static_dim else None,
                               m=cfg["n_frames"] // S, repeats=cfg["benchmark_repeats"], stats=stats)
    payload = {
        "dataset": str(cfg["dataset"]),
        "checkpoint": str(cfg["checkpoint"]),
        "split": cfg["split"],
        "metrics": report["summary"],
        "runtimes": timing,
        "representation_dim": model.cfg.latent_dim,
        "input_dim": model.cfg.input_dim,
        "compression_ratio": model.compression_ratio(),
    }
    emit_report(payload, run_dir, "evaluation", rows=report["per_trajectory"])
    print(json.dumps(payload["metrics"], indent=2))
    return 0


ROLLOUT_DEFAULTS = {
    "seed": 0,
    "checkpoint": None,
    "dataset": None,
    "out": None,
    "split": "test",
    "trajectory": 0,
    "start_frame": 50,
    "n_frames": 200,
    "decode_every": 1,
    "plots": False,
}


def cmd_rollout(cfg) -> int:
    from .rollout import accumulated_error, predicted_frames, relative_l2, rollout

    if not all(cfg.get(k) for k in ("checkpoint", "dataset", "out")):
        raise ConfigError("rollout needs checkpoint, dataset, and out paths")
    dataset = data_mod.read_dataset(cfg["dataset"])
    model, stats, static_fn = _load_model_for_dataset(cfg["checkpoint"], dataset)
    traj = dataset.split_trajectories(cfg["split"])[cfg["trajectory"]]
    S = model.cfg.bundle
    start, n_frames = cfg["start_frame"], cfg["n_frames"]
    U0 = traj.states[start - S : start]
    vec = data_mod.params_to_vector(traj.params, dataset.meta.params_schema)
    static_in = None
    if model.cfg.static_dim:
        static_in = vec if static_fn is None else static_fn(vec)
    report = rollout(model, U0, p=static_in, m=n_frames // S,
                     decode_every=cfg["decode_every"], stats=stats)
    run_dir = make_run_dir(cfg["out"])
    write_json(run_dir / "config.json", cfg)
    np.save(run_dir / "latents.npy", report.latents)
    payload = {"decoded_steps": report.decoded_steps, "latent_dim": model.cfg.latent_dim}
    if report.predictions is not None:
        np.save(run_dir / "predictions.npy", report.predictions)
        if cfg["decode_every"] == 1:
            pred = predicted_frames(report)
            gt = traj.states[start : start + n_frames]
            payload["accumulated_error"] = accumulated_error(pred, gt)
            payload["relative_l2"] = relative_l2(pred, gt)
    emit_report(payload, run_dir, "rollout")
    return 0


BENCHMARK_DEFAULTS = {
    "seed": 0,
    "checkpoint": None,
    "out": None,
    "m": 200,
    "repeats": 5,
    "model": {
        "latent_dim": 128,
        "static_dim": 3,
        "start_channels": 32,
        "depth": 4,
        "static_depth": 0,
        "bundle": 25,
    },
    "grid": {"n_x": 100},
    "in_channels": 1,
    "param_dim": 3,
}


def cmd_benchmark(cfg) -> int:
    from .rollout import benchmark_runtime

    if not cfg.get("out"):
        raise ConfigError("benchmark needs an out path")
    rng = np.random.default_rng(cfg["seed"])
    if cfg.get("checkpoint"):
        model, stats, _ = load_checkpoint(cfg["checkpoint"])
    else:
        grid = cfg["grid"]
        spatial = (int(grid["n_x"]),) if "n_x" in grid else (int(grid["n"]),) * 2
        mc = cfg["model"]
        model_cfg = ModelConfig(
            spatial_dims=len(spatial), grid_shape=spatial, in_channels=cfg["in_channels"],
            bundle=int(mc.get("bundle", 1)), latent_dim=int(mc.get("latent_dim", 128)),
            static_dim=int(mc.get("static_dim", 0)), param_dim=cfg["param_dim"],
            start_channels=int(mc.get("start_channels", 32)), depth=int(mc.get("depth", 4)),
            static_depth=int(mc.get("static_depth", 0)),
        )
        model = build_model(model_cfg, seed=cfg["seed"])
        stats = None
    shape = (model.cfg.bundle, model.cfg.in_channels) + model.cfg.grid_shape
    U0 = rng.standard_normal(shape).astype(np.float32)
    p = rng.standard_normal(model.cfg.param_dim).astype(np.float32) if model.cfg.static_dim else None
    timing = benchmark_runtime(model, U0, p=p, m=cfg["m"], repeats=cfg["repeats"], stats=stats)
    run_dir = make_run_dir(cfg["out"])
    write_json(run_dir / "config.json", cfg)
    emit_report(timing, run_dir, "benchmark")
    print(json.dumps(timing, indent=2))
    return 0


# -- invert ---------------------------------------------------------------------

INVERT_DEFAULTS = {
    "seed": 0,
    "checkpoint": None,
    "out": None,
    "problem": {
        "grid_n": 32,
        "targets": [0.3, 0.7],
        "k_s": 50,
        "k_e": 99,
        "iters": 100,
        "lr": 0.1,
        "n_frames": 100,
        "inflow": 1.0,
        "smoke_sigma": 2.5,
        "width": None,
    },
    "anneal": {"beta0": 0.1, "beta1": 0.05},
    "inits": {"count": 10, "seed": 0},
    "evaluate_gt": True,
    "plots": False,
}


def sample_design_inits(n: int, count: int, seed: int):
    """Initial configurations on the reference discrete grid of inlet and
    lower-outlet positions, scaled to the working grid, with small smoke
    placement offsets."""
    rng = np.random.default_rng(seed)
    scale = n / 128.0
    inlet_choices = [79 * scale, 80 * scale, 81 * scale]
    lower_choices = [y * scale for y in range(44, 51)]
    upper_default = 81 * scale
    smoke_offsets = [(dy * scale, dx * scale) for dx in (0, 1) for dy in (-1, 0, 1)]
    configs = []
    for _ in range(count):
        inlet = float(rng.choice(inlet_choices))
        lower = float(rng.choice(lower_choices))
        off = smoke_offsets[int(rng.integers(len(smoke_offsets)))]
        configs.append({
            "boundary": [inlet, lower, float(upper_default)],
            "smoke_center": [n / 2.0 + off[0], n / 4.0 + off[1]],
        })
    return configs


def cmd_invert(cfg) -> int:
    from .inverse import AnnealSchedule, DesignProblem, evaluate_design, optimize_boundary

    if not cfg.get("checkpoint") or not cfg.get("out"):
        raise ConfigError("invert needs checkpoint and out paths")
    model, stats, _meta = load_checkpoint(cfg["checkpoint"])
    run_dir = make_run_dir(cfg["out"])
    handler = _setup_run_logging(run_dir)
    try:
        write_json(run_dir / "config.json", cfg)
        pc = cfg["problem"]
        n = int(pc["grid_n"])
        sched = AnnealSchedule(cfg["anneal"]["beta0"], cfg["anneal"]["beta1"], pc["iters"])
        inits = sample_design_inits(n, cfg["inits"]["count"], cfg["inits"]["seed"])
        runs_dir = run_dir / "design_runs"
        rows = []
        for ridx, init in enumerate(inits):
            p0 = BoundaryParams.from_vector(init["boundary"], n=n, width=pc.get("width")).clamp()
            problem = DesignProblem(
                p0=p0, targets=tuple(pc["targets"]), k_s=pc["k_s"], k_e=pc["k_e"],
                iters=pc["iters"], lr=pc["lr"], smoke_center=tuple(init["smoke_center"]),
                smoke_sigma=pc["smoke_sigma"], inflow=pc["inflow"], n_frames=pc["n_frames"],
            )
            final_p, history = optimize_boundary(model, problem, sched, stats=stats)
            model_fracs = history[-1]["fractions"]
            payload = {
                "run": ridx,
                "initial_p": init["boundary"],
                "smoke_center": init["smoke_center"],
                "final_p": final_p.as_vector().tolist(),
                "loss_curve": [h["loss"] for h in history],
                "model_fractions": [float(v) for v in model_fracs],
            }
            if cfg.get("evaluate_gt", True):
                gt = evaluate_design(final_p, problem, model_fractions=model_fracs)
                payload.update(gt)
            write_json(runs_dir / f"run_{ridx:02d}.json", payload)
            row = {
                "run": ridx,
                "final_loss": payload["loss_curve"][-1],
                "model_fraction_lo": payload["model_fractions"][0],
            }
            if "solver_fractions" in payload:
                row["solver_fraction_lo"] = payload["solver_fractions"][0]
                row["solver_error_lo"] = payload["target_error"][0]
            rows.append(row)
            logger.info("design run %d: model frac %.3f", ridx, row["model_fraction_lo"])
        aggregate = {
            "runs": len(rows),
            "median_model_fraction_lo": float(np.median([r["model_fraction_lo"] for r in rows])),
        }
        if rows and "solver_fraction_lo" in rows[0]:
            aggregate["median_solver_fraction_lo"] = float(np.median([r["solver_fraction_lo"] for r in rows]))
            aggregate["median_solver_error_lo"] = float(np.median([r["solver_error_lo"] for r in rows]))
        write_csv(run_dir / "aggregate.csv", rows)
        emit_report(aggregate, run_dir, "invert_report")
        print(json.dumps(aggregate, indent=2))
    finally:
        logging.getLogger().removeHandler(handler)
    return 0


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lepde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="dotted-path config override (JSON-typed value)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    g = sub.add_parser("generate", help="generate a ground-truth dataset")
    common(g)
    g.add_argument("--pde", choices=["burgers1d", "ns2d", "smoke2d"], default=None)
    g.add_argument("--scenario", choices=["E1", "E2", "E3"], default=None)
    g.add_argument("--n-train", type=int, default=None, dest="n_train")
    g.add_argument("--n-val", type=int, default=None, dest="n_val")
    g.add_argument("--n-test", type=int, default=None, dest="n_test")
    g.add_argument("--n-t", type=int, default=None, dest="n_t")
    g.add_argument("--dt", type=float, default=None)
    g.add_argument("--nx", type=int, default=None)
    g.add_argument("--grid-n", type=int, default=None, dest="grid_n")
    g.add_argument("--nu", type=float, default=None)

    t = sub.add_parser("train", help="train a surrogate on a dataset")
    common(t)
    t.add_argument("--dataset", default=None)

    e = sub.add_parser("evaluate", help="rollout metrics + runtimes on a split")
    common(e)
    e.add_argument("--dataset", default=None)
    e.add_argument("--checkpoint", default=None)

    r = sub.add_parser("rollout", help="dump one trajectory rollout")
    common(r)
    r.add_argument("--dataset", default=None)
    r.add_argument("--checkpoint", default=None)

    b = sub.add_parser("benchmark", help="latent-vs-full rollout timing")
    common(b)
    b.add_argument("--checkpoint", default=None)
    b.add_argument("--m", type=int, default=None)

    i = sub.add_parser("invert", help="inverse boundary design protocol")
    common(i)
    i.add_argument("--checkpoint", default=None)

    return parser


FLAG_MAPS = {
    "generate": {
        "seed": "seed", "out": "out", "pde": "pde", "scenario": "scenario",
        "n_train": "n_train", "n_val": "n_val", "n_test": "n_test",
        "n_t": "n_t", "dt": "dt", "nx": "grid.n_x", "grid_n": "grid.n", "nu": "solver.nu",
    },
    "train": {"seed": "seed", "out": "out", "dataset": "dataset"},
    "evaluate": {"seed": "seed", "out": "out", "dataset": "dataset", "checkpoint": "checkpoint"},
    "rollout": {"seed": "seed", "out": "out", "dataset": "dataset", "checkpoint": "checkpoint"},
    "benchmark": {"seed": "seed", "out": "out", "checkpoint": "checkpoint", "m": "m"},
    "invert": {"seed": "seed", "out": "out", "checkpoint": "checkpoint"},
}

DEFAULTS = {
    "generate": GENERATE_DEFAULTS,
    "train": TRAIN_DEFAULTS,
    "evaluate": EVALUATE_DEFAULTS,
    "rollout": ROLLOUT_DEFAULTS,
    "benchmark": BENCHMARK_DEFAULTS,
    "invert": INVERT_DEFAULTS,
}

COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "rollout": cmd_rollout,
    "benchmark": cmd_benchmark,
    "invert": cmd_invert,
}


def run(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args, DEFAULTS[args.command], FLAG_MAPS[args.command])
        validate_config(cfg, SCHEMAS[args.command])
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing path: {exc}", file=sys.stderr)
        return 3
    except LepdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
