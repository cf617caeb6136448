"""Dataset persistence, window extraction, normalization, fixed noise.

On disk a dataset is a directory with one meta.json plus, per trajectory,
a raw little-endian float32 binary (row-major, [n_t, C, spatial...]) and
a JSON sidecar holding the static parameter vector and generation seed.
The layout is deliberately trivial to parse from any language.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetPayloadError, DatasetSchemaError, DatasetVersionError
from .solvers.burgers import PDEParams1D
from .solvers.grids import Grid1D, Grid2D
from .solvers.smoke import BoundaryParams
from .solvers.trajectory import Trajectory

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
STD_FLOOR = 1e-8


@dataclass
class DatasetMeta:
    pde_family: str
    grid: dict
    dt: float
    channels: list
    params_schema: dict
    splits: dict
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "pde_family": self.pde_family,
            "grid": self.grid,
            "dt": self.dt,
            "channels": list(self.channels),
            "params_schema": self.params_schema,
            "splits": {k: list(v) for k, v in self.splits.items()},
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetMeta":
        return DatasetMeta(
            pde_family=d["pde_family"],
            grid=d["grid"],
            dt=d["dt"],
            channels=d["channels"],
            params_schema=d["params_schema"],
            splits=d["splits"],
            format_version=d["format_version"],
        )

    def spatial_shape(self) -> tuple:
        if "n_x" in self.grid:
            return (int(self.grid["n_x"]),)
        return (int(self.grid["n"]),) * 2

    def grid_object(self):
        if "n_x" in self.grid:
            return Grid1D(n_x=int(self.grid["n_x"]), length=float(self.grid["length"]),
                          periodic=bool(self.grid.get("periodic", True)))
        return Grid2D(n=int(self.grid["n"]), length=float(self.grid.get("length", 1.0)),
                      periodic=bool(self.grid.get("periodic", True)))


@dataclass
class Dataset:
    meta: DatasetMeta
    trajectories: list
    path: Path | None = None

    def split_indices(self, split: str) -> list:
        try:
            return list(self.meta.splits[split])
        except KeyError:
            raise KeyError(f"unknown split {split!r}; have {sorted(self.meta.splits)}") from None

    def split_trajectories(self, split: str) -> list:
        return [self.trajectories[i] for i in self.split_indices(split)]


@dataclass
class NormStats:
    """Per-channel mean/std computed on the training split (std floored)."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(d):
        return NormStats(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))

    @staticmethod
    def identity(n_channels: int) -> "NormStats":
        return NormStats(np.zeros(n_channels), np.ones(n_channels))


def params_to_vector(params, schema: dict) -> np.ndarray:
    if isinstance(params, PDEParams1D):
        return params.as_vector()
    if isinstance(params, BoundaryParams):
        return params.as_vector()
    vec = np.atleast_1d(np.asarray(params, dtype=np.float64))
    if vec.shape != (int(schema["dim"]),):
        raise DatasetSchemaError(f"parameter vector shape {vec.shape} != schema dim {schema['dim']}")
    return vec


def params_from_vector(vec: np.ndarray, schema: dict):
    kind = schema.get("kind")
    if kind == "coeffs3":
        return PDEParams1D.from_vector(vec)
    if kind == "boundary_box":
        geo = schema.get("geometry", {})
        return BoundaryParams.from_vector(vec, n=int(geo.get("n", 32)), width=geo.get("width"))
    if kind == "viscosity":
        return float(vec[0])
    return np.asarray(vec, dtype=np.float64)


def _traj_paths(path: Path, index: int):
    stem = f"traj_{index:05d}"
    return path / f"{stem}.bin", path / f"{stem}.json"


def write_dataset(trajs: list, meta: DatasetMeta, path) -> Dataset:
    """Write trajectories + metadata; returns the in-memory handle.

    States are stored exactly as held in memory (float32, little-endian),
    so a write/read round-trip is bit-identical.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    expected = meta.spatial_shape()
    n_ch = len(meta.channels)
    assigned = sorted(i for idxs in meta.splits.values() for i in idxs)
    if assigned != list(range(len(trajs))):
        raise DatasetSchemaError("splits must be a disjoint, exhaustive cover of trajectory indices")
    for i, traj in enumerate(trajs):
        if traj.spatial_shape != expected:
            raise DatasetSchemaError(f"trajectory {i} spatial shape {traj.spatial_shape} != grid {expected}")
        if traj.n_channels != n_ch:
            raise DatasetSchemaError(f"trajectory {i} has {traj.n_channels} channels, schema lists {n_ch}")
        bin_path, side_path = _traj_paths(path, i)
        states = np.ascontiguousarray(traj.states, dtype="<f4")
        states.tofile(bin_path)
        sidecar = {
            "params": params_to_vector(traj.params, meta.params_schema).tolist(),
            "seed": int(traj.seed),
            "n_t": int(traj.n_t),
        }
        for key, val in traj.extras.items():
            sidecar.setdefault("extras", {})[key] = np.asarray(val).tolist()
        side_path.write_text(json.dumps(sidecar))
    (path / "meta.json").write_text(json.dumps(meta.to_dict(), indent=2))
    return Dataset(meta=meta, trajectories=list(trajs), path=path)


def read_dataset(path) -> Dataset:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no meta.json under {path}")
    raw = json.loads(meta_path.read_text())
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetVersionError(f"format_version {version} unsupported (expected {FORMAT_VERSION})")
    meta = DatasetMeta.from_dict(raw)
    spatial = meta.spatial_shape()
    n_ch = len(meta.channels)
    frame_elems = n_ch * int(np.prod(spatial))

    all_indices = [i for idxs in meta.splits.values() for i in idxs]
    if not all_indices:
        raise DatasetSchemaError("meta.json declares no trajectories in any split")
    n_traj = 1 + max(all_indices)
    grid = meta.grid_object()
    trajs = []
    for i in range(n_traj):
        bin_path, side_path = _traj_paths(path, i)
        if not bin_path.exists() or not side_path.exists():
            raise DatasetPayloadError(f"missing files for trajectory {i}")
        flat = np.fromfile(bin_path, dtype="<f4")
        if flat.size == 0 or flat.size % frame_elems != 0:
            raise DatasetPayloadError(
                f"trajectory {i}: payload of {flat.size} floats is not a multiple of {frame_elems}"
            )
        side = json.loads(side_path.read_text())
        n_t = flat.size // frame_elems
        if side.get("n_t") is not None and int(side["n_t"]) != n_t:
            raise DatasetPayloadError(f"trajectory {i}: payload holds {n_t} frames, sidecar says {side['n_t']}")
        states = flat.reshape((n_t, n_ch) + spatial)
        params = params_from_vector(np.asarray(side["params"], dtype=np.float64), meta.params_schema)
        extras = {k: np.asarray(v) for k, v in side.get("extras", {}).items()}
        trajs.append(Trajectory(states=states, dt=meta.dt, grid=grid, params=params,
                                seed=int(side["seed"]), extras=extras))
    return Dataset(meta=meta, trajectories=trajs, path=path)


@dataclass
class WindowBatch:
    """Temporally bundled training samples.

    inputs  [B, S, C, spatial...]           window starting at `start`
    targets [B, M, S, C, spatial...]        the S*m-step futures, m = 1..M
    params  [B, P]                          static parameter vectors
    indices list of (trajectory, start)     provenance
    """

    inputs: np.ndarray
    targets: np.ndarray
    params: np.ndarray
    indices: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]


def window_starts(n_t: int, bundle: int, horizon: int, stride: int) -> list:
    """Start offsets whose input bundle and all future bundles fit."""
    span = bundle * (horizon + 1)
    if n_t < span:
        return []
    return list(range(0, n_t - span + 1, stride))


def count_windows(n_t: int, bundle: int, horizon: int, stride: int) -> int:
    span = bundle * (horizon + 1)
    if n_t < span:
        return 0
    return (n_t - span) // stride + 1


def window_index(dataset: Dataset, split: str, bundle: int, horizon: int, stride: int | None = None) -> list:
    """All (trajectory, start) pairs for a split; short trajectories are
    skipped with a logged count."""
    stride = bundle if stride is None else stride
    index = []
    skipped = 0
    for ti in dataset.split_indices(split):
        starts = window_starts(dataset.trajectories[ti].n_t, bundle, horizon, stride)
        if not starts:
            skipped += 1
            continue
        index.extend((ti, s) for s in starts)
    if skipped:
        logger.warning("skipped %d trajectories shorter than S*(M+1) frames", skipped)
    return index


def gather_window(dataset: Dataset, ti: int, start: int, bundle: int, horizon: int):
    states = dataset.trajectories[ti].states
    inp = states[start : start + bundle]
    tgt = np.stack(
        [states[start + bundle * m : start + bundle * (m + 1)] for m in range(1, horizon + 1)]
    )
    return inp, tgt


def make_windows(
    dataset: Dataset,
    split: str,
    bundle: int,
    horizon: int,
    stride: int | None = None,
    batch_size: int = 32,
    shuffle: bool = False,
    rng: np.random.Generator | None = None,
    stats: "NormStats | None" = None,
):
    """Yield WindowBatch objects covering every admissible window once.

    Windows never cross trajectory boundaries. Deterministic given the rng
    state; with shuffle=False the order is (trajectory, start) ascending.
    """
    index = window_index(dataset, split, bundle, horizon, stride)
    order = np.arange(len(index))
    if shuffle:
        if rng is None:
            rng = np.random.default_rng(0)
        rng.shuffle(order)
    schema = dataset.meta.params_schema
    for lo in range(0, len(index), batch_size):
        chunk = [index[k] for k in order[lo : lo + batch_size]]
        inputs, targets, params = [], [], []
        for ti, start in chunk:
            inp, tgt = gather_window(dataset, ti, start, bundle, horizon)
            inputs.append(inp)
            targets.append(tgt)
            params.append(params_to_vector(dataset.trajectories[ti].params, schema))
        batch = WindowBatch(
            inputs=np.stack(inputs).astype(np.float32),
            targets=np.stack(targets).astype(np.float32),
            params=np.stack(params).astype(np.float32),
            indices=chunk,
        )
        if stats is not None:
            batch = WindowBatch(
                inputs=apply_normalization(batch.inputs, stats),
                targets=apply_normalization(batch.targets, stats),
                params=batch.params,
                indices=batch.indices,
            )
        yield batch


def compute_norm_stats(dataset: Dataset, split: str = "train") -> NormStats:
    """Per-channel standardization statistics from the given split only."""
    trajs = dataset.split_trajectories(split)
    if not trajs:
        raise ValueError(f"split {split!r} is empty")
    n_ch = trajs[0].n_channels
    count = 0
    total = np.zeros(n_ch, dtype=np.float64)
    total_sq = np.zeros(n_ch, dtype=np.float64)
    for traj in trajs:
        flat = traj.states.astype(np.float64).reshape(traj.n_t, n_ch, -1)
        count += flat.shape[0] * flat.shape[2]
        total += flat.sum(axis=(0, 2))
        total_sq += (flat**2).sum(axis=(0, 2))
    mean = total / count
    var = np.maximum(total_sq / count - mean**2, 0.0)
    std = np.sqrt(var)
    floored = std < STD_FLOOR
    if floored.any():
        logger.warning("channel std floored at %.0e for channels %s", STD_FLOOR, np.where(floored)[0].tolist())
    return NormStats(mean=mean, std=np.maximum(std, STD_FLOOR))


def _broadcast(stats_vec: np.ndarray, states: np.ndarray, channel_axis: int):
    shape = [1] * states.ndim
    shape[channel_axis] = -1
    return stats_vec.reshape(shape)


def apply_normalization(states: np.ndarray, stats: NormStats, channel_axis: int | None = None) -> np.ndarray:
    """(x - mean) / std per channel. The channel axis is located by matching
    the stats length, searching from the right."""
    axis = _locate_channel_axis(states, stats) if channel_axis is None else channel_axis
    mean = _broadcast(stats.mean, states, axis)
    std = _broadcast(stats.std, states, axis)
    return ((states - mean) / std).astype(states.dtype)


def invert_normalization(states: np.ndarray, stats: NormStats, channel_axis: int | None = None) -> np.ndarray:
    axis = _locate_channel_axis(states, stats) if channel_axis is None else channel_axis
    mean = _broadcast(stats.mean, states, axis)
    std = _broadcast(stats.std, states, axis)
    return (states * std + mean).astype(states.dtype)


def _locate_channel_axis(states: np.ndarray, stats: NormStats) -> int:
    n_ch = stats.mean.shape[0]
    # channel axis sits right before the spatial axes; spatial rank is fixed
    # by the grid, so search the two candidates (1D and 2D layouts).
    for n_spatial in (1, 2):
        axis = states.ndim - 1 - n_spatial
        if 0 <= axis and states.shape[axis] == n_ch:
            return axis
    raise DatasetSchemaError(
        f"cannot locate a channel axis of size {n_ch} in state shape {states.shape}"
    )


def inject_fixed_noise(dataset: Dataset, amplitude: float, seed: int) -> Dataset:
    """Add frozen i.i.d. Gaussian noise (std = amplitude) to every state
    element of every split. Regenerating with the same seed reproduces the
    corrupted dataset exactly."""
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if amplitude == 0:
        return dataset
    noisy = []
    for i, traj in enumerate(dataset.trajectories):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        noise = rng.standard_normal(traj.states.shape).astype(np.float32) * np.float32(amplitude)
        noisy.append(
            Trajectory(
                states=traj.states + noise,
                dt=traj.dt,
                grid=traj.grid,
                params=traj.params,
                seed=traj.seed,
                extras=dict(traj.extras),
            )
        )
    return Dataset(meta=dataset.meta, trajectories=noisy, path=None)
