"""Four-component surrogate: dynamic encoder, static encoder, latent
evolver, decoder.

The dynamic encoder is a strided conv stack ending in flatten + linear,
so the latent size d_z is fixed regardless of the grid. The evolver is a
5-layer MLP of width d_z acting on [z || z_p] with an additive residual
from z (forward-Euler flavor), so one application advances the system by
one bundle of S frames. The decoder mirrors the encoder, upsampling back
through the recorded encoder shapes.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import NormStats
from .errors import CheckpointConfigError, CheckpointError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    spatial_dims: int
    grid_shape: tuple
    in_channels: int = 1
    bundle: int = 1
    latent_dim: int = 64
    static_dim: int = 0
    param_dim: int = 0
    start_channels: int = 32
    depth: int = 4
    static_depth: int = 0
    static_kind: str = "vector"
    static_hidden: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid_shape", tuple(int(g) for g in self.grid_shape))
        if self.spatial_dims not in (1, 2):
            raise ValueError("spatial_dims must be 1 or 2")
        if len(self.grid_shape) != self.spatial_dims:
            raise ValueError("grid_shape rank must equal spatial_dims")
        if self.latent_dim < 1 or self.depth < 1:
            raise ValueError("latent_dim and depth must be >= 1")
        if self.start_channels % 2 != 0:
            raise ValueError("start_channels must be even (group norm uses 2 groups)")
        for extent in self.grid_shape:
            if extent >> self.depth < 1:
                raise ValueError(
                    f"{self.depth} stride-2 stages collapse extent {extent} below one cell"
                )
        if self.static_kind not in ("vector", "field"):
            raise ValueError("static_kind must be 'vector' or 'field'")
        if self.static_kind == "vector" and self.static_depth == 0 and self.static_dim != self.param_dim:
            raise ValueError("with no static layers, static_dim must equal param_dim (identity)")
        if self.static_kind == "field" and self.static_dim > 0 and self.static_depth < 1:
            raise ValueError("a field static encoder needs static_depth >= 1")

    @property
    def input_dim(self) -> int:
        return self.bundle * self.in_channels * int(np.prod(self.grid_shape))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_shape"] = list(self.grid_shape)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["grid_shape"] = tuple(d["grid_shape"])
        return ModelConfig(**d)


def config_hash(cfg: ModelConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _conv_nd(dims):
    return nn.Conv1d if dims == 1 else nn.Conv2d


def _deconv_nd(dims):
    return nn.ConvTranspose1d if dims == 1 else nn.ConvTranspose2d


def _stage_shapes(grid_shape, depth):
    """Spatial shapes after each stride-2 stage (floor division)."""
    shapes = [tuple(grid_shape)]
    for _ in range(depth):
        shapes.append(tuple(e // 2 for e in shapes[-1]))
    return shapes


class _ConvEncoder(nn.Module):
    """conv(3,1,1) + ELU, then `depth` blocks of conv(4,2,1) -> GN(2) -> ELU
    with channels C, 2C, ..., then flatten + linear to the latent size."""

    def __init__(self, dims, grid_shape, in_channels, start_channels, depth, out_dim):
        super().__init__()
        conv = _conv_nd(dims)
        self.shapes = _stage_shapes(grid_shape, depth)
        layers = [conv(in_channels, start_channels, kernel_size=3, stride=1, padding=1), nn.ELU()]
        ch = start_channels
        for i in range(depth):
            out_ch = start_channels * (2**i)
            layers += [
                conv(ch, out_ch, kernel_size=4, stride=2, padding=1),
                nn.GroupNorm(2, out_ch),
                nn.ELU(),
            ]
            ch = out_ch
        self.body = nn.Sequential(*layers)
        self.flat_dim = ch * int(np.prod(self.shapes[-1]))
        self.head = nn.Linear(self.flat_dim, out_dim)

    def forward(self, x):
        h = self.body(x)
        return self.head(h.flatten(start_dim=1))


class _ConvDecoder(nn.Module):
    """Linear from latent to the smallest encoder feature map, then deconv
    blocks walking the recorded shapes back up, then a (3,1,1) transposed
    conv with linear activation."""

    def __init__(self, dims, grid_shape, out_channels, start_channels, depth, latent_dim):
        super().__init__()
        deconv = _deconv_nd(dims)
        shapes = _stage_shapes(grid_shape, depth)
        top_ch = start_channels * (2 ** (depth - 1))
        self.base_shape = (top_ch,) + shapes[-1]
        self.head = nn.Linear(latent_dim, int(np.prod(self.base_shape)))
        layers = []
        ch = top_ch
        for i in range(depth - 1, -1, -1):
            out_ch = start_channels * (2 ** (i - 1)) if i >= 1 else start_channels
            target = shapes[i]
            source = shapes[i + 1]
            out_pad = tuple(t - 2 * s for t, s in zip(target, source))
            layers += [
                deconv(ch, out_ch, kernel_size=4, stride=2, padding=1,
                       output_padding=out_pad if dims > 1 else out_pad[0]),
                nn.GroupNorm(2, out_ch),
                nn.ELU(),
            ]
            ch = out_ch
        layers.append(deconv(ch, out_channels, kernel_size=3, stride=1, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, z):
        h = self.head(z).reshape((z.shape[0],) + self.base_shape)
        return self.body(h)


class _LatentEvolver(nn.Module):
    """5 layers of width d_z on [z || z_p]; ELU on the first three, linear
    on the last two; additive residual from z only."""

    def __init__(self, latent_dim, static_dim):
        super().__init__()
        d = latent_dim
        self.net = nn.Sequential(
            nn.Linear(d + static_dim, d), nn.ELU(),
            nn.Linear(d, d), nn.ELU(),
            nn.Linear(d, d), nn.ELU(),
            nn.Linear(d, d),
            nn.Linear(d, d),
        )

    def forward(self, z, z_p=None):
        if z_p is None or z_p.shape[-1] == 0:
            x = z
        else:
            if z_p.ndim == z.ndim + 1 and z_p.shape[0] == 1:
                z_p = z_p[0]
            elif z_p.ndim == z.ndim - 1:
                z_p = z_p.unsqueeze(0)
            if z_p.ndim == 2 and z.ndim == 2 and z_p.shape[0] == 1 and z.shape[0] > 1:
                z_p = z_p.expand(z.shape[0], -1)
            x = torch.cat([z, z_p], dim=-1)
        return self.net(x) + z


class _VectorStaticEncoder(nn.Module):
    """Identity when depth = 0; otherwise an MLP with ELU hidden layers and
    a linear last layer."""

    def __init__(self, param_dim, out_dim, depth, hidden=None):
        super().__init__()
        self.identity = depth == 0
        if self.identity:
            self.net = nn.Identity()
            return
        hidden = out_dim if hidden is None else hidden
        layers = []
        d_in = param_dim
        for _ in range(depth - 1):
            layers += [nn.Linear(d_in, hidden), nn.ELU()]
            d_in = hidden
        layers.append(nn.Linear(d_in, out_dim))
        self.net = nn.Sequential(*layers)

    def forward(self, p):
        return self.net(p)


class Model(nn.Module):
    """Bundles the four components with shape-checked entry points."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        merged_ch = cfg.bundle * cfg.in_channels
        self.encoder = _ConvEncoder(
            cfg.spatial_dims, cfg.grid_shape, merged_ch, cfg.start_channels, cfg.depth, cfg.latent_dim
        )
        self.decoder = _ConvDecoder(
            cfg.spatial_dims, cfg.grid_shape, merged_ch, cfg.start_channels, cfg.depth, cfg.latent_dim
        )
        self.evolver = _LatentEvolver(cfg.latent_dim, cfg.static_dim)
        if cfg.static_dim == 0:
            self.static_encoder = None
        elif cfg.static_kind == "vector":
            self.static_encoder = _VectorStaticEncoder(
                cfg.param_dim, cfg.static_dim, cfg.static_depth, cfg.static_hidden
            )
        else:
            self.static_encoder = _ConvEncoder(
                cfg.spatial_dims, cfg.grid_shape, 1, cfg.start_channels, cfg.static_depth, cfg.static_dim
            )

    # -- shape plumbing ----------------------------------------------------
    @property
    def dtype(self):
        return next(self.parameters()).dtype

    def _batch_states(self, states):
        t = torch.as_tensor(states).to(self.dtype)
        expected = (self.cfg.bundle, self.cfg.in_channels) + self.cfg.grid_shape
        if t.shape == expected:
            return t.unsqueeze(0), True
        if t.shape[1:] == expected:
            return t, False
        raise ValueError(f"state shape {tuple(t.shape)} does not match {expected} (optionally batched)")

    def encode(self, states) -> torch.Tensor:
        """[S, C, spatial...] (or batched) -> latent z of length d_z."""
        x, squeeze = self._batch_states(states)
        x = x.reshape(x.shape[0], -1, *self.cfg.grid_shape)
        z = self.encoder(x)
        return z[0] if squeeze else z

    def encode_static(self, params) -> torch.Tensor | None:
        """Static parameter (vector or mask field) -> z_p of length d_zp."""
        if self.cfg.static_dim == 0:
            return None
        p = torch.as_tensor(params)
        if p.dtype != self.dtype and not p.requires_grad:
            p = p.to(self.dtype)
        if self.cfg.static_kind == "vector":
            if p.shape[-1] != self.cfg.param_dim:
                raise ValueError(f"parameter dim {p.shape[-1]} != {self.cfg.param_dim}")
            return self.static_encoder(p)
        squeeze = False
        if p.shape == (1,) + self.cfg.grid_shape:
            p = p.unsqueeze(0)
            squeeze = True
        elif p.shape == self.cfg.grid_shape:
            p = p.reshape((1, 1) + self.cfg.grid_shape)
            squeeze = True
        elif p.shape[1:] != (1,) + self.cfg.grid_shape:
            raise ValueError(f"mask shape {tuple(p.shape)} does not match grid {self.cfg.grid_shape}")
        z_p = self.static_encoder(p)
        return z_p[0] if squeeze else z_p

    def evolve(self, z, z_p=None) -> torch.Tensor:
        if z.shape[-1] != self.cfg.latent_dim:
            raise ValueError(f"latent dim {z.shape[-1]} != {self.cfg.latent_dim}")
        if z_p is not None and z_p.shape[-1] not in (0, self.cfg.static_dim):
            raise ValueError(f"static dim {z_p.shape[-1]} != {self.cfg.static_dim}")
        return self.evolver(z, z_p)

    def decode(self, z) -> torch.Tensor:
        if z.shape[-1] != self.cfg.latent_dim:
            raise ValueError(f"latent dim {z.shape[-1]} != {self.cfg.latent_dim}")
        squeeze = z.ndim == 1
        zb = z.unsqueeze(0) if squeeze else z
        out = self.decoder(zb)
        out = out.reshape(out.shape[0], self.cfg.bundle, self.cfg.in_channels, *self.cfg.grid_shape)
        return out[0] if squeeze else out

    # -- bookkeeping ---------------------------------------------------------
    def parameter_counts(self) -> dict:
        evo = sum(p.numel() for p in self.evolver.parameters())
        total = sum(p.numel() for p in self.parameters())
        return {"total": total, "evolution": evo}

    def compression_ratio(self) -> float:
        return self.cfg.input_dim / self.cfg.latent_dim


def _init_parameters(model: nn.Module, seed: int):
    """Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights
    and biases; group norms keep their (1, 0) affine defaults."""
    gen = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, (nn.Linear, nn.Conv1d, nn.Conv2d, nn.ConvTranspose1d, nn.ConvTranspose2d)):
            w = module.weight
            if isinstance(module, nn.Linear):
                fan_in = w.shape[1]
            else:
                fan_in = w.shape[1] * math.prod(module.kernel_size)
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                w.uniform_(-bound, bound, generator=gen)
                if module.bias is not None:
                    module.bias.uniform_(-bound, bound, generator=gen)


def build_model(cfg: ModelConfig, seed: int = 0) -> Model:
    """Construct and deterministically initialize a model."""
    model = Model(cfg)
    _init_parameters(model, seed)
    return model


# -- checkpoints -------------------------------------------------------------

def _param_entries(model: Model):
    return list(model.state_dict().items())


def save_checkpoint(model: Model, stats: NormStats | None, path, extra_meta: dict | None = None):
    """Write checkpoint.json + params.bin (little-endian float64)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = _param_entries(model)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "config_hash": config_hash(model.cfg),
        "dtype": str(next(model.parameters()).dtype).replace("torch.", ""),
        "norm_stats": stats.to_dict() if stats is not None else None,
        "param_order": [k for k, _ in entries],
        "param_shapes": {k: list(v.shape) for k, v in entries},
        "training_state": extra_meta or {},
    }
    blob = np.concatenate([v.detach().cpu().numpy().astype("<f8").ravel() for _, v in entries])
    blob.tofile(path / "params.bin")
    (path / "checkpoint.json").write_text(json.dumps(meta, indent=2))


def load_checkpoint(path, expected_config: ModelConfig | None = None):
    """Rebuild the model from a checkpoint; returns (model, stats, meta).

    If expected_config is given, its hash must match the stored one.
    """
    path = Path(path)
    meta_file = path / "checkpoint.json"
    if not meta_file.exists():
        raise CheckpointError(f"no checkpoint.json under {path}")
    meta = json.loads(meta_file.read_text())
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')}")
    cfg = ModelConfig.from_dict(meta["config"])
    if expected_config is not None and config_hash(expected_config) != meta["config_hash"]:
        raise CheckpointConfigError(
            f"checkpoint config hash {meta['config_hash'][:12]} does not match the expected config"
        )
    model = Model(cfg)
    dtype = getattr(torch, meta.get("dtype", "float32"))
    model = model.to(dtype)
    flat = np.fromfile(path / "params.bin", dtype="<f8")
    state = {}
    offset = 0
    for name in meta["param_order"]:
        shape = tuple(meta["param_shapes"][name])
        size = int(np.prod(shape)) if shape else 1
        chunk = flat[offset : offset + size]
        if chunk.size != size:
            raise CheckpointError("params.bin is truncated")
        state[name] = torch.from_numpy(chunk.reshape(shape).copy()).to(dtype)
        offset += size
    if offset != flat.size:
        raise CheckpointError("params.bin has trailing data")
    model.load_state_dict(state)
    stats = NormStats.from_dict(meta["norm_stats"]) if meta.get("norm_stats") else None
    return model, stats, meta
