"""The residual upsampling regression network: pose(48) -> pressure(60x21x2).

A fully connected stem lifts the 48 pose values to a 4x3x512 feature map.
Four residual blocks each nearest-neighbor upsample their input and merge
four parallel branches: separable 5x5 and 3x3 convolutions (each followed
by batch norm, spatial dropout, and leaky ReLU), a 1x1 projection with
batch norm only, and a bottlenecked fully connected branch over the
flattened upsampled input.  The head sums a plain 3x3 convolution branch
(cropped from 64x24 down to 60x21) with a second bottlenecked fully
connected branch, squashes through a sigmoid, and zeroes everything
outside the binary footmask, so masked-out cells are exactly 0 and valid
cells lie strictly inside (0, 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import pressure
from .autodiff import nn, ops
from .autodiff.tensor import Parameter, Tensor
from .errors import ConfigError, ShapeError

CONV_KERNELS = (5, 3)  # the two separable paths of every block


@dataclass
class PressNetConfig:
    input_dim: int = 48
    stem_fc_out: int = 6144
    stem_reshape: tuple = (4, 3, 512)
    block_scales: tuple = ((2, 1), (2, 2), (2, 2), (2, 2))
    block_out_channels: tuple = (256, 128, 64, 64)
    head_fc_sizes: tuple = (10, 2520)
    head_crop: tuple = (60, 21)
    block_fc_bottleneck: int = 10
    dropout_rate: float = 0.1
    leaky_alpha: float = 0.2
    output_channels: int = 2

    def validate(self) -> None:
        h, w, c = self.stem_reshape
        if self.stem_fc_out != h * w * c:
            raise ConfigError(
                f"stem_fc_out={self.stem_fc_out} must equal "
                f"product(stem_reshape)={h * w * c} ({h}x{w}x{c})"
            )
        if len(self.block_scales) != len(self.block_out_channels):
            raise ConfigError(
                f"{len(self.block_scales)} block scales vs "
                f"{len(self.block_out_channels)} channel counts"
            )
        if not self.block_scales:
            raise ConfigError("at least one residual block is required")
        for res_h, res_w in self.resolution_chain()[1:]:
            if res_h < 1 or res_w < 1:
                raise ConfigError("resolution chain collapsed below 1x1")
        final_h, final_w = self.resolution_chain()[-1]
        crop_h, crop_w = self.head_crop
        if crop_h > final_h or crop_w > final_w:
            raise ConfigError(
                f"head_crop {self.head_crop} must fit inside the final "
                f"resolution {final_h}x{final_w}"
            )
        expected = crop_h * crop_w * self.output_channels
        if self.head_fc_sizes[-1] != expected:
            raise ConfigError(
                f"head_fc_sizes[-1]={self.head_fc_sizes[-1]} must equal "
                f"crop area x channels = {crop_h}x{crop_w}x{self.output_channels} = {expected}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not 0.0 < self.leaky_alpha < 1.0:
            raise ConfigError(f"leaky_alpha must lie in (0, 1), got {self.leaky_alpha}")

    def resolution_chain(self) -> list:
        """Spatial sizes entering the head: stem reshape, then each block's output."""
        chain = [(self.stem_reshape[0], self.stem_reshape[1])]
        for sy, sx in self.block_scales:
            h, w = chain[-1]
            chain.append((h * sy, w * sx))
        return chain

    def to_json(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "stem_fc_out": self.stem_fc_out,
            "stem_reshape": list(self.stem_reshape),
            "block_scales": [list(s) for s in self.block_scales],
            "block_out_channels": list(self.block_out_channels),
            "head_fc_sizes": list(self.head_fc_sizes),
            "head_crop": list(self.head_crop),
            "block_fc_bottleneck": self.block_fc_bottleneck,
            "dropout_rate": self.dropout_rate,
            "leaky_alpha": self.leaky_alpha,
            "output_channels": self.output_channels,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PressNetConfig":
        def tup(key, default):
            raw = payload.get(key, default)
            return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in raw)

        return cls(
            input_dim=payload.get("input_dim", 48),
            stem_fc_out=payload.get("stem_fc_out", 6144),
            stem_reshape=tuple(payload.get("stem_reshape", (4, 3, 512))),
            block_scales=tup("block_scales", ((2, 1), (2, 2), (2, 2), (2, 2))),
            block_out_channels=tuple(payload.get("block_out_channels", (256, 128, 64, 64))),
            head_fc_sizes=tuple(payload.get("head_fc_sizes", (10, 2520))),
            head_crop=tuple(payload.get("head_crop", (60, 21))),
            block_fc_bottleneck=payload.get("block_fc_bottleneck", 10),
            dropout_rate=payload.get("dropout_rate", 0.1),
            leaky_alpha=payload.get("leaky_alpha", 0.2),
            output_channels=payload.get("output_channels", 2),
        )


class ResidualBlock:
    """Upsample, then sum four parallel branches at the new resolution."""

    def __init__(self, index: int, in_channels: int, out_channels: int, scale, in_hw, cfg,
                 rng, dtype):
        self.scale = tuple(int(s) for s in scale)
        self.alpha = cfg.leaky_alpha
        name = f"block{index}"
        self.out_hw = (in_hw[0] * self.scale[0], in_hw[1] * self.scale[1])
        self.out_channels = out_channels
        k5, k3 = CONV_KERNELS
        self.conv5 = nn.SeparableConv2d(k5, in_channels, out_channels, f"{name}.conv5x5", rng, dtype)
        self.bn5 = nn.BatchNorm2d(out_channels, f"{name}.conv5x5.bn", dtype=dtype)
        self.conv3 = nn.SeparableConv2d(k3, in_channels, out_channels, f"{name}.conv3x3", rng, dtype)
        self.bn3 = nn.BatchNorm2d(out_channels, f"{name}.conv3x3.bn", dtype=dtype)
        self.conv1 = nn.PointwiseConv2d(in_channels, out_channels, f"{name}.conv1x1", rng, dtype)
        self.bn1 = nn.BatchNorm2d(out_channels, f"{name}.conv1x1.bn", dtype=dtype)
        self.dropout = nn.SpatialDropout(cfg.dropout_rate)
        flat_in = self.out_hw[0] * self.out_hw[1] * in_channels
        flat_out = self.out_hw[0] * self.out_hw[1] * out_channels
        self.fc1 = nn.Linear(flat_in, cfg.block_fc_bottleneck, f"{name}.fc1", rng, dtype)
        # batch norm on the bottleneck: without it the un-normalized FC
        # branches amplify each other block to block and the first optimizer
        # steps blow the activations past float range
        self.fc_bn = nn.BatchNorm1d(cfg.block_fc_bottleneck, f"{name}.fc1.bn", dtype=dtype)
        self.fc2 = nn.Linear(cfg.block_fc_bottleneck, flat_out, f"{name}.fc2", rng, dtype)

    def forward(self, x: Tensor, mode: str, rng=None) -> Tensor:
        up = ops.upsample_nearest2d(x, self.scale)
        batch = up.shape[0]

        def conv_path(conv, bn):
            h = bn(conv(up), mode)
            h = self.dropout(h, mode, rng)
            return ops.leaky_relu(h, self.alpha)

        p5 = conv_path(self.conv5, self.bn5)
        p3 = conv_path(self.conv3, self.bn3)
        p1 = self.bn1(self.conv1(up), mode)  # pure projection path
        flat = ops.reshape(up, (batch, -1))
        f = ops.leaky_relu(self.fc_bn(self.fc1(flat), mode), self.alpha)
        f = ops.reshape(self.fc2(f), (batch, *self.out_hw, self.out_channels))
        return ops.add(ops.add(p5, p3), ops.add(p1, f))

    def parameters(self):
        layers = (self.conv5, self.bn5, self.conv3, self.bn3, self.conv1, self.bn1,
                  self.fc1, self.fc_bn, self.fc2)
        return [p for layer in layers for p in layer.parameters()]

    def batch_norms(self):
        return [self.bn5, self.bn3, self.bn1, self.fc_bn]


class Head:
    """3x3 convolution branch cropped to the grid, plus a bottlenecked FC branch."""

    def __init__(self, in_channels: int, in_hw, cfg, rng, dtype):
        self.crop = cfg.head_crop
        self.alpha = cfg.leaky_alpha
        self.out_channels = cfg.output_channels
        self.conv = nn.Conv2d(3, in_channels, cfg.output_channels, "head.conv", rng, dtype)
        flat_in = in_hw[0] * in_hw[1] * in_channels
        self.fc1 = nn.Linear(flat_in, cfg.head_fc_sizes[0], "head.fc1", rng, dtype)
        self.fc_bn = nn.BatchNorm1d(cfg.head_fc_sizes[0], "head.fc1.bn", dtype=dtype)
        self.fc2 = nn.Linear(cfg.head_fc_sizes[0], cfg.head_fc_sizes[1], "head.fc2", rng, dtype)

    def forward(self, x: Tensor, footmask: np.ndarray, mode: str) -> Tensor:
        batch = x.shape[0]
        conv_out = ops.crop2d(self.conv(x), *self.crop)
        flat = ops.reshape(x, (batch, -1))
        f = ops.leaky_relu(self.fc_bn(self.fc1(flat), mode), self.alpha)
        fc_out = ops.reshape(self.fc2(f), (batch, *self.crop, self.out_channels))
        squashed = ops.sigmoid(ops.add(conv_out, fc_out))
        # mask after the sigmoid so invalid cells are exactly 0, matching the
        # zeros of cleaned ground truth
        return ops.mul_constant(squashed, footmask)

    def parameters(self):
        return [p for layer in (self.conv, self.fc1, self.fc_bn, self.fc2)
                for p in layer.parameters()]


class PressNet:
    def __init__(self, config: PressNetConfig, seed: int, footmask: np.ndarray, dtype=np.float32):
        config.validate()
        expected_mask = (*config.head_crop, config.output_channels)
        footmask = np.asarray(footmask, dtype=bool)
        if footmask.shape != expected_mask:
            raise ShapeError(f"footmask shape {footmask.shape} must be {expected_mask}")
        self.config = config
        self.seed = int(seed)
        self.dtype = dtype
        self.footmask = footmask
        self._mask_float = footmask.astype(dtype)

        rng = np.random.default_rng(seed)
        self.stem = nn.Linear(config.input_dim, config.stem_fc_out, "stem.fc", rng, dtype)
        self.blocks = []
        chain = config.resolution_chain()
        in_channels = config.stem_reshape[2]
        for i, (scale, out_channels) in enumerate(zip(config.block_scales, config.block_out_channels)):
            block = ResidualBlock(i + 1, in_channels, out_channels, scale, chain[i], config,
                                  rng, dtype)
            self.blocks.append(block)
            in_channels = out_channels
        self.head = Head(in_channels, chain[-1], config, rng, dtype)
        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            raise ConfigError("duplicate parameter names in model")

    def parameters(self) -> list:
        params = list(self.stem.parameters())
        for block in self.blocks:
            params.extend(block.parameters())
        params.extend(self.head.parameters())
        return params

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def forward(self, poses, mode: str = "eval", rng: Optional[np.random.Generator] = None) -> Tensor:
        """Run a batch of normalized 48-value poses to masked [0, 1] grids."""
        x = poses if isinstance(poses, Tensor) else Tensor(np.asarray(poses, dtype=self.dtype))
        if x.data.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ShapeError(f"expected input (B, {self.config.input_dim}), got {x.shape}")
        if mode == "train" and self.config.dropout_rate > 0.0 and rng is None:
            raise ConfigError("train-mode forward needs an rng for dropout")
        batch = x.shape[0]
        h = ops.leaky_relu(self.stem(x), self.config.leaky_alpha)
        h = ops.reshape(h, (batch, *self.config.stem_reshape))
        for block in self.blocks:
            h = block.forward(h, mode, rng)
        return self.head.forward(h, self._mask_float, mode)

    def batch_norms(self):
        norms = [bn for block in self.blocks for bn in block.batch_norms()]
        norms.append(self.head.fc_bn)
        return norms

    def state_arrays(self) -> list:
        """Named non-trainable state: batch-norm running statistics."""
        out = []
        for bn in self.batch_norms():
            prefix = bn.gamma.name.rsplit(".", 1)[0]
            out.append((f"{prefix}.running_mean", bn.state.running_mean))
            out.append((f"{prefix}.running_var", bn.state.running_var))
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        for bn in self.batch_norms():
            prefix = bn.gamma.name.rsplit(".", 1)[0]
            mean = arrays.get(f"{prefix}.running_mean")
            var = arrays.get(f"{prefix}.running_var")
            if mean is None or var is None:
                raise ShapeError(f"missing running statistics for {prefix}")
            bn.state.running_mean = mean.astype(bn.state.running_mean.dtype)
            bn.state.running_var = var.astype(bn.state.running_var.dtype)

    def save_config(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.config.to_json(), fh, indent=2)
            fh.write("\n")


def build_pressnet(config: Optional[PressNetConfig] = None, seed: int = 42,
                   footmask: Optional[np.ndarray] = None, dtype=np.float32) -> PressNet:
    """Deterministically initialize a model; same seed -> identical parameters."""
    if config is None:
        config = PressNetConfig()
    if footmask is None:
        footmask = pressure.canonical_footmask()
    return PressNet(config, seed, footmask, dtype=dtype)


def parameter_count(model: PressNet) -> int:
    return model.parameter_count()
