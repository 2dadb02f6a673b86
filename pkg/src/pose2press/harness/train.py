"""Training loop: seeded batching, the two-level learning-rate schedule,
validation tracking, and checkpointing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..autodiff import AdamState, Parameter, Tensor, adam_step, mse_loss, no_grad, save_checkpoint, zero_grads
from ..errors import ConfigError, DataError, NumericalError
from ..pose import PoseNormStats, fit_norm_stats
from ..pressnet import PressNet, PressNetConfig
from ..pressure import fit_global_max
from .data import build_arrays, load_takes
from .manifest import Manifest
from .splits import SplitSpec

LR_DROP_AFTER_EPOCH = 12  # epochs 1..12 at lr_initial, later ones at lr_after_epoch_12


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr_initial: float = 1e-3
    lr_after_epoch_12: float = 1e-5
    seed: int = 42
    dropout_rate: float = 0.1
    precision: str = "float32"

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    def lr_for_epoch(self, epoch: int) -> float:
        """1-indexed; a step function with its single drop after epoch 12."""
        return self.lr_initial if epoch <= LR_DROP_AFTER_EPOCH else self.lr_after_epoch_12

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_initial": self.lr_initial,
            "lr_after_epoch_12": self.lr_after_epoch_12,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
            "precision": self.precision,
        }

    @classmethod
    def from_json_file(cls, path) -> "TrainConfig":
        with open(path) as fh:
            payload = json.load(fh)
        allowed = {"epochs", "batch_size", "lr_initial", "lr_after_epoch_12", "seed",
                   "dropout_rate", "precision"}
        unknown = set(payload) - allowed
        if unknown:
            raise ConfigError(f"{path}: unknown training options {sorted(unknown)}")
        return cls(**payload)


@dataclass
class TrainResult:
    model: PressNet
    stats: PoseNormStats
    global_max: float
    step_losses: list
    epoch_train_losses: list
    epoch_val_losses: list
    lr_trace: list
    best_epoch: Optional[int]
    best_val_mse: Optional[float]
    checkpoint_path: Optional[Path] = None
    skipped_frames: int = 0


def eval_mse(model: PressNet, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> float:
    """Dataset MSE in eval mode (dropout off, running batch-norm statistics)."""
    total = 0.0
    with no_grad():
        for start in range(0, len(x), batch_size):
            xb = x[start : start + batch_size]
            yb = y[start : start + batch_size]
            out = model.forward(xb, "eval")
            total += float(((out.data - yb) ** 2).mean()) * len(xb)
    return total / len(x)


def train(model: PressNet, manifest: Manifest, split: SplitSpec, cfg: TrainConfig,
          out_dir=None) -> TrainResult:
    """Minimize masked-pressure MSE; keeps the best-validation parameters.

    Normalization statistics (pose mean/std and the pressure maximum) are
    fitted on this split's training takes only.
    """
    train_pairs, _, skipped = load_takes(manifest, split.train_takes)
    stats = fit_norm_stats([p.pose for p in train_pairs], split_id=split.split_id)
    global_max = fit_global_max((p.pressure, p.weight_kg) for p in train_pairs)
    x_train, y_train = build_arrays(train_pairs, stats, manifest, global_max, dtype=cfg.dtype)

    have_validation = bool(split.val_takes)
    if have_validation:
        val_pairs, _, val_skipped = load_takes(manifest, split.val_takes)
        skipped += val_skipped
        x_val, y_val = build_arrays(val_pairs, stats, manifest, global_max, dtype=cfg.dtype)

    n = len(x_train)
    if n < cfg.batch_size:
        raise DataError(f"{n} training frames cannot fill one batch of {cfg.batch_size}")

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])

    params = model.parameters()
    state = AdamState(learning_rate=cfg.lr_initial)
    step_losses: list = []
    epoch_train: list = []
    epoch_val: list = []
    lr_trace: list = []
    best_epoch = None
    best_val = math.inf
    best_params = None

    steps_per_epoch = n // cfg.batch_size
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr_for_epoch(epoch)
        state.learning_rate = lr
        lr_trace.append(lr)
        perm = shuffle_rng.permutation(n)
        epoch_losses = []
        for step in range(steps_per_epoch):
            batch = perm[step * cfg.batch_size : (step + 1) * cfg.batch_size]
            xb = Tensor(x_train[batch])
            yb = Tensor(y_train[batch])
            zero_grads(params)
            try:
                loss = mse_loss(model.forward(xb, "train", dropout_rng), yb)
            except NumericalError as exc:
                raise NumericalError(
                    f"non-finite values in forward pass at epoch {epoch} batch {step} "
                    f"(lr={lr}): {exc}"
                ) from exc
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch} batch {step} (lr={lr})"
                )
            loss.backward()
            adam_step(params, state)
            step_losses.append(value)
            epoch_losses.append(value)
        epoch_train.append(float(np.mean(epoch_losses)))
        if have_validation:
            val = eval_mse(model, x_val, y_val)
            epoch_val.append(val)
            if val < best_val:
                best_val = val
                best_epoch = epoch
                best_params = [p.data.copy() for p in params]
                best_state = {name: arr.copy() for name, arr in model.state_arrays()}

    if best_params is not None:
        for p, data in zip(params, best_params):
            p.data = data
        model.load_state_arrays(best_state)

    result = TrainResult(
        model=model,
        stats=stats,
        global_max=global_max,
        step_losses=step_losses,
        epoch_train_losses=epoch_train,
        epoch_val_losses=epoch_val,
        lr_trace=lr_trace,
        best_epoch=best_epoch,
        best_val_mse=None if best_epoch is None else best_val,
        skipped_frames=skipped,
    )
    if out_dir is not None:
        result.checkpoint_path = save_training_result(out_dir, result, split, cfg)
    return result


def save_training_result(out_dir, result: TrainResult, split: SplitSpec,
                         cfg: TrainConfig) -> Path:
    """Checkpoint plus a JSON sidecar with everything evaluation needs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "checkpoint.p2p"
    entries = list(result.model.parameters())
    entries += [Parameter(arr, name=name) for name, arr in result.model.state_arrays()]
    save_checkpoint(ckpt, entries)
    sidecar = {
        "model_config": result.model.config.to_json(),
        "model_seed": result.model.seed,
        "footmask": result.model.footmask.astype(int).reshape(-1).tolist(),
        "pose_stats": {
            "mean": list(map(float, result.stats.mean)),
            "std": list(map(float, result.stats.std)),
            "split_id": result.stats.split_id,
            "frame_count": result.stats.frame_count,
        },
        "global_max": result.global_max,
        "split_subject": split.test_subject,
        "train_config": cfg.to_json(),
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "epoch_train_losses": result.epoch_train_losses,
        "epoch_val_losses": result.epoch_val_losses,
        "lr_trace": result.lr_trace,
        "skipped_frames": result.skipped_frames,
    }
    with open(ckpt.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return ckpt
