"""Run presets.

`paper` keeps the architecture budget of the source experiment (k0 = 16,
full-depth 2D+t volumes, up to 300 epochs). `desk` is sized for one CPU
core: k0 = 8, the 2D+t network input average-pooled to z = 4 and t = 100,
CNN budget 12 epochs with patience 6. MLPs keep 60/30 in both presets'
spirit (they are cheap either way).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import ConfigError
from .nn import TrainConfig


@dataclass(frozen=True)
class Preset:
    name: str
    k0: int
    volume_z_out: int | None  # None: keep full depth
    volume_t_pool: int  # window of temporal average pooling on the CNN volume input
    cnn_max_epochs: int
    cnn_patience: int
    mlp_max_epochs: int
    mlp_patience: int
    input_scale: float = 10.0


PRESETS = {
    "paper": Preset(
        name="paper",
        k0=16,
        volume_z_out=None,
        volume_t_pool=1,
        cnn_max_epochs=300,
        cnn_patience=30,
        mlp_max_epochs=300,
        mlp_patience=30,
    ),
    "desk": Preset(
        name="desk",
        k0=8,
        volume_z_out=4,
        volume_t_pool=4,
        cnn_max_epochs=12,
        cnn_patience=6,
        mlp_max_epochs=60,
        mlp_patience=30,
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def cnn_train_config(p: Preset, seed: int = 0) -> TrainConfig:
    return TrainConfig(max_epochs=p.cnn_max_epochs, patience=p.cnn_patience, seed=seed)


def mlp_train_config(p: Preset, seed: int = 0) -> TrainConfig:
    return TrainConfig(max_epochs=p.mlp_max_epochs, patience=p.mlp_patience, seed=seed)


def resolve_threads(flag_value: int | None) -> int:
    """Worker count: flag or available parallelism, capped by OCE_THREADS."""
    avail = os.cpu_count() or 1
    n = flag_value if flag_value and flag_value > 0 else avail
    cap = os.environ.get("OCE_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"OCE_THREADS must be an integer, got {cap!r}") from exc
    return max(1, n)
